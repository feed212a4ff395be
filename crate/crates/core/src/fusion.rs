//! Fusion regions: the band around each box's bottom edge where projected
//! grid points are collected and labelled with the detection's class.

use crate::model::{BoundingBox2D, FusionRegion, MotionState, ProjectedPoint};

/// Points captured by one detection's fusion region, split by motion state.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionAssignment {
    pub bbox: BoundingBox2D,
    pub region: FusionRegion,
    pub dynamic_points: Vec<ProjectedPoint>,
    pub static_points: Vec<ProjectedPoint>,
}

impl RegionAssignment {
    pub fn is_empty(&self) -> bool {
        self.dynamic_points.is_empty() && self.static_points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.dynamic_points.len() + self.static_points.len()
    }
}

/// Derives the fusion band of a box.
///
/// The two thresholds are `(5 y_max - y_min) / 4` and `(3 y_max + y_min) / 4`;
/// in raster coordinates the first is always the larger, so the band is
/// stored as an ordered (low, high) pair.
pub fn fusion_region(bbox: &BoundingBox2D) -> FusionRegion {
    let (y_min, y_max) = (bbox.y_min(), bbox.y_max());
    let y_high = (5.0 * y_max - y_min) / 4.0;
    let y_low = (3.0 * y_max + y_min) / 4.0;
    FusionRegion::from_parts(
        bbox.x_min(),
        bbox.x_max(),
        y_low.min(y_high),
        y_low.max(y_high),
    )
}

/// Strict membership test: boundary pixels are outside.
pub fn point_in_region(region: &FusionRegion, p: &ProjectedPoint) -> bool {
    region.x_min() < p.x()
        && p.x() < region.x_max()
        && region.y_band_low() < p.y()
        && p.y() < region.y_band_high()
}

/// Assigns projected points to every detection whose band contains them.
///
/// Points are shared between overlapping regions. Detections whose band is
/// empty are discarded. Within each assignment the input point order is kept.
pub fn fuse_frame(detections: &[BoundingBox2D], points: &[ProjectedPoint]) -> Vec<RegionAssignment> {
    let index = RowIndex::new(points);
    let mut hits = Vec::new();
    detections
        .iter()
        .filter_map(|bbox| {
            let region = fusion_region(bbox);
            hits.clear();
            index.collect(&region, &mut hits);
            if hits.is_empty() {
                return None;
            }
            hits.sort_unstable();
            let mut dynamic_points = Vec::new();
            let mut static_points = Vec::new();
            for &i in &hits {
                let p = points[i];
                match p.state() {
                    MotionState::Dynamic => dynamic_points.push(p),
                    MotionState::Static => static_points.push(p),
                }
            }
            Some(RegionAssignment {
                bbox: bbox.clone(),
                region,
                dynamic_points,
                static_points,
            })
        })
        .collect()
}

/// Number of detections in `detections` whose band captures no point.
pub fn count_empty_regions(detections: &[BoundingBox2D], assignments: &[RegionAssignment]) -> usize {
    detections.len() - assignments.len()
}

/// Point indices sorted by image row, so a band query is a binary search
/// followed by an x filter over the rows inside the band.
struct RowIndex<'a> {
    points: &'a [ProjectedPoint],
    order: Vec<usize>,
    rows: Vec<f64>,
}

impl<'a> RowIndex<'a> {
    fn new(points: &'a [ProjectedPoint]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].y().total_cmp(&points[b].y()));
        let rows = order.iter().map(|&i| points[i].y()).collect();
        Self {
            points,
            order,
            rows,
        }
    }

    fn collect(&self, region: &FusionRegion, out: &mut Vec<usize>) {
        let start = self.rows.partition_point(|&y| y <= region.y_band_low());
        let end = self.rows.partition_point(|&y| y < region.y_band_high());
        if start >= end {
            return;
        }
        out.extend(self.order[start..end].iter().copied().filter(|&i| {
            let x = self.points[i].x();
            region.x_min() < x && x < region.x_max()
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridPoint;

    fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox2D {
        BoundingBox2D::new("car", 0.9, x0, y0, x1, y1).unwrap()
    }

    fn pt(x: f64, y: f64, state: MotionState) -> ProjectedPoint {
        let g = match state {
            MotionState::Static => GridPoint::new_static(x / 10.0, y / 10.0).unwrap(),
            MotionState::Dynamic => GridPoint::new(x / 10.0, y / 10.0, 1.0, 0.0, state).unwrap(),
        };
        ProjectedPoint::new(x, y, g).unwrap()
    }

    #[test]
    fn region_thresholds() {
        let r = fusion_region(&bbox(100.0, 40.0, 200.0, 120.0));
        assert_eq!(r.y_band_low(), 100.0);
        assert_eq!(r.y_band_high(), 140.0);
        assert_eq!((r.x_min(), r.x_max()), (100.0, 200.0));

        let r = fusion_region(&bbox(0.0, 0.0, 10.0, 8.0));
        assert_eq!((r.y_band_low(), r.y_band_high()), (6.0, 10.0));
    }

    #[test]
    fn thin_box_band() {
        let eps = 1e-3;
        let r = fusion_region(&bbox(0.0, 50.0 - eps, 10.0, 50.0));
        assert!((r.height() - eps / 2.0).abs() < 1e-12);
        assert!((r.midpoint() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn membership_is_strict() {
        let r = fusion_region(&bbox(100.0, 40.0, 200.0, 120.0));
        assert!(point_in_region(&r, &pt(150.0, 120.0, MotionState::Static)));
        assert!(!point_in_region(&r, &pt(150.0, 90.0, MotionState::Static)));
        assert!(!point_in_region(&r, &pt(100.0, 120.0, MotionState::Static)));
        assert!(!point_in_region(&r, &pt(150.0, 100.0, MotionState::Static)));
        assert!(!point_in_region(&r, &pt(150.0, 140.0, MotionState::Static)));
        assert!(!point_in_region(&r, &pt(200.0, 120.0, MotionState::Static)));
    }

    #[test]
    fn empty_regions_are_discarded() {
        let dets = [bbox(100.0, 40.0, 200.0, 120.0)];
        assert!(fuse_frame(&dets, &[]).is_empty());
        let outside = [pt(10.0, 10.0, MotionState::Dynamic)];
        assert!(fuse_frame(&dets, &outside).is_empty());
        assert_eq!(count_empty_regions(&dets, &[]), 1);
    }

    #[test]
    fn splits_by_state_in_input_order() {
        let dets = [bbox(100.0, 40.0, 200.0, 120.0)];
        let pts = [
            pt(150.0, 130.0, MotionState::Dynamic),
            pt(120.0, 110.0, MotionState::Static),
            pt(10.0, 110.0, MotionState::Static),
            pt(180.0, 101.0, MotionState::Dynamic),
        ];
        let out = fuse_frame(&dets, &pts);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dynamic_points, vec![pts[0], pts[3]]);
        assert_eq!(out[0].static_points, vec![pts[1]]);
        assert_eq!(out[0].len(), 3);
    }

    #[test]
    fn overlapping_regions_share_points() {
        let dets = [
            bbox(100.0, 40.0, 200.0, 120.0),
            bbox(150.0, 60.0, 250.0, 120.0),
        ];
        let pts = [pt(170.0, 118.0, MotionState::Dynamic)];
        let out = fuse_frame(&dets, &pts);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].dynamic_points, vec![pts[0]]);
        assert_eq!(out[1].dynamic_points, vec![pts[0]]);
    }

    #[test]
    fn duplicate_rows_handled() {
        let dets = [bbox(0.0, 0.0, 100.0, 80.0)];
        let pts: Vec<_> = (0..10)
            .map(|i| pt(10.0 + i as f64, 80.0, MotionState::Static))
            .collect();
        let out = fuse_frame(&dets, &pts);
        assert_eq!(out[0].static_points, pts);
    }
}
