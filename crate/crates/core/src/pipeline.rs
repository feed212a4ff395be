//! Per-frame chain: projection, fusion regions, point-wise features.

use crate::fusion::{count_empty_regions, fuse_frame};
use crate::model::{BoundingBox2D, FrameData, FusedObject, ProjectedPoint};
use crate::pfp::{extract_object, PfpError};
use crate::projection::{project_frame, CameraCalibration};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_id: i64,
    pub objects: Vec<FusedObject>,
    /// Detections whose fusion region captured no point.
    pub discarded_regions: usize,
}

/// Fusion and feature extraction on already projected points.
pub fn fuse_projected(
    frame_id: i64,
    detections: &[BoundingBox2D],
    points: &[ProjectedPoint],
) -> Result<FrameOutput, PfpError> {
    let assignments = fuse_frame(detections, points);
    let discarded_regions = count_empty_regions(detections, &assignments);
    let objects = assignments
        .iter()
        .map(|a| extract_object(a, frame_id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameOutput {
        frame_id,
        objects,
        discarded_regions,
    })
}

pub fn process_frame(frame: &FrameData, calib: &CameraCalibration) -> Result<FrameOutput, PfpError> {
    let projected = project_frame(frame, calib);
    fuse_projected(frame.frame_id(), &frame.detections, &projected)
}
