//! Synthetic scenes with known answers.
//!
//! A [`SceneSpec`] places objects on the grid; [`generate`] turns it into
//! detector boxes, occupancy-grid points and ground-truth labels, and
//! computes the expected fused objects with a separate brute-force pass
//! that shares no code with the pipeline (its own projection arithmetic,
//! per-point membership test, counting and medians).

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::GroundTruthObject;
use crate::io::{self, Config};
use crate::model::{
    motion_label, BoundingBox2D, FrameData, FusedObject, GridPoint, ModelError, MotionState,
};
use crate::projection::{lift_xyz, project_point, CameraCalibration, Pixel};

/// KITTI object-benchmark calibration of training frame 000000.
pub const KITTI_SAMPLE_CALIB: &str = "\
P0: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 0.000000000000e+00 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P2: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 4.485728000000e+01 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 2.163791000000e-01 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 2.745884000000e-03
R0_rect: 9.999239000000e-01 9.837760000000e-03 -7.445048000000e-03 -9.869795000000e-03 9.999421000000e-01 -4.278459000000e-03 7.402527000000e-03 4.351614000000e-03 9.999631000000e-01
Tr_velo_to_cam: 7.533745000000e-03 -9.999714000000e-01 -6.166020000000e-04 -4.069766000000e-03 1.480249000000e-02 7.280733000000e-04 -9.998902000000e-01 -7.631618000000e-02 9.998621000000e-01 7.523790000000e-03 1.480755000000e-02 -2.717806000000e-01
";

/// Pixel slack between the captured points and the box/band edges.
const BOX_MARGIN_PX: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("object {object} ({class}) in frame {frame} is behind the camera or outside the image")]
    Unprojectable {
        frame: i64,
        object: usize,
        class: String,
    },
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("scene file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecMotion {
    Static,
    Dynamic,
}

impl From<SpecMotion> for MotionState {
    fn from(m: SpecMotion) -> Self {
        match m {
            SpecMotion::Static => MotionState::Static,
            SpecMotion::Dynamic => MotionState::Dynamic,
        }
    }
}

fn default_width() -> f64 {
    1.8
}

fn default_height() -> f64 {
    1.5
}

fn default_period() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class: String,
    pub motion: SpecMotion,
    /// Grid position at frame 0, meters.
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    pub points: usize,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Std-dev of box-corner jitter, pixels.
    #[serde(default)]
    pub box_px: f64,
    /// Std-dev of grid-point position jitter, meters.
    #[serde(default)]
    pub point_m: f64,
    /// Probability that a point carries the wrong motion state.
    #[serde(default)]
    pub flip_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_frames: usize,
    #[serde(default = "default_period")]
    pub frame_period_s: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        let n = &self.noise;
        if !(n.box_px >= 0.0 && n.point_m >= 0.0) {
            return bad("noise std-devs must be non-negative");
        }
        if !(0.0..=1.0).contains(&n.flip_prob) {
            return bad("flip probability must lie in [0, 1]");
        }
        if !(self.frame_period_s >= 0.0 && self.frame_period_s.is_finite()) {
            return bad("frame period must be non-negative");
        }
        for o in &self.objects {
            if o.class.is_empty() || o.class.contains([',', ' ', '\n']) {
                return bad("class names must be non-empty without commas or spaces");
            }
            if !(o.width > 0.0 && o.height > 0.0) {
                return bad("object width and height must be positive");
            }
            if ![o.x, o.y, o.vx, o.vy].iter().all(|v| v.is_finite()) {
                return bad("object kinematics must be finite");
            }
            if o.motion == SpecMotion::Static && (o.vx != 0.0 || o.vy != 0.0) {
                return bad("static objects cannot have velocity");
            }
            if o.motion == SpecMotion::Dynamic && o.vx == 0.0 && o.vy == 0.0 {
                return bad("dynamic objects need a non-zero velocity");
            }
        }
        Ok(())
    }
}

/// A random scene of one to four vehicles at well separated bearings
/// (-21, -7, 7 and 21 degrees), 10-22 m ahead, so no two boxes overlap.
pub fn random_scene(seed: u64, n_frames: usize, noise: NoiseSpec) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce7e);
    let mut bearings = [-21.0f64, -7.0, 7.0, 21.0];
    bearings.shuffle(&mut rng);
    let count = rng.random_range(1..=4);
    let objects = bearings[..count]
        .iter()
        .map(|deg| {
            let range = rng.random_range(10.0..22.0);
            let (s, c) = deg.to_radians().sin_cos();
            let van = rng.random_bool(0.3);
            let moving = rng.random_bool(0.5);
            let (vx, vy) = if moving {
                let speed = rng.random_range(1.0..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (speed, rng.random_range(-0.5..0.5))
            } else {
                (0.0, 0.0)
            };
            ObjectSpec {
                class: if van { "Van" } else { "Car" }.to_string(),
                motion: if moving { SpecMotion::Dynamic } else { SpecMotion::Static },
                x: range * c,
                y: range * s,
                vx,
                vy,
                points: rng.random_range(1..=15),
                width: if van { 2.0 } else { 1.8 },
                height: if van { 2.2 } else { 1.5 },
            }
        })
        .collect();
    SceneSpec {
        seed,
        n_frames,
        frame_period_s: default_period(),
        noise,
        objects,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub frames: Vec<FrameData>,
    pub ground_truth: Vec<GroundTruthObject>,
    pub expected: Vec<FusedObject>,
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("std-dev validated non-negative")
}

fn project_xyz(x: f64, y: f64, z: f64, calib: &CameraCalibration) -> Option<Pixel> {
    let px = project_point(&lift_xyz(x, y, z, calib), calib).ok()?;
    Some(px)
}

pub fn generate(spec: &SceneSpec, calib: &CameraCalibration) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let box_noise = normal(spec.noise.box_px);
    let point_noise = normal(spec.noise.point_m);
    let spurious = normal(1.0);
    let gh = calib.ground_height();

    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut ground_truth = Vec::new();
    for k in 0..spec.n_frames {
        let frame_id = k as i64;
        let t = k as f64 * spec.frame_period_s;
        let mut detections = Vec::new();
        let mut points = Vec::new();
        for (j, o) in spec.objects.iter().enumerate() {
            let unprojectable = || SynthError::Unprojectable {
                frame: frame_id,
                object: j,
                class: o.class.clone(),
            };
            let (cx, cy) = (o.x + o.vx * t, o.y + o.vy * t);
            let center = project_xyz(cx, cy, gh, calib).ok_or_else(unprojectable)?;
            if !calib.contains(center) {
                return Err(unprojectable());
            }

            // footprint samples before noise; these define the box
            let spread = o.width / 4.0;
            let clean: Vec<(f64, f64)> = (0..o.points)
                .map(|_| {
                    (
                        cx + rng.random_range(-spread..=spread),
                        cy + rng.random_range(-spread..=spread),
                    )
                })
                .collect();
            let pixels: Vec<Pixel> = clean
                .iter()
                .map(|&(x, y)| project_xyz(x, y, gh, calib))
                .collect::<Option<_>>()
                .ok_or_else(unprojectable)?;
            if pixels.iter().any(|p| !calib.contains(*p)) {
                return Err(unprojectable());
            }

            let half_w = o.width / 2.0;
            let face = [
                project_xyz(cx, cy + half_w, gh, calib),
                project_xyz(cx, cy - half_w, gh, calib),
                project_xyz(cx, cy + half_w, gh + o.height, calib),
                project_xyz(cx, cy - half_w, gh + o.height, calib),
            ];
            let face: Vec<Pixel> = face.into_iter().collect::<Option<_>>().ok_or_else(unprojectable)?;
            let all = face.iter().chain(&pixels);
            let x_min = all.clone().map(|p| p.x).fold(f64::INFINITY, f64::min) - BOX_MARGIN_PX;
            let x_max = all.map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + BOX_MARGIN_PX;
            let face_top = face.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let face_bottom = face.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
            let (y_min, y_max) = if pixels.is_empty() {
                (face_top, face_bottom)
            } else {
                let lo = pixels.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
                let hi = pixels.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
                // band = y_max +- height/4 must cover [lo, hi] with margin
                let bottom = (lo + hi) / 2.0;
                let half_band = (hi - lo) / 2.0 + BOX_MARGIN_PX;
                let height = (bottom - face_top).max(4.0 * half_band);
                (bottom - height, bottom)
            };

            let motion = MotionState::from(o.motion);
            let distance = lift_xyz(cx, cy, gh, calib).z;
            ground_truth.push(GroundTruthObject::new(
                frame_id,
                motion_label(motion, &o.class),
                x_min,
                y_min,
                x_max,
                y_max,
                Some(distance),
            )?);

            let mut corners = [x_min, y_min, x_max, y_max];
            for c in &mut corners {
                *c += box_noise.sample(&mut rng);
            }
            let [mut jx0, mut jy0, mut jx1, mut jy1] = corners;
            if jx0 > jx1 {
                std::mem::swap(&mut jx0, &mut jx1);
            }
            if jy0 > jy1 {
                std::mem::swap(&mut jy0, &mut jy1);
            }
            if jx1 - jx0 < 1.0 {
                jx1 = jx0 + 1.0;
            }
            if jy1 - jy0 < 1.0 {
                jy1 = jy0 + 1.0;
            }
            let confidence = rng.random_range(0.5..=1.0);
            detections.push(BoundingBox2D::new(
                o.class.clone(),
                confidence,
                jx0,
                jy0,
                jx1,
                jy1,
            )?);

            for &(x, y) in &clean {
                let x = x + point_noise.sample(&mut rng);
                let y = y + point_noise.sample(&mut rng);
                let flipped = rng.random_bool(spec.noise.flip_prob);
                let state = match (motion, flipped) {
                    (m, false) => m,
                    (MotionState::Static, true) => MotionState::Dynamic,
                    (MotionState::Dynamic, true) => MotionState::Static,
                };
                let point = match state {
                    MotionState::Static => GridPoint::new_static(x, y)?,
                    MotionState::Dynamic if motion == MotionState::Dynamic => {
                        GridPoint::new(x, y, o.vx, o.vy, state)?
                    }
                    MotionState::Dynamic => GridPoint::new(
                        x,
                        y,
                        spurious.sample(&mut rng),
                        spurious.sample(&mut rng),
                        state,
                    )?,
                };
                points.push(point);
            }
        }
        frames.push(FrameData::new(frame_id, detections, points)?);
    }

    let expected = frames
        .iter()
        .map(|f| oracle_frame(f, calib))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(SyntheticScene {
        frames,
        ground_truth,
        expected,
    })
}

/// Brute-force expected output for one frame.
pub fn oracle_frame(frame: &FrameData, calib: &CameraCalibration) -> Result<Vec<FusedObject>, ModelError> {
    let k = calib.intrinsics();
    let (fx, fy, cx, cy) = (k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)]);
    let rot = calib.rotation();
    let t = calib.translation();
    let rect = calib.rectification();
    let (w, h) = (f64::from(calib.image_width()), f64::from(calib.image_height()));
    let gh = calib.ground_height();

    let pixel_of = |p: &GridPoint| -> Option<(f64, f64)> {
        let g = [p.x(), p.y(), gh];
        let mut cam = [0.0; 3];
        for (i, c) in cam.iter_mut().enumerate() {
            *c = rot[(i, 0)] * g[0] + rot[(i, 1)] * g[1] + rot[(i, 2)] * g[2] + t[i];
        }
        let mut r = [0.0; 3];
        for (i, c) in r.iter_mut().enumerate() {
            *c = rect[(i, 0)] * cam[0] + rect[(i, 1)] * cam[1] + rect[(i, 2)] * cam[2];
        }
        if r[2] <= 1e-6 {
            return None;
        }
        let u = fx * r[0] / r[2] + cx;
        let v = fy * r[1] / r[2] + cy;
        (u >= 0.0 && u < w && v >= 0.0 && v < h).then_some((u, v))
    };
    let pixels: Vec<Option<(f64, f64)>> = frame.points.iter().map(pixel_of).collect();

    let mut out = Vec::new();
    for b in &frame.detections {
        let t1 = (5.0 * b.y_max() - b.y_min()) / 4.0;
        let t2 = (3.0 * b.y_max() + b.y_min()) / 4.0;
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let mut dynamic = Vec::new();
        let mut stat = Vec::new();
        for (p, px) in frame.points.iter().zip(&pixels) {
            let Some((u, v)) = *px else { continue };
            if b.x_min() < u && u < b.x_max() && lo < v && v < hi {
                match p.state() {
                    MotionState::Dynamic => dynamic.push(*p),
                    MotionState::Static => stat.push(*p),
                }
            }
        }
        if dynamic.is_empty() && stat.is_empty() {
            continue;
        }
        let moving = dynamic.len() >= stat.len();
        let winners = if moving { &dynamic } else { &stat };
        let x = oracle_median(winners.iter().map(|p| p.x()).collect());
        let y = oracle_median(winners.iter().map(|p| p.y()).collect());
        let (mut motion, mut velocity, mut heading, mut demoted) =
            (MotionState::Static, (0.0, 0.0), None, false);
        if moving {
            let vx = oracle_median(winners.iter().map(|p| p.vx()).collect());
            let vy = oracle_median(winners.iter().map(|p| p.vy()).collect());
            if vx == 0.0 && vy == 0.0 {
                demoted = true;
            } else {
                let mut hd = vy.atan2(vx);
                if hd == -PI {
                    hd = PI;
                }
                motion = MotionState::Dynamic;
                velocity = (vx, vy);
                heading = Some(hd);
            }
        }
        out.push(FusedObject::new(
            b.class_label(),
            motion,
            (x, y),
            velocity,
            heading,
            dynamic.len(),
            stat.len(),
            demoted,
            b.clone(),
            frame.frame_id(),
        )?);
    }
    Ok(out)
}

/// Median by counting: the element(s) with exactly `k` smaller-or-equal
/// predecessors in the sorted order, found by insertion sort.
fn oracle_median(mut v: Vec<f64>) -> f64 {
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl SyntheticScene {
    /// Writes the fixture set: `detections.csv`, `grid.csv`, `labels/`,
    /// `calib.txt`, `expected.jsonl` and `config.txt`.
    pub fn write_to(&self, dir: &Path, calib: &CameraCalibration) -> Result<(), SynthError> {
        let write = |name: &Path, text: String| {
            std::fs::write(name, text).map_err(|source| SynthError::Io {
                path: name.to_path_buf(),
                source,
            })
        };
        let labels = dir.join("labels");
        std::fs::create_dir_all(&labels).map_err(|source| SynthError::Io {
            path: labels.clone(),
            source,
        })?;

        write(
            &dir.join("detections.csv"),
            io::write_detections(
                self.frames
                    .iter()
                    .flat_map(|f| f.detections.iter().map(move |d| (f.frame_id(), d))),
            ),
        )?;
        write(
            &dir.join("grid.csv"),
            io::write_grid_points(
                self.frames
                    .iter()
                    .flat_map(|f| f.points.iter().map(move |p| (f.frame_id(), p))),
            ),
        )?;
        for f in &self.frames {
            let gts = self.ground_truth.iter().filter(|g| g.frame_id == f.frame_id());
            write(
                &labels.join(format!("{:06}.txt", f.frame_id())),
                io::write_kitti_labels(gts),
            )?;
        }
        write(&dir.join("calib.txt"), io::write_calibration(calib))?;
        write(&dir.join("expected.jsonl"), io::write_fused_objects(&self.expected))?;
        let cfg = Config {
            ground_height: Some(calib.ground_height()),
            image_width: Some(calib.image_width()),
            image_height: Some(calib.image_height()),
            ..Config::default()
        };
        write(&dir.join("config.txt"), io::write_config(&cfg))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{parse_calibration, CalibrationOptions};

    fn kitti() -> CameraCalibration {
        parse_calibration(KITTI_SAMPLE_CALIB, &CalibrationOptions::default()).unwrap()
    }

    fn one_object(motion: SpecMotion, flip: f64, points: usize) -> SceneSpec {
        let (vx, vy) = match motion {
            SpecMotion::Static => (0.0, 0.0),
            SpecMotion::Dynamic => (3.0, 0.5),
        };
        SceneSpec {
            seed: 11,
            n_frames: 1,
            frame_period_s: 0.1,
            noise: NoiseSpec {
                flip_prob: flip,
                ..NoiseSpec::default()
            },
            objects: vec![ObjectSpec {
                class: "Car".into(),
                motion,
                x: 15.0,
                y: 1.0,
                vx,
                vy,
                points,
                width: 1.8,
                height: 1.5,
            }],
        }
    }

    #[test]
    fn kitti_sample_is_a_valid_calibration() {
        let c = kitti();
        assert_eq!(c.fx(), 721.5377);
        assert_eq!(c.ground_height(), crate::DEFAULT_GROUND_HEIGHT);
    }

    #[test]
    fn noiseless_static_object_matches_truth() {
        let scene = generate(&one_object(SpecMotion::Static, 0.0, 5), &kitti()).unwrap();
        assert_eq!(scene.frames[0].points.len(), 5);
        assert_eq!(scene.expected.len(), 1);
        let o = &scene.expected[0];
        assert_eq!(o.motion(), MotionState::Static);
        assert_eq!(o.n_static(), 5);
        assert_eq!(scene.ground_truth[0].class_label, "staticCar");
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = one_object(SpecMotion::Dynamic, 0.3, 9);
        assert_eq!(generate(&spec, &kitti()).unwrap(), generate(&spec, &kitti()).unwrap());
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(generate(&spec, &kitti()).unwrap(), generate(&other, &kitti()).unwrap());
    }

    #[test]
    fn behind_camera_is_unprojectable() {
        let mut spec = one_object(SpecMotion::Static, 0.0, 3);
        spec.objects[0].x = -5.0;
        match generate(&spec, &kitti()) {
            Err(SynthError::Unprojectable { object, class, .. }) => {
                assert_eq!(object, 0);
                assert_eq!(class, "Car");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = one_object(SpecMotion::Static, 1.5, 3);
        assert!(matches!(generate(&spec, &kitti()), Err(SynthError::InvalidSpec(_))));
        spec.noise.flip_prob = 0.0;
        spec.objects[0].vx = 1.0;
        assert!(matches!(generate(&spec, &kitti()), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn toml_scene() {
        let spec = SceneSpec::from_toml(
            r#"
            seed = 3
            n_frames = 2
            [noise]
            flip_prob = 0.1
            [[objects]]
            class = "Van"
            motion = "dynamic"
            x = 12.0
            y = -2.0
            vx = 2.0
            points = 6
            "#,
        )
        .unwrap();
        assert_eq!(spec.objects[0].width, 1.8);
        assert_eq!(spec.frame_period_s, 0.1);
        assert_eq!(spec.objects[0].motion, SpecMotion::Dynamic);
        assert!(SceneSpec::from_toml("seed = 1\nn_frames = 1\nbogus = 2\n").is_err());
    }

    #[test]
    fn oracle_median_matches_definition() {
        assert_eq!(oracle_median(vec![6.0, 2.0, 4.0]), 4.0);
        assert_eq!(oracle_median(vec![2.0, 0.0]), 1.0);
        assert_eq!(oracle_median(vec![7.0]), 7.0);
    }

    #[test]
    fn zero_point_object_gives_ground_truth_only() {
        let scene = generate(&one_object(SpecMotion::Static, 0.0, 0), &kitti()).unwrap();
        assert_eq!(scene.ground_truth.len(), 1);
        assert_eq!(scene.frames[0].detections.len(), 1);
        assert!(scene.expected.is_empty());
    }
}
