//! Shared domain types.
//!
//! Image coordinates use the raster convention: origin at the top-left
//! corner, `y` growing downward. Grid coordinates live in the vehicle frame
//! with `x` pointing forward and `y` to the left.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("degenerate box: x [{x_min}, {x_max}] y [{y_min}, {y_max}]")]
    DegenerateBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("static grid point carries velocity ({vx}, {vy})")]
    StaticWithVelocity { vx: f64, vy: f64 },
    #[error("fused object has no supporting points")]
    NoSupport,
    #[error("static object with velocity or heading")]
    StaticMotion,
    #[error("dynamic object without heading")]
    MissingHeading,
    #[error("heading {0} outside (-pi, pi]")]
    HeadingRange(f64),
    #[error("negative frame id {0}")]
    NegativeFrame(i64),
}

/// A detector output box with pixel corners.
///
/// `(x_min, y_min)` is the top-left corner and `(x_max, y_max)` the
/// bottom-right corner.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox2D {
    class_label: String,
    confidence: f64,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox2D {
    pub fn new(
        class_label: impl Into<String>,
        confidence: f64,
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    ) -> Result<Self, ModelError> {
        if ![confidence, x_min, y_min, x_max, y_max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(ModelError::NonFinite("bounding box"));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(ModelError::DegenerateBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ModelError::Confidence(confidence));
        }
        Ok(Self {
            class_label: class_label.into(),
            confidence,
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Same box shifted by a pixel offset.
    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, ModelError> {
        Self::new(
            self.class_label.clone(),
            self.confidence,
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotionState {
    Static,
    Dynamic,
}

impl MotionState {
    /// Lower-case prefix used in motion-qualified class names ("dynamicCar").
    pub fn prefix(self) -> &'static str {
        match self {
            MotionState::Static => "static",
            MotionState::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for MotionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

/// An occupied occupancy-grid cell sample in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    state: MotionState,
}

impl GridPoint {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64, state: MotionState) -> Result<Self, ModelError> {
        if ![x, y, vx, vy].iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite("grid point"));
        }
        if state == MotionState::Static && (vx != 0.0 || vy != 0.0) {
            return Err(ModelError::StaticWithVelocity { vx, vy });
        }
        Ok(Self {
            x,
            y,
            vx,
            vy,
            state,
        })
    }

    pub fn new_static(x: f64, y: f64) -> Result<Self, ModelError> {
        Self::new(x, y, 0.0, 0.0, MotionState::Static)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn vx(&self) -> f64 {
        self.vx
    }

    pub fn vy(&self) -> f64 {
        self.vy
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.vx, self.vy)
    }

    pub fn state(&self) -> MotionState {
        self.state
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, ModelError> {
        Self::new(self.x + dx, self.y + dy, self.vx, self.vy, self.state)
    }
}

/// A grid point together with its image-plane projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    x: f64,
    y: f64,
    source: GridPoint,
}

impl ProjectedPoint {
    pub fn new(x: f64, y: f64, source: GridPoint) -> Result<Self, ModelError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(ModelError::NonFinite("projected point"));
        }
        Ok(Self { x, y, source })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn source(&self) -> &GridPoint {
        &self.source
    }

    pub fn state(&self) -> MotionState {
        self.source.state
    }
}

/// Horizontal span of a box plus the vertical band straddling its bottom edge.
///
/// Only constructed from a box, so the band always has half the box height
/// and is centred on `y_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionRegion {
    x_min: f64,
    x_max: f64,
    y_band_low: f64,
    y_band_high: f64,
}

impl FusionRegion {
    pub(crate) fn from_parts(x_min: f64, x_max: f64, y_band_low: f64, y_band_high: f64) -> Self {
        debug_assert!(y_band_low < y_band_high);
        Self {
            x_min,
            x_max,
            y_band_low,
            y_band_high,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_band_low(&self) -> f64 {
        self.y_band_low
    }

    pub fn y_band_high(&self) -> f64 {
        self.y_band_high
    }

    pub fn height(&self) -> f64 {
        self.y_band_high - self.y_band_low
    }

    pub fn midpoint(&self) -> f64 {
        (self.y_band_low + self.y_band_high) / 2.0
    }
}

/// Per-object result of the fusion pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedObject {
    class_label: String,
    motion: MotionState,
    position: (f64, f64),
    velocity: (f64, f64),
    heading: Option<f64>,
    n_dynamic: usize,
    n_static: usize,
    demoted: bool,
    source_box: BoundingBox2D,
    frame_id: i64,
}

impl FusedObject {
    /// Builds an object, checking the motion/velocity/heading contract.
    ///
    /// `demoted` marks a dynamic-majority object whose median velocity was
    /// exactly zero and was therefore reported as static.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        class_label: impl Into<String>,
        motion: MotionState,
        position: (f64, f64),
        velocity: (f64, f64),
        heading: Option<f64>,
        n_dynamic: usize,
        n_static: usize,
        demoted: bool,
        source_box: BoundingBox2D,
        frame_id: i64,
    ) -> Result<Self, ModelError> {
        if n_dynamic + n_static == 0 {
            return Err(ModelError::NoSupport);
        }
        if frame_id < 0 {
            return Err(ModelError::NegativeFrame(frame_id));
        }
        if ![position.0, position.1, velocity.0, velocity.1]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(ModelError::NonFinite("fused object"));
        }
        match motion {
            MotionState::Static => {
                if velocity.0 != 0.0 || velocity.1 != 0.0 || heading.is_some() {
                    return Err(ModelError::StaticMotion);
                }
            }
            MotionState::Dynamic => {
                let h = heading.ok_or(ModelError::MissingHeading)?;
                if !(h > -std::f64::consts::PI && h <= std::f64::consts::PI) {
                    return Err(ModelError::HeadingRange(h));
                }
            }
        }
        Ok(Self {
            class_label: class_label.into(),
            motion,
            position,
            velocity,
            heading,
            n_dynamic,
            n_static,
            demoted,
            source_box,
            frame_id,
        })
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn motion(&self) -> MotionState {
        self.motion
    }

    pub fn position(&self) -> (f64, f64) {
        self.position
    }

    pub fn velocity(&self) -> (f64, f64) {
        self.velocity
    }

    pub fn heading(&self) -> Option<f64> {
        self.heading
    }

    pub fn n_dynamic(&self) -> usize {
        self.n_dynamic
    }

    pub fn n_static(&self) -> usize {
        self.n_static
    }

    pub fn demoted(&self) -> bool {
        self.demoted
    }

    pub fn source_box(&self) -> &BoundingBox2D {
        &self.source_box
    }

    pub fn frame_id(&self) -> i64 {
        self.frame_id
    }

    /// Motion-qualified class name, e.g. `dynamicCar` for a moving `car`.
    pub fn motion_label(&self) -> String {
        motion_label(self.motion, &self.class_label)
    }
}

/// Joins a motion prefix and a detector class, capitalising the class.
pub fn motion_label(motion: MotionState, class_label: &str) -> String {
    let mut chars = class_label.chars();
    let mut out = String::from(motion.prefix());
    if let Some(first) = chars.next() {
        out.extend(first.to_uppercase());
        out.push_str(chars.as_str());
    }
    out
}

/// Detections and grid points sharing one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    frame_id: i64,
    pub detections: Vec<BoundingBox2D>,
    pub points: Vec<GridPoint>,
}

impl FrameData {
    pub fn new(
        frame_id: i64,
        detections: Vec<BoundingBox2D>,
        points: Vec<GridPoint>,
    ) -> Result<Self, ModelError> {
        if frame_id < 0 {
            return Err(ModelError::NegativeFrame(frame_id));
        }
        Ok(Self {
            frame_id,
            detections,
            points,
        })
    }

    pub fn frame_id(&self) -> i64 {
        self.frame_id
    }
}
