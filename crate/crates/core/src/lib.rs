//! Fusion of 2D detector boxes with occupancy-grid static/dynamic points.
//!
//! Grid points are projected into the image, collected by a band along the
//! bottom edge of each detection, and summarised into an object with a motion
//! state, median position, median velocity and heading. The [`eval`] module
//! scores those objects against motion-labelled ground truth; [`synth`]
//! fabricates scenes with known answers.

pub mod eval;
pub mod fusion;
pub mod io;
pub mod model;
pub mod pfp;
pub mod pipeline;
pub mod projection;
pub mod synth;

/// Height of the grid plane relative to the lidar origin, meters.
pub const DEFAULT_GROUND_HEIGHT: f64 = -1.73;

pub use model::{
    BoundingBox2D, FrameData, FusedObject, FusionRegion, GridPoint, ModelError, MotionState,
    ProjectedPoint,
};
pub use projection::CameraCalibration;
