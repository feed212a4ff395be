//! Point-wise feature processing: turns the points captured by a fusion
//! region into a single object with motion state, position, velocity and
//! heading.

use std::f64::consts::PI;

use thiserror::Error;

use crate::fusion::RegionAssignment;
use crate::model::{FusedObject, ModelError, MotionState, ProjectedPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PfpError {
    #[error("assignment holds no points")]
    EmptyAssignment,
    #[error("median of an empty list")]
    EmptyInput,
    #[error("heading is undefined for zero velocity")]
    ZeroVelocity,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Majority vote between the dynamic and static point sets; ties go to
/// [`MotionState::Dynamic`].
pub fn estimate_motion(a: &RegionAssignment) -> Result<MotionState, PfpError> {
    let (n_dyn, n_stat) = (a.dynamic_points.len(), a.static_points.len());
    if n_dyn + n_stat == 0 {
        return Err(PfpError::EmptyAssignment);
    }
    Ok(if n_dyn >= n_stat {
        MotionState::Dynamic
    } else {
        MotionState::Static
    })
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Component-wise median. Even counts take the midpoint of the two middle
/// order statistics.
pub fn median_2d(values: &[(f64, f64)]) -> Result<(f64, f64), PfpError> {
    if values.is_empty() {
        return Err(PfpError::EmptyInput);
    }
    let mut xs: Vec<f64> = values.iter().map(|v| v.0).collect();
    let mut ys: Vec<f64> = values.iter().map(|v| v.1).collect();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    Ok((median_sorted(&xs), median_sorted(&ys)))
}

/// Quadrant-aware heading of a velocity, in `(-pi, pi]`.
pub fn heading(vx: f64, vy: f64) -> Result<f64, PfpError> {
    if vx == 0.0 && vy == 0.0 {
        return Err(PfpError::ZeroVelocity);
    }
    let h = vy.atan2(vx);
    // atan2(-0.0, negative) lands on -pi
    Ok(if h <= -PI { PI } else { h })
}

/// Builds the object for one fusion region.
///
/// Position (and, for moving objects, velocity) is the median over the
/// winning motion subset only. A moving majority with an exactly zero median
/// velocity is reported as static with `demoted` set.
pub fn extract_object(a: &RegionAssignment, frame_id: i64) -> Result<FusedObject, PfpError> {
    let motion = estimate_motion(a)?;
    let winners: &[ProjectedPoint] = match motion {
        MotionState::Dynamic => &a.dynamic_points,
        MotionState::Static => &a.static_points,
    };
    let positions: Vec<_> = winners.iter().map(|p| p.source().position()).collect();
    let position = median_2d(&positions)?;

    let (motion, velocity, heading, demoted) = match motion {
        MotionState::Static => (MotionState::Static, (0.0, 0.0), None, false),
        MotionState::Dynamic => {
            let velocities: Vec<_> = winners.iter().map(|p| p.source().velocity()).collect();
            let v = median_2d(&velocities)?;
            match heading(v.0, v.1) {
                Ok(h) => (MotionState::Dynamic, v, Some(h), false),
                Err(PfpError::ZeroVelocity) => (MotionState::Static, (0.0, 0.0), None, true),
                Err(e) => return Err(e),
            }
        }
    };

    Ok(FusedObject::new(
        a.bbox.class_label(),
        motion,
        position,
        velocity,
        heading,
        a.dynamic_points.len(),
        a.static_points.len(),
        demoted,
        a.bbox.clone(),
        frame_id,
    )?)
}
