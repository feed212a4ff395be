#![allow(dead_code)]

use gridfuse_core::{BoundingBox2D, GridPoint, MotionState, ProjectedPoint};
use proptest::prelude::*;

/// Boxes on a quarter-pixel lattice so band edges are hit exactly.
pub fn arb_box() -> impl Strategy<Value = BoundingBox2D> {
    (0i32..4000, 0i32..2000, 1i32..800, 1i32..800, 0u8..=100).prop_map(|(x, y, w, h, c)| {
        let q = |v: i32| f64::from(v) / 4.0;
        BoundingBox2D::new("car", f64::from(c) / 100.0, q(x), q(y), q(x + w), q(y + h)).unwrap()
    })
}

pub fn arb_grid_point() -> impl Strategy<Value = GridPoint> {
    (-50.0..50.0f64, -50.0..50.0f64, -10.0..10.0f64, -10.0..10.0f64, any::<bool>()).prop_map(
        |(x, y, vx, vy, moving)| {
            if moving {
                GridPoint::new(x, y, vx, vy, MotionState::Dynamic).unwrap()
            } else {
                GridPoint::new_static(x, y).unwrap()
            }
        },
    )
}

pub fn arb_projected() -> impl Strategy<Value = ProjectedPoint> {
    (0i32..5200, 0i32..3000, arb_grid_point())
        .prop_map(|(x, y, g)| ProjectedPoint::new(f64::from(x) / 4.0, f64::from(y) / 4.0, g).unwrap())
}
