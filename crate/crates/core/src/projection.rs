//! Grid-to-image projection: rigid transform, rectification, pinhole.

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

use crate::model::{FrameData, GridPoint, ProjectedPoint};

/// Depth at or below which a point counts as behind the camera.
pub const EPSILON_Z: f64 = 1e-6;

const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("focal lengths must be positive (fx = {fx}, fy = {fy})")]
    FocalLength { fx: f64, fy: f64 },
    #[error("intrinsics must be zero-skew upper triangular with a unit last row")]
    IntrinsicsShape,
    #[error("{0} is not a proper rotation")]
    NotRotation(&'static str),
    #[error("image size must be positive")]
    ImageSize,
    #[error("non-finite calibration value")]
    NonFinite,
}

/// Signals a point at or behind the camera plane.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("point is behind the camera (z = {depth})")]
pub struct Behind {
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    intrinsics: Matrix3<f64>,
    rectification: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    image_width: u32,
    image_height: u32,
    ground_height: f64,
}

fn is_rotation(m: &Matrix3<f64>) -> bool {
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
    ortho <= ROTATION_TOLERANCE && (m.determinant() - 1.0).abs() <= ROTATION_TOLERANCE
}

impl CameraCalibration {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rectification: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_width: u32,
        image_height: u32,
        ground_height: f64,
    ) -> Result<Self, CalibrationError> {
        let finite = intrinsics.iter().all(|v| v.is_finite())
            && rectification.iter().all(|v| v.is_finite())
            && rotation.iter().all(|v| v.is_finite())
            && translation.iter().all(|v| v.is_finite())
            && ground_height.is_finite();
        if !finite {
            return Err(CalibrationError::NonFinite);
        }
        let (fx, fy) = (intrinsics[(0, 0)], intrinsics[(1, 1)]);
        if !(fx > 0.0 && fy > 0.0) {
            return Err(CalibrationError::FocalLength { fx, fy });
        }
        if intrinsics[(0, 1)] != 0.0
            || intrinsics[(1, 0)] != 0.0
            || intrinsics[(2, 0)] != 0.0
            || intrinsics[(2, 1)] != 0.0
            || intrinsics[(2, 2)] != 1.0
        {
            return Err(CalibrationError::IntrinsicsShape);
        }
        if !is_rotation(&rectification) {
            return Err(CalibrationError::NotRotation("rectification"));
        }
        if !is_rotation(&rotation) {
            return Err(CalibrationError::NotRotation("grid-to-camera rotation"));
        }
        if image_width == 0 || image_height == 0 {
            return Err(CalibrationError::ImageSize);
        }
        Ok(Self {
            intrinsics,
            rectification,
            rotation,
            translation,
            image_width,
            image_height,
            ground_height,
        })
    }

    /// Identity extrinsics with the given pinhole parameters.
    pub fn pinhole(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, CalibrationError> {
        Self::new(
            Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0),
            Matrix3::identity(),
            Matrix3::identity(),
            Vector3::zeros(),
            image_width,
            image_height,
            0.0,
        )
    }

    pub fn with_ground_height(mut self, ground_height: f64) -> Self {
        self.ground_height = ground_height;
        self
    }

    pub fn with_image_size(mut self, width: u32, height: u32) -> Result<Self, CalibrationError> {
        if width == 0 || height == 0 {
            return Err(CalibrationError::ImageSize);
        }
        self.image_width = width;
        self.image_height = height;
        Ok(self)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn rectification(&self) -> &Matrix3<f64> {
        &self.rectification
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn fx(&self) -> f64 {
        self.intrinsics[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.intrinsics[(1, 1)]
    }

    pub fn cx(&self) -> f64 {
        self.intrinsics[(0, 2)]
    }

    pub fn cy(&self) -> f64 {
        self.intrinsics[(1, 2)]
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn ground_height(&self) -> f64 {
        self.ground_height
    }

    pub fn contains(&self, pixel: Pixel) -> bool {
        pixel.x >= 0.0
            && pixel.x < f64::from(self.image_width)
            && pixel.y >= 0.0
            && pixel.y < f64::from(self.image_height)
    }
}

/// Lifts a planar grid point to `ground_height` and maps it into the
/// rectified camera frame.
pub fn lift_grid_point(p: &GridPoint, calib: &CameraCalibration) -> Point3<f64> {
    lift_xyz(p.x(), p.y(), calib.ground_height, calib)
}

/// Maps an arbitrary grid-frame 3D point into the rectified camera frame.
pub fn lift_xyz(x: f64, y: f64, z: f64, calib: &CameraCalibration) -> Point3<f64> {
    let grid = Vector3::new(x, y, z);
    let cam = calib.rotation * grid + calib.translation;
    Point3::from(calib.rectification * cam)
}

pub fn project_point(p: &Point3<f64>, calib: &CameraCalibration) -> Result<Pixel, Behind> {
    if p.z <= EPSILON_Z {
        return Err(Behind { depth: p.z });
    }
    Ok(Pixel {
        x: calib.fx() * p.x / p.z + calib.cx(),
        y: calib.fy() * p.y / p.z + calib.cy(),
    })
}

/// Inverse of [`project_point`] for a known depth.
pub fn back_project(pixel: Pixel, depth: f64, calib: &CameraCalibration) -> Point3<f64> {
    Point3::new(
        (pixel.x - calib.cx()) * depth / calib.fx(),
        (pixel.y - calib.cy()) * depth / calib.fy(),
        depth,
    )
}

/// Projects every grid point of a frame, dropping points behind the camera
/// or outside the image. Input order is preserved.
pub fn project_frame(frame: &FrameData, calib: &CameraCalibration) -> Vec<ProjectedPoint> {
    project_points(&frame.points, calib)
}

pub fn project_points(points: &[GridPoint], calib: &CameraCalibration) -> Vec<ProjectedPoint> {
    points
        .iter()
        .filter_map(|g| {
            let pixel = project_point(&lift_grid_point(g, calib), calib).ok()?;
            if !calib.contains(pixel) {
                return None;
            }
            ProjectedPoint::new(pixel.x, pixel.y, *g).ok()
        })
        .collect()
}
