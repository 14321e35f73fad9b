//! Pinhole camera shared by the IK 2D root term and point-to-grid projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Points closer to the image plane than this are rejected.
pub const MIN_DEPTH: f64 = 1e-6;

/// Intrinsics plus a world-to-camera extrinsic `x_cam = R * x_world + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Camera<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    /// Image size in pixels.
    pub width: u32,
    pub height: u32,
    #[serde(default = "Mat3::identity")]
    pub rotation: Mat3<T>,
    #[serde(default = "Vec3::zeros")]
    pub translation: Vec3<T>,
}

impl<T: Real> Camera<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn to_camera_frame(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Pixel coordinates `(fx x/z + cx, fy y/z + cy)` of a world point.
    pub fn project(&self, p: &Vec3<T>) -> Result<[T; 2]> {
        let c = self.to_camera_frame(p);
        if !(c.z() > T::lit(MIN_DEPTH)) {
            return Err(Error::Projection(format!("point has depth {} in camera frame", c.z())));
        }
        Ok([self.fx * c.x() / c.z() + self.cx, self.fy * c.y() / c.z() + self.cy])
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite())
            && self.rotation.is_finite()
            && self.translation.is_finite();
        if !finite || !(self.fx > T::zero()) || !(self.fy > T::zero()) {
            return Err(Error::invalid("camera intrinsics must be finite with positive focal lengths"));
        }
        if self.rotation.rotation_defect() > T::lit(1e-6) {
            return Err(Error::invalid("camera rotation is not a proper rotation"));
        }
        Ok(())
    }
}

/// Root-joint projection used by the 2D term of the IK loss.
pub fn project_root_2d<T: Real>(root: &Vec3<T>, camera: &Camera<T>) -> Result<[T; 2]> {
    camera.project(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::axis_angle_to_matrix;
    use proptest::prelude::*;

    fn cam() -> Camera<f64> {
        Camera::new(500.0, 500.0, 0.0, 0.0, 640, 480)
    }

    #[test]
    fn on_axis_point_projects_to_principal_point() {
        assert_eq!(project_root_2d(&Vec3::new(0.0, 0.0, 2.0), &cam()).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn similar_triangles() {
        assert_eq!(project_root_2d(&Vec3::new(1.0, 0.0, 2.0), &cam()).unwrap(), [250.0, 0.0]);
    }

    #[test]
    fn behind_camera_is_rejected() {
        assert!(matches!(cam().project(&Vec3::new(0.0, 0.0, -1.0)), Err(Error::Projection(_))));
        assert!(matches!(cam().project(&Vec3::new(0.0, 0.0, 0.0)), Err(Error::Projection(_))));
    }

    proptest! {
        #[test]
        fn matches_homogeneous_projection(
            x in -2.0f64..2.0, y in -2.0f64..2.0, z in 1.0f64..6.0,
            rx in -0.3f64..0.3, ry in -0.3f64..0.3, tz in -0.5f64..0.5,
        ) {
            let mut c = Camera::new(800.0, 750.0, 320.0, 240.0, 640, 480);
            c.rotation = axis_angle_to_matrix(&Vec3::new(rx, ry, 0.0)).unwrap();
            c.translation = Vec3::new(0.1, -0.2, tz);
            // K [R | t] as an explicit 3x4 matrix applied to (x, y, z, 1).
            let k = [[c.fx, 0.0, c.cx], [0.0, c.fy, c.cy], [0.0, 0.0, 1.0]];
            let mut rt = [[0.0; 4]; 3];
            for (r, row) in rt.iter_mut().enumerate() {
                row[..3].copy_from_slice(&c.rotation.0[r]);
                row[3] = c.translation[r];
            }
            let mut p = [[0.0; 4]; 3];
            for r in 0..3 {
                for col in 0..4 {
                    p[r][col] = (0..3).map(|m| k[r][m] * rt[m][col]).sum();
                }
            }
            let h = [x, y, z, 1.0];
            let img: Vec<f64> = (0..3).map(|r| (0..4).map(|m| p[r][m] * h[m]).sum()).collect();
            prop_assume!(img[2] > 1e-3);
            let got = c.project(&Vec3::new(x, y, z)).unwrap();
            prop_assert!((got[0] - img[0] / img[2]).abs() <= 1e-9);
            prop_assert!((got[1] - img[1] / img[2]).abs() <= 1e-9);
        }
    }
}
