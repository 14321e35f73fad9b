//! Rotation construction from axis-angle data.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Accepted deviation of a rotation axis from unit length.
pub const AXIS_NORM_TOLERANCE: f64 = 1e-6;

/// `I + sin(angle) [axis]x + (1 - cos(angle)) [axis]x^2`.
pub fn rodrigues<T: Real>(axis: &Vec3<T>, angle: T) -> Result<Mat3<T>> {
    if !axis.is_finite() || !angle.is_finite() {
        return Err(Error::invalid("rotation axis and angle must be finite"));
    }
    if (axis.norm() - T::one()).abs() > T::lit(AXIS_NORM_TOLERANCE) {
        return Err(Error::invalid(format!(
            "rotation axis must have unit norm, got {}",
            axis.norm()
        )));
    }
    Ok(rodrigues_sin_cos(axis, angle.sin(), angle.cos()))
}

/// Rodrigues formula with the angle given by its sine and cosine. The axis
/// is assumed to be unit length.
pub fn rodrigues_sin_cos<T: Real>(axis: &Vec3<T>, sin: T, cos: T) -> Mat3<T> {
    let k = Mat3::skew(axis);
    Mat3::identity() + k.scale(sin) + (k * k).scale(T::one() - cos)
}

/// Rotation matrix of an axis-angle vector; the zero vector maps to the
/// identity.
pub fn axis_angle_to_matrix<T: Real>(theta: &Vec3<T>) -> Result<Mat3<T>> {
    if !theta.is_finite() {
        return Err(Error::invalid("axis-angle vector must be finite"));
    }
    let angle = theta.norm();
    if angle == T::zero() {
        return Ok(Mat3::identity());
    }
    rodrigues(&theta.scale(T::one() / angle), angle)
}

/// Inverse of [`axis_angle_to_matrix`], returning the canonical vector with
/// magnitude in `[0, pi]`.
pub fn matrix_to_axis_angle<T: Real>(r: &Mat3<T>) -> Vec3<T> {
    let [w, x, y, z] = matrix_to_quaternion(r);
    let v = Vec3::new(x, y, z);
    let s = v.norm();
    if s == T::zero() {
        return Vec3::zeros();
    }
    let angle = T::lit(2.0) * s.atan2(w);
    v.scale(angle / s)
}

/// Rotation angle of `r` in `[0, pi]`.
pub fn rotation_angle<T: Real>(r: &Mat3<T>) -> T {
    matrix_to_axis_angle(r).norm()
}

/// Unit quaternion `[w, x, y, z]` with `w >= 0` (Shepperd's method).
pub fn matrix_to_quaternion<T: Real>(r: &Mat3<T>) -> [T; 4] {
    let m = &r.0;
    let one = T::one();
    let quarter = T::lit(0.25);
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > m[0][0] && tr > m[1][1] && tr > m[2][2] {
        let s = (one + tr).sqrt() * T::lit(2.0);
        [quarter * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[2][1] - m[1][2]) / s, quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s]
    };
    let n = q.iter().fold(T::zero(), |a, v| a + *v * *v).sqrt();
    let sign = if q[0] < T::zero() { -one } else { one };
    q.map(|v| sign * v / n)
}
