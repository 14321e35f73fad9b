//! Small fixed-size linear algebra: 3-vectors, 3x3 matrices and 4x4 rigid
//! transforms, plus a Jacobi SVD for 3x3 matrices.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Copy> From<[T; 3]> for Vec3<T> {
    fn from(v: [T; 3]) -> Self {
        Vec3(v)
    }
}

impl<T: Copy> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        v.0
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn zeros() -> Self {
        Vec3([T::zero(); 3])
    }

    #[inline]
    pub fn x(&self) -> T {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> T {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> T {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        let [a, b, c] = self.0;
        let [x, y, z] = o.0;
        Vec3([b * z - c * y, c * x - a * z, a * y - b * x])
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    /// Returns `None` when the norm is below `eps`.
    pub fn try_normalize(&self, eps: T) -> Option<Self> {
        let n = self.norm();
        if n.is_finite() && n > eps {
            Some(self.scale(T::one() / n))
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &Self) -> T {
        (*self - *other).norm()
    }

    pub fn cast<U: Real>(&self) -> Vec3<U> {
        Vec3(self.0.map(|v| U::lit(v.to_f64_lossy())))
    }

    /// Unit vector orthogonal to `self` (which need not be normalized).
    pub fn any_orthogonal(&self) -> Self {
        let [x, y, z] = self.0.map(|v| v.abs());
        let other = if x <= y && x <= z {
            Vec3::new(T::one(), T::zero(), T::zero())
        } else if y <= z {
            Vec3::new(T::zero(), T::one(), T::zero())
        } else {
            Vec3::new(T::zero(), T::zero(), T::one())
        };
        let c = self.cross(&other);
        c.scale(T::one() / c.norm())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3(self.0.map(|v| -v))
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Copy> From<[[T; 3]; 3]> for Mat3<T> {
    fn from(m: [[T; 3]; 3]) -> Self {
        Mat3(m)
    }
}

impl<T: Copy> From<Mat3<T>> for [[T; 3]; 3] {
    fn from(m: Mat3<T>) -> Self {
        m.0
    }
}

impl<T: Real> Default for Mat3<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Mat3<T> {
    pub fn zeros() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat3([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn from_columns(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        Mat3([
            [c0[0], c1[0], c2[0]],
            [c0[1], c1[1], c2[1]],
            [c0[2], c1[2], c2[2]],
        ])
    }

    pub fn diagonal(d: [T; 3]) -> Self {
        let z = T::zero();
        Mat3([[d[0], z, z], [z, d[1], z], [z, z, d[2]]])
    }

    /// Cross-product matrix `[v]x` such that `[v]x * w = v x w`.
    pub fn skew(v: &Vec3<T>) -> Self {
        let z = T::zero();
        let [x, y, w] = v.0;
        Mat3([[z, -w, y], [w, z, -x], [-y, x, z]])
    }

    /// Outer product `a * b^T`.
    pub fn outer(a: &Vec3<T>, b: &Vec3<T>) -> Self {
        let mut m = Self::zeros();
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] = a[r] * b[c];
            }
        }
        m
    }

    pub fn column(&self, c: usize) -> Vec3<T> {
        Vec3([self.0[0][c], self.0[1][c], self.0[2][c]])
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros();
        for r in 0..3 {
            for c in 0..3 {
                t.0[c][r] = self.0[r][c];
            }
        }
        t
    }

    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn scale(&self, s: T) -> Self {
        Mat3(self.0.map(|row| row.map(|v| v * s)))
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3([
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest absolute entry of `R^T R - I` together with `|det R - 1|`.
    pub fn rotation_defect(&self) -> T {
        let rtr = self.transpose() * *self;
        let id = Self::identity();
        let mut worst = (self.determinant() - T::one()).abs();
        for r in 0..3 {
            for c in 0..3 {
                worst = worst.max((rtr.0[r][c] - id.0[r][c]).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for r in 0..3 {
            for c in 0..3 {
                worst = worst.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        worst
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        Mat3(self.0.map(|row| row.map(|v| U::lit(v.to_f64_lossy()))))
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::zeros();
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] = self.0[r][0] * o.0[0][c] + self.0[r][1] * o.0[1][c] + self.0[r][2] * o.0[2][c];
            }
        }
        out
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] = out.0[r][c] + o.0[r][c];
            }
        }
        out
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}

/// Homogeneous 4x4 transform. The bottom row is kept at `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RigidTransform<T>(pub [[T; 4]; 4]);

impl<T: Copy> From<[[T; 4]; 4]> for RigidTransform<T> {
    fn from(m: [[T; 4]; 4]) -> Self {
        RigidTransform(m)
    }
}

impl<T: Copy> From<RigidTransform<T>> for [[T; 4]; 4] {
    fn from(m: RigidTransform<T>) -> Self {
        m.0
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self::from_parts(&Mat3::identity(), &Vec3::zeros())
    }

    pub fn from_parts(rotation: &Mat3<T>, translation: &Vec3<T>) -> Self {
        let (o, z) = (T::one(), T::zero());
        let r = &rotation.0;
        RigidTransform([
            [r[0][0], r[0][1], r[0][2], translation[0]],
            [r[1][0], r[1][1], r[1][2], translation[1]],
            [r[2][0], r[2][1], r[2][2], translation[2]],
            [z, z, z, o],
        ])
    }

    pub fn rotation(&self) -> Mat3<T> {
        let m = &self.0;
        Mat3([
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ])
    }

    /// The `[:3, 3]` column.
    pub fn translation(&self) -> Vec3<T> {
        Vec3([self.0[0][3], self.0[1][3], self.0[2][3]])
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation().mul_vec(p) + self.translation()
    }

    /// Full 4x4 product, bottom row included.
    pub fn compose(&self, o: &Self) -> Self {
        let mut out = [[T::zero(); 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..4).fold(T::zero(), |acc, k| acc + self.0[r][k] * o.0[k][c]);
            }
        }
        RigidTransform(out)
    }

    pub fn has_canonical_bottom_row(&self) -> bool {
        let b = self.0[3];
        b[0] == T::zero() && b[1] == T::zero() && b[2] == T::zero() && b[3] == T::one()
    }
}

impl<T: Real> Mul for RigidTransform<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.compose(&o)
    }
}

/// Singular value decomposition `A = U diag(s) V^T` with descending `s`.
#[derive(Debug, Clone, Copy)]
pub struct Svd3<T> {
    pub u: Mat3<T>,
    pub singular_values: [T; 3],
    pub v: Mat3<T>,
}

impl<T: Real> Svd3<T> {
    /// One-sided Jacobi SVD. `U` and `V` are always orthogonal, including
    /// for rank-deficient input.
    pub fn new(a: &Mat3<T>) -> Self {
        let mut w = *a;
        let mut v = Mat3::identity();
        let eps = T::epsilon();
        for _sweep in 0..64 {
            let mut rotated = false;
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for r in 0..3 {
                    alpha = alpha + w.0[r][p] * w.0[r][p];
                    beta = beta + w.0[r][q] * w.0[r][q];
                    gamma = gamma + w.0[r][p] * w.0[r][q];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for m in [&mut w, &mut v] {
                    for r in 0..3 {
                        let xp = m.0[r][p];
                        let xq = m.0[r][q];
                        m.0[r][p] = c * xp - s * xq;
                        m.0[r][q] = s * xp + c * xq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }

        let mut order = [0usize, 1, 2];
        let norms = [w.column(0).norm(), w.column(1).norm(), w.column(2).norm()];
        order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
        let s = order.map(|i| norms[i]);
        let v_sorted = Mat3::from_columns(v.column(order[0]), v.column(order[1]), v.column(order[2]));

        let tiny = eps * T::lit(16.0) * s[0].max(T::min_positive_value());
        let mut ucols = [Vec3::zeros(); 3];
        let mut filled = 0;
        for (k, &i) in order.iter().enumerate() {
            if s[k] > tiny {
                ucols[k] = w.column(i).scale(T::one() / s[k]);
                filled = k + 1;
            }
        }
        // Complete U to an orthonormal basis when A is rank deficient.
        if filled == 0 {
            ucols[0] = Vec3::new(T::one(), T::zero(), T::zero());
            filled = 1;
        }
        if filled == 1 {
            ucols[1] = ucols[0].any_orthogonal();
            filled = 2;
        }
        if filled == 2 {
            ucols[2] = ucols[0].cross(&ucols[1]);
        }
        Svd3 {
            u: Mat3::from_columns(ucols[0], ucols[1], ucols[2]),
            singular_values: s,
            v: v_sorted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_matches_cross_product() {
        let a = Vec3::new(0.3, -1.2, 2.0);
        let b = Vec3::new(-0.7, 0.4, 1.1);
        let d = Mat3::skew(&a).mul_vec(&b) - a.cross(&b);
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_input() {
        let a: Mat3<f64> = Mat3([[2.0, -1.0, 0.5], [0.3, 4.0, -2.0], [1.0, 1.0, 1.0]]);
        let svd = Svd3::new(&a);
        let s = Mat3::diagonal(svd.singular_values);
        let back = svd.u * s * svd.v.transpose();
        assert!(back.max_abs_diff(&a) < 1e-12);
        assert!(svd.u.rotation_defect().abs() < 1e-12 || (svd.u.determinant() + 1.0).abs() < 1e-12);
        assert!(svd.singular_values[0] >= svd.singular_values[1]);
        assert!(svd.singular_values[1] >= svd.singular_values[2]);
    }

    #[test]
    fn svd_rank_one_still_orthogonal() {
        let a = Mat3::outer(&Vec3::new(1.0, 2.0, 3.0), &Vec3::new(-1.0, 0.5, 0.0));
        let svd = Svd3::new(&a);
        let utu = svd.u.transpose() * svd.u;
        assert!(utu.max_abs_diff(&Mat3::identity()) < 1e-12);
        let back = svd.u * Mat3::diagonal(svd.singular_values) * svd.v.transpose();
        assert!(back.max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn transform_bottom_row() {
        let t = RigidTransform::from_parts(&Mat3::<f64>::identity(), &Vec3::new(1.0, 2.0, 3.0));
        assert!(t.has_canonical_bottom_row());
        assert!((t * t).has_canonical_bottom_row());
        assert_eq!((t * t).translation(), Vec3::new(2.0, 4.0, 6.0));
    }
}
