//! Chamfer and Procrustes-aligned Chamfer distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::KdTree;
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Svd3, Vec3};
use crate::scalar::Real;

pub const METERS_TO_CM: f64 = 100.0;

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Similarity<T> {
    pub scale: T,
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Similarity<T> {
    pub fn identity() -> Self {
        Self { scale: T::one(), rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p).scale(self.scale) + self.translation
    }

    pub fn apply_all(&self, points: &[Vec3<T>]) -> Vec<Vec3<T>> {
        points.iter().map(|p| self.apply(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct MetricReport<T> {
    pub chamfer_cm: T,
    pub pa_chamfer_cm: T,
    /// Similarity that maps the prediction onto the ground truth.
    pub alignment: Similarity<T>,
}

fn check_set<T: Real>(points: &[Vec3<T>], what: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid(format!("{what} point set is empty")));
    }
    if !points.iter().all(Vec3::is_finite) {
        return Err(Error::invalid(format!("{what} point set contains non-finite points")));
    }
    Ok(())
}

fn mean_nearest<T: Real>(from: &[Vec3<T>], to: &KdTree<T>) -> T {
    let d: Vec<T> = from.par_iter().map(|p| to.nearest(p).distance).collect();
    let n = T::from_usize(from.len()).expect("point count fits scalar");
    d.into_iter().sum::<T>() / n
}

/// Symmetric mean nearest-neighbor distance between two point sets, in cm.
pub fn chamfer<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<T> {
    check_set(a, "first")?;
    check_set(b, "second")?;
    let (ta, tb) = (KdTree::build(a)?, KdTree::build(b)?);
    let ab = mean_nearest(a, &tb);
    let ba = mean_nearest(b, &ta);
    Ok((ab + ba) / T::lit(2.0) * T::lit(METERS_TO_CM))
}

fn centroid<T: Real>(points: &[Vec3<T>]) -> Vec3<T> {
    let n = T::from_usize(points.len()).expect("point count fits scalar");
    points.iter().fold(Vec3::zeros(), |a, p| a + *p).scale(T::one() / n)
}

/// Least-squares similarity taking `source[i]` onto `target[i]`, with the
/// rotation restricted to `det = +1`.
pub fn procrustes_align<T: Real>(source: &[Vec3<T>], target: &[Vec3<T>]) -> Result<Similarity<T>> {
    check_set(source, "source")?;
    check_set(target, "target")?;
    if source.len() != target.len() {
        return Err(Error::invalid(format!(
            "correspondence needs equal sizes, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::degenerate("alignment needs at least three corresponding points"));
    }
    let n = T::from_usize(source.len()).expect("point count fits scalar");
    let (mx, my) = (centroid(source), centroid(target));
    let mut cov = Mat3::zeros();
    let mut scatter = Mat3::zeros();
    let mut var_x = T::zero();
    for (x, y) in source.iter().zip(target) {
        let dx = *x - mx;
        let dy = *y - my;
        cov = cov + Mat3::outer(&dy, &dx);
        scatter = scatter + Mat3::outer(&dx, &dx);
        var_x = var_x + dx.norm_squared();
    }
    cov = cov.scale(T::one() / n);
    var_x = var_x / n;
    let spread = Svd3::new(&scatter).singular_values;
    if !(spread[1] > T::lit(1e-12) * spread[0]) {
        return Err(Error::degenerate("source points are collinear or coincident"));
    }
    let svd = Svd3::new(&cov);
    let d = if (svd.u.determinant() * svd.v.determinant()) < T::zero() { -T::one() } else { T::one() };
    let fix = Mat3::diagonal([T::one(), T::one(), d]);
    let rotation = svd.u * fix * svd.v.transpose();
    let sv = svd.singular_values;
    let scale = (sv[0] + sv[1] + d * sv[2]) / var_x;
    let translation = my - rotation.mul_vec(&mx).scale(scale);
    Ok(Similarity { scale, rotation, translation })
}

/// Chamfer distance after aligning the prediction onto the truth, in cm.
pub fn pa_chamfer<T: Real>(predicted: &[Vec3<T>], truth: &[Vec3<T>]) -> Result<T> {
    Ok(evaluate(predicted, truth)?.pa_chamfer_cm)
}

/// Both metrics and the recovered alignment.
pub fn evaluate<T: Real>(predicted: &[Vec3<T>], truth: &[Vec3<T>]) -> Result<MetricReport<T>> {
    let chamfer_cm = chamfer(predicted, truth)?;
    let alignment = procrustes_align(predicted, truth)?;
    let pa_chamfer_cm = chamfer(&alignment.apply_all(predicted), truth)?;
    Ok(MetricReport { chamfer_cm, pa_chamfer_cm, alignment })
}
