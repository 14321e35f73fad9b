//! Contact pseudo-labels for object points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::kdtree::{KdTree, Nearest};
use crate::error::{Error, Result};
use crate::ik::NO_CONTACT;
use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::skeleton::BODY_PART_COUNT;

/// Contact threshold on the point-to-body distance, meters.
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 0.04;
/// Number of contact classes: the body parts plus "no contact".
pub const CONTACT_CLASSES: usize = BODY_PART_COUNT as usize + 1;

/// Human mesh vertices with one body part (1..=14) each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct PartLabeledMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub parts: Vec<u8>,
}

impl<T: Real> PartLabeledMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, parts: Vec<u8>) -> Result<Self> {
        let mesh = Self { vertices, parts };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::invalid("human mesh has no vertices"));
        }
        if self.vertices.len() != self.parts.len() {
            return Err(Error::invalid(format!(
                "{} vertices but {} part labels",
                self.vertices.len(),
                self.parts.len()
            )));
        }
        if let Some(bad) = self.parts.iter().find(|&&p| p == 0 || p > BODY_PART_COUNT) {
            return Err(Error::invalid(format!("vertex part label {bad} outside 1..={BODY_PART_COUNT}")));
        }
        Ok(())
    }

    /// One-hot part vector of vertex `i`.
    pub fn one_hot(&self, i: usize) -> [u8; BODY_PART_COUNT as usize] {
        let mut v = [0; BODY_PART_COUNT as usize];
        v[self.parts[i] as usize - 1] = 1;
        v
    }
}

/// Object points with a contact class each: a body part 1..=14 or 15 for
/// no contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct LabeledPointCloud<T> {
    pub points: Vec<Vec3<T>>,
    pub labels: Vec<u8>,
}

impl<T: Real> LabeledPointCloud<T> {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return Err(Error::invalid("point and label counts differ"));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l == 0 || l > NO_CONTACT) {
            return Err(Error::invalid(format!("contact class {bad} outside 1..={NO_CONTACT}")));
        }
        Ok(())
    }

    pub fn one_hot(&self, i: usize) -> [u8; CONTACT_CLASSES] {
        let mut v = [0; CONTACT_CLASSES];
        v[self.labels[i] as usize - 1] = 1;
        v
    }

    /// Number of points per class, indexed by class - 1.
    pub fn histogram(&self) -> [usize; CONTACT_CLASSES] {
        let mut h = [0; CONTACT_CLASSES];
        for &l in &self.labels {
            h[l as usize - 1] += 1;
        }
        h
    }

    /// The most frequent contacted body part, lowest label on ties.
    pub fn dominant_part(&self) -> Option<u8> {
        let h = self.histogram();
        let (idx, &count) = h[..BODY_PART_COUNT as usize]
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|(_, &c)| c)?;
        (count > 0).then_some(idx as u8 + 1)
    }

    /// Points carrying `label`.
    pub fn points_with(&self, label: u8) -> Vec<Vec3<T>> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Class for a point at `distance` from a vertex of `part`.
pub fn classify<T: Real>(distance: T, part: u8, threshold: T) -> u8 {
    if distance < threshold {
        part
    } else {
        NO_CONTACT
    }
}

/// Nearest human vertex for every object point.
pub fn nearest_vertices<T: Real>(object: &[Vec3<T>], index: &KdTree<T>) -> Vec<Nearest<T>> {
    object.par_iter().map(|p| index.nearest(p)).collect()
}

/// Distance and index of the mesh vertex nearest to `point`.
pub fn nearest_distance<T: Real>(point: &Vec3<T>, mesh: &PartLabeledMesh<T>) -> Result<Nearest<T>> {
    mesh.validate()?;
    crate::contact::kdtree::brute_force_nearest(&mesh.vertices, point)
}

/// Labels every object point with the part of its nearest human vertex when
/// closer than `threshold`, and with the no-contact class otherwise.
pub fn contact_labels<T: Real>(
    object: &[Vec3<T>],
    mesh: &PartLabeledMesh<T>,
    threshold: T,
) -> Result<LabeledPointCloud<T>> {
    if object.is_empty() {
        return Err(Error::invalid("object point cloud is empty"));
    }
    if !(threshold >= T::zero()) || !threshold.is_finite() {
        return Err(Error::invalid("contact threshold must be a finite non-negative distance"));
    }
    if !object.iter().all(Vec3::is_finite) {
        return Err(Error::invalid("object point cloud contains non-finite points"));
    }
    mesh.validate()?;
    let index = KdTree::build(&mesh.vertices)?;
    let labels = nearest_vertices(object, &index)
        .into_iter()
        .map(|n| classify(n.distance, mesh.parts[n.index], threshold))
        .collect();
    Ok(LabeledPointCloud { points: object.to_vec(), labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> PartLabeledMesh<f64> {
        PartLabeledMesh::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)], vec![3, 7]).unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let m = mesh();
        let at = |d: f64| contact_labels(&[Vec3::new(0.0, d, 0.0)], &m, 0.04).unwrap().labels[0];
        assert_eq!(at(0.02), 3);
        assert_eq!(at(0.04), NO_CONTACT);
        assert_eq!(at(0.05), NO_CONTACT);
    }

    #[test]
    fn zero_threshold_means_no_contact() {
        let l = contact_labels(&[Vec3::zeros()], &mesh(), 0.0).unwrap();
        assert_eq!(l.labels, vec![NO_CONTACT]);
    }

    #[test]
    fn one_hot_has_single_entry() {
        let l = contact_labels(&[Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0)], &mesh(), 0.04).unwrap();
        for i in 0..2 {
            assert_eq!(l.one_hot(i).iter().map(|&v| v as u32).sum::<u32>(), 1);
        }
        assert_eq!(l.one_hot(1)[14], 1);
        assert_eq!(l.one_hot(0)[2], 1);
    }

    #[test]
    fn nearest_distance_examples() {
        let m = PartLabeledMesh::new(vec![Vec3::zeros()], vec![1]).unwrap();
        let n = nearest_distance(&Vec3::new(0.0, 0.0, 1.0), &m).unwrap();
        assert_eq!((n.distance, n.index), (1.0, 0));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(PartLabeledMesh::<f64>::new(vec![], vec![]).is_err());
        assert!(PartLabeledMesh::new(vec![Vec3::<f64>::zeros()], vec![15]).is_err());
        assert!(contact_labels(&[], &mesh(), 0.04).is_err());
        assert!(contact_labels(&[Vec3::zeros()], &mesh(), -1.0).is_err());
    }

    #[test]
    fn dominant_part_prefers_lowest_label_on_ties() {
        let l = LabeledPointCloud { points: vec![Vec3::<f64>::zeros(); 5], labels: vec![7, 3, 15, 7, 3] };
        assert_eq!(l.dominant_part(), Some(3));
        let none = LabeledPointCloud { points: vec![Vec3::<f64>::zeros()], labels: vec![15] };
        assert_eq!(none.dominant_part(), None);
    }
}
