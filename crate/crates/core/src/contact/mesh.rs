//! Part-labelled stick-figure mesh derived from skeleton joint positions.

use crate::contact::labels::PartLabeledMesh;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::skeleton::KinematicTree;

/// Vertices at every joint plus `samples_per_bone` interior points on each
/// bone. Joint vertices take the joint's part; bone samples take the part
/// of the bone's parent joint.
pub fn stick_figure_mesh<T: Real>(
    tree: &KinematicTree<T>,
    positions: &[Vec3<T>],
    samples_per_bone: usize,
) -> Result<PartLabeledMesh<T>> {
    if positions.len() != tree.joint_count() {
        return Err(Error::invalid(format!(
            "{} joint positions for a {}-joint skeleton",
            positions.len(),
            tree.joint_count()
        )));
    }
    let mut vertices = positions.to_vec();
    let mut parts: Vec<u8> = (0..tree.joint_count()).map(|j| tree.part_of_joint(j)).collect();
    let denom = T::from_usize(samples_per_bone + 1).expect("sample count fits scalar");
    for j in 0..tree.joint_count() {
        let Some(p) = tree.parent(j) else { continue };
        let label = tree.part_of_joint(p);
        for k in 1..=samples_per_bone {
            let s = T::from_usize(k).expect("sample index fits scalar") / denom;
            vertices.push(positions[p] + (positions[j] - positions[p]).scale(s));
            parts.push(label);
        }
    }
    PartLabeledMesh::new(vertices, parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_mesh_has_expected_size_and_labels() {
        let tree = KinematicTree::<f64>::synthetic();
        let m = stick_figure_mesh(&tree, tree.template(), 4).unwrap();
        assert_eq!(m.vertices.len(), 24 + 23 * 4);
        assert_eq!(&m.vertices[..24], tree.template());
        for j in 0..24 {
            assert_eq!(m.parts[j], tree.part_of_joint(j));
        }
    }
}
