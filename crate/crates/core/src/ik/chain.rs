//! Kinematic-chain activation from a contacted body part.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::skeleton::{ChainId, KinematicTree, BODY_PART_COUNT};

/// Contact class meaning "no contact".
pub const NO_CONTACT: u8 = BODY_PART_COUNT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointType {
    /// The joint driven to the contact region.
    Target,
    /// A chain joint above the target whose rotation is optimized.
    Rotation,
    /// The root: optimized rotation plus the global translation increment.
    Translation,
    /// Keeps its input rotation.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub chain: ChainId,
    pub target: usize,
    /// One entry per skeleton joint.
    pub joint_types: Vec<JointType>,
}

impl ChainSpec {
    /// Joints whose rotation can move the target: the root and every chain
    /// joint strictly between the root and the target, root first.
    pub fn driven_joints(&self) -> Vec<usize> {
        self.joint_types
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t, JointType::Rotation | JointType::Translation))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn check_against<T: Real>(&self, tree: &KinematicTree<T>) -> Result<()> {
        if self.joint_types.len() != tree.joint_count() {
            return Err(Error::Configuration("joint type table does not match skeleton".into()));
        }
        let chain = tree.chain(self.chain);
        if !chain.contains(&self.target) {
            return Err(Error::Configuration(format!(
                "target joint {} is not on chain {}",
                self.target, self.chain
            )));
        }
        for (i, t) in self.joint_types.iter().enumerate() {
            let ok = match t {
                JointType::Target => i == self.target,
                JointType::Translation => tree.parent(i).is_none(),
                JointType::Rotation => chain.contains(&i),
                JointType::Fixed => i != self.target,
            };
            if !ok {
                return Err(Error::Configuration(format!("joint {i} cannot have type {t:?}")));
            }
        }
        Ok(())
    }
}

/// Activates the chain containing the contacted part and assigns joint types.
pub fn activate_chain<T: Real>(tree: &KinematicTree<T>, part_label: u8) -> Result<ChainSpec> {
    if part_label == NO_CONTACT {
        return Err(Error::invalid("the no-contact class does not name a body part"));
    }
    let part = tree
        .part(part_label)
        .ok_or_else(|| Error::invalid(format!("unknown body part label {part_label}")))?;
    let target = part.target;
    let chain = tree.chain(part.chain);
    let joint_types = (0..tree.joint_count())
        .map(|i| {
            if i == target {
                JointType::Target
            } else if tree.parent(i).is_none() {
                JointType::Translation
            } else if chain.contains(&i) && tree.is_ancestor(i, target) {
                JointType::Rotation
            } else {
                JointType::Fixed
            }
        })
        .collect();
    Ok(ChainSpec { chain: part.chain, target, joint_types })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_hand_drives_left_wrist() {
        let tree = KinematicTree::<f64>::synthetic();
        let label = tree.parts().iter().find(|p| p.name == "left_hand").unwrap().label;
        let spec = activate_chain(&tree, label).unwrap();
        assert_eq!(spec.chain, ChainId::LeftArm);
        assert_eq!(spec.target, 20);
        assert_eq!(spec.driven_joints(), vec![0, 3, 6, 9, 13, 16, 18]);
        assert_eq!(spec.joint_types[22], JointType::Fixed);
        assert_eq!(spec.joint_types[0], JointType::Translation);
        spec.check_against(&tree).unwrap();
    }

    #[test]
    fn right_foot_drives_right_ankle() {
        let tree = KinematicTree::<f64>::synthetic();
        let label = tree.parts().iter().find(|p| p.name == "right_foot").unwrap().label;
        let spec = activate_chain(&tree, label).unwrap();
        assert_eq!(spec.chain, ChainId::RightLeg);
        assert_eq!(spec.target, 8);
    }

    #[test]
    fn off_chain_joints_are_fixed() {
        let tree = KinematicTree::<f64>::synthetic();
        for part in tree.parts() {
            let spec = activate_chain(&tree, part.label).unwrap();
            let chain = tree.chain(spec.chain);
            for (i, t) in spec.joint_types.iter().enumerate() {
                if !chain.contains(&i) {
                    assert_eq!(*t, JointType::Fixed);
                }
            }
            assert_eq!(spec.joint_types.iter().filter(|t| **t == JointType::Target).count(), 1);
        }
    }

    #[test]
    fn no_contact_label_is_rejected() {
        let tree = KinematicTree::<f64>::synthetic();
        assert!(matches!(activate_chain(&tree, 15), Err(Error::InvalidArgument(_))));
        assert!(activate_chain(&tree, 0).is_err());
    }
}
