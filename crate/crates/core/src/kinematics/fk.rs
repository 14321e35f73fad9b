//! Forward kinematics and its twist-swing extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ik::ChainSpec;
use crate::kinematics::rotation::{axis_angle_to_matrix, rodrigues};
use crate::linalg::{Mat3, RigidTransform, Vec3};
use crate::scalar::Real;
use crate::skeleton::{KinematicTree, MIN_BONE_LENGTH};

/// Per-joint axis-angle rotations plus the global translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseState<T> {
    pub theta: Vec<Vec3<T>>,
    pub translation: Vec3<T>,
}

impl<T: Real> PoseState<T> {
    pub fn zero(joint_count: usize) -> Self {
        Self {
            theta: vec![Vec3::zeros(); joint_count],
            translation: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite() && self.theta.iter().all(Vec3::is_finite)
    }

    /// True when every rotation vector has magnitude at most pi.
    pub fn is_canonical(&self) -> bool {
        let limit = T::PI() + T::lit(1e-12);
        self.theta.iter().all(|t| t.norm() <= limit)
    }

    pub fn validate(&self, joint_count: usize) -> Result<()> {
        if self.theta.len() != joint_count {
            return Err(Error::invalid(format!(
                "pose has {} rotations for {joint_count} joints",
                self.theta.len()
            )));
        }
        if !self.is_finite() {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        Ok(())
    }

    /// Flattened `theta` followed by the translation.
    pub fn flatten(&self) -> Vec<T> {
        let mut out: Vec<T> = self.theta.iter().flat_map(|t| t.0).collect();
        out.extend(self.translation.0);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkOutput<T> {
    /// World transform of every joint, without the global translation.
    pub transforms: Vec<RigidTransform<T>>,
    /// Joint positions including the global translation.
    pub positions: Vec<Vec3<T>>,
}

/// Relative transform of `joint` with respect to its parent.
pub(crate) fn relative_transform<T: Real>(
    tree: &KinematicTree<T>,
    joint: usize,
    rotation: &Mat3<T>,
) -> RigidTransform<T> {
    let q = tree.template();
    let offset = match tree.parent(joint) {
        Some(p) => q[joint] - q[p],
        None => q[joint],
    };
    RigidTransform::from_parts(rotation, &offset)
}

/// Recursively composes the template body parts from the root outward.
pub fn fk<T: Real>(tree: &KinematicTree<T>, pose: &PoseState<T>) -> Result<FkOutput<T>> {
    pose.validate(tree.joint_count())?;
    let n = tree.joint_count();
    let mut transforms = vec![RigidTransform::identity(); n];
    for &i in tree.order() {
        let local = relative_transform(tree, i, &axis_angle_to_matrix(&pose.theta[i])?);
        transforms[i] = match tree.parent(i) {
            Some(p) => transforms[p] * local,
            None => local,
        };
    }
    let positions = transforms
        .iter()
        .map(|t| t.translation() + pose.translation)
        .collect();
    Ok(FkOutput { transforms, positions })
}

/// Unit direction of the bone ending at joint `i`.
pub fn twist_direction<T: Real>(tree: &KinematicTree<T>, positions: &[Vec3<T>], i: usize) -> Result<Vec3<T>> {
    let parent = tree
        .parent(i)
        .ok_or_else(|| Error::invalid("the root joint has no twist direction"))?;
    (positions[i] - positions[parent])
        .try_normalize(T::lit(MIN_BONE_LENGTH))
        .ok_or_else(|| Error::degenerate(format!("bone {parent}->{i} has zero length")))
}

/// Twist axis used for `joint` on `chain`, in the joint's rest frame.
///
/// Non-root joints twist about the rest-pose bone arriving at them. The root
/// has no parent bone and twists about the bone towards the next chain joint.
pub fn twist_axis<T: Real>(tree: &KinematicTree<T>, chain: &[usize], joint: usize) -> Result<Vec3<T>> {
    if tree.parent(joint).is_some() {
        return twist_direction(tree, tree.template(), joint);
    }
    let next = chain
        .iter()
        .copied()
        .find(|&j| tree.parent(j) == Some(joint))
        .ok_or_else(|| Error::Configuration("chain has no joint after the root".into()))?;
    let q = tree.template();
    (q[next] - q[joint])
        .try_normalize(T::lit(MIN_BONE_LENGTH))
        .ok_or_else(|| Error::degenerate("root bone has zero length"))
}

/// Twist and swing of one driven joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTwistSwing<T> {
    pub joint: usize,
    /// Twist angle about the bone, radians.
    pub phi: T,
    /// Swing angle, radians.
    pub alpha: T,
    /// Unit swing axis.
    pub swing_axis: Vec3<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistSwingParams<T> {
    pub joints: Vec<JointTwistSwing<T>>,
    pub delta_t: Vec3<T>,
}

impl<T: Real> TwistSwingParams<T> {
    /// Zero rotation and translation for every joint of `chain`.
    pub fn zero(chain: &[usize]) -> Self {
        Self {
            joints: chain
                .iter()
                .map(|&joint| JointTwistSwing {
                    joint,
                    phi: T::zero(),
                    alpha: T::zero(),
                    swing_axis: Vec3::new(T::zero(), T::zero(), T::one()),
                })
                .collect(),
            delta_t: Vec3::zeros(),
        }
    }

    pub fn validate(&self, gamma: T) -> Result<()> {
        let slack = T::lit(1e-12);
        for j in &self.joints {
            if !(j.phi.abs() <= gamma + slack && j.alpha.abs() <= gamma + slack) {
                return Err(Error::invalid(format!("joint {}: twist/swing angle exceeds range", j.joint)));
            }
            if (j.swing_axis.norm() - T::one()).abs() > T::lit(1e-9) {
                return Err(Error::invalid(format!("joint {}: swing axis is not unit length", j.joint)));
            }
        }
        if !self.delta_t.is_finite() {
            return Err(Error::invalid("translation increment is not finite"));
        }
        Ok(())
    }

    pub fn max_abs_angles(&self) -> (T, T) {
        self.joints.iter().fold((T::zero(), T::zero()), |(p, a), j| {
            (p.max(j.phi.abs()), a.max(j.alpha.abs()))
        })
    }
}

/// Extra rotation `R_tw(m, phi) * R_sw(n, alpha)` of one joint.
pub fn delta_rotation<T: Real>(twist_axis: &Vec3<T>, js: &JointTwistSwing<T>) -> Result<Mat3<T>> {
    Ok(rodrigues(twist_axis, js.phi)? * rodrigues(&js.swing_axis, js.alpha)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovedFkOutput<T> {
    pub transforms: Vec<RigidTransform<T>>,
    /// All joint positions, including `t + delta_t`.
    pub positions: Vec<Vec3<T>>,
    /// Position of the chain's target joint.
    pub target: Vec3<T>,
    /// Extra rotation applied to each joint (identity off the chain).
    pub delta_rotations: Vec<Mat3<T>>,
}

/// Forward kinematics with the twist-swing rotation composed on the active
/// chain's joints and the translation increment added to every joint.
pub fn improved_fk<T: Real>(
    tree: &KinematicTree<T>,
    pose: &PoseState<T>,
    ts: &TwistSwingParams<T>,
    active: &ChainSpec,
) -> Result<ImprovedFkOutput<T>> {
    pose.validate(tree.joint_count())?;
    active.check_against(tree)?;
    let n = tree.joint_count();
    let chain = tree.chain(active.chain);
    let mut delta = vec![Mat3::identity(); n];
    for js in &ts.joints {
        if !chain.contains(&js.joint) {
            return Err(Error::Configuration(format!(
                "joint {} carries twist-swing parameters but is not on chain {}",
                js.joint, active.chain
            )));
        }
        delta[js.joint] = delta_rotation(&twist_axis(tree, chain, js.joint)?, js)?;
    }

    let mut transforms = vec![RigidTransform::identity(); n];
    for &i in tree.order() {
        let rot = axis_angle_to_matrix(&pose.theta[i])? * delta[i];
        let local = relative_transform(tree, i, &rot);
        transforms[i] = match tree.parent(i) {
            Some(p) => transforms[p] * local,
            None => local,
        };
    }
    let shift = pose.translation + ts.delta_t;
    let positions: Vec<Vec3<T>> = transforms.iter().map(|t| t.translation() + shift).collect();
    Ok(ImprovedFkOutput {
        target: positions[active.target],
        transforms,
        positions,
        delta_rotations: delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ik::activate_chain;
    use crate::skeleton::{ChainId, SkeletonFile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_pose(rng: &mut ChaCha8Rng, n: usize) -> PoseState<f64> {
        PoseState {
            theta: (0..n)
                .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            translation: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        }
    }

    /// Multiplies the relative transforms along the root-to-joint path.
    fn path_product(tree: &KinematicTree<f64>, pose: &PoseState<f64>, joint: usize) -> Vec3<f64> {
        let q = tree.template();
        let mut acc = RigidTransform::identity();
        for j in tree.path_to(joint) {
            let offset = tree.parent(j).map_or(q[j], |p| q[j] - q[p]);
            let r = axis_angle_to_matrix(&pose.theta[j]).unwrap();
            acc = acc * RigidTransform::from_parts(&r, &offset);
        }
        acc.translation() + pose.translation
    }

    fn two_joint_tree() -> KinematicTree<f64> {
        let part = |label: u8, joint: usize| crate::skeleton::BodyPart {
            label,
            name: format!("p{label}"),
            chain: ChainId::Body,
            target: joint,
            joints: vec![joint],
        };
        let file = SkeletonFile {
            name: "two".into(),
            joint_names: vec![],
            parents: vec![-1, 0],
            template: vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            chains: ChainId::ALL.iter().map(|&c| (c, vec![0, 1])).collect(),
            parts: vec![part(1, 0), part(2, 1)],
        };
        KinematicTree::from_file(&file).unwrap()
    }

    #[test]
    fn zero_pose_reproduces_template() {
        let tree = KinematicTree::<f64>::synthetic();
        let out = fk(&tree, &PoseState::zero(24)).unwrap();
        for (p, q) in out.positions.iter().zip(tree.template()) {
            assert!(p.distance(q) < 1e-15);
        }
        assert!(out.transforms.iter().all(|t| t.has_canonical_bottom_row()));
    }

    #[test]
    fn matches_path_product_oracle() {
        let tree = KinematicTree::<f64>::synthetic();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pose = random_pose(&mut rng, 24);
            let out = fk(&tree, &pose).unwrap();
            for j in 0..24 {
                assert!((out.positions[j] - path_product(&tree, &pose, j)).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn rejects_wrong_joint_count() {
        let tree = KinematicTree::<f64>::synthetic();
        assert!(fk(&tree, &PoseState::zero(23)).is_err());
    }

    #[test]
    fn twist_direction_of_axis_aligned_bone() {
        let tree = KinematicTree::<f64>::synthetic();
        let mut pos = tree.template().to_vec();
        pos[0] = Vec3::zeros();
        pos[3] = Vec3::new(0.0, 2.0, 0.0);
        assert_eq!(twist_direction(&tree, &pos, 3).unwrap(), Vec3::new(0.0, 1.0, 0.0));
        pos[3] = pos[0];
        assert!(matches!(twist_direction(&tree, &pos, 3), Err(Error::DegenerateGeometry(_))));
        assert!(twist_direction(&tree, &pos, 0).is_err());
    }

    #[test]
    fn twist_direction_matches_recomputation() {
        let tree = KinematicTree::<f64>::synthetic();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos: Vec<Vec3<f64>> = (0..24)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        for i in 1..24 {
            let p = tree.parent(i).unwrap();
            let d = [pos[i][0] - pos[p][0], pos[i][1] - pos[p][1], pos[i][2] - pos[p][2]];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let expected = Vec3::new(d[0] / len, d[1] / len, d[2] / len);
            assert!((twist_direction(&tree, &pos, i).unwrap() - expected).norm() <= 1e-12);
        }
    }

    #[test]
    fn zero_parameters_reduce_to_fk() {
        let tree = KinematicTree::<f64>::synthetic();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chain = activate_chain(&tree, 5).unwrap();
        let ts = TwistSwingParams::zero(tree.chain(chain.chain));
        for _ in 0..20 {
            let pose = random_pose(&mut rng, 24);
            let a = fk(&tree, &pose).unwrap();
            let b = improved_fk(&tree, &pose, &ts, &chain).unwrap();
            for j in 0..24 {
                assert!((a.positions[j] - b.positions[j]).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn twist_keeps_colinear_descendants() {
        let tree = KinematicTree::<f64>::synthetic();
        let chain = activate_chain(&tree, 5).unwrap();
        let mut ts = TwistSwingParams::zero(tree.chain(chain.chain));
        // The elbow's bone points along +x and wrist and hand continue on that line.
        ts.joints.iter_mut().find(|j| j.joint == 18).unwrap().phi = 0.4;
        let pose = PoseState::zero(24);
        let out = improved_fk(&tree, &pose, &ts, &chain).unwrap();
        for j in [18, 20, 22] {
            assert!((out.positions[j] - tree.template()[j]).norm() <= 1e-12);
        }
    }

    #[test]
    fn parameters_off_chain_are_rejected() {
        let tree = KinematicTree::<f64>::synthetic();
        let chain = activate_chain(&tree, 5).unwrap();
        let ts = TwistSwingParams::zero(&[0, 1]);
        assert!(matches!(
            improved_fk(&tree, &PoseState::zero(24), &ts, &chain),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn planar_quarter_turn_on_two_joint_chain() {
        let tree = two_joint_tree();
        let mut pose = PoseState::zero(2);
        pose.theta[0] = Vec3::new(0.0, 0.0, FRAC_PI_2);
        let out = fk(&tree, &pose).unwrap();
        assert!((out.positions[1] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }
}
