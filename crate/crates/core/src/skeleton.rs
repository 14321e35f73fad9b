//! Body skeleton definition: parent table, rest template, kinematic chains
//! and the body-part table used to pick IK targets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Number of labelled body parts. Contact class 15 is "no contact".
pub const BODY_PART_COUNT: u8 = 14;

/// Minimum bone length accepted anywhere a bone direction is needed.
pub const MIN_BONE_LENGTH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainId {
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
    Body,
}

impl ChainId {
    pub const ALL: [ChainId; 5] = [
        ChainId::LeftArm,
        ChainId::RightArm,
        ChainId::LeftLeg,
        ChainId::RightLeg,
        ChainId::Body,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChainId::LeftArm => "left_arm",
            ChainId::RightArm => "right_arm",
            ChainId::LeftLeg => "left_leg",
            ChainId::RightLeg => "right_leg",
            ChainId::Body => "body",
        }
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChainId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChainId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown chain `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPart {
    /// 1..=14.
    pub label: u8,
    pub name: String,
    pub chain: ChainId,
    /// Joint driven to the contact region when this part touches the object.
    pub target: usize,
    /// Joints belonging to the part.
    pub joints: Vec<usize>,
}

/// On-disk skeleton definition (JSON). Positions are in meters; the root's
/// parent is `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub joint_names: Vec<String>,
    pub parents: Vec<i64>,
    pub template: Vec<[f64; 3]>,
    pub chains: BTreeMap<ChainId, Vec<usize>>,
    pub parts: Vec<BodyPart>,
}

impl SkeletonFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    /// The 24-joint stick figure shipped with the crate.
    pub fn synthetic() -> Self {
        Self::from_json(SYNTHETIC_SKELETON_JSON).expect("shipped skeleton parses")
    }
}

/// JSON text of the shipped synthetic skeleton.
pub const SYNTHETIC_SKELETON_JSON: &str = include_str!("../assets/skeleton_synthetic.json");

/// Validated skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree<T> {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    template: Vec<Vec3<T>>,
    chains: BTreeMap<ChainId, Vec<usize>>,
    parts: Vec<BodyPart>,
    part_of_joint: Vec<u8>,
    order: Vec<usize>,
}

impl<T: Real> KinematicTree<T> {
    pub fn from_file(file: &SkeletonFile) -> Result<Self> {
        let n = file.parents.len();
        if n == 0 {
            return Err(Error::Structure("skeleton has no joints".into()));
        }
        if file.template.len() != n {
            return Err(Error::Structure(format!(
                "template has {} entries for {n} joints",
                file.template.len()
            )));
        }
        let mut parents = Vec::with_capacity(n);
        for (i, &p) in file.parents.iter().enumerate() {
            parents.push(match p {
                -1 if i == 0 => None,
                -1 => return Err(Error::Structure(format!("joint {i} has no parent but is not the root"))),
                p if p < 0 || p as usize >= n => {
                    return Err(Error::Structure(format!("joint {i} has out-of-range parent {p}")))
                }
                p if p as usize == i => return Err(Error::Structure(format!("joint {i} is its own parent"))),
                p => Some(p as usize),
            });
        }
        if parents[0].is_some() {
            return Err(Error::Structure("joint 0 must be the root".into()));
        }
        let order = topological_order(&parents)?;

        let template: Vec<Vec3<T>> = file
            .template
            .iter()
            .map(|p| Vec3(p.map(T::lit)))
            .collect();
        if let Some(i) = template.iter().position(|p| !p.is_finite()) {
            return Err(Error::Structure(format!("template position of joint {i} is not finite")));
        }

        if file.chains.len() != ChainId::ALL.len() {
            return Err(Error::Structure(format!(
                "expected {} chains, found {}",
                ChainId::ALL.len(),
                file.chains.len()
            )));
        }
        for (id, joints) in &file.chains {
            if joints.first() != Some(&0) {
                return Err(Error::Structure(format!("chain {id} must start at the root")));
            }
            for w in joints.windows(2) {
                if w[1] >= n || parents[w[1]] != Some(w[0]) {
                    return Err(Error::Structure(format!(
                        "chain {id}: joint {} is not a child of {}",
                        w[1], w[0]
                    )));
                }
            }
        }

        let mut part_of_joint = vec![0u8; n];
        let mut seen_labels = [false; BODY_PART_COUNT as usize];
        for part in &file.parts {
            if part.label == 0 || part.label > BODY_PART_COUNT {
                return Err(Error::Structure(format!("part label {} outside 1..=14", part.label)));
            }
            let slot = &mut seen_labels[part.label as usize - 1];
            if *slot {
                return Err(Error::Structure(format!("duplicate part label {}", part.label)));
            }
            *slot = true;
            for &j in &part.joints {
                if j >= n {
                    return Err(Error::Structure(format!("part {} names joint {j}", part.name)));
                }
                if part_of_joint[j] != 0 {
                    return Err(Error::Structure(format!("joint {j} belongs to two parts")));
                }
                part_of_joint[j] = part.label;
            }
            if !part.joints.contains(&part.target) {
                return Err(Error::Structure(format!("part {}: target not among its joints", part.name)));
            }
            let chain = &file.chains[&part.chain];
            if !chain.contains(&part.target) {
                return Err(Error::Structure(format!(
                    "part {}: target joint {} not on chain {}",
                    part.name, part.target, part.chain
                )));
            }
        }
        if let Some(j) = part_of_joint.iter().position(|&l| l == 0) {
            return Err(Error::Structure(format!("joint {j} belongs to no body part")));
        }

        for i in 1..n {
            let p = parents[i].expect("non-root has parent");
            if template[i].distance(&template[p]) <= T::lit(MIN_BONE_LENGTH) {
                return Err(Error::Structure(format!("bone {p}->{i} has zero length")));
            }
        }

        let names = if file.joint_names.len() == n {
            file.joint_names.clone()
        } else {
            (0..n).map(|i| format!("joint_{i}")).collect()
        };

        Ok(Self {
            names,
            parents,
            template,
            chains: file.chains.clone(),
            parts: file.parts.clone(),
            part_of_joint,
            order,
        })
    }

    /// The shipped 24-joint stick figure.
    pub fn synthetic() -> Self {
        Self::from_file(&SkeletonFile::synthetic()).expect("shipped skeleton is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&SkeletonFile::load(path)?)
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn template(&self) -> &[Vec3<T>] {
        &self.template
    }

    pub fn joint_name(&self, joint: usize) -> &str {
        &self.names[joint]
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn chain(&self, id: ChainId) -> &[usize] {
        &self.chains[&id]
    }

    pub fn parts(&self) -> &[BodyPart] {
        &self.parts
    }

    pub fn part(&self, label: u8) -> Option<&BodyPart> {
        self.parts.iter().find(|p| p.label == label)
    }

    pub fn part_of_joint(&self, joint: usize) -> u8 {
        self.part_of_joint[joint]
    }

    /// Root-to-joint path, root first.
    pub fn path_to(&self, joint: usize) -> Vec<usize> {
        let mut path = vec![joint];
        let mut cur = joint;
        while let Some(p) = self.parents[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn is_ancestor(&self, ancestor: usize, joint: usize) -> bool {
        let mut cur = self.parents[joint];
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parents[p];
        }
        false
    }

    pub fn to_file(&self) -> SkeletonFile {
        SkeletonFile {
            name: String::new(),
            joint_names: self.names.clone(),
            parents: self.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            template: self.template.iter().map(|p| p.0.map(|v| v.to_f64_lossy())).collect(),
            chains: self.chains.clone(),
            parts: self.parts.clone(),
        }
    }
}

fn topological_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    if order.len() != n {
        return Err(Error::Structure("parent table contains a cycle or disconnected joints".into()));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_skeleton_is_valid() {
        let tree = KinematicTree::<f64>::synthetic();
        assert_eq!(tree.joint_count(), 24);
        assert_eq!(tree.parts().len(), 14);
        for id in ChainId::ALL {
            assert_eq!(tree.chain(id)[0], 0);
        }
        assert_eq!(tree.part_of_joint(20), 5);
        assert_eq!(tree.path_to(20), vec![0, 3, 6, 9, 13, 16, 18, 20]);
    }

    #[test]
    fn cycle_is_rejected() {
        let mut file = SkeletonFile::synthetic();
        file.parents[3] = 6;
        let err = KinematicTree::<f64>::from_file(&file).unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err}");
    }

    #[test]
    fn bad_parent_index_is_rejected() {
        let mut file = SkeletonFile::synthetic();
        file.parents[5] = 99;
        assert!(matches!(KinematicTree::<f64>::from_file(&file), Err(Error::Structure(_))));
    }

    #[test]
    fn chain_must_start_at_root() {
        let mut file = SkeletonFile::synthetic();
        file.chains.get_mut(&ChainId::Body).unwrap().remove(0);
        assert!(matches!(KinematicTree::<f64>::from_file(&file), Err(Error::Structure(_))));
    }

    #[test]
    fn missing_chain_is_rejected() {
        let mut file = SkeletonFile::synthetic();
        file.chains.remove(&ChainId::Body);
        assert!(matches!(KinematicTree::<f64>::from_file(&file), Err(Error::Structure(_))));
    }

    #[test]
    fn non_finite_template_is_rejected() {
        let mut file = SkeletonFile::synthetic();
        file.template[7][1] = f64::NAN;
        assert!(KinematicTree::<f64>::from_file(&file).is_err());
    }

    #[test]
    fn file_round_trip() {
        let tree = KinematicTree::<f64>::synthetic();
        let json = serde_json::to_string(&tree.to_file()).unwrap();
        let back = KinematicTree::<f64>::from_file(&SkeletonFile::from_json(&json).unwrap()).unwrap();
        assert_eq!(tree, back);
    }
}
