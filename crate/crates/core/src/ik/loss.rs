//! Plain (untaped) evaluation of the IK objective.

use crate::camera::project_root_2d;
use crate::error::Result;
use crate::ik::chain::ChainSpec;
use crate::ik::problem::{IkProblem, SolverConfig};
use crate::kinematics::{improved_fk, ImprovedFkOutput, TwistSwingParams};
use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::skeleton::KinematicTree;

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    /// `eps1 * mean_p |q_j - p|^2`.
    pub target_term: T,
    /// `eps2 * |proj(root) - root_2d|^2`.
    pub root_term: T,
    pub total: T,
}

/// Mean squared distance from `q` to each point.
pub fn mean_squared_distance<T: Real>(q: &Vec3<T>, points: &[Vec3<T>]) -> T {
    let n = T::from_usize(points.len()).expect("point count fits scalar");
    points.iter().map(|p| (*q - *p).norm_squared()).sum::<T>() / n
}

/// Mean Euclidean distance from `q` to each point.
pub fn mean_distance<T: Real>(q: &Vec3<T>, points: &[Vec3<T>]) -> T {
    let n = T::from_usize(points.len()).expect("point count fits scalar");
    points.iter().map(|p| q.distance(p)).sum::<T>() / n
}

pub fn loss_breakdown<T: Real>(
    fk: &ImprovedFkOutput<T>,
    problem: &IkProblem<T>,
    config: &SolverConfig<T>,
) -> Result<LossBreakdown<T>> {
    let target_term = config.eps1 * mean_squared_distance(&fk.target, &problem.target_points);
    let [u, v] = project_root_2d(&fk.positions[0], &problem.camera)?;
    let (du, dv) = (u - problem.root_2d[0], v - problem.root_2d[1]);
    let root_term = config.eps2 * (du * du + dv * dv);
    Ok(LossBreakdown { target_term, root_term, total: target_term + root_term })
}

/// Total IK loss of the pose extended by `ts`.
pub fn loss_ik<T: Real>(
    tree: &KinematicTree<T>,
    problem: &IkProblem<T>,
    ts: &TwistSwingParams<T>,
    spec: &ChainSpec,
    config: &SolverConfig<T>,
) -> Result<T> {
    let fk = improved_fk(tree, &problem.pose, ts, spec)?;
    Ok(loss_breakdown(&fk, problem, config)?.total)
}
