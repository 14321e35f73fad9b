//! Contact-driven inverse kinematics.

mod chain;
pub mod graph;
pub mod loss;
pub mod mlp;
mod neural;
mod problem;
pub mod suite;
mod trm;

pub use chain::{activate_chain, ChainSpec, JointType, NO_CONTACT};
pub use loss::{loss_breakdown, loss_ik, mean_distance, LossBreakdown};
pub use mlp::{mlp_forward, MlpParams};
pub use neural::{solve_ik, Adam};
pub use problem::{
    IkProblem, IterationRecord, SolveReport, SolverConfig, SolverKind, StopReason, INITIAL_LOSS_FLOOR,
};
pub use suite::{generate_suite, SuiteConfig, SyntheticCase};
pub use trm::{solve_ik_trm, split_twist_swing};

use crate::error::Result;
use crate::scalar::Real;
use crate::skeleton::KinematicTree;

/// Dispatches to the selected solver.
pub fn solve<T: Real>(
    kind: SolverKind,
    tree: &KinematicTree<T>,
    problem: &IkProblem<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    match kind {
        SolverKind::Neural => solve_ik(tree, problem, config),
        SolverKind::Trm => solve_ik_trm(tree, problem, config),
    }
}
