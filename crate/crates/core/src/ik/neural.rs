//! Neural IK: a per-problem MLP optimized with Adam through the taped
//! twist-swing forward kinematics.

use crate::error::{Error, Result};
use crate::ik::chain::{activate_chain, ChainSpec};
use crate::ik::graph::NeuralGraph;
use crate::ik::loss::mean_distance;
use crate::ik::mlp::{decode_outputs, fallback_axes, input_dim, MlpParams};
use crate::ik::problem::{
    IkProblem, IterationRecord, SolveReport, SolverConfig, SolverKind, StopReason, INITIAL_LOSS_FLOOR,
};
use crate::kinematics::{improved_fk, matrix_to_axis_angle, rotation_angle, TwistSwingParams};
use crate::scalar::Real;
use crate::skeleton::KinematicTree;

/// Adam with the usual defaults `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(learning_rate: T, size: usize) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); size],
            v: vec![T::zero(); size],
            step: 0,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::invalid("optimizer state does not match parameter count"));
        }
        self.step += 1;
        let c1 = T::one() - self.beta1.powi(self.step);
        let c2 = T::one() - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Keeps only the parameters of joints that can move the target.
pub(crate) fn restrict_to_driven<T: Real>(ts: TwistSwingParams<T>, spec: &ChainSpec) -> TwistSwingParams<T> {
    let driven = spec.driven_joints();
    TwistSwingParams {
        joints: ts.joints.into_iter().filter(|j| driven.contains(&j.joint)).collect(),
        delta_t: ts.delta_t,
    }
}

/// Assembles the report shared by both solvers from the final parameters.
pub(crate) fn build_report<T: Real>(
    tree: &KinematicTree<T>,
    problem: &IkProblem<T>,
    spec: &ChainSpec,
    solver: SolverKind,
    ts: TwistSwingParams<T>,
    run: RunSummary<T>,
) -> Result<SolveReport<T>> {
    let out = improved_fk(tree, &problem.pose, &ts, spec)?;
    let mut final_pose = problem.pose.clone();
    let mut off_target = T::zero();
    for js in &ts.joints {
        let i = js.joint;
        let delta = out.delta_rotations[i];
        off_target = off_target + rotation_angle(&delta);
        let local = crate::kinematics::axis_angle_to_matrix(&problem.pose.theta[i])? * delta;
        final_pose.theta[i] = matrix_to_axis_angle(&local);
    }
    final_pose.translation = problem.pose.translation + ts.delta_t;
    Ok(SolveReport {
        solver,
        target_joint: spec.target,
        initial_loss: run.initial_loss,
        final_loss: run.final_loss,
        iterations: run.iterations,
        stop_reason: run.stop_reason,
        trace: run.trace,
        final_target_position: out.target,
        final_target_distance: mean_distance(&out.target, &problem.target_points),
        off_target_rotation: off_target,
        twist_swing: ts,
        final_pose,
    })
}

pub(crate) struct RunSummary<T> {
    pub initial_loss: T,
    pub final_loss: T,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub trace: Vec<IterationRecord<T>>,
}

fn record<T: Real>(iteration: usize, loss: T, ts: &TwistSwingParams<T>) -> IterationRecord<T> {
    let (max_abs_phi, max_abs_alpha) = ts.max_abs_angles();
    IterationRecord { iteration, loss, max_abs_phi, max_abs_alpha }
}

/// Solves one IK problem with the neural solver.
pub fn solve_ik<T: Real>(
    tree: &KinematicTree<T>,
    problem: &IkProblem<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    config.validate()?;
    problem.validate(tree.joint_count())?;
    let spec = activate_chain(tree, problem.part_label)?;
    let chain = tree.chain(spec.chain);
    let fallback = fallback_axes(tree, &spec)?;
    let mut mlp = MlpParams::init(input_dim(tree.joint_count()), &config.hidden, chain.len(), config.seed);
    let mut graph = NeuralGraph::build(tree, &mlp, problem, &spec, config)?;
    let decode = |graph: &NeuralGraph<T>| -> Result<TwistSwingParams<T>> {
        let ts = decode_outputs(graph.raw_output(), chain, &fallback, config.gamma)?;
        Ok(restrict_to_driven(ts, &spec))
    };

    let initial_loss = graph.loss();
    let mut ts = decode(&graph)?;
    let mut trace = vec![record(0, initial_loss, &ts)];
    if !initial_loss.is_finite() {
        return Err(Error::invalid("initial loss is not finite"));
    }
    let mut summary = RunSummary {
        initial_loss,
        final_loss: initial_loss,
        iterations: 0,
        stop_reason: StopReason::AlreadyConverged,
        trace: Vec::new(),
    };
    if initial_loss < T::lit(INITIAL_LOSS_FLOOR) {
        summary.trace = trace;
        return build_report(tree, problem, &spec, SolverKind::Neural, ts, summary);
    }

    let threshold = config.stop_factor * initial_loss;
    let mut flat = mlp.flat();
    let mut adam = Adam::new(config.learning_rate, flat.len());
    let mut stop_reason = StopReason::MaxItersReached;
    let mut loss = initial_loss;
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        let grad = graph.gradient(&mlp)?.flat();
        adam.update(&mut flat, &grad)?;
        mlp.set_flat(&flat)?;
        graph.set_params(&mlp)?;
        loss = graph.loss();
        iterations = it;
        if !loss.is_finite() {
            return Err(Error::State(format!("loss became non-finite at iteration {it}")));
        }
        ts = decode(&graph)?;
        trace.push(record(it, loss, &ts));
        if loss < threshold {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    summary.final_loss = loss;
    summary.iterations = iterations;
    summary.stop_reason = stop_reason;
    summary.trace = trace;
    build_report(tree, problem, &spec, SolverKind::Neural, ts, summary)
}
