//! Trust-region baseline: Levenberg-Marquardt style steps on the five IK
//! residuals with unbounded per-joint rotations.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::ik::chain::{activate_chain, ChainSpec};
use crate::ik::graph::{attach_loss, attach_rodrigues, check_depth, LossNodes};
use crate::ik::neural::{build_report, RunSummary};
use crate::ik::problem::{
    IkProblem, IterationRecord, SolveReport, SolverConfig, SolverKind, StopReason, INITIAL_LOSS_FLOOR,
};
use crate::kinematics::{matrix_to_axis_angle, matrix_to_quaternion, rodrigues, twist_axis, JointTwistSwing, TwistSwingParams};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;
use crate::skeleton::KinematicTree;

const RESIDUALS: usize = 5;
/// The radius below which the region is considered collapsed.
const MIN_RADIUS: f64 = 1e-12;
const ACCEPT_RATIO: f64 = 1e-4;

/// Per driven joint: twist `phi` about `m`, then swings `s1`, `s2` about two
/// fixed axes perpendicular to `m`. Followed by `delta_t`.
struct TrmGraph<T> {
    tape: Tape<T>,
    joints: Vec<JointVars>,
    delta_t: Var,
    nodes: LossNodes,
    residuals: [Var; RESIDUALS],
}

struct JointVars {
    joint: usize,
    twist_axis: [f64; 3],
    swing_axes: [[f64; 3]; 2],
    angles: [Var; 3],
}

impl<T: Real> TrmGraph<T> {
    fn build(tree: &KinematicTree<T>, problem: &IkProblem<T>, spec: &ChainSpec, config: &SolverConfig<T>) -> Result<Self> {
        let chain = tree.chain(spec.chain);
        let mut tape = Tape::new();
        let identity = tape.leaf(Tensor::from_rows(&Mat3::<T>::identity().0));
        let mut joints = Vec::new();
        let mut deltas = Vec::new();
        for joint in spec.driven_joints() {
            let m = twist_axis(tree, chain, joint)?;
            let u = m.any_orthogonal();
            let v = m.cross(&u);
            let mut rot = None;
            let mut angles = Vec::with_capacity(3);
            for axis in [m, u, v].iter() {
                let a = tape.scalar(T::zero());
                angles.push(a);
                let s = tape.sin(a)?;
                let c = tape.cos(a)?;
                let ax = tape.leaf(Tensor::column(&axis.0));
                let r = attach_rodrigues(&mut tape, identity, ax, s, c)?;
                rot = Some(match rot {
                    None => r,
                    Some(prev) => tape.matmul(prev, r)?,
                });
            }
            deltas.push((joint, rot.expect("three factors")));
            joints.push(JointVars {
                joint,
                twist_axis: m.0.map(|x| x.to_f64_lossy()),
                swing_axes: [u.0.map(|x| x.to_f64_lossy()), v.0.map(|x| x.to_f64_lossy())],
                angles: angles.try_into().expect("three angles"),
            });
        }
        let delta_t = tape.leaf(Tensor::zeros(3, 1));
        let nodes = attach_loss(&mut tape, tree, problem, spec, config, &deltas, delta_t)?;
        let residuals = nodes.residual_nodes(&mut tape)?;
        check_depth(&tape, &nodes)?;
        Ok(Self { tape, joints, delta_t, nodes, residuals })
    }

    fn dim(&self) -> usize {
        3 * self.joints.len() + 3
    }

    fn set_x(&mut self, x: &[T]) -> Result<()> {
        for (k, jv) in self.joints.iter().enumerate() {
            for a in 0..3 {
                self.tape.set_value(jv.angles[a], Tensor::scalar(x[3 * k + a]))?;
            }
        }
        let n = 3 * self.joints.len();
        self.tape.set_value(self.delta_t, Tensor::column(&x[n..n + 3]))?;
        self.tape.forward()?;
        check_depth(&self.tape, &self.nodes)
    }

    fn loss(&self) -> T {
        self.tape.scalar_value(self.nodes.loss)
    }

    fn residuals(&self) -> [T; RESIDUALS] {
        self.residuals.map(|r| self.tape.scalar_value(r))
    }

    /// `5 x dim` Jacobian, one reverse sweep per residual.
    fn jacobian(&self) -> Result<Vec<Vec<T>>> {
        self.residuals
            .iter()
            .map(|&r| {
                let g = self.tape.backward(r)?;
                let mut row = Vec::with_capacity(self.dim());
                for jv in &self.joints {
                    row.extend(jv.angles.iter().map(|&a| g.wrt(a).item()));
                }
                row.extend_from_slice(g.wrt(self.delta_t).data());
                Ok(row)
            })
            .collect()
    }

    /// Twist-swing parameters equivalent to the rotations at `x`.
    fn twist_swing(&self, x: &[T]) -> Result<TwistSwingParams<T>> {
        let mut joints = Vec::with_capacity(self.joints.len());
        for (k, jv) in self.joints.iter().enumerate() {
            let m = Vec3(jv.twist_axis.map(T::lit));
            let u = Vec3(jv.swing_axes[0].map(T::lit));
            let v = Vec3(jv.swing_axes[1].map(T::lit));
            let delta = rodrigues(&m, x[3 * k])? * rodrigues(&u, x[3 * k + 1])? * rodrigues(&v, x[3 * k + 2])?;
            joints.push(split_twist_swing(jv.joint, &m, &delta)?);
        }
        let n = 3 * self.joints.len();
        Ok(TwistSwingParams { joints, delta_t: Vec3::new(x[n], x[n + 1], x[n + 2]) })
    }
}

/// Splits `delta = R(m, phi) * R(n, alpha)` into its twist about `m` and the
/// remaining swing.
pub fn split_twist_swing<T: Real>(joint: usize, m: &Vec3<T>, delta: &Mat3<T>) -> Result<JointTwistSwing<T>> {
    let [w, qx, qy, qz] = matrix_to_quaternion(delta);
    let along = Vec3::new(qx, qy, qz).dot(m);
    let phi = if w == T::zero() && along == T::zero() {
        T::zero()
    } else {
        T::lit(2.0) * along.atan2(w)
    };
    let swing = rodrigues(m, phi)?.transpose() * *delta;
    let theta = matrix_to_axis_angle(&swing);
    let alpha = theta.norm();
    let swing_axis = theta.try_normalize(T::lit(1e-12)).unwrap_or_else(|| m.any_orthogonal());
    Ok(JointTwistSwing { joint, phi, alpha, swing_axis })
}

/// Solves `A y = b` for a small symmetric positive definite `A`.
fn cholesky_solve<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = (0..j).fold(a[i][j], |acc, k| acc - l[i][k] * l[j][k]);
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        y[i] = (0..i).fold(b[i], |acc, k| acc - l[i][k] * y[k]) / l[i][i];
    }
    for i in (0..n).rev() {
        y[i] = (i + 1..n).fold(y[i], |acc, k| acc - l[k][i] * y[k]) / l[i][i];
    }
    Some(y)
}

/// `-J^T (J J^T + lambda I)^{-1} r`.
fn damped_step<T: Real>(j: &[Vec<T>], jjt: &[Vec<T>], r: &[T], lambda: T) -> Option<Vec<T>> {
    let mut a = jjt.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = row[i] + lambda;
    }
    let y = cholesky_solve(&a, r)?;
    let dim = j[0].len();
    Some((0..dim).map(|c| -(0..r.len()).fold(T::zero(), |acc, k| acc + j[k][c] * y[k])).collect())
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}

/// Step of length at most `radius`, choosing the smallest damping that fits.
fn constrained_step<T: Real>(j: &[Vec<T>], r: &[T], radius: T) -> Option<(Vec<T>, bool)> {
    let n = r.len();
    let jjt: Vec<Vec<T>> = (0..n)
        .map(|a| (0..n).map(|b| j[a].iter().zip(&j[b]).fold(T::zero(), |s, (&x, &y)| s + x * y)).collect())
        .collect();
    let scale = (0..n).fold(T::zero(), |s, i| s + jjt[i][i]).max(T::lit(1e-300));
    let floor = scale * T::lit(1e-14);
    let free = damped_step(j, &jjt, r, floor)?;
    if norm(&free) <= radius {
        return Some((free, false));
    }
    let (mut lo, mut hi) = (floor, scale);
    while norm(&damped_step(j, &jjt, r, hi)?) > radius {
        hi = hi * T::lit(10.0);
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if norm(&damped_step(j, &jjt, r, mid)?) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < T::one() + T::lit(1e-6) {
            break;
        }
    }
    damped_step(j, &jjt, r, hi).map(|s| (s, true))
}

/// Solves one IK problem with the trust-region baseline.
pub fn solve_ik_trm<T: Real>(
    tree: &KinematicTree<T>,
    problem: &IkProblem<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    config.validate()?;
    problem.validate(tree.joint_count())?;
    let spec = activate_chain(tree, problem.part_label)?;
    let mut graph = TrmGraph::build(tree, problem, &spec, config)?;
    let mut x = vec![T::zero(); graph.dim()];
    let initial_loss = graph.loss();
    if !initial_loss.is_finite() {
        return Err(Error::invalid("initial loss is not finite"));
    }
    let record = |iteration: usize, loss: T, ts: &TwistSwingParams<T>| {
        let (max_abs_phi, max_abs_alpha) = ts.max_abs_angles();
        IterationRecord { iteration, loss, max_abs_phi, max_abs_alpha }
    };
    let mut ts = graph.twist_swing(&x)?;
    let mut trace = vec![record(0, initial_loss, &ts)];
    let mut run = RunSummary {
        initial_loss,
        final_loss: initial_loss,
        iterations: 0,
        stop_reason: StopReason::AlreadyConverged,
        trace: Vec::new(),
    };
    if initial_loss < T::lit(INITIAL_LOSS_FLOOR) {
        run.trace = trace;
        return build_report(tree, problem, &spec, SolverKind::Trm, ts, run);
    }

    let threshold = config.stop_factor * initial_loss;
    let mut radius = config.trust_radius;
    let mut loss = initial_loss;
    run.stop_reason = StopReason::MaxItersReached;
    for it in 1..=config.max_iterations {
        run.iterations = it;
        let r = graph.residuals();
        let jac = graph.jacobian()?;
        let Some((step, on_boundary)) = constrained_step(&jac, &r, radius) else {
            run.stop_reason = StopReason::Stalled;
            break;
        };
        let model: Vec<T> = (0..RESIDUALS)
            .map(|k| r[k] + jac[k].iter().zip(&step).fold(T::zero(), |s, (&a, &b)| s + a * b))
            .collect();
        let predicted = norm(&r).powi(2) - norm(&model).powi(2);
        if !(predicted > T::zero()) {
            run.stop_reason = StopReason::Stalled;
            break;
        }
        let trial: Vec<T> = x.iter().zip(&step).map(|(&a, &b)| a + b).collect();
        let trial_loss = match graph.set_x(&trial) {
            Ok(()) => graph.loss(),
            Err(Error::Projection(_)) => T::infinity(),
            Err(e) => return Err(e),
        };
        let rho = if trial_loss.is_finite() { (loss - trial_loss) / predicted } else { -T::one() };
        if rho < T::lit(0.25) {
            radius = radius * T::lit(0.25);
        } else if rho > T::lit(0.75) && on_boundary {
            radius = radius * T::lit(2.0);
        }
        if rho > T::lit(ACCEPT_RATIO) {
            x = trial;
            loss = trial_loss;
            ts = graph.twist_swing(&x)?;
        } else {
            graph.set_x(&x)?;
        }
        trace.push(record(it, loss, &ts));
        if loss < threshold {
            run.stop_reason = StopReason::Converged;
            break;
        }
        if radius < T::lit(MIN_RADIUS) {
            run.stop_reason = StopReason::Stalled;
            break;
        }
    }
    run.final_loss = loss;
    run.trace = trace;
    build_report(tree, problem, &spec, SolverKind::Trm, ts, run)
}
