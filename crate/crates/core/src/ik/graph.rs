//! The IK objective recorded on an autodiff tape.

use crate::autodiff::{Tape, Tensor, Var};
use crate::camera::MIN_DEPTH;
use crate::error::{Error, Result};
use crate::ik::chain::ChainSpec;
use crate::ik::mlp::{fallback_axes, network_input, MlpParams, OUTPUTS_PER_JOINT};
use crate::ik::problem::{IkProblem, SolverConfig};
use crate::kinematics::{axis_angle_to_matrix, twist_axis};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;
use crate::skeleton::KinematicTree;

fn mat_leaf<T: Real>(tape: &mut Tape<T>, m: &Mat3<T>) -> Var {
    tape.leaf(Tensor::from_rows(&m.0))
}

fn vec_leaf<T: Real>(tape: &mut Tape<T>, v: &Vec3<T>) -> Var {
    tape.leaf(Tensor::column(&v.0))
}

/// `(sin, cos)` of the range-limited angle `asin(sin(gamma) tanh(raw))`.
pub fn attach_bounded_angle<T: Real>(tape: &mut Tape<T>, raw: Var, gamma: T) -> Result<(Var, Var)> {
    let t = tape.tanh(raw)?;
    let s = tape.scale(t, gamma.sin())?;
    // cos^2 = cos^2(gamma) + sin^2(gamma) (1 - tanh^2) stays positive when
    // tanh saturates.
    let t2 = tape.mul(t, t)?;
    let sech2 = tape.affine(t2, -T::one(), T::one())?;
    let (sg, cg) = (gamma.sin(), gamma.cos());
    let c2 = tape.affine(sech2, sg * sg, cg * cg)?;
    let c = tape.sqrt(c2)?;
    Ok((s, c))
}

/// `I + sin K + (1 - cos) K^2` with `K = [axis]x`.
pub fn attach_rodrigues<T: Real>(tape: &mut Tape<T>, identity: Var, axis: Var, sin: Var, cos: Var) -> Result<Var> {
    let k = tape.skew(axis)?;
    let k2 = tape.matmul(k, k)?;
    let a = tape.scalar_mul(sin, k)?;
    let omc = tape.affine(cos, -T::one(), T::one())?;
    let b = tape.scalar_mul(omc, k2)?;
    let r = tape.add(identity, a)?;
    tape.add(r, b)
}

/// Loss-related nodes of a recorded objective.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub loss: Var,
    /// World position of the target joint.
    pub target: Var,
    /// Camera-frame depth of the root.
    pub root_depth: Var,
    /// Residuals `sqrt(eps1) (q_j - c)` (3x1); the loss is their squared
    /// norm plus the constant `eps1 * spread` plus the root residuals.
    pub target_residual: Var,
    /// `sqrt(eps2)` times the pixel offsets of the projected root.
    pub root_residual: [Var; 2],
}

impl LossNodes {
    /// All five residuals as scalar-producing nodes, in order.
    pub fn residual_nodes<T: Real>(&self, tape: &mut Tape<T>) -> Result<[Var; 5]> {
        Ok([
            tape.slice(self.target_residual, 0, 1)?,
            tape.slice(self.target_residual, 1, 1)?,
            tape.slice(self.target_residual, 2, 1)?,
            self.root_residual[0],
            self.root_residual[1],
        ])
    }
}

/// Records the IK loss given extra rotations for the driven joints and the
/// translation increment.
pub fn attach_loss<T: Real>(
    tape: &mut Tape<T>,
    tree: &KinematicTree<T>,
    problem: &IkProblem<T>,
    spec: &ChainSpec,
    config: &SolverConfig<T>,
    deltas: &[(usize, Var)],
    delta_t: Var,
) -> Result<LossNodes> {
    let q = tree.template();
    let path = tree.path_to(spec.target);
    let delta_of = |j: usize| deltas.iter().find(|(k, _)| *k == j).map(|(_, v)| *v);

    let mut position = vec_leaf(tape, &q[path[0]]);
    let r0 = mat_leaf(tape, &axis_angle_to_matrix(&problem.pose.theta[path[0]])?);
    let mut frame = match delta_of(path[0]) {
        Some(d) => tape.matmul(r0, d)?,
        None => r0,
    };
    for w in path.windows(2) {
        let (parent, j) = (w[0], w[1]);
        let offset = vec_leaf(tape, &(q[j] - q[parent]));
        let step = tape.matmul(frame, offset)?;
        position = tape.add(position, step)?;
        if j != spec.target {
            let r = mat_leaf(tape, &axis_angle_to_matrix(&problem.pose.theta[j])?);
            frame = tape.matmul(frame, r)?;
            if let Some(d) = delta_of(j) {
                frame = tape.matmul(frame, d)?;
            }
        }
    }

    let t = vec_leaf(tape, &problem.pose.translation);
    let shift = tape.add(t, delta_t)?;
    let target = tape.add(position, shift)?;
    let centroid = vec_leaf(tape, &problem.target_centroid());
    let offset = tape.sub(target, centroid)?;
    let target_residual = tape.scale(offset, config.eps1.sqrt())?;
    let sq = tape.square_norm(target_residual)?;
    let target_term = tape.affine(sq, T::one(), config.eps1 * problem.target_spread())?;

    let cam = &problem.camera;
    let root_rest = vec_leaf(tape, &q[0]);
    let root = tape.add(root_rest, shift)?;
    let rc = mat_leaf(tape, &cam.rotation);
    let tc = vec_leaf(tape, &cam.translation);
    let rotated = tape.matmul(rc, root)?;
    let in_cam = tape.add(rotated, tc)?;
    let x = tape.slice(in_cam, 0, 1)?;
    let y = tape.slice(in_cam, 1, 1)?;
    let root_depth = tape.slice(in_cam, 2, 1)?;
    let w2 = config.eps2.sqrt();
    let xz = tape.div(x, root_depth)?;
    let yz = tape.div(y, root_depth)?;
    let du = tape.affine(xz, cam.fx * w2, (cam.cx - problem.root_2d[0]) * w2)?;
    let dv = tape.affine(yz, cam.fy * w2, (cam.cy - problem.root_2d[1]) * w2)?;
    let du2 = tape.mul(du, du)?;
    let dv2 = tape.mul(dv, dv)?;
    let root_term = tape.add(du2, dv2)?;
    let loss = tape.add(target_term, root_term)?;
    Ok(LossNodes { loss, target, root_depth, target_residual, root_residual: [du, dv] })
}

pub(crate) fn check_depth<T: Real>(tape: &Tape<T>, nodes: &LossNodes) -> Result<()> {
    let z = tape.scalar_value(nodes.root_depth);
    if !(z > T::lit(MIN_DEPTH)) {
        return Err(Error::Projection(format!("root has depth {z} in camera frame")));
    }
    Ok(())
}

/// Network, decoding and objective recorded on one re-evaluable tape.
pub struct NeuralGraph<T> {
    pub tape: Tape<T>,
    params: Vec<(Var, Var)>,
    output: Var,
    pub nodes: LossNodes,
    /// Swing-axis normalization nodes, one per driven joint.
    axes: Vec<(usize, Var)>,
}

impl<T: Real> NeuralGraph<T> {
    pub fn build(
        tree: &KinematicTree<T>,
        mlp: &MlpParams<T>,
        problem: &IkProblem<T>,
        spec: &ChainSpec,
        config: &SolverConfig<T>,
    ) -> Result<Self> {
        let mut tape = Tape::new();
        let input = tape.leaf(Tensor::column(&network_input(problem)));
        let mut params = Vec::with_capacity(mlp.layers.len());
        let mut h = input;
        let last = mlp.layers.len() - 1;
        for (k, layer) in mlp.layers.iter().enumerate() {
            let w = tape.leaf(layer.weights.clone());
            let b = tape.leaf(layer.bias.clone());
            params.push((w, b));
            let wx = tape.matmul(w, h)?;
            h = tape.add(wx, b)?;
            if k < last {
                h = tape.tanh(h)?;
            }
        }
        let output = h;

        let chain = tree.chain(spec.chain);
        let fallback = fallback_axes(tree, spec)?;
        let identity = mat_leaf(&mut tape, &Mat3::identity());
        let mut deltas = Vec::new();
        let mut axes = Vec::new();
        for joint in spec.driven_joints() {
            let k = chain
                .iter()
                .position(|&j| j == joint)
                .ok_or_else(|| Error::Configuration(format!("driven joint {joint} is not on the chain")))?;
            let base = OUTPUTS_PER_JOINT * k;
            let y_phi = tape.slice(output, base, 1)?;
            let y_alpha = tape.slice(output, base + 1, 1)?;
            let raw_axis = tape.slice(output, base + 2, 3)?;
            let (sp, cp) = attach_bounded_angle(&mut tape, y_phi, config.gamma)?;
            let (sa, ca) = attach_bounded_angle(&mut tape, y_alpha, config.gamma)?;
            let m = vec_leaf(&mut tape, &twist_axis(tree, chain, joint)?);
            let n = tape.normalize_or(raw_axis, fallback[k].0)?;
            let r_tw = attach_rodrigues(&mut tape, identity, m, sp, cp)?;
            let r_sw = attach_rodrigues(&mut tape, identity, n, sa, ca)?;
            deltas.push((joint, tape.matmul(r_tw, r_sw)?));
            axes.push((joint, n));
        }
        let delta_t = tape.slice(output, OUTPUTS_PER_JOINT * chain.len(), 3)?;
        let nodes = attach_loss(&mut tape, tree, problem, spec, config, &deltas, delta_t)?;
        let graph = Self { tape, params, output, nodes, axes };
        check_depth(&graph.tape, &graph.nodes)?;
        Ok(graph)
    }

    /// Loads new network parameters and re-evaluates the tape.
    pub fn set_params(&mut self, mlp: &MlpParams<T>) -> Result<()> {
        if mlp.layers.len() != self.params.len() {
            return Err(Error::invalid("network depth does not match the recorded graph"));
        }
        for (layer, &(w, b)) in mlp.layers.iter().zip(&self.params) {
            self.tape.set_value(w, layer.weights.clone())?;
            self.tape.set_value(b, layer.bias.clone())?;
        }
        self.tape.forward()?;
        check_depth(&self.tape, &self.nodes)
    }

    pub fn loss(&self) -> T {
        self.tape.scalar_value(self.nodes.loss)
    }

    pub fn raw_output(&self) -> &[T] {
        self.tape.value(self.output).data()
    }

    /// Driven joints whose swing axis fell back to the twist axis.
    pub fn fallback_joints(&self) -> Vec<usize> {
        self.axes.iter().filter(|(_, v)| self.tape.used_fallback(*v)).map(|(j, _)| *j).collect()
    }

    /// Loss gradient with respect to every network parameter, laid out like
    /// the parameters themselves.
    pub fn gradient(&self, like: &MlpParams<T>) -> Result<MlpParams<T>> {
        let grads = self.tape.backward(self.nodes.loss)?;
        let mut out = like.clone();
        for (layer, &(w, b)) in out.layers.iter_mut().zip(&self.params) {
            layer.weights = grads.wrt(w);
            layer.bias = grads.wrt(b);
        }
        Ok(out)
    }
}
