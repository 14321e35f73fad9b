//! The neural solver's multilayer perceptron and the decoding of its raw
//! outputs into range-limited twist-swing parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tensor, NORMALIZE_EPS};
use crate::error::{Error, Result};
use crate::ik::chain::ChainSpec;
use crate::ik::problem::{IkProblem, SolverConfig};
use crate::kinematics::{twist_axis, JointTwistSwing, TwistSwingParams};
use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::skeleton::KinematicTree;

/// Raw outputs per chain joint: `y_phi`, `y_alpha` and a 3-vector swing axis.
pub const OUTPUTS_PER_JOINT: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `out x in`.
    pub weights: Tensor<T>,
    /// `out x 1`.
    pub bias: Tensor<T>,
}

/// Fully connected network with `tanh` hidden activations and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<DenseLayer<T>>,
}

/// Input width for a skeleton: every joint rotation, the translation and the
/// target point.
pub fn input_dim(joint_count: usize) -> usize {
    3 * joint_count + 6
}

pub fn output_dim(chain_len: usize) -> usize {
    OUTPUTS_PER_JOINT * chain_len + 3
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor<T> {
    let data = (0..rows * cols).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect();
    Tensor::new(rows, cols, data).expect("shape matches data")
}

impl<T: Real> MlpParams<T> {
    /// Seeded initialization. Hidden layers draw from `U(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in))`. In the head, only the swing-axis rows are random;
    /// the twist, swing-angle and translation rows start at zero so the first
    /// iterate reproduces the input pose exactly.
    pub fn init(input: usize, hidden: &[usize], chain_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let output = output_dim(chain_len);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for &width in hidden {
            let bound = 1.0 / (fan_in as f64).sqrt();
            layers.push(DenseLayer {
                weights: uniform(&mut rng, width, fan_in, bound),
                bias: uniform(&mut rng, width, 1, bound),
            });
            fan_in = width;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut weights = uniform::<T>(&mut rng, output, fan_in, bound);
        let mut bias = uniform::<T>(&mut rng, output, 1, bound);
        for row in 0..output {
            let is_axis = row < OUTPUTS_PER_JOINT * chain_len && row % OUTPUTS_PER_JOINT >= 2;
            if !is_axis {
                weights.data_mut()[row * fan_in..(row + 1) * fan_in].fill(T::zero());
                bias.data_mut()[row] = T::zero();
            }
        }
        layers.push(DenseLayer { weights, bias });
        Self { layers }
    }

    /// Fully random initialization of every layer, head included.
    pub fn init_dense(input: usize, hidden: &[usize], chain_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output_dim(chain_len));
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                DenseLayer {
                    weights: uniform(&mut rng, w[1], w[0], bound),
                    bias: uniform(&mut rng, w[1], 1, bound),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data().len() + l.bias.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.data().iter().chain(l.bias.data()).all(|v| v.is_finite()))
    }

    /// Every parameter, layer by layer, weights before bias.
    pub fn flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(l.bias.data()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::invalid("parameter vector has the wrong length"));
        }
        let mut at = 0;
        for l in &mut self.layers {
            for t in [&mut l.weights, &mut l.bias] {
                let n = t.data().len();
                t.data_mut().copy_from_slice(&values[at..at + n]);
                at += n;
            }
        }
        Ok(())
    }

    /// Plain evaluation of the network.
    pub fn evaluate(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let (rows, cols) = l.weights.shape();
            if cols != x.len() || l.bias.data().len() != rows {
                return Err(Error::invalid("inconsistent layer shapes"));
            }
            let w = l.weights.data();
            let mut y: Vec<T> = (0..rows)
                .map(|r| {
                    let row = &w[r * cols..(r + 1) * cols];
                    row.iter().zip(&x).fold(l.bias.data()[r], |acc, (&a, &b)| acc + a * b)
                })
                .collect();
            if k < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            x = y;
        }
        Ok(x)
    }
}

/// Network input: flattened rotations, translation, then the centroid of the
/// target points.
pub fn network_input<T: Real>(problem: &IkProblem<T>) -> Vec<T> {
    let mut x = problem.pose.flatten();
    x.extend(problem.target_centroid().0);
    x
}

/// `sin(gamma) * tanh(y)`: the sine of a range-limited angle.
pub fn bounded_sine<T: Real>(raw: T, gamma: T) -> T {
    gamma.sin() * raw.tanh()
}

/// `asin(sin(gamma) tanh(y))`, clamped so rounding in `asin` can never
/// step past `gamma`.
pub fn bounded_angle<T: Real>(raw: T, gamma: T) -> T {
    bounded_sine(raw, gamma).asin().max(-gamma).min(gamma)
}

/// Fallback swing axes, one per chain joint (the rest-pose bone direction).
pub fn fallback_axes<T: Real>(tree: &KinematicTree<T>, spec: &ChainSpec) -> Result<Vec<Vec3<T>>> {
    let chain = tree.chain(spec.chain);
    chain.iter().map(|&j| twist_axis(tree, chain, j)).collect()
}

/// Decodes raw network outputs for `chain` into twist-swing parameters.
pub fn decode_outputs<T: Real>(
    raw: &[T],
    chain: &[usize],
    fallback: &[Vec3<T>],
    gamma: T,
) -> Result<TwistSwingParams<T>> {
    if raw.len() != output_dim(chain.len()) || fallback.len() != chain.len() {
        return Err(Error::invalid("raw output length does not match the chain"));
    }
    let joints = chain
        .iter()
        .enumerate()
        .map(|(k, &joint)| {
            let o = &raw[OUTPUTS_PER_JOINT * k..OUTPUTS_PER_JOINT * (k + 1)];
            let raw_axis = Vec3::new(o[2], o[3], o[4]);
            let norm = raw_axis.norm();
            let axis = if norm >= T::lit(NORMALIZE_EPS) {
                raw_axis.scale(T::one() / norm)
            } else {
                fallback[k]
            };
            JointTwistSwing {
                joint,
                phi: bounded_angle(o[0], gamma),
                alpha: bounded_angle(o[1], gamma),
                swing_axis: axis,
            }
        })
        .collect();
    let t = OUTPUTS_PER_JOINT * chain.len();
    Ok(TwistSwingParams { joints, delta_t: Vec3::new(raw[t], raw[t + 1], raw[t + 2]) })
}

/// Runs the network on a problem and decodes the result.
pub fn mlp_forward<T: Real>(
    tree: &KinematicTree<T>,
    params: &MlpParams<T>,
    problem: &IkProblem<T>,
    spec: &ChainSpec,
    config: &SolverConfig<T>,
) -> Result<TwistSwingParams<T>> {
    let chain = tree.chain(spec.chain);
    if params.output_dim() != output_dim(chain.len()) {
        return Err(Error::invalid("network head does not match the active chain"));
    }
    let raw = params.evaluate(&network_input(problem))?;
    decode_outputs(&raw, chain, &fallback_axes(tree, spec)?, config.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ik::activate_chain;
    use rand::Rng;
    use crate::ik::suite::{generate_suite, SuiteConfig};
    use proptest::prelude::*;

    #[test]
    fn zero_raw_twist_gives_zero_angle() {
        assert_eq!(bounded_sine(0.0f64, 0.5).asin(), 0.0);
    }

    #[test]
    fn saturated_output_never_exceeds_gamma() {
        let gamma = 30f64.to_radians();
        for y in [10.0, 50.0, 1e6, f64::MAX] {
            let s = bounded_sine(y, gamma);
            assert!(s <= gamma.sin());
            assert!(s.asin() <= gamma + 1e-15);
        }
        assert!((bounded_sine(40.0, gamma) - gamma.sin()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_axis_uses_fallback() {
        let chain = [0usize];
        let fb = [Vec3::new(0.0, 1.0, 0.0)];
        let raw = [0.3, 0.2, 0.0, 0.0, 1e-12, 0.0, 0.0, 0.0];
        let ts = decode_outputs(&raw, &chain, &fb, 0.5).unwrap();
        assert_eq!(ts.joints[0].swing_axis, fb[0]);
    }

    #[test]
    fn initial_iterate_is_identity() {
        let tree = KinematicTree::<f64>::synthetic();
        let problem = generate_suite(&tree, &SuiteConfig { count: 1, ..Default::default() }).unwrap()[0]
            .problem
            .clone();
        let spec = activate_chain(&tree, problem.part_label).unwrap();
        let config = SolverConfig::default();
        let chain_len = tree.chain(spec.chain).len();
        let params = MlpParams::init(input_dim(24), &config.hidden, chain_len, 7);
        let ts = mlp_forward(&tree, &params, &problem, &spec, &config).unwrap();
        assert!(ts.joints.iter().all(|j| j.phi == 0.0 && j.alpha == 0.0));
        assert_eq!(ts.delta_t, Vec3::zeros());
    }

    #[test]
    fn flat_round_trip() {
        let mut p = MlpParams::<f64>::init_dense(6, &[4, 3], 2, 1);
        let flat = p.flat();
        assert_eq!(flat.len(), p.parameter_count());
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        p.set_flat(&doubled).unwrap();
        assert_eq!(p.flat(), doubled);
    }

    proptest! {
        #[test]
        fn decoded_outputs_satisfy_invariants(seed in 0u64..200, gamma_deg in 1.0f64..90.0) {
            let tree = KinematicTree::<f64>::synthetic();
            let spec = activate_chain(&tree, 5).unwrap();
            let chain = tree.chain(spec.chain);
            let params = MlpParams::init_dense(input_dim(24), &[16, 16], chain.len(), seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input: Vec<f64> = (0..input_dim(24)).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let raw: Vec<f64> = params.evaluate(&input).unwrap().iter().map(|v| v * 20.0).collect();
            let gamma = gamma_deg.to_radians();
            let ts = decode_outputs(&raw, chain, &fallback_axes(&tree, &spec).unwrap(), gamma).unwrap();
            prop_assert!(ts.validate(gamma).is_ok());
            for j in &ts.joints {
                prop_assert!(j.phi.abs() <= gamma && j.alpha.abs() <= gamma);
                let s = j.phi.sin();
                let c = (1.0 - s * s).sqrt();
                prop_assert!((s * s + c * c - 1.0).abs() <= 1e-12);
            }
        }
    }
}
