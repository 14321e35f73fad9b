//! Seeded synthetic IK problems with targets that are reachable by
//! construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::ik::chain::activate_chain;
use crate::ik::problem::IkProblem;
use crate::kinematics::{improved_fk, JointTwistSwing, PoseState, TwistSwingParams};
use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::skeleton::{KinematicTree, BODY_PART_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub count: usize,
    pub seed: u64,
    /// Radius of the ball the initial per-joint rotations are drawn from, radians.
    pub pose_radius: f64,
    /// Bound on the twist and swing angles of the perturbation, degrees.
    pub perturbation_degrees: f64,
    /// Bound on each component of the translation perturbation, meters.
    pub translation_jitter: f64,
    /// Target displacement range, meters.
    pub min_displacement: f64,
    pub max_displacement: f64,
    /// Half-width of the contact patch around the perturbed joint, meters.
    pub patch_radius: f64,
    /// Distance from the camera to the body, meters.
    pub depth: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            pose_radius: 0.25,
            perturbation_degrees: 30.0,
            translation_jitter: 0.01,
            min_displacement: 0.02,
            max_displacement: 0.08,
            patch_radius: 5e-4,
            depth: 3.0,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("synthetic suite must contain at least one problem"));
        }
        let ok = self.pose_radius >= 0.0
            && self.perturbation_degrees > 0.0
            && self.perturbation_degrees <= 90.0
            && self.translation_jitter >= 0.0
            && self.min_displacement > 0.0
            && self.max_displacement >= self.min_displacement
            && self.patch_radius >= 0.0
            && self.depth > 0.0;
        if !ok {
            return Err(Error::invalid("suite parameters out of range"));
        }
        Ok(())
    }
}

/// A generated problem together with the parameters that reach it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct SyntheticCase<T> {
    pub problem: IkProblem<T>,
    pub truth: TwistSwingParams<T>,
    pub truth_target: Vec3<T>,
    /// Distance between the initial and the perturbed target joint, meters.
    pub displacement: T,
}

/// Camera used by the suite: 1024x1024 pixels, focal length 1000.
pub fn suite_camera<T: Real>() -> Camera<T> {
    Camera::new(T::lit(1000.0), T::lit(1000.0), T::lit(512.0), T::lit(512.0), 1024, 1024)
}

fn unit_ball<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 <= 1.0 {
            return v;
        }
    }
}

fn unit_sphere<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = unit_ball(rng);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.map(|x| x / n);
        }
    }
}

fn scaled<T: Real>(ts: &TwistSwingParams<T>, s: T) -> TwistSwingParams<T> {
    TwistSwingParams {
        joints: ts
            .joints
            .iter()
            .map(|j| JointTwistSwing { phi: j.phi * s, alpha: j.alpha * s, ..*j })
            .collect(),
        delta_t: ts.delta_t.scale(s),
    }
}

/// Generates `config.count` problems. Each starts from a random pose, picks a
/// random contacted part, perturbs the driven joints within the configured
/// angle bound and places a small patch of target points around the
/// perturbed target joint.
pub fn generate_suite<T: Real>(tree: &KinematicTree<T>, config: &SuiteConfig) -> Result<Vec<SyntheticCase<T>>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let camera = suite_camera::<T>();
    let bound = config.perturbation_degrees.to_radians();
    let root_height = tree.template()[0].y().to_f64_lossy();
    let mut cases = Vec::with_capacity(config.count);
    let mut attempts = 0usize;
    while cases.len() < config.count {
        attempts += 1;
        if attempts > 50 * config.count {
            return Err(Error::invalid("could not generate reachable targets with these parameters"));
        }
        let pose = PoseState {
            theta: (0..tree.joint_count())
                .map(|_| Vec3(unit_ball(&mut rng).map(|x| T::lit(x * config.pose_radius))))
                .collect(),
            translation: Vec3::new(T::zero(), T::lit(-root_height), T::lit(config.depth)),
        };
        let label = rng.gen_range(1..=BODY_PART_COUNT);
        if tree.part(label).is_none() {
            continue;
        }
        let spec = activate_chain(tree, label)?;
        let perturbation = TwistSwingParams {
            joints: spec
                .driven_joints()
                .into_iter()
                .map(|joint| JointTwistSwing {
                    joint,
                    phi: T::lit(rng.gen_range(-bound..=bound)),
                    alpha: T::lit(rng.gen_range(-bound..=bound)),
                    swing_axis: Vec3(unit_sphere(&mut rng).map(T::lit)),
                })
                .collect(),
            delta_t: Vec3([0; 3].map(|_| T::lit(rng.gen_range(-1.0..=1.0) * config.translation_jitter))),
        };
        let wanted = T::lit(rng.gen_range(config.min_displacement..=config.max_displacement));
        let patch: Vec<[f64; 3]> = (0..4)
            .map(|_| [0; 3].map(|_| rng.gen_range(-1.0..=1.0) * config.patch_radius))
            .collect();

        let start = improved_fk(tree, &pose, &TwistSwingParams::zero(&[]), &spec)?.target;
        let displacement = |s: T| -> Result<T> {
            Ok(improved_fk(tree, &pose, &scaled(&perturbation, s), &spec)?.target.distance(&start))
        };
        if displacement(T::one())? < wanted {
            continue;
        }
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..60 {
            let mid = (lo + hi) / T::lit(2.0);
            if displacement(mid)? < wanted {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let truth = scaled(&perturbation, hi);
        let reached = improved_fk(tree, &pose, &truth, &spec)?;
        let q = reached.target;
        // Points symmetric about the perturbed joint so their centroid is exact.
        let mut target_points = vec![q];
        for p in &patch[..2] {
            let d = Vec3(p.map(T::lit));
            target_points.push(q + d);
            target_points.push(q - d);
        }
        let root_2d = camera.project(&reached.positions[0])?;
        cases.push(SyntheticCase {
            problem: IkProblem { pose, target_points, part_label: label, root_2d, camera: camera.clone() },
            truth,
            truth_target: q,
            displacement: reached.target.distance(&start),
        });
    }
    Ok(cases)
}
