//! Problem, configuration and report types shared by both IK solvers.

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::kinematics::{PoseState, TwistSwingParams};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Below this initial loss the relative stop rule is vacuous and the solve
/// returns immediately.
pub const INITIAL_LOSS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct IkProblem<T> {
    pub pose: PoseState<T>,
    /// Contact-region points the target joint is driven towards.
    pub target_points: Vec<Vec3<T>>,
    /// Contacted body part, 1..=14.
    pub part_label: u8,
    /// Observed 2D root keypoint in pixels.
    pub root_2d: [T; 2],
    pub camera: Camera<T>,
}

impl<T: Real> IkProblem<T> {
    pub fn validate(&self, joint_count: usize) -> Result<()> {
        self.pose.validate(joint_count)?;
        if self.target_points.is_empty() {
            return Err(Error::invalid("target point set is empty"));
        }
        if !self.target_points.iter().all(Vec3::is_finite) {
            return Err(Error::invalid("target point set contains non-finite points"));
        }
        if !self.root_2d.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("2D root keypoint is not finite"));
        }
        self.camera.validate()
    }

    pub fn target_centroid(&self) -> Vec3<T> {
        let n = T::from_usize(self.target_points.len()).expect("point count fits scalar");
        let sum = self.target_points.iter().fold(Vec3::zeros(), |a, p| a + *p);
        sum.scale(T::one() / n)
    }

    /// Mean squared distance of the target points to their centroid.
    pub fn target_spread(&self) -> T {
        let c = self.target_centroid();
        let n = T::from_usize(self.target_points.len()).expect("point count fits scalar");
        self.target_points.iter().map(|p| (*p - c).norm_squared()).sum::<T>() / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct SolverConfig<T> {
    /// Bound on twist and swing angles, radians.
    pub gamma: T,
    /// Weight of the 3D target term.
    pub eps1: T,
    /// Weight of the 2D root term.
    pub eps2: T,
    pub learning_rate: T,
    pub max_iterations: usize,
    /// Stop once the loss falls below `stop_factor` times its initial value.
    pub stop_factor: T,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Initial trust-region radius of the baseline solver.
    pub trust_radius: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(30f64.to_radians()),
            eps1: T::one(),
            eps2: T::lit(1e-4),
            learning_rate: T::lit(1e-2),
            max_iterations: 500,
            stop_factor: T::lit(0.01),
            seed: 0,
            hidden: vec![256, 256],
            trust_radius: T::lit(0.5),
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_gamma_degrees(mut self, degrees: f64) -> Self {
        self.gamma = T::lit(degrees.to_radians());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma <= T::FRAC_PI_2() + T::lit(1e-12)) {
            return Err(Error::Configuration("gamma must lie in (0, 90] degrees".into()));
        }
        if !(self.stop_factor > T::zero() && self.stop_factor < T::one()) {
            return Err(Error::Configuration("stop factor must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Configuration("max iterations must be at least 1".into()));
        }
        if !(self.eps1 >= T::zero() && self.eps2 >= T::zero()) {
            return Err(Error::Configuration("loss weights must be non-negative".into()));
        }
        if !(self.learning_rate > T::zero()) || !(self.trust_radius > T::zero()) {
            return Err(Error::Configuration("learning rate and trust radius must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Configuration("hidden layers must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Initial loss below the floor; nothing to optimize.
    AlreadyConverged,
    /// Loss fell below `stop_factor * initial_loss`.
    Converged,
    MaxItersReached,
    /// Trust region collapsed without meeting the stop rule.
    Stalled,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::AlreadyConverged => "already_converged",
            StopReason::Converged => "converged",
            StopReason::MaxItersReached => "max_iters_reached",
            StopReason::Stalled => "stalled",
        }
    }

    pub fn reached_target(&self) -> bool {
        matches!(self, StopReason::AlreadyConverged | StopReason::Converged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub loss: T,
    /// Largest twist magnitude over the chain, radians.
    pub max_abs_phi: T,
    /// Largest swing magnitude over the chain, radians.
    pub max_abs_alpha: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Neural,
    Trm,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Neural => "neural",
            SolverKind::Trm => "trm",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neural" => Ok(SolverKind::Neural),
            "trm" => Ok(SolverKind::Trm),
            other => Err(Error::invalid(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct SolveReport<T> {
    pub solver: SolverKind,
    pub target_joint: usize,
    pub initial_loss: T,
    pub final_loss: T,
    /// Parameter updates performed (trial steps for the trust-region solver).
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub trace: Vec<IterationRecord<T>>,
    pub twist_swing: TwistSwingParams<T>,
    /// Input pose with the extra rotations folded in and `t + delta_t`.
    pub final_pose: PoseState<T>,
    pub final_target_position: Vec3<T>,
    /// Mean distance from the target joint to the target points, meters.
    pub final_target_distance: T,
    /// Summed rotation angle added to the driven joints above the target, radians.
    pub off_target_rotation: T,
}
