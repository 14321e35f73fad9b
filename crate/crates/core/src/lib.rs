//! Contact-driven human kinematics: forward kinematics with twist-swing
//! corrections, neural and trust-region inverse kinematics, contact
//! pseudo-labels and reconstruction metrics.
//!
//! Core types are generic over the scalar ([`Real`], implemented for `f32`
//! and `f64`). The aliases below fix the scalar for common use.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bench;
pub mod camera;
pub mod contact;
pub mod error;
pub mod ik;
pub mod io;
pub mod kinematics;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod skeleton;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3d = linalg::Vec3<f64>;
pub type Mat3d = linalg::Mat3<f64>;
pub type Pose = kinematics::PoseState<f64>;
pub type Skeleton = skeleton::KinematicTree<f64>;
pub type Problem = ik::IkProblem<f64>;
pub type Config = ik::SolverConfig<f64>;
pub type Report = ik::SolveReport<f64>;
pub type CameraD = camera::Camera<f64>;
pub type Mesh = contact::PartLabeledMesh<f64>;
pub type LabeledCloud = contact::LabeledPointCloud<f64>;

pub type Vec3f = linalg::Vec3<f32>;
pub type Mat3f = linalg::Mat3<f32>;
pub type PoseF32 = kinematics::PoseState<f32>;
pub type SkeletonF32 = skeleton::KinematicTree<f32>;
