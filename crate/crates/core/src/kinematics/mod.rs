//! Rotations, forward kinematics and the twist-swing extension.

mod fk;
mod rotation;

pub use fk::{
    delta_rotation, fk, improved_fk, twist_axis, twist_direction, FkOutput, ImprovedFkOutput, JointTwistSwing,
    PoseState, TwistSwingParams,
};
pub use rotation::{
    axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_quaternion, rodrigues, rodrigues_sin_cos,
    rotation_angle, AXIS_NORM_TOLERANCE,
};
