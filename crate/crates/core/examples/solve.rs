use hoi_kinematics::ik::{generate_suite, solve, SolverConfig, SolverKind, SuiteConfig};
use hoi_kinematics::kinematics::fk;
use hoi_kinematics::Skeleton;

fn main() -> hoi_kinematics::Result<()> {
    let tree = Skeleton::synthetic();
    let cases = generate_suite(&tree, &SuiteConfig { count: 1, ..SuiteConfig::default() })?;
    let problem = &cases[0].problem;

    let before = fk(&tree, &problem.pose)?;
    let report = solve(SolverKind::Neural, &tree, problem, &SolverConfig::default())?;
    let after = fk(&tree, &report.final_pose)?;
    let j = report.target_joint;
    println!(
        "{:?} after {} iterations, {:.2} cm from target (joint {j} moved {:.2} cm)",
        report.stop_reason,
        report.iterations,
        100.0 * report.final_target_distance,
        100.0 * (after.positions[j] - before.positions[j]).norm()
    );
    Ok(())
}
