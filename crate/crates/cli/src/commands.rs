use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hoi_kinematics::bench::{run_cases, BenchConfig, ProblemOutcome};
use hoi_kinematics::contact::LabeledPointCloud;
use hoi_kinematics::ik::{generate_suite, solve, IkProblem, SolveReport, SolverConfig, SolverKind, SyntheticCase};
use hoi_kinematics::io::{
    emit, encode_labels, labels_csv, read_json, read_points, resolve_skeleton, to_csv, to_json_string, write_json,
    Scene,
};
use hoi_kinematics::kinematics::{fk as forward, PoseState};
use hoi_kinematics::metrics::{evaluate, Similarity};

use crate::{BenchArgs, ContactArgs, EvalArgs, FkArgs, Format, IkArgs, Output, SolverArgs, SolverChoice};

/// Writes text output, or bytes for the binary format.
fn write_out(output: &Output, text: &str) -> Result<()> {
    emit(output.out.as_deref(), text)?;
    Ok(())
}

fn unsupported(format: Format, command: &str) -> anyhow::Error {
    anyhow::anyhow!("format {format:?} is not supported by `{command}`")
}

#[derive(Serialize, Deserialize)]
struct JointPosition {
    index: usize,
    name: String,
    position: [f64; 3],
}

pub fn fk(args: FkArgs) -> Result<ExitCode> {
    let tree = resolve_skeleton(args.skeleton.as_deref(), None)?;
    let pose: PoseState<f64> = read_json(&args.pose)?;
    let out = forward(&tree, &pose)?;
    let joints: Vec<JointPosition> = out
        .positions
        .iter()
        .enumerate()
        .map(|(index, p)| JointPosition { index, name: tree.joint_name(index).to_string(), position: p.0 })
        .collect();
    let text = match args.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json_string(&joints)?,
        Format::Csv => {
            #[derive(Serialize)]
            struct Row<'a> {
                index: usize,
                name: &'a str,
                x: f64,
                y: f64,
                z: f64,
            }
            let rows: Vec<Row> = joints
                .iter()
                .map(|j| Row { index: j.index, name: &j.name, x: j.position[0], y: j.position[1], z: j.position[2] })
                .collect();
            to_csv(&rows)?
        }
        f => return Err(unsupported(f, "fk")),
    };
    write_out(&args.output, &text)?;
    Ok(ExitCode::SUCCESS)
}

pub fn contact(args: ContactArgs) -> Result<ExitCode> {
    let scene = Scene::load(&args.scene, args.skeleton.as_deref())?;
    let labels = scene.contact(args.threshold)?;
    let in_contact = labels.labels.iter().filter(|&&l| l != hoi_kinematics::ik::NO_CONTACT).count();
    eprintln!("{} of {} object points in contact", in_contact, labels.labels.len());
    write_labels(&args.output, &labels)?;
    Ok(ExitCode::SUCCESS)
}

fn write_labels(output: &Output, labels: &LabeledPointCloud<f64>) -> Result<()> {
    match output.format.unwrap_or(Format::Json) {
        Format::Json => write_out(output, &to_json_string(labels)?),
        Format::Csv => write_out(output, &labels_csv(labels)?),
        Format::Bin => {
            let bytes = encode_labels(&labels.labels);
            match &output.out {
                Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
                None => {
                    let mut out = std::io::stdout().lock();
                    out.write_all(&bytes)?;
                    Ok(out.flush()?)
                }
            }
        }
        f => Err(unsupported(f, "contact")),
    }
}

/// Solver settings file: the same knobs as the flags, angle in degrees.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    gamma: Option<f64>,
    eps1: Option<f64>,
    eps2: Option<f64>,
    lr: Option<f64>,
    max_iters: Option<usize>,
    seed: Option<u64>,
    stop_factor: Option<f64>,
    hidden: Option<Vec<usize>>,
    trust_radius: Option<f64>,
}

/// Flag, then config file, then built-in default.
fn solver_config(args: &SolverArgs) -> Result<SolverConfig<f64>> {
    let file: ConfigFile = match &args.config {
        Some(p) => read_json(p)?,
        None => ConfigFile::default(),
    };
    let mut c = SolverConfig::default();
    if let Some(g) = args.gamma.or(file.gamma) {
        c = c.with_gamma_degrees(g);
    }
    if let Some(v) = args.eps1.or(file.eps1) {
        c.eps1 = v;
    }
    if let Some(v) = args.eps2.or(file.eps2) {
        c.eps2 = v;
    }
    if let Some(v) = args.lr.or(file.lr) {
        c.learning_rate = v;
    }
    if let Some(v) = args.max_iters.or(file.max_iters) {
        c.max_iterations = v;
    }
    if let Some(v) = args.seed.or(file.seed) {
        c.seed = v;
    }
    if let Some(v) = file.stop_factor {
        c.stop_factor = v;
    }
    if let Some(v) = file.hidden {
        c.hidden = v;
    }
    if let Some(v) = file.trust_radius {
        c.trust_radius = v;
    }
    c.validate()?;
    Ok(c)
}

fn solver_kinds(choice: SolverChoice) -> Vec<SolverKind> {
    match choice {
        SolverChoice::Neural => vec![SolverKind::Neural],
        SolverChoice::Trm => vec![SolverKind::Trm],
        SolverChoice::Both => vec![SolverKind::Neural, SolverKind::Trm],
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProblemSet {
    One(Box<IkProblem<f64>>),
    Many(Vec<IkProblem<f64>>),
    Suite(Vec<SyntheticCase<f64>>),
}

fn load_problems(path: &Path) -> Result<Vec<IkProblem<f64>>> {
    let set: ProblemSet = read_json(path)?;
    let problems = match set {
        ProblemSet::One(p) => vec![*p],
        ProblemSet::Many(v) => v,
        ProblemSet::Suite(v) => v.into_iter().map(|c| c.problem).collect(),
    };
    if problems.is_empty() {
        bail!("{} contains no problems", path.display());
    }
    Ok(problems)
}

#[derive(Serialize)]
struct SolveEntry<'a> {
    problem: usize,
    report: &'a SolveReport<f64>,
}

fn comparison_markdown(outcomes: &[ProblemOutcome], kinds: &[SolverKind]) -> String {
    let mut s = String::from("| problem | part |");
    let mut rule = String::from("|---|---|");
    for k in kinds {
        let n = k.as_str();
        s.push_str(&format!(" {n} stop | {n} iterations | {n} final loss | {n} distance (cm) | {n} off-target (deg) |"));
        rule.push_str("---|---|---|---|---|");
    }
    s.push('\n');
    s.push_str(&rule);
    s.push('\n');
    let problems = outcomes.iter().map(|o| o.problem).max().map_or(0, |m| m + 1);
    for p in 0..problems {
        let row: Vec<&ProblemOutcome> = outcomes.iter().filter(|o| o.problem == p).collect();
        s.push_str(&format!("| {p} | {} |", row[0].part_label));
        for o in row {
            s.push_str(&format!(
                " {} | {} | {:.3e} | {:.4} | {:.3} |",
                o.stop_reason.as_str(),
                o.iterations,
                o.final_loss,
                o.final_distance_cm,
                o.off_target_deg
            ));
        }
        s.push('\n');
    }
    let total = outcomes.len() / kinds.len().max(1);
    for k in kinds {
        let c = outcomes.iter().filter(|o| o.solver == *k && o.converged).count();
        s.push_str(&format!("\n{}: {c}/{total} converged", k.as_str()));
    }
    s.push('\n');
    s
}

pub fn ik(args: IkArgs) -> Result<ExitCode> {
    let (tree, problems) = match (&args.scene, &args.problems) {
        (Some(scene), _) => {
            let scene = Scene::load(scene, args.skeleton.as_deref())?;
            let problem = scene.ik_problem(args.threshold)?;
            (scene.tree, vec![problem])
        }
        (None, Some(path)) => (resolve_skeleton(args.skeleton.as_deref(), None)?, load_problems(path)?),
        (None, None) => bail!("either --scene or --problems is required"),
    };
    let config = solver_config(&args.solver_args)?;
    let kinds = solver_kinds(args.solver);
    let gamma_deg = config.gamma.to_degrees();

    let mut reports = Vec::new();
    let mut outcomes = Vec::new();
    for (i, problem) in problems.iter().enumerate() {
        for &kind in &kinds {
            let r = solve(kind, &tree, problem, &config).with_context(|| format!("problem {i}"))?;
            let gamma = (kind == SolverKind::Neural).then_some(gamma_deg);
            outcomes.push(ProblemOutcome::from_report(i, problem.part_label, gamma, &r));
            reports.push((i, r));
        }
    }

    let text = match args.output.format.unwrap_or(Format::Json) {
        Format::Json => {
            let entries: Vec<SolveEntry> = reports.iter().map(|(problem, report)| SolveEntry { problem: *problem, report }).collect();
            to_json_string(&entries)?
        }
        Format::Csv => to_csv(&outcomes)?,
        Format::Md => comparison_markdown(&outcomes, &kinds),
        f => return Err(unsupported(f, "ik")),
    };
    write_out(&args.output, &text)?;

    if let Some(path) = &args.pose_out {
        let poses: Vec<&PoseState<f64>> = reports.iter().map(|(_, r)| &r.final_pose).collect();
        if poses.len() == 1 {
            write_json(path, poses[0])?;
        } else {
            write_json(path, &poses)?;
        }
    }
    let all_reached = reports.iter().all(|(_, r)| r.stop_reason.reached_target());
    Ok(if all_reached { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

#[derive(Serialize, Deserialize)]
struct MetricRow {
    sequence: String,
    frame: u64,
    chamfer_cm: f64,
    pa_chamfer_cm: f64,
}

#[derive(Serialize)]
struct MetricJson {
    sequence: String,
    frame: u64,
    chamfer_cm: f64,
    pa_chamfer_cm: f64,
    alignment: Similarity<f64>,
}

pub fn eval(args: EvalArgs) -> Result<ExitCode> {
    let pred = read_points(&args.pred)?;
    let truth = read_points(&args.truth)?;
    let report = evaluate(&pred, &truth)?;
    let text = match args.output.format.unwrap_or(Format::Csv) {
        Format::Csv => to_csv(&[MetricRow {
            sequence: args.sequence,
            frame: args.frame,
            chamfer_cm: report.chamfer_cm,
            pa_chamfer_cm: report.pa_chamfer_cm,
        }])?,
        Format::Json => to_json_string(&MetricJson {
            sequence: args.sequence,
            frame: args.frame,
            chamfer_cm: report.chamfer_cm,
            pa_chamfer_cm: report.pa_chamfer_cm,
            alignment: report.alignment,
        })?,
        f => return Err(unsupported(f, "eval")),
    };
    write_out(&args.output, &text)?;
    Ok(ExitCode::SUCCESS)
}

pub fn bench(args: BenchArgs) -> Result<ExitCode> {
    let tree = resolve_skeleton(args.skeleton.as_deref(), None)?;
    let mut config = BenchConfig {
        gammas_deg: args.gammas.clone(),
        solvers: solver_kinds(args.solver),
        solver: solver_config(&args.solver_args)?,
        ..BenchConfig::default()
    };
    config.suite.count = args.count;
    config.suite.seed = args.suite_seed;
    let cases = generate_suite(&tree, &config.suite)?;
    if let Some(path) = &args.suite_out {
        write_json(path, &cases)?;
    }
    let result = run_cases(&tree, &cases, &config)?;
    let markdown = result.markdown();
    let format = args.output.format.unwrap_or(Format::Csv);
    let text = match format {
        Format::Csv => result.rows_csv()?,
        Format::Json => to_json_string(&result.rows)?,
        Format::Md => markdown.clone(),
        f => return Err(unsupported(f, "bench")),
    };
    write_out(&args.output, &text)?;
    if let Some(path) = &args.outcomes {
        emit(Some(path), &result.outcomes_csv()?)?;
    }
    match &args.markdown {
        Some(path) => emit(Some(path), &markdown)?,
        None if format != Format::Md => eprint!("{markdown}"),
        None => {}
    }
    Ok(ExitCode::SUCCESS)
}
