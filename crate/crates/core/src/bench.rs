//! Benchmark harness: runs solvers over a synthetic suite for several
//! angle bounds and aggregates the outcomes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ik::{generate_suite, solve, SolveReport, SolverConfig, SolverKind, StopReason, SuiteConfig, SyntheticCase};
use crate::io::to_csv;
use crate::metrics::METERS_TO_CM;
use crate::skeleton::KinematicTree;

/// Final joint-to-target distance under which a run counts as on target, meters.
pub const ON_TARGET_DISTANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub suite: SuiteConfig,
    pub gammas_deg: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    /// Base solver settings; `gamma` is overridden per sweep entry.
    pub solver: SolverConfig<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            suite: SuiteConfig::default(),
            gammas_deg: vec![30.0, 60.0, 90.0],
            solvers: vec![SolverKind::Neural, SolverKind::Trm],
            solver: SolverConfig::default(),
        }
    }
}

/// One solver run on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOutcome {
    pub problem: usize,
    pub solver: SolverKind,
    /// Angle bound in degrees; empty for the unbounded baseline.
    pub gamma_deg: Option<f64>,
    pub part_label: u8,
    pub stop_reason: StopReason,
    /// Stopped by the relative loss rule and ended within 1 cm of the target.
    pub converged: bool,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_distance_cm: f64,
    pub off_target_deg: f64,
}

/// Aggregate over one solver and angle bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub solver: SolverKind,
    pub gamma_deg: Option<f64>,
    pub problems: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    pub mean_iterations: f64,
    pub mean_final_loss: f64,
    pub mean_final_distance_cm: f64,
    pub mean_off_target_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub outcomes: Vec<ProblemOutcome>,
    pub rows: Vec<BenchRow>,
}

impl ProblemOutcome {
    pub fn from_report(problem: usize, part_label: u8, gamma_deg: Option<f64>, r: &SolveReport<f64>) -> Self {
        Self {
            problem,
            solver: r.solver,
            gamma_deg,
            part_label,
            stop_reason: r.stop_reason,
            converged: r.stop_reason.reached_target() && r.final_target_distance < ON_TARGET_DISTANCE,
            iterations: r.iterations,
            initial_loss: r.initial_loss,
            final_loss: r.final_loss,
            final_distance_cm: r.final_target_distance * METERS_TO_CM,
            off_target_deg: r.off_target_rotation.to_degrees(),
        }
    }
}

fn run_one(
    tree: &KinematicTree<f64>,
    (problem, case): (usize, &SyntheticCase<f64>),
    kind: SolverKind,
    config: &SolverConfig<f64>,
    gamma_deg: Option<f64>,
) -> Result<ProblemOutcome> {
    let r = solve(kind, tree, &case.problem, config)?;
    Ok(ProblemOutcome::from_report(problem, case.problem.part_label, gamma_deg, &r))
}

fn aggregate(solver: SolverKind, gamma_deg: Option<f64>, outcomes: &[ProblemOutcome]) -> BenchRow {
    let n = outcomes.len() as f64;
    let mean = |f: fn(&ProblemOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
    let converged = outcomes.iter().filter(|o| o.converged).count();
    BenchRow {
        solver,
        gamma_deg,
        problems: outcomes.len(),
        converged,
        convergence_rate: converged as f64 / n,
        mean_iterations: mean(|o| o.iterations as f64),
        mean_final_loss: mean(|o| o.final_loss),
        mean_final_distance_cm: mean(|o| o.final_distance_cm),
        mean_off_target_deg: mean(|o| o.off_target_deg),
    }
}

/// Runs every configured solver on the given cases. The neural solver runs
/// once per angle bound; the baseline has no bound and runs once.
pub fn run_cases(tree: &KinematicTree<f64>, cases: &[SyntheticCase<f64>], config: &BenchConfig) -> Result<BenchResult> {
    if cases.is_empty() {
        return Err(Error::invalid("benchmark suite is empty"));
    }
    if config.solvers.is_empty() {
        return Err(Error::invalid("no solvers selected"));
    }
    let mut sweeps: Vec<(SolverKind, Option<f64>)> = Vec::new();
    for &kind in &config.solvers {
        match kind {
            SolverKind::Neural => {
                if config.gammas_deg.is_empty() {
                    return Err(Error::invalid("angle sweep is empty"));
                }
                sweeps.extend(config.gammas_deg.iter().map(|&g| (kind, Some(g))));
            }
            SolverKind::Trm => sweeps.push((kind, None)),
        }
    }
    let mut outcomes = Vec::new();
    for (kind, gamma) in sweeps {
        let solver = match gamma {
            Some(g) => config.solver.clone().with_gamma_degrees(g),
            None => config.solver.clone(),
        };
        solver.validate()?;
        let batch = cases
            .par_iter()
            .enumerate()
            .map(|c| run_one(tree, c, kind, &solver, gamma))
            .collect::<Result<Vec<_>>>()?;
        outcomes.extend(batch);
    }
    Ok(BenchResult::from_outcomes(outcomes))
}

pub fn run_bench(tree: &KinematicTree<f64>, config: &BenchConfig) -> Result<BenchResult> {
    let cases = generate_suite(tree, &config.suite)?;
    run_cases(tree, &cases, config)
}

impl BenchResult {
    /// Groups outcomes by solver and angle bound, in order of first appearance.
    pub fn from_outcomes(outcomes: Vec<ProblemOutcome>) -> Self {
        let mut keys: Vec<(SolverKind, Option<f64>)> = Vec::new();
        for o in &outcomes {
            if !keys.contains(&(o.solver, o.gamma_deg)) {
                keys.push((o.solver, o.gamma_deg));
            }
        }
        let rows = keys
            .into_iter()
            .map(|(kind, gamma)| {
                let group: Vec<ProblemOutcome> = outcomes
                    .iter()
                    .filter(|o| o.solver == kind && o.gamma_deg == gamma)
                    .cloned()
                    .collect();
                aggregate(kind, gamma, &group)
            })
            .collect();
        Self { outcomes, rows }
    }

    pub fn rows_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn outcomes_csv(&self) -> Result<String> {
        to_csv(&self.outcomes)
    }

    fn neural_rows(&self) -> Vec<&BenchRow> {
        self.rows.iter().filter(|r| r.solver == SolverKind::Neural).collect()
    }

    /// Whether mean off-target rotation is non-decreasing in the angle
    /// bound; `None` with fewer than two bounds.
    pub fn off_target_monotone(&self) -> Option<bool> {
        let mut rows = self.neural_rows();
        if rows.len() < 2 {
            return None;
        }
        rows.sort_by(|a, b| a.gamma_deg.partial_cmp(&b.gamma_deg).expect("finite gamma"));
        Some(rows.windows(2).all(|w| w[0].mean_off_target_deg <= w[1].mean_off_target_deg))
    }

    /// Fraction of problems whose off-target rotation at the smallest bound
    /// is at most that at the largest bound.
    pub fn trend_fraction(&self) -> Option<f64> {
        let gammas: Vec<f64> = self.neural_rows().iter().filter_map(|r| r.gamma_deg).collect();
        let lo = gammas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if gammas.len() < 2 || lo == hi {
            return None;
        }
        let at = |g: f64| -> Vec<&ProblemOutcome> {
            self.outcomes
                .iter()
                .filter(|o| o.solver == SolverKind::Neural && o.gamma_deg == Some(g))
                .collect()
        };
        let (a, b) = (at(lo), at(hi));
        let hits = a.iter().zip(&b).filter(|(x, y)| x.off_target_deg <= y.off_target_deg).count();
        Some(hits as f64 / a.len() as f64)
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from(
            "| solver | gamma (deg) | problems | converged | rate | mean iterations | mean final loss | mean distance (cm) | mean off-target (deg) |\n\
             |---|---|---|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            let gamma = r.gamma_deg.map_or_else(|| "-".to_string(), |g| format!("{g}"));
            s.push_str(&format!(
                "| {} | {} | {} | {} | {:.3} | {:.1} | {:.3e} | {:.4} | {:.3} |\n",
                r.solver.as_str(),
                gamma,
                r.problems,
                r.converged,
                r.convergence_rate,
                r.mean_iterations,
                r.mean_final_loss,
                r.mean_final_distance_cm,
                r.mean_off_target_deg
            ));
        }
        if let Some(m) = self.off_target_monotone() {
            let word = if m { "non-decreasing" } else { "not monotone" };
            s.push_str(&format!("\nMean off-target rotation over gamma: {word}.\n"));
        }
        if let Some(f) = self.trend_fraction() {
            s.push_str(&format!(
                "Problems with off-target rotation at the smallest gamma <= at the largest: {:.1}%.\n",
                100.0 * f
            ));
        }
        s
    }
}
