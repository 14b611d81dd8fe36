//! Monte-Carlo experiment runners. Every run expands into independent (sweep point, seed) tasks,
//! executed on a worker pool and merged in task order, so output is identical for any job count.

use nalgebra::Vector3;
use nfbf_core::geometry::{los_channel, Field, UserId};
use nfbf_core::pipeline::{budget_at_radius, solve_robust, ConvergenceReason, Scenario};
use nfbf_core::scenario::{build_scenario, ScenarioConfig};
use nfbf_core::uncertainty::UncertaintyBudget;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{run_baseline, BaselineOutcome};
use crate::config::{Baseline, ExperimentConfig, ExperimentKind};
use crate::error::HarnessError;

/// One CSV record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub sweep: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub baseline: String,
    pub metric: String,
    pub value: f64,
    /// `ok`, `skipped`, `infeasible` or `solver_failure`.
    pub status: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Ok,
    Infeasible,
    SolverFailure,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub rows: Vec<Row>,
    /// Most severe task outcome (solver failure over infeasibility).
    pub outcome: Outcome,
}

struct Task {
    sweep: &'static str,
    value: f64,
    seed: u64,
}

struct Emit<'a> {
    kind: ExperimentKind,
    hash: &'a str,
    task: &'a Task,
    rows: Vec<Row>,
    outcome: Outcome,
}

impl Emit<'_> {
    fn push(&mut self, baseline: &str, metric: &str, value: f64) {
        self.push_at(self.task.sweep, self.task.value, baseline, metric, value, "ok");
    }

    fn push_at(&mut self, sweep: &str, sweep_value: f64, baseline: &str, metric: &str, value: f64, status: &str) {
        self.rows.push(Row {
            experiment: self.kind.name().into(),
            sweep: sweep.into(),
            sweep_value,
            seed: self.task.seed,
            baseline: baseline.into(),
            metric: metric.into(),
            value,
            status: status.into(),
            config_hash: self.hash.into(),
        });
    }

    /// Record a failed task as a single NaN row; configuration errors abort the experiment.
    fn fail(&mut self, baseline: &str, metric: &str, e: HarnessError) -> Result<(), HarnessError> {
        let (status, outcome) = match e {
            HarnessError::Infeasible(_) => ("infeasible", Outcome::Infeasible),
            HarnessError::Solver(_) => ("solver_failure", Outcome::SolverFailure),
            other => return Err(other),
        };
        log::warn!("{} {}={} seed {} {baseline}: {e}", self.kind, self.task.sweep, self.task.value, self.task.seed);
        self.outcome = self.outcome.max(outcome);
        self.push_at(self.task.sweep, self.task.value, baseline, metric, f64::NAN, status);
        Ok(())
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Largest sampled CSI error `‖h(p̂ + Δp) − ĥ‖` over `samples` position errors drawn uniformly from
/// the ball of radius `pos_err`, with the channel model of the user's kind (the far user keeps its
/// realised scattered component).
pub fn sampled_error_max(sc: &Scenario, id: UserId, pos_err: f64, samples: usize, rng: &mut ChaCha8Rng) -> Result<f64, HarnessError> {
    let u = sc.users.user(id);
    let ch = sc.channels.get(id);
    let k = u.rician_factor;
    let w = if k.is_infinite() { 1.0 } else { (k / (1.0 + k)).sqrt() };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let g = Vector3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        let dp: Vector3<f64> = g.normalize() * (pos_err * rng.random::<f64>().cbrt());
        let mut h = los_channel(&sc.geom, &(u.est_pos + dp), &sc.model)? * nfbf_core::C64::from(w);
        if let (Field::Far, Some(s)) = (id.field, &ch.nlos_component) {
            h += s / nfbf_core::C64::from((1.0 + k).sqrt());
        }
        worst = worst.max((h - &ch.recon_los).norm());
    }
    Ok(worst)
}

fn bound_rows(e: &mut Emit<'_>, sc: &Scenario, budget: &UncertaintyBudget, pos_err: f64, samples: usize) -> Result<(), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(e.task.seed ^ 0xb0b0);
    for (field, bounds, tag) in [(Field::Near, &budget.near, "near"), (Field::Far, &budget.far, "far")] {
        e.push("bound", &format!("csi_radius_{tag}"), mean(bounds.iter().map(|b| b.csi_err_radius)));
        e.push("bound", &format!("xi_max_{tag}"), mean(bounds.iter().map(|b| b.xi_max)));
        let mut sampled = Vec::with_capacity(bounds.len());
        for g in 0..bounds.len() {
            sampled.push(sampled_error_max(sc, UserId { group: g, field }, pos_err, samples, &mut rng)?);
        }
        e.push("bound", &format!("sampled_err_{tag}"), mean(sampled.iter().copied()));
    }
    Ok(())
}

fn scenario_for(cfg: &ExperimentConfig, task: &Task, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<Scenario, HarnessError> {
    let mut s = cfg.scenario;
    edit(&mut s);
    Ok(build_scenario(&s, task.seed)?)
}

fn run_task(kind: ExperimentKind, cfg: &ExperimentConfig, hash: &str, task: &Task) -> Result<(Vec<Row>, Outcome), HarnessError> {
    let mut e = Emit { kind, hash, task, rows: vec![], outcome: Outcome::Ok };
    let pc = &cfg.pipeline;
    match kind {
        ExperimentKind::Convergence => {
            let sc = scenario_for(cfg, task, |_| {})?;
            match solve_robust(&sc, pc) {
                Ok(sol) => {
                    for (i, obj) in sol.trace.objectives().into_iter().enumerate() {
                        e.push_at("iteration", i as f64, "robust", "worst_case_objective", obj, "ok");
                    }
                    for o in &sol.trace.outer {
                        e.push_at("iteration", o.iteration as f64, "robust", "seconds", o.seconds, "ok");
                    }
                    e.push("robust", "iterations", sol.trace.iterations() as f64);
                    e.push("robust", "converged", f64::from(u8::from(sol.trace.convergence_reason == ConvergenceReason::Tolerance)));
                    e.push("robust", "conic_solves", sol.trace.total_solves() as f64);
                }
                Err(f) => e.fail("robust", "worst_case_objective", f.error.into())?,
            }
        }
        ExperimentKind::BoundVsNt => {
            let n = task.value as usize;
            let sc = scenario_for(cfg, task, |s| s.cols = n / s.rows)?;
            let eps = cfg.scenario.placement.pos_err_radius;
            match budget_at_radius(&sc, eps, &pc.bound) {
                Ok(b) => bound_rows(&mut e, &sc, &b, eps, cfg.sweeps.bound_samples)?,
                Err(err) => e.fail("bound", "csi_radius_near", err.into())?,
            }
        }
        ExperimentKind::BoundVsEps => {
            let sc = scenario_for(cfg, task, |_| {})?;
            match budget_at_radius(&sc, task.value, &pc.bound) {
                Ok(b) => bound_rows(&mut e, &sc, &b, task.value, cfg.sweeps.bound_samples)?,
                Err(err) => e.fail("bound", "csi_radius_near", err.into())?,
            }
        }
        ExperimentKind::RateVsDistance => {
            let gap = cfg.sweeps.pair_gap;
            let sc = scenario_for(cfg, task, |s| {
                s.placement.near_radius = task.value;
                s.placement.far_radius = task.value + gap;
            })?;
            match solve_robust(&sc, pc) {
                Ok(sol) => {
                    let truth = sc.channels.true_channels();
                    let r = nfbf_core::rate::evaluate_split(&truth, &sol.beams(&sc.geom), &sol.powers, sc.sys.sigma2, sc.sys.omega);
                    e.push("robust", "true_sum_rate", r.sum_rate());
                    e.push("robust", "true_weighted_rate", r.total);
                    e.push("robust", "worst_case_rate", sol.worst_case.objective);
                    e.push("robust", "iterations", sol.trace.iterations() as f64);
                }
                Err(f) => e.fail("robust", "true_sum_rate", f.error.into())?,
            }
        }
        ExperimentKind::Baselines => {
            let sc = scenario_for(cfg, task, |_| {})?;
            for &b in &cfg.baselines {
                match run_baseline(b, &sc, pc) {
                    Ok(BaselineOutcome::Done(run)) => {
                        e.push(b.name(), "true_sum_rate", run.true_rates.sum_rate());
                        e.push(b.name(), "true_weighted_rate", run.true_rates.total);
                        e.push(b.name(), "nominal_weighted_rate", run.nominal_rates.total);
                        if let Some(w) = run.worst_case {
                            e.push(b.name(), "worst_case_rate", w);
                        }
                    }
                    Ok(BaselineOutcome::Skipped(why)) => {
                        log::info!("baseline {b} skipped for seed {}: {why}", task.seed);
                        e.push_at(task.sweep, task.value, b.name(), "true_sum_rate", f64::NAN, "skipped");
                    }
                    Err(err) => e.fail(b.name(), "true_sum_rate", err)?,
                }
            }
        }
        ExperimentKind::RobustnessVsErr => {
            let sc = scenario_for(cfg, task, |s| s.placement.pos_err_radius = task.value)?;
            for b in [Baseline::Robust, Baseline::NonRobust] {
                match run_baseline(b, &sc, pc) {
                    Ok(BaselineOutcome::Done(run)) => {
                        e.push(b.name(), "worst_case_rate", run.worst_case.unwrap_or(f64::NAN));
                        e.push(b.name(), "true_sum_rate", run.true_rates.sum_rate());
                        e.push(b.name(), "true_weighted_rate", run.true_rates.total);
                    }
                    Ok(BaselineOutcome::Skipped(_)) => unreachable!("NOMA designs are never skipped"),
                    Err(err) => e.fail(b.name(), "worst_case_rate", err)?,
                }
            }
        }
    }
    Ok((e.rows, e.outcome))
}

fn tasks(kind: ExperimentKind, cfg: &ExperimentConfig) -> Vec<Task> {
    let (sweep, values): (&'static str, Vec<f64>) = match kind {
        ExperimentKind::Convergence | ExperimentKind::Baselines => ("none", vec![0.0]),
        ExperimentKind::BoundVsNt => ("n_elements", cfg.sweeps.n_elements.iter().map(|&n| n as f64).collect()),
        ExperimentKind::BoundVsEps | ExperimentKind::RobustnessVsErr => ("pos_err", cfg.sweeps.pos_err.clone()),
        ExperimentKind::RateVsDistance => ("near_distance", cfg.sweeps.near_distances.clone()),
    };
    values.iter().flat_map(|&value| cfg.seeds.iter().map(move |&seed| Task { sweep, value, seed })).collect()
}

/// Run one experiment on a pool of `jobs` workers (0 = all cores).
pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let tasks = tasks(kind, cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<(Vec<Row>, Outcome), HarnessError>> =
        pool.install(|| tasks.par_iter().map(|t| run_task(kind, cfg, &hash, t)).collect());
    let mut rows = Vec::new();
    let mut outcome = Outcome::Ok;
    for r in results {
        let (rs, o) = r?;
        rows.extend(rs);
        outcome = outcome.max(o);
    }
    Ok(ExperimentOutput { kind, rows, outcome })
}
