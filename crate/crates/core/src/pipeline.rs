//! Dual-loop robust design.
//!
//! Inner loop (block coordinate descent at fixed powers): worst-case CSI → digital vectors → DMA
//! amplitudes, then the worst case of the new design is recomputed. Outer loop: power allocation
//! on the worst-case effective gains. A candidate design replaces the incumbent only if its
//! worst-case weighted rate does not drop, so the recorded objective sequence is nondecreasing.

use std::time::Instant;

use serde::Serialize;

use crate::beamforming::{update_digital, update_dma, BeamformerState, BeamformingConfig};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ChannelSet, GroupChannels, PathLossModel, UserEnsemble};
use crate::power::{allocate_power, uniform_split, PowerSplit};
use crate::rate::{gain, SystemParams};
use crate::uncertainty::{build_budget, interference_caps, zero_budget, BoundConfig, UncertaintyBudget};
use crate::worst_case::{minimize_rate_over_csi, QosPolicy, WorstCaseConfig, WorstCaseCsi};
use crate::CVec;

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub geom: ArrayGeometry,
    pub users: UserEnsemble,
    pub channels: ChannelSet,
    pub model: PathLossModel,
    pub sys: SystemParams,
    pub total_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub bound: BoundConfig,
    pub worst_case: WorstCaseConfig,
    pub beamforming: BeamformingConfig,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
    /// Design as if the reconstructed channels were exact (all CSI radii zero).
    pub perfect_csi: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bound: BoundConfig::default(),
            worst_case: WorstCaseConfig { qos: QosPolicy::ClampToNominal, ..WorstCaseConfig::default() },
            beamforming: BeamformingConfig::default(),
            outer_tol: 1e-4,
            max_outer: 20,
            inner_tol: 1e-4,
            max_inner: 5,
            perfect_csi: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceReason {
    Tolerance,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerRecord {
    pub sdr_objective: f64,
    pub digital_before: f64,
    pub digital_after: f64,
    pub digital_accepted: bool,
    pub extraction_gap: f64,
    pub trace_residual: f64,
    pub psd_residual: f64,
    pub digital_solves: usize,
    pub dma_before: f64,
    pub dma_after: f64,
    pub dma_solves: usize,
    pub worst_case_objective: f64,
    pub worst_case_solves: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub inner: Vec<InnerRecord>,
    /// Objective of the power-allocation problem at the new powers (bits/s/Hz, intra-group model).
    pub power_objective: Option<f64>,
    pub power_clamped: Vec<usize>,
    pub power_accepted: bool,
    pub power_solves: usize,
    /// Incumbent worst-case weighted rate after this iteration.
    pub worst_case_objective: f64,
    pub seconds: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveTrace {
    /// Worst-case objective of the initial design.
    pub initial_objective: f64,
    pub initial_solves: usize,
    pub outer: Vec<OuterRecord>,
    pub convergence_reason: ConvergenceReason,
    pub warnings: Vec<String>,
}

impl SolveTrace {
    fn new() -> Self {
        Self {
            initial_objective: f64::NAN,
            initial_solves: 0,
            outer: vec![],
            convergence_reason: ConvergenceReason::MaxIter,
            warnings: vec![],
        }
    }

    /// Incumbent worst-case objective: initial value, then one entry per outer iteration.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective).chain(self.outer.iter().map(|o| o.worst_case_objective)).collect()
    }

    pub fn iterations(&self) -> usize {
        self.outer.len()
    }

    /// Every conic solve issued by the run.
    pub fn total_solves(&self) -> usize {
        self.initial_solves
            + self
                .outer
                .iter()
                .map(|o| {
                    o.power_solves
                        + o.inner.iter().map(|i| i.digital_solves + i.dma_solves + i.worst_case_solves).sum::<usize>()
                })
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustSolution {
    pub state: BeamformerState,
    pub powers: PowerSplit,
    pub worst_case: WorstCaseCsi,
    pub budget: UncertaintyBudget,
    pub trace: SolveTrace,
}

impl RobustSolution {
    pub fn beams(&self, geom: &ArrayGeometry) -> Vec<CVec> {
        self.state.beams(geom)
    }
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct PipelineFailure {
    pub error: Error,
    pub trace: SolveTrace,
}

/// Effective gains `(|h_N,iᴴa_i|², |h_F,iᴴa_i|²)` per group.
pub fn effective_gains(ch: &GroupChannels, beams: &[CVec]) -> (Vec<f64>, Vec<f64>) {
    let nu = (0..beams.len()).map(|i| gain(&ch.near[i], &beams[i])).collect();
    let fu = (0..beams.len()).map(|i| gain(&ch.far[i], &beams[i])).collect();
    (nu, fu)
}

/// Power allocation on the given gains, falling back to equal group powers when the QoS pins
/// cannot all be met.
pub fn initial_powers(ch: &GroupChannels, beams: &[CVec], sys: &SystemParams, total: f64) -> Result<PowerSplit> {
    let (nu, fu) = effective_gains(ch, beams);
    allocate_power(&nu, &fu, &sys.gamma_n, &sys.gamma_f, total, sys.sigma2)
        .or_else(|_| uniform_split(&fu, &nu, &sys.gamma_f, total, sys.sigma2))
}

struct Ctx<'a> {
    sc: &'a Scenario,
    cfg: &'a PipelineConfig,
    recon: GroupChannels,
    budget: UncertaintyBudget,
}

impl Ctx<'_> {
    fn worst(&self, state: &BeamformerState, powers: &PowerSplit) -> Result<WorstCaseCsi> {
        let beams = state.beams(&self.sc.geom);
        let caps = interference_caps(&self.budget, &self.recon, &beams, powers);
        minimize_rate_over_csi(&self.recon, &self.budget, &beams, powers, &caps, &self.sc.sys, &self.cfg.worst_case)
    }
}

fn improved(new: f64, old: f64) -> bool {
    new >= old - 1e-12 * old.abs().max(1.0)
}

fn rel_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}

/// Uncertainty budget of the scenario with every user's position-error radius replaced by
/// `pos_err_radius` (estimates unchanged).
pub fn budget_at_radius(sc: &Scenario, pos_err_radius: f64, cfg: &BoundConfig) -> Result<UncertaintyBudget> {
    let mut users = sc.users.clone();
    for u in users.near.iter_mut().chain(users.far.iter_mut()) {
        u.pos_err_radius = pos_err_radius;
    }
    build_budget(&sc.geom, &users, &sc.channels.recon_channels(), &sc.model, cfg)
}

/// Worst-case weighted rate of a fixed design (beams and powers) over the given budget.
pub fn worst_case_of(
    sc: &Scenario,
    budget: &UncertaintyBudget,
    beams: &[CVec],
    powers: &PowerSplit,
    cfg: &WorstCaseConfig,
) -> Result<WorstCaseCsi> {
    let recon = sc.channels.recon_channels();
    let caps = interference_caps(budget, &recon, beams, powers);
    minimize_rate_over_csi(&recon, budget, beams, powers, &caps, &sc.sys, cfg)
}

/// Run the full robust design.
pub fn solve_robust(sc: &Scenario, cfg: &PipelineConfig) -> std::result::Result<RobustSolution, Box<PipelineFailure>> {
    let mut trace = SolveTrace::new();
    let fail = |error: Error, mut trace: SolveTrace| {
        if matches!(error, Error::Infeasible { .. } | Error::InfeasibleUncertainty { .. }) {
            trace.convergence_reason = ConvergenceReason::Infeasible;
        }
        Box::new(PipelineFailure { error, trace })
    };
    let recon = sc.channels.recon_channels();
    let k = recon.group_count();
    let budget = if cfg.perfect_csi {
        zero_budget(k)
    } else {
        match build_budget(&sc.geom, &sc.users, &recon, &sc.model, &cfg.bound) {
            Ok(b) => b,
            Err(e) => return Err(fail(e, trace)),
        }
    };
    let ctx = Ctx { sc, cfg, recon, budget };
    let geom = &sc.geom;
    let sys = &sc.sys;

    let mut state = BeamformerState::initial(geom, &ctx.recon);
    let mut powers = match initial_powers(&ctx.recon, &state.beams(geom), sys, sc.total_power) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, trace)),
    };
    let mut wc = match ctx.worst(&state, &powers) {
        Ok(w) => w,
        Err(e) => return Err(fail(e, trace)),
    };
    trace.initial_objective = wc.objective;
    trace.initial_solves = wc.solves();

    for it in 1..=cfg.max_outer {
        let t0 = Instant::now();
        let mut rec = OuterRecord {
            iteration: it,
            inner: vec![],
            power_objective: None,
            power_clamped: vec![],
            power_accepted: false,
            power_solves: 0,
            worst_case_objective: wc.objective,
            seconds: 0.0,
            feasible: true,
        };
        let step = (|| -> Result<(BeamformerState, PowerSplit, WorstCaseCsi)> {
            let mut cand = state.clone();
            let mut cand_wc = wc.clone();
            // inner BCD at fixed powers
            for _ in 0..cfg.max_inner {
                let g = cand_wc.channels(&ctx.recon);
                let dig = update_digital(
                    geom,
                    &g,
                    &cand.dma_amplitudes,
                    &cand.digital_vectors,
                    &powers,
                    sys,
                    &cfg.beamforming,
                )?;
                trace.warnings.extend(dig.warnings.iter().cloned());
                let mut next = cand.clone();
                next.digital_vectors = dig.digital_vectors.clone();
                next.gram_matrices = dig.gram_matrices.clone();
                next.sdr_objective = dig.sdr_objective;
                next.extraction_gap = dig.extraction_gap;
                let caps = interference_caps(&ctx.budget, &ctx.recon, &next.beams(geom), &powers);
                let dma = update_dma(
                    geom,
                    &g,
                    &next.digital_vectors,
                    &next.dma_amplitudes,
                    &powers,
                    Some(&caps),
                    sys,
                    &cfg.beamforming,
                )?;
                trace.warnings.extend(dma.warnings.iter().cloned());
                next.dma_amplitudes = dma.dma_amplitudes.clone();
                let next_wc = ctx.worst(&next, &powers)?;
                let accepted = improved(next_wc.objective, cand_wc.objective);
                rec.inner.push(InnerRecord {
                    sdr_objective: dig.sdr_objective,
                    digital_before: dig.exact_before,
                    digital_after: dig.exact_after,
                    digital_accepted: dig.accepted,
                    extraction_gap: dig.extraction_gap,
                    trace_residual: dig.trace_residual,
                    psd_residual: dig.psd_residual,
                    digital_solves: dig.solves,
                    dma_before: dma.trace[0],
                    dma_after: *dma.trace.last().unwrap(),
                    dma_solves: dma.solves,
                    worst_case_objective: next_wc.objective,
                    worst_case_solves: next_wc.solves(),
                    accepted,
                });
                if !accepted {
                    break;
                }
                let change = rel_change(next_wc.objective, cand_wc.objective);
                cand = next;
                cand_wc = next_wc;
                if change <= cfg.inner_tol {
                    break;
                }
            }
            // outer power allocation on worst-case gains
            let g = cand_wc.channels(&ctx.recon);
            let beams = cand.beams(geom);
            let (nu, fu) = effective_gains(&g, &beams);
            let pa = allocate_power(&nu, &fu, &sys.gamma_n, &sys.gamma_f, sc.total_power, sys.sigma2)?;
            rec.power_objective = Some(crate::power::group_objective(&pa.kappa, &pa.mu, &pa.group_powers));
            rec.power_clamped = pa.clamped_set.clone();
            let pa_wc = ctx.worst(&cand, &pa)?;
            rec.power_solves = pa_wc.solves();
            let mut cand_p = powers.clone();
            if improved(pa_wc.objective, cand_wc.objective) {
                rec.power_accepted = true;
                cand_p = pa;
                cand_wc = pa_wc;
            }
            Ok((cand, cand_p, cand_wc))
        })();
        rec.seconds = t0.elapsed().as_secs_f64();
        let (cand, cand_p, cand_wc) = match step {
            Ok(v) => v,
            Err(e) => {
                rec.feasible = false;
                trace.outer.push(rec);
                return Err(fail(e, trace));
            }
        };
        let old = wc.objective;
        if improved(cand_wc.objective, old) {
            state = cand;
            powers = cand_p;
            wc = cand_wc;
        }
        rec.worst_case_objective = wc.objective;
        trace.outer.push(rec);
        if rel_change(wc.objective, old) <= cfg.outer_tol {
            trace.convergence_reason = ConvergenceReason::Tolerance;
            break;
        }
    }
    Ok(RobustSolution { state, powers, worst_case: wc, budget: ctx.budget, trace })
}
