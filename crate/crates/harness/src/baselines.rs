//! Comparison schemes evaluated on a common scenario.
//!
//! * `robust` — the full worst-case design.
//! * `non_robust` — the same pipeline designing as if the reconstructed channels were exact.
//! * `oma_tdma` / `oma_fdma` — every user served on its own orthogonal half (time slot or
//!   sub-band) with a matched-filter beam; amplitudes fixed at 0.5.
//! * `zf` — zero-forcing digital vectors on the reconstructed near-user channels, fixed amplitudes,
//!   NOMA power allocation on top.

use nalgebra::DMatrix;
use nfbf_core::beamforming::BeamformerState;
use nfbf_core::geometry::{ArrayGeometry, Field, GroupChannels, UserId};
use nfbf_core::pipeline::{initial_powers, solve_robust, PipelineConfig, Scenario, SolveTrace};
use nfbf_core::power::PowerSplit;
use nfbf_core::rate::{evaluate_split, gain, RateReport, UserRate};
use nfbf_core::uncertainty::{build_budget, UncertaintyBudget};
use nfbf_core::worst_case::WorstCaseConfig;
use nfbf_core::{pipeline, CVec, C64};

use crate::config::Baseline;
use crate::error::HarnessError;

/// Beams and powers of a NOMA design.
#[derive(Debug, Clone)]
pub struct Design {
    pub beams: Vec<CVec>,
    pub powers: PowerSplit,
}

impl Design {
    pub fn rates(&self, sc: &Scenario, ch: &GroupChannels) -> RateReport {
        evaluate_split(ch, &self.beams, &self.powers, sc.sys.sigma2, sc.sys.omega)
    }

    /// Worst-case weighted rate over the given budget.
    pub fn worst_case(&self, sc: &Scenario, budget: &UncertaintyBudget, cfg: &WorstCaseConfig) -> Result<f64, HarnessError> {
        Ok(pipeline::worst_case_of(sc, budget, &self.beams, &self.powers, cfg)?.objective)
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub baseline: Baseline,
    /// Rates on the true channels.
    pub true_rates: RateReport,
    /// Rates on the reconstructed channels.
    pub nominal_rates: RateReport,
    /// Worst-case weighted rate over the scenario's uncertainty budget (NOMA designs only).
    pub worst_case: Option<f64>,
    pub design: Option<Design>,
    pub trace: Option<SolveTrace>,
}

#[derive(Debug, Clone)]
pub enum BaselineOutcome {
    Done(Box<BaselineRun>),
    Skipped(String),
}

/// Uncertainty budget of the scenario as configured.
pub fn scenario_budget(sc: &Scenario, cfg: &PipelineConfig) -> Result<UncertaintyBudget, HarnessError> {
    Ok(build_budget(&sc.geom, &sc.users, &sc.channels.recon_channels(), &sc.model, &cfg.bound)?)
}

pub fn run_baseline(b: Baseline, sc: &Scenario, cfg: &PipelineConfig) -> Result<BaselineOutcome, HarnessError> {
    let truth = sc.channels.true_channels();
    let recon = sc.channels.recon_channels();
    let noma = |design: Design, worst: Option<f64>, trace: Option<SolveTrace>| {
        BaselineOutcome::Done(Box::new(BaselineRun {
            baseline: b,
            true_rates: design.rates(sc, &truth),
            nominal_rates: design.rates(sc, &recon),
            worst_case: worst,
            design: Some(design),
            trace,
        }))
    };
    match b {
        Baseline::Robust => {
            let sol = solve_robust(sc, cfg).map_err(|f| HarnessError::from(f.error))?;
            let design = Design { beams: sol.beams(&sc.geom), powers: sol.powers.clone() };
            Ok(noma(design, Some(sol.worst_case.objective), Some(sol.trace)))
        }
        Baseline::NonRobust => {
            let nr = PipelineConfig { perfect_csi: true, ..*cfg };
            let sol = solve_robust(sc, &nr).map_err(|f| HarnessError::from(f.error))?;
            let design = Design { beams: sol.beams(&sc.geom), powers: sol.powers.clone() };
            let wc = design.worst_case(sc, &scenario_budget(sc, cfg)?, &cfg.worst_case)?;
            Ok(noma(design, Some(wc), Some(sol.trace)))
        }
        Baseline::OmaTdma | Baseline::OmaFdma => {
            let beams = oma_beams(&sc.geom, &recon);
            let run = |ch: &GroupChannels| oma_rates(ch, &beams, sc.total_power, sc.sys.sigma2, sc.sys.omega, b);
            Ok(BaselineOutcome::Done(Box::new(BaselineRun {
                baseline: b,
                true_rates: run(&truth),
                nominal_rates: run(&recon),
                worst_case: None,
                design: None,
                trace: None,
            })))
        }
        Baseline::Zf => match zf_beams(&sc.geom, &recon) {
            None => Ok(BaselineOutcome::Skipped(format!(
                "zero-forcing needs independent near-user channels through {} feeds for {} groups",
                sc.geom.feed_count,
                recon.group_count()
            ))),
            Some(beams) => {
                let powers = initial_powers(&recon, &beams, &sc.sys, sc.total_power)?;
                Ok(noma(Design { beams, powers }, None, None))
            }
        },
    }
}

fn fixed_weights(geom: &ArrayGeometry) -> DMatrix<C64> {
    geom.weights(&DMatrix::from_element(geom.n_elements(), geom.feed_count, 0.5))
}

/// Matched-filter beams `(near, far)` per group through the fixed amplitudes, unit-norm digital
/// vectors.
pub fn oma_beams(geom: &ArrayGeometry, recon: &GroupChannels) -> (Vec<CVec>, Vec<CVec>) {
    let w = fixed_weights(geom);
    let mf = |h: &CVec| {
        let v = w.adjoint() * h;
        let n = v.norm();
        &w * (v / C64::from(n.max(f64::MIN_POSITIVE)))
    };
    (recon.near.iter().map(mf).collect(), recon.far.iter().map(mf).collect())
}

/// Orthogonal two-way split: near users share one half, far users the other; within a half the K
/// users of that kind are served simultaneously on their own beams.
///
/// Each user's average power is `P/(2K)`. TDMA transmits it at twice the level for half the
/// time; FDMA transmits it continuously in half the band, where the noise is halved. Both give
/// `½ log₂(1 + SINR)` with SINR computed at per-beam power `P/K` and noise `σ²` — the two schemes
/// coincide under this normalisation.
pub fn oma_rates(
    ch: &GroupChannels,
    beams: &(Vec<CVec>, Vec<CVec>),
    total: f64,
    sigma2: f64,
    omega: f64,
    scheme: Baseline,
) -> RateReport {
    let k = ch.group_count();
    let avg = total / (2.0 * k as f64);
    // (per-beam power, noise) inside the user's resource half
    let (p, n0) = match scheme {
        Baseline::OmaTdma => (2.0 * avg, sigma2),
        Baseline::OmaFdma => (avg, sigma2 / 2.0),
        _ => panic!("not an orthogonal scheme: {scheme}"),
    };
    let one = |id: UserId| {
        let (h, bs) = match id.field {
            Field::Near => (&ch.near[id.group], &beams.0),
            Field::Far => (&ch.far[id.group], &beams.1),
        };
        let signal = p * gain(h, &bs[id.group]);
        let inter: f64 = (0..k).filter(|&j| j != id.group).map(|j| p * gain(h, &bs[j])).sum();
        let sinr = signal / (inter + n0);
        UserRate { sinr, rate: 0.5 * (1.0 + sinr).log2(), signal, intra: 0.0, inter }
    };
    let near: Vec<UserRate> = (0..k).map(|g| one(UserId { group: g, field: Field::Near })).collect();
    let far: Vec<UserRate> = (0..k).map(|g| one(UserId { group: g, field: Field::Far })).collect();
    let group_weighted: Vec<f64> = near.iter().zip(&far).map(|(n, f)| omega * n.rate + (1.0 - omega) * f.rate).collect();
    let total = group_weighted.iter().sum();
    RateReport { near, far, group_weighted, total }
}

/// Zero-forcing digital vectors on the effective near-user channels `Wᴴĥ_N,i` (pseudo-inverse,
/// columns renormalised). `None` when there are more groups than feeds or the channels are
/// numerically dependent.
pub fn zf_beams(geom: &ArrayGeometry, recon: &GroupChannels) -> Option<Vec<CVec>> {
    let k = recon.group_count();
    if k > geom.feed_count {
        return None;
    }
    let w = fixed_weights(geom);
    let cols: Vec<CVec> = recon.near.iter().map(|h| w.adjoint() * h).collect();
    let heff = DMatrix::from_columns(&cols);
    let sv = heff.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return None;
    }
    // V with Heffᴴ V diagonal: V = pinv(Heffᴴ)
    let v = heff.adjoint().pseudo_inverse(1e-12 * smax).ok()?;
    let digital: Vec<CVec> = (0..k)
        .map(|i| {
            let c = v.column(i).into_owned();
            let n = c.norm();
            c / C64::from(n)
        })
        .collect();
    Some(BeamformerState::from_parts(DMatrix::from_element(geom.n_elements(), geom.feed_count, 0.5), digital).beams(geom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nfbf_core::geometry::build_geometry;
    use nalgebra::Vector3;

    fn unit(n: usize, i: usize) -> CVec {
        let mut e = CVec::zeros(n);
        e[i] = C64::from(1.0);
        e
    }

    #[test]
    fn oma_single_group_matches_hand_computation() {
        // K = 1, orthogonal unit beams: no interference, per-beam power P/K = P.
        let ch = GroupChannels { near: vec![unit(2, 0) * C64::from(2.0)], far: vec![unit(2, 1)] };
        let beams = (vec![unit(2, 0)], vec![unit(2, 1)]);
        let (p, s2) = (3.0, 0.5);
        let snr_n = p * 4.0 / s2 / 2.0;
        let snr_f = p / s2 / 2.0;
        for scheme in [Baseline::OmaTdma, Baseline::OmaFdma] {
            let r = oma_rates(&ch, &beams, p, s2, 0.5, scheme);
            // average power P/2 per user, doubled in its half: ½log₂(1 + 2·SNR_avg)
            assert!((r.near[0].rate - 0.5 * (1.0 + 2.0 * snr_n).log2()).abs() < 1e-14);
            assert!((r.far[0].rate - 0.5 * (1.0 + 2.0 * snr_f).log2()).abs() < 1e-14);
            assert!((r.total - 0.5 * (r.near[0].rate + r.far[0].rate)).abs() < 1e-14);
        }
    }

    #[test]
    fn tdma_and_fdma_coincide() {
        let ch = GroupChannels {
            near: vec![unit(2, 0) + unit(2, 1) * C64::new(0.0, 0.3), unit(2, 1)],
            far: vec![unit(2, 0) * C64::from(0.5), unit(2, 1) * C64::from(0.2) + unit(2, 0) * C64::from(0.1)],
        };
        let beams = (vec![unit(2, 0), unit(2, 1)], vec![unit(2, 0), unit(2, 1)]);
        let a = oma_rates(&ch, &beams, 1.0, 0.1, 0.3, Baseline::OmaTdma);
        let b = oma_rates(&ch, &beams, 1.0, 0.1, 0.3, Baseline::OmaFdma);
        assert!((a.total - b.total).abs() < 1e-14);
    }

    #[test]
    fn zf_nulls_other_groups() {
        let geom = build_geometry(4, 4, 0.005, 4, Vector3::new(0.0, 0.0, 0.75 * 2.0 * std::f64::consts::PI / 0.005)).unwrap();
        let h = |s: f64| CVec::from_fn(16, |i, _| C64::from_polar(1.0, s * i as f64 * i as f64));
        let recon = GroupChannels { near: vec![h(0.3), h(1.1), h(-0.7)], far: vec![h(0.2), h(0.9), h(-0.5)] };
        let beams = zf_beams(&geom, &recon).expect("full rank");
        for (i, hn) in recon.near.iter().enumerate() {
            for (j, a) in beams.iter().enumerate() {
                let g = gain(hn, a);
                if i == j {
                    assert!(g > 1e-6);
                } else {
                    assert!(g < 1e-20, "leak {g} from {j} into {i}");
                }
            }
        }
    }

    #[test]
    fn zf_skips_when_groups_exceed_feeds() {
        let geom = build_geometry(2, 2, 0.005, 2, Vector3::zeros()).unwrap();
        let one = CVec::from_element(4, C64::from(1.0));
        let recon = GroupChannels { near: vec![one.clone(); 3], far: vec![one; 3] };
        assert!(zf_beams(&geom, &recon).is_none());
    }
}
