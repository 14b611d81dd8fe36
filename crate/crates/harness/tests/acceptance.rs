//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run a subset with `cargo test -p nfbf-harness --test acceptance -- 1 3 10`.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::Vector3;
use nfbf_core::beamforming::{update_digital, BeamformerState, BeamformingConfig};
use nfbf_core::geometry::{build_geometry, los_channel, reconstruct_los, Field, GroupChannels, PathLossModel, UserId};
use nfbf_core::pipeline::{budget_at_radius, initial_powers, solve_robust, ConvergenceReason, PipelineConfig, RobustSolution, Scenario};
use nfbf_core::power::{allocate_power, split_group_power};
use nfbf_core::rate::{evaluate, RateReport};
use nfbf_core::scenario::{build_scenario, ScenarioConfig};
use nfbf_core::uncertainty::{xi_exact, BoundConfig};
use nfbf_core::{CVec, C64};
use nfbf_harness::baselines::{run_baseline, scenario_budget, BaselineOutcome, Design};
use nfbf_harness::experiments::sampled_error_max;
use nfbf_harness::Baseline;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// pinned tolerances
const XI_REL_TOL: f64 = 1e-8;
const DOMINANCE_SLACK: f64 = 1.05;
const DOMINANCE_SAMPLES: usize = 1000;
const PA_REL_TOL: f64 = 1e-3;
const PA_GRID: f64 = 1e-4;
const BUDGET_TOL: f64 = 1e-10;
const PIN_TOL: f64 = 1e-9;
const CONVERGENCE_MAX_ITERS: usize = 10;
const CONVERGENCE_FRACTION: f64 = 0.9;
const MONOTONE_SLACK: f64 = 1e-6;
const ROBUST_FRACTION: f64 = 0.8;
const SDR_OBJ_TOL: f64 = 1e-4;
const SDR_RESIDUAL_TOL: f64 = 1e-7;
const RATE_REL_TOL: f64 = 1e-12;
const MC_SEEDS: u64 = 50;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn desk() -> ScenarioConfig {
    ScenarioConfig::desk()
}

struct DeskRun {
    sc: Scenario,
    sol: Result<RobustSolution, String>,
}

/// Robust designs at the desk configuration (ε = 0.1 m, near/far rings 10/15 m), shared by
/// criteria 5, 6 and 8.
fn desk_runs() -> &'static [DeskRun] {
    static RUNS: OnceLock<Vec<DeskRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..MC_SEEDS)
            .map(|seed| {
                let sc = build_scenario(&desk(), seed).expect("desk scenario");
                let sol = solve_robust(&sc, &PipelineConfig::default()).map_err(|f| f.error.to_string());
                DeskRun { sc, sol }
            })
            .collect()
    })
}

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn uniform_ball(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v * r;
        }
    }
}

/// Path-loss identity: ‖h^LoS(p̂ + Δp) − ĥ^LoS(p̂)‖² = s·Ξ(Δp).
fn c1_xi_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lambda = 0.005;
    let model = PathLossModel::default();
    let mut worst: f64 = 0.0;
    for (rows, cols) in [(2, 2), (4, 4)] {
        let geom = build_geometry(rows, cols, lambda, 1, Vector3::new(0.0, 0.0, 0.75 * 2.0 * PI / lambda)).unwrap();
        for _ in 0..100 {
            let r = rng.random_range(2.0..30.0);
            let az = rng.random_range(-1.2..1.2);
            let el = rng.random_range(-0.5..0.5);
            let p_hat = Vector3::new(r * f64::cos(el) * f64::cos(az), r * f64::cos(el) * f64::sin(az), r * f64::sin(el));
            let dp = uniform_ball(&mut rng, 0.2);
            let h = los_channel(&geom, &(p_hat + dp), &model).unwrap();
            let h_hat = reconstruct_los(&geom, &p_hat, &model).unwrap();
            let lhs = (h - h_hat).norm_squared();
            let rhs = model.scale() * xi_exact(&geom, &p_hat, &dp, model.alpha).unwrap();
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE));
        }
    }
    verdict(worst <= XI_REL_TOL, format!("max relative mismatch {worst:.2e} over 200 draws (tol {XI_REL_TOL:.0e})"))
}

/// Sampled CSI errors stay inside the radii; mean radii nondecreasing in elements and error.
fn c2_bound_dominance() -> Verdict {
    let seeds = 0..5u64;
    let eps_list = [0.0, 0.05, 0.1];
    let cols_list = [4usize, 8];
    let bound_cfg = BoundConfig::default();
    let mut worst_ratio: [f64; 2] = [0.0, 0.0];
    // mean near radius per (cols, eps)
    let mut curve = vec![vec![Vec::new(); eps_list.len()]; cols_list.len()];
    for (ci, &cols) in cols_list.iter().enumerate() {
        for seed in seeds.clone() {
            let sc = build_scenario(&ScenarioConfig { cols, ..desk() }, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0d0);
            for (ei, &eps) in eps_list.iter().enumerate() {
                let budget = budget_at_radius(&sc, eps, &bound_cfg).unwrap();
                curve[ci][ei].push(mean(&budget.near.iter().map(|b| b.csi_err_radius).collect::<Vec<_>>()));
                if eps == 0.0 {
                    continue;
                }
                for g in 0..budget.group_count() {
                    for (fi, field) in [Field::Near, Field::Far].into_iter().enumerate() {
                        let id = UserId { group: g, field };
                        let s = sampled_error_max(&sc, id, eps, DOMINANCE_SAMPLES, &mut rng).unwrap();
                        worst_ratio[fi] = worst_ratio[fi].max(s / budget.radius(id));
                    }
                }
            }
        }
    }
    let means: Vec<Vec<f64>> = curve.iter().map(|row| row.iter().map(|v| mean(v)).collect()).collect();
    let mono_eps = means.iter().all(|row| row.windows(2).all(|w| w[1] >= w[0]));
    let mono_nt = (0..eps_list.len()).all(|e| means[1][e] >= means[0][e]);
    let dominated = worst_ratio.iter().all(|&r| r <= DOMINANCE_SLACK);
    verdict(
        dominated && mono_eps && mono_nt,
        format!(
            "max sampled/radius NU {:.3} FU {:.3} (≤ {DOMINANCE_SLACK}); mean NU radius N_T=16 {:?}, N_T=32 {:?} over ε {:?}",
            worst_ratio[0],
            worst_ratio[1],
            means[0].iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            means[1].iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            eps_list
        ),
    )
}

/// Near-user rate sum with the far-user pin applied, computed from first principles; `None` if a
/// near-user target is missed or a split is impossible.
fn pa_oracle_objective(p: &[f64], gn: &[f64], gf: &[f64], gamma_n: f64, gamma_f: f64, s2: f64) -> Option<f64> {
    let mut total = 0.0;
    for i in 0..p.len() {
        let pf = (1.0 - 2f64.powf(-gamma_f)) * (p[i] + s2 / gf[i]);
        let pn = p[i] - pf;
        if !(pn > 0.0) {
            return None;
        }
        let r = (1.0 + pn * gn[i] / s2).log2();
        if r < gamma_n - 1e-12 {
            return None;
        }
        total += r;
    }
    Some(total)
}

/// Water-filling plus clamping against an exhaustive grid search for two groups.
fn c3_power_allocation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_budget, mut clamped, mut n) = (0.0f64, 0.0f64, 0usize, 0usize);
    while n < 50 {
        let s2 = 1.0;
        let total = 10f64.powf(rng.random_range(0.0..2.0));
        let gn: Vec<f64> = (0..2).map(|_| 10f64.powf(rng.random_range(-1.0..1.5))).collect();
        let gf: Vec<f64> = gn.iter().map(|g| g * rng.random_range(0.05..0.9)).collect();
        let gamma_n = rng.random_range(0.1..2.0);
        let gamma_f = rng.random_range(0.1..1.5);
        let Ok(split) = allocate_power(&gn, &gf, &[gamma_n; 2], &[gamma_f; 2], total, s2) else { continue };
        // grid over P_1 = j·δ·P
        let steps = (1.0 / PA_GRID).round() as usize;
        let best = (0..=steps)
            .filter_map(|j| {
                let p1 = total * j as f64 / steps as f64;
                pa_oracle_objective(&[p1, total - p1], &gn, &gf, gamma_n, gamma_f, s2)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if !best.is_finite() {
            continue;
        }
        n += 1;
        let got = pa_oracle_objective(&split.group_powers, &gn, &gf, gamma_n, gamma_f, s2).unwrap_or(f64::NEG_INFINITY);
        worst = worst.max((best - got) / best.abs());
        worst_budget = worst_budget.max((split.group_powers.iter().sum::<f64>() - total).abs() / total);
        clamped += usize::from(!split.clamped_set.is_empty());
    }
    verdict(
        worst <= PA_REL_TOL && worst_budget <= BUDGET_TOL,
        format!(
            "worst objective shortfall vs grid {worst:.2e} (tol {PA_REL_TOL:.0e}), budget error {worst_budget:.1e}·P; {clamped}/50 instances clamped"
        ),
    )
}

/// The far-user split yields exactly the target rate under intra-group interference only.
fn c4_far_user_pin() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 100 {
        let p = 10f64.powf(rng.random_range(-3.0..1.0));
        let g = 10f64.powf(rng.random_range(-8.0..0.0));
        let s2 = 10f64.powf(rng.random_range(-12.0..-8.0));
        let gamma = rng.random_range(0.01..3.0);
        let Ok((pn, pf)) = split_group_power(0, p, g, gamma, s2) else { continue };
        n += 1;
        let rate = (1.0 + pf * g / (pn * g + s2)).log2();
        worst = worst.max((rate - gamma).abs());
    }
    verdict(worst <= PIN_TOL, format!("max |R_F − γ_F| = {worst:.2e} over 100 instances (tol {PIN_TOL:.0e})"))
}

/// Outer loop converges in few iterations with a nondecreasing objective.
fn c5_convergence() -> Verdict {
    let runs = desk_runs();
    let mut within = 0;
    let mut monotone_all = true;
    let mut iters = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        match &r.sol {
            Ok(sol) => {
                let t = &sol.trace;
                iters.push(t.iterations());
                if t.convergence_reason == ConvergenceReason::Tolerance && t.iterations() <= CONVERGENCE_MAX_ITERS {
                    within += 1;
                }
                let obj = t.objectives();
                monotone_all &= obj.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK);
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    let frac = within as f64 / runs.len() as f64;
    iters.sort_unstable();
    verdict(
        frac >= CONVERGENCE_FRACTION && monotone_all,
        format!(
            "{within}/{} converged within {CONVERGENCE_MAX_ITERS} iterations (need {:.0}%), median {} max {}; monotone in every run: {monotone_all}; failures {failures:?}",
            runs.len(),
            100.0 * CONVERGENCE_FRACTION,
            iters.get(iters.len() / 2).copied().unwrap_or(0),
            iters.last().copied().unwrap_or(0)
        ),
    )
}

/// Robust vs non-robust worst-case rate at ε = 0.1 m, and degradation from ε = 0 to 0.1 m.
fn c6_robustness() -> Verdict {
    let cfg = PipelineConfig::default();
    let mut wins = 0;
    let mut counted = 0;
    let (mut deg_r, mut deg_n) = (Vec::new(), Vec::new());
    let mut notes = Vec::new();
    for (seed, r) in desk_runs().iter().enumerate() {
        let Ok(sol) = &r.sol else {
            notes.push(format!("seed {seed}: robust design failed"));
            continue;
        };
        let sc = &r.sc;
        let robust = Design { beams: sol.beams(&sc.geom), powers: sol.powers.clone() };
        let nr = match run_baseline(Baseline::NonRobust, sc, &cfg) {
            Ok(BaselineOutcome::Done(run)) => run.design.expect("NOMA design"),
            other => {
                notes.push(format!("seed {seed}: non-robust failed ({:?})", other.err()));
                continue;
            }
        };
        let b_eps = scenario_budget(sc, &cfg).unwrap();
        let b_zero = budget_at_radius(sc, 0.0, &cfg.bound).unwrap();
        let eval = |d: &Design, b| d.worst_case(sc, b, &cfg.worst_case);
        match (eval(&robust, &b_eps), eval(&nr, &b_eps), eval(&robust, &b_zero), eval(&nr, &b_zero)) {
            (Ok(re), Ok(ne), Ok(r0), Ok(n0)) => {
                counted += 1;
                wins += usize::from(re >= ne - MONOTONE_SLACK * ne.abs().max(1.0));
                deg_r.push(r0 - re);
                deg_n.push(n0 - ne);
            }
            _ => notes.push(format!("seed {seed}: worst-case evaluation failed")),
        }
    }
    let frac = wins as f64 / MC_SEEDS as f64;
    let (mr, mn) = (mean(&deg_r), mean(&deg_n));
    verdict(
        frac >= ROBUST_FRACTION && mr < mn,
        format!(
            "robust ≥ non-robust worst case in {wins}/{MC_SEEDS} seeds ({counted} evaluated, need {:.0}%); mean degradation robust {mr:.3} vs non-robust {mn:.3}; {notes:?}",
            100.0 * ROBUST_FRACTION
        ),
    )
}

/// Mean robust-NOMA sum rate above every orthogonal / zero-forcing baseline at the reference scenario.
fn c7_baselines() -> Verdict {
    let cfg = PipelineConfig::default();
    let schemes = [Baseline::Robust, Baseline::OmaTdma, Baseline::OmaFdma, Baseline::Zf];
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); schemes.len()];
    let mut notes = Vec::new();
    for seed in 0..MC_SEEDS {
        let sc = build_scenario(&ScenarioConfig::default(), seed).unwrap();
        for (i, &b) in schemes.iter().enumerate() {
            match run_baseline(b, &sc, &cfg) {
                Ok(BaselineOutcome::Done(run)) => sums[i].push(run.true_rates.sum_rate()),
                Ok(BaselineOutcome::Skipped(why)) => notes.push(format!("seed {seed} {b} skipped: {why}")),
                Err(e) => notes.push(format!("seed {seed} {b}: {e}")),
            }
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| mean(s)).collect();
    let pass = sums.iter().all(|s| !s.is_empty()) && means[1..].iter().all(|&m| means[0] > m);
    verdict(
        pass,
        format!(
            "mean true sum rate: robust {:.3}, oma_tdma {:.3}, oma_fdma {:.3}, zf {:.3} (runs {:?}); {notes:?}",
            means[0],
            means[1],
            means[2],
            means[3],
            sums.iter().map(Vec::len).collect::<Vec<_>>()
        ),
    )
}

/// Mean sum rate strictly decreasing as both rings move out.
fn c8_distance_trend() -> Verdict {
    let cfg = PipelineConfig::default();
    let dists = [10.0, 15.0, 20.0, 25.0];
    let mut means = Vec::new();
    let mut failures = 0;
    for &d in &dists {
        let mut rates = Vec::new();
        for seed in 0..MC_SEEDS {
            let run = |sc: &Scenario, sol: &RobustSolution| {
                let design = Design { beams: sol.beams(&sc.geom), powers: sol.powers.clone() };
                design.rates(sc, &sc.channels.true_channels()).sum_rate()
            };
            if d == 10.0 {
                // identical to the shared desk runs
                match &desk_runs()[seed as usize] {
                    DeskRun { sc, sol: Ok(sol) } => rates.push(run(sc, sol)),
                    _ => failures += 1,
                }
                continue;
            }
            let mut s = desk();
            s.placement.near_radius = d;
            s.placement.far_radius = d + 5.0;
            let sc = build_scenario(&s, seed).unwrap();
            match solve_robust(&sc, &cfg) {
                Ok(sol) => rates.push(run(&sc, &sol)),
                Err(_) => failures += 1,
            }
        }
        means.push(mean(&rates));
    }
    let pass = means.windows(2).all(|w| w[1] < w[0]);
    verdict(
        pass,
        format!(
            "mean true sum rate at {dists:?} m: {:?}; {failures} failed runs",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>()
        ),
    )
}

/// Exact weighted rate of a single group, maximised over the span of the two effective channels.
fn single_group_oracle(g_n: &CVec, g_f: &CVec, pn: f64, pf: f64, s2: f64, omega: f64, floor_n: f64, floor_f: f64) -> f64 {
    let e1 = g_n / C64::from(g_n.norm());
    let rest = g_f - &e1 * e1.dotc(g_f);
    let e2 = if rest.norm() > 1e-12 * g_f.norm() { &rest / C64::from(rest.norm()) } else { CVec::zeros(g_n.len()) };
    let (a1, a2, b1, b2) = (e1.dotc(g_n), e2.dotc(g_n), e1.dotc(g_f), e2.dotc(g_f));
    let f = |th: f64, ph: f64| {
        let (c, s) = (th.cos(), th.sin());
        let z = C64::from_polar(s, ph);
        // gᴴv with v = c·e1 + s·e^{jφ}·e2
        let gn = (a1.conj() * c + a2.conj() * z).norm_sqr();
        let gf = (b1.conj() * c + b2.conj() * z).norm_sqr();
        let rn = (1.0 + pn * gn / s2).log2();
        let rf = (1.0 + pf * gf / (pn * gf + s2)).log2();
        if rn < floor_n - 1e-9 || rf < floor_f - 1e-9 {
            f64::NEG_INFINITY
        } else {
            omega * rn + (1.0 - omega) * rf
        }
    };
    let (nt, np) = (400, 400);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=nt {
        for j in 0..np {
            let (th, ph) = (0.5 * PI * i as f64 / nt as f64, 2.0 * PI * j as f64 / np as f64);
            let v = f(th, ph);
            if v > best.0 {
                best = (v, th, ph);
            }
        }
    }
    // pattern search refinement
    let (mut h_th, mut h_ph) = (0.5 * PI / nt as f64, 2.0 * PI / np as f64);
    while h_th > 1e-10 {
        let mut moved = false;
        for (dt, dp) in [(h_th, 0.0), (-h_th, 0.0), (0.0, h_ph), (0.0, -h_ph)] {
            let th = (best.1 + dt).clamp(0.0, 0.5 * PI);
            let v = f(th, best.2 + dp);
            if v > best.0 {
                best = (v, th, best.2 + dp);
                moved = true;
            }
        }
        if !moved {
            h_th *= 0.5;
            h_ph *= 0.5;
        }
    }
    best.0
}

/// Single-group SDR: rank-one extraction, trace and PSD feasibility, and agreement with a
/// brute-force optimum.
fn c9_sdr_sanity() -> Verdict {
    let mut worst_gap: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let (mut tr_res, mut psd_res): (f64, f64) = (0.0, 0.0);
    let mut solves = 0;
    let cfg = BeamformingConfig { tol: 1e-9, max_iter: 200, ..BeamformingConfig::default() };
    for seed in 0..10u64 {
        let mut s = desk();
        s.placement.group_count = 1;
        let sc = build_scenario(&s, seed).unwrap();
        let ch = sc.channels.recon_channels();
        // start away from the matched filter so the relaxation has work to do
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5d5d);
        let v0 = CVec::from_fn(sc.geom.feed_count, |_, _| rand_c(&mut rng));
        let v0 = &v0 / C64::from(v0.norm());
        let st = BeamformerState::from_parts(BeamformerState::initial(&sc.geom, &ch).dma_amplitudes, vec![v0]);
        let powers = initial_powers(&ch, &st.beams(&sc.geom), &sc.sys, sc.total_power).unwrap();
        let up = match update_digital(&sc.geom, &ch, &st.dma_amplitudes, &st.digital_vectors, &powers, &sc.sys, &cfg) {
            Ok(u) => u,
            Err(e) => return verdict(false, format!("seed {seed}: {e}")),
        };
        solves += up.solves;
        tr_res = tr_res.max(up.trace_residual);
        psd_res = psd_res.max(up.psd_residual);
        worst_gap = worst_gap.max((up.sdr_objective - up.exact_after).abs());
        let w = st.weights(&sc.geom);
        let (g_n, g_f) = (w.adjoint() * &ch.near[0], w.adjoint() * &ch.far[0]);
        let before = evaluate(&ch, &st.beams(&sc.geom), &powers.nu_powers, &powers.fu_powers, sc.sys.sigma2, sc.sys.omega);
        let floor = |id: UserId, r: &RateReport| sc.sys.gamma(id).min(r.get(id).rate);
        let best = single_group_oracle(
            &g_n,
            &g_f,
            powers.nu_powers[0],
            powers.fu_powers[0],
            sc.sys.sigma2,
            sc.sys.omega,
            floor(UserId { group: 0, field: Field::Near }, &before),
            floor(UserId { group: 0, field: Field::Far }, &before),
        );
        worst_oracle = worst_oracle.max(best - up.exact_after);
    }
    verdict(
        worst_gap <= SDR_OBJ_TOL && worst_oracle <= SDR_OBJ_TOL && tr_res <= SDR_RESIDUAL_TOL && psd_res <= SDR_RESIDUAL_TOL,
        format!(
            "relaxed vs extracted gap {worst_gap:.1e}, shortfall vs brute force {worst_oracle:.1e} (tol {SDR_OBJ_TOL:.0e}); |tr V − 1| ≤ {tr_res:.1e}, PSD residual ≤ {psd_res:.1e} over {solves} solves (tol {SDR_RESIDUAL_TOL:.0e})"
        ),
    )
}

/// Plain-loop SINR evaluation on (re, im) pairs, independent of the library's linear algebra.
fn scalar_rates(
    hn: &[Vec<(f64, f64)>],
    hf: &[Vec<(f64, f64)>],
    a: &[Vec<(f64, f64)>],
    pn: &[f64],
    pf: &[f64],
    s2: f64,
    omega: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let k = a.len();
    let g = |h: &[(f64, f64)], b: &[(f64, f64)]| {
        // hᴴb
        let (mut re, mut im) = (0.0, 0.0);
        for (x, y) in h.iter().zip(b) {
            re += x.0 * y.0 + x.1 * y.1;
            im += x.0 * y.1 - x.1 * y.0;
        }
        re * re + im * im
    };
    let mut rn = vec![0.0; k];
    let mut rf = vec![0.0; k];
    for i in 0..k {
        let mut in_n = 0.0;
        let mut in_f = 0.0;
        for j in 0..k {
            if j != i {
                in_n += (pn[j] + pf[j]) * g(&hn[i], &a[j]);
                in_f += (pn[j] + pf[j]) * g(&hf[i], &a[j]);
            }
        }
        rn[i] = (1.0 + pn[i] * g(&hn[i], &a[i]) / (in_n + s2)).log2();
        rf[i] = (1.0 + pf[i] * g(&hf[i], &a[i]) / (pn[i] * g(&hf[i], &a[i]) + in_f + s2)).log2();
    }
    let total = (0..k).map(|i| omega * rn[i] + (1.0 - omega) * rf[i]).sum();
    (rn, rf, total)
}

fn c10_rate_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let close = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    for _ in 0..1000 {
        let k = rng.random_range(1..=4);
        let n = rng.random_range(1..=8);
        let scale = 10f64.powf(rng.random_range(-4.0..0.0));
        let mut vecs = |m: usize| -> Vec<CVec> { (0..m).map(|_| CVec::from_fn(n, |_, _| rand_c(&mut rng) * scale)).collect() };
        let (hn, hf, a) = (vecs(k), vecs(k), vecs(k));
        let pn: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let pf: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let s2 = 10f64.powf(rng.random_range(-12.0..-6.0));
        let omega = rng.random_range(0.0..1.0);
        let ch = GroupChannels { near: hn.clone(), far: hf.clone() };
        let lib = evaluate(&ch, &a, &pn, &pf, s2, omega);
        let pairs = |v: &[CVec]| -> Vec<Vec<(f64, f64)>> { v.iter().map(|x| x.iter().map(|c| (c.re, c.im)).collect()).collect() };
        let (rn, rf, total) = scalar_rates(&pairs(&hn), &pairs(&hf), &pairs(&a), &pn, &pf, s2, omega);
        for i in 0..k {
            worst = worst.max(close(lib.near[i].rate, rn[i])).max(close(lib.far[i].rate, rf[i]));
        }
        worst = worst.max(close(lib.total, total));
    }
    verdict(worst <= RATE_REL_TOL, format!("max relative deviation {worst:.1e} over 1000 instances (tol {RATE_REL_TOL:.0e})"))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("path-loss identity", c1_xi_identity),
        ("bound dominance and monotonicity", c2_bound_dominance),
        ("power allocation optimality", c3_power_allocation),
        ("far-user rate pin", c4_far_user_pin),
        ("outer-loop convergence", c5_convergence),
        ("robustness ordering", c6_robustness),
        ("baseline ordering", c7_baselines),
        ("distance trend", c8_distance_trend),
        ("SDR sanity", c9_sdr_sanity),
        ("rate oracle equivalence", c10_rate_oracle),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        println!(
            "criterion {id:>2} {:<34} {} ({:.1} s) — {}",
            name,
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
