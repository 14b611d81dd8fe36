//! Digital (SDR) and DMA-amplitude (SCA) beamformer updates at fixed CSI errors.
//!
//! Both updates maximise the weighted sum rate `Σ w_u log₂(1 + Ψ_u/Ψ̄_u)` with slacks
//! `Ψ_u ≤ signal` and `Ψ̄_u ≥ interference + σ²`, by minorize–maximize:
//!
//! * `log(Ψ + Ψ̄)` is replaced by the concave quadratic minorant
//!   `log x₀ + (x − x₀)/x₀ − 2(x − x₀)²/x₀²`, valid on `x ≥ x₀/2`;
//! * `−log Ψ̄` by its tangent.
//!
//! Every user's slacks are divided by its interference-plus-noise at the current point, so the
//! subproblems see `Ψ̄ ≈ 1` regardless of the link budget.

use nalgebra::DMatrix;
use nfbf_conic::{solve, CExpr, ConicProgram, HermitianVar, LinExpr, SolverSettings, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{check_solution, is_numerical, Result};
use crate::geometry::{ArrayGeometry, Field, GroupChannels, UserId};
use crate::power::PowerSplit;
use crate::rate::{beams, evaluate_split, gain, SystemParams};
use crate::uncertainty::InterferenceCaps;
use crate::{CMat, CVec, C64};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeamformerState {
    /// `Q`, with `W = phase_mask ∘ Q`.
    pub dma_amplitudes: DMatrix<f64>,
    pub digital_vectors: Vec<CVec>,
    pub gram_matrices: Vec<CMat>,
    pub sdr_objective: f64,
    pub extraction_gap: f64,
}

impl BeamformerState {
    /// Amplitudes 0.5 everywhere, digital vectors matched to the near users' channels.
    pub fn initial(geom: &ArrayGeometry, recon: &GroupChannels) -> Self {
        let q = DMatrix::from_element(geom.n_elements(), geom.feed_count, 0.5);
        let w = geom.weights(&q);
        let v: Vec<CVec> = recon
            .near
            .iter()
            .map(|h| {
                let m = w.adjoint() * h;
                let n = m.norm();
                if n > 0.0 {
                    m / C64::from(n)
                } else {
                    let mut e = CVec::zeros(geom.feed_count);
                    e[0] = C64::from(1.0);
                    e
                }
            })
            .collect();
        Self::from_parts(q, v)
    }

    pub fn from_parts(q: DMatrix<f64>, v: Vec<CVec>) -> Self {
        let gram = v.iter().map(|x| x * x.adjoint()).collect();
        Self { dma_amplitudes: q, digital_vectors: v, gram_matrices: gram, sdr_objective: f64::NAN, extraction_gap: 1.0 }
    }

    pub fn weights(&self, geom: &ArrayGeometry) -> CMat {
        geom.weights(&self.dma_amplitudes)
    }

    pub fn beams(&self, geom: &ArrayGeometry) -> Vec<CVec> {
        beams(&self.weights(geom), &self.digital_vectors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BeamformingConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Eigenvalue ratio λ₂/λ₁ above which Gaussian randomization supplements the eigenvector.
    pub rank_ratio: f64,
    pub randomizations: usize,
    pub seed: u64,
}

impl Default for BeamformingConfig {
    fn default() -> Self {
        Self { tol: 1e-4, max_iter: 50, rank_ratio: 1e-3, randomizations: 50, seed: 0x5eed }
    }
}

/// Exact weighted sum rate of a design.
pub fn weighted_rate(ch: &GroupChannels, beams: &[CVec], powers: &PowerSplit, sys: &SystemParams) -> f64 {
    evaluate_split(ch, beams, powers, sys.sigma2, sys.omega).total
}

/// Per-user bookkeeping shared by both updates.
struct UserLink {
    id: UserId,
    weight: f64,
    p_sig: f64,
    /// (beam, power) pairs in the denominator; the own beam appears for far users.
    interf: Vec<(usize, f64)>,
    target: f64,
}

fn links(k: usize, powers: &PowerSplit, sys: &SystemParams) -> Vec<UserLink> {
    let mut out = Vec::with_capacity(2 * k);
    for g in 0..k {
        for field in [Field::Near, Field::Far] {
            let id = UserId { group: g, field };
            let mut interf: Vec<(usize, f64)> = (0..k)
                .filter(|&j| j != g)
                .map(|j| (j, powers.nu_powers[j] + powers.fu_powers[j]))
                .collect();
            let p_sig = match field {
                Field::Near => powers.nu_powers[g],
                Field::Far => {
                    interf.push((g, powers.nu_powers[g]));
                    powers.fu_powers[g]
                }
            };
            out.push(UserLink { id, weight: sys.weight(id), p_sig, interf, target: sys.sinr_target(id) });
        }
    }
    out
}

/// Slacks and objective contribution of one user's rate minorant around `x0 = 1 + SINR₀`.
///
/// Returns `(ψ, ψ̄, objective)` with `ψ = Ψ/(D₀x₀)` and `ψ̄ = Ψ̄/D₀`, `D₀` the user's
/// interference-plus-noise at the current point, so both are O(1) whatever the SINR. In these
/// units `x/x₀ = ψ + ψ̄/x₀` and the QoS constraint reads `x₀ψ ≥ Tψ̄`.
fn rate_minorant(p: &mut ConicProgram, weight: f64, x0: f64) -> (Var, Var, LinExpr) {
    let psi = p.nonneg_var();
    let psib = p.nonneg_var();
    let e = p.nonneg_var();
    let xr = LinExpr::from(psi) + LinExpr::term(psib, 1.0 / x0);
    p.add_ge(xr.clone(), 0.5);
    p.add_rotated_soc(e, 1.0, vec![xr.clone() - 1.0]);
    let c = weight / std::f64::consts::LN_2;
    let obj = (xr - 1.0) * c - LinExpr::term(e, 2.0 * c) - (LinExpr::from(psib) - 1.0) * c;
    (psi, psib, obj)
}

fn tangent(e: &CExpr, e0: C64, p: f64) -> LinExpr {
    (e.re.clone() * (2.0 * p * e0.re)) + (e.im.clone() * (2.0 * p * e0.im)) + LinExpr::constant(-p * e0.norm_sqr())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigitalUpdate {
    pub digital_vectors: Vec<CVec>,
    pub gram_matrices: Vec<CMat>,
    /// Relaxed (lifted) weighted rate at the final Gram matrices.
    pub sdr_objective: f64,
    /// Exact rate of the extracted vectors over the relaxed rate.
    pub extraction_gap: f64,
    /// Relaxed weighted rate at the start and after every SCA step.
    pub trace: Vec<f64>,
    pub exact_before: f64,
    pub exact_after: f64,
    /// Whether the extracted vectors replaced the incoming ones.
    pub accepted: bool,
    /// Largest `|tr V − 1|` over all raw SDP solutions.
    pub trace_residual: f64,
    /// Largest `max(0, −λ_min(V))` over all raw SDP solutions.
    pub psd_residual: f64,
    pub solves: usize,
    pub warnings: Vec<String>,
}

/// Relaxed rate of lifted digital beams: SINR built from `tr(Φ V)`.
fn lifted_rate(links: &[UserLink], phi: &[CMat], gram: &[CMat], sigma2: f64) -> f64 {
    links
        .iter()
        .zip(phi)
        .map(|(l, phi_u)| {
            let (s, d) = lifted_sinr(l, phi_u, gram, sigma2);
            l.weight * (1.0 + s / d).log2()
        })
        .sum()
}

/// Signal and interference-plus-noise with `|gᴴWv_j|²` replaced by `tr(Φ V_j)`, `Φ = Wᴴggᴴ W`.
fn lifted_sinr(l: &UserLink, phi_u: &CMat, gram: &[CMat], sigma2: f64) -> (f64, f64) {
    let tr = |j: usize| (phi_u * &gram[j]).trace().re;
    let s = l.p_sig * tr(l.id.group);
    let d: f64 = l.interf.iter().map(|&(j, p)| p * tr(j)).sum::<f64>() + sigma2;
    (s, d)
}

fn normalize(v: CVec) -> CVec {
    let n = v.norm();
    v / C64::from(n)
}

/// SDR/SCA update of the digital vectors at fixed amplitudes and channels.
pub fn update_digital(
    geom: &ArrayGeometry,
    ch: &GroupChannels,
    q: &DMatrix<f64>,
    v0: &[CVec],
    powers: &PowerSplit,
    sys: &SystemParams,
    cfg: &BeamformingConfig,
) -> Result<DigitalUpdate> {
    let k = ch.group_count();
    let nf = geom.feed_count;
    let w = geom.weights(q);
    let links = links(k, powers, sys);
    let phi: Vec<CMat> = links
        .iter()
        .map(|l| {
            let b = w.adjoint() * ch.get(l.id);
            &b * b.adjoint()
        })
        .collect();

    let mut gram: Vec<CMat> = v0.iter().map(|v| v * v.adjoint()).collect();
    let exact_before = weighted_rate(ch, &beams(&w, v0), powers, sys);
    let mut trace = vec![lifted_rate(&links, &phi, &gram, sys.sigma2)];
    let mut trace_res: f64 = 0.0;
    let mut psd_res: f64 = 0.0;
    let mut solves = 0;
    let mut warnings = Vec::new();

    for _ in 0..cfg.max_iter {
        let mut p = ConicProgram::new();
        let vars: Vec<HermitianVar> = (0..k).map(|_| p.hermitian_psd(nf)).collect();
        for v in &vars {
            p.add_eq(v.trace(), 1.0);
        }
        let mut obj = LinExpr::zero();
        for (u, l) in links.iter().enumerate() {
            let (s0, d0) = lifted_sinr(l, &phi[u], &gram, sys.sigma2);
            let sinr0 = s0 / d0;
            let x0 = 1.0 + sinr0;
            let (psi, psib, o) = rate_minorant(&mut p, l.weight, x0);
            obj += o;
            // Ψ ≤ P_s tr(ΦV_i)
            p.add_le(psi, vars[l.id.group].real_inner(&phi[u]) * (l.p_sig / (d0 * x0)));
            // Ψ̄ ≥ (Σ P_j tr(ΦV_j) + σ²)/D₀
            let mut den = LinExpr::constant(sys.sigma2 / d0);
            for &(j, pw) in &l.interf {
                den += vars[j].real_inner(&phi[u]) * (pw / d0);
            }
            p.add_ge(psib, den);
            let t = l.target.min(sinr0);
            if t > 0.0 {
                p.add_ge(LinExpr::term(psi, x0), LinExpr::term(psib, t));
            }
        }
        p.maximize(obj);
        let sol = solve(&p)?;
        solves += 1;
        if let Err(e) = check_solution(&sol, "beamforming", "digital SDP (QoS constraints)") {
            if !is_numerical(&e) {
                return Err(e);
            }
            let msg = format!("digital SCA stopped early, keeping the incumbent: {e}");
            log::warn!("{msg}");
            warnings.push(msg);
            break;
        }
        let mut next = Vec::with_capacity(k);
        for v in &vars {
            let m = sol.hermitian(v);
            let tr = m.trace().re;
            trace_res = trace_res.max((tr - 1.0).abs());
            let lmin = m.clone().symmetric_eigen().eigenvalues.min();
            psd_res = psd_res.max((-lmin).max(0.0));
            next.push(m / C64::from(tr));
        }
        let val = lifted_rate(&links, &phi, &next, sys.sigma2);
        let prev = *trace.last().unwrap();
        if val < prev {
            // solver noise below the ascent guarantee: keep the incumbent
            break;
        }
        gram = next;
        trace.push(val);
        if (val - prev).abs() <= cfg.tol * prev.abs().max(1e-12) {
            break;
        }
    }
    let sdr_objective = *trace.last().unwrap();

    // extraction: dominant eigenvectors, plus randomization when any V_i is far from rank one
    let eig: Vec<_> = gram.iter().map(|m| m.clone().symmetric_eigen()).collect();
    let dominant: Vec<CVec> = eig
        .iter()
        .map(|e| {
            let i = e.eigenvalues.imax();
            normalize(e.eigenvectors.column(i).into_owned())
        })
        .collect();
    let exact = |v: &[CVec]| weighted_rate(ch, &beams(&w, v), powers, sys);
    let mut best_v = dominant.clone();
    let mut best = exact(&dominant);
    let needs_random = eig.iter().any(|e| {
        let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev.len() > 1 && ev[1] / ev[0] > cfg.rank_ratio
    });
    if needs_random {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let roots: Vec<CMat> = eig
            .iter()
            .map(|e| {
                let s = e.eigenvalues.map(|l| C64::from(l.max(0.0).sqrt()));
                &e.eigenvectors * CMat::from_diagonal(&s)
            })
            .collect();
        for _ in 0..cfg.randomizations {
            let cand: Vec<CVec> = roots
                .iter()
                .map(|r| {
                    let z = CVec::from_fn(nf, |_, _| {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        C64::new(a, b)
                    });
                    normalize(r * z)
                })
                .collect();
            let val = exact(&cand);
            if val > best {
                best = val;
                best_v = cand;
            }
        }
    }
    let extraction_gap = if sdr_objective > 0.0 { best / sdr_objective } else { 1.0 };
    if extraction_gap < 0.9 {
        let msg = format!("rank-one extraction kept only {:.1}% of the relaxed objective", 100.0 * extraction_gap);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let accepted = best >= exact_before;
    let (digital_vectors, exact_after) = if accepted { (best_v, best) } else { (v0.to_vec(), exact_before) };
    // exact QoS re-check of the vectors actually returned
    let bs = beams(&w, &digital_vectors);
    for l in &links {
        let g = ch.get(l.id);
        let s = l.p_sig * gain(g, &bs[l.id.group]);
        let d: f64 = l.interf.iter().map(|&(j, p)| p * gain(g, &bs[j])).sum::<f64>() + sys.sigma2;
        if s / d < l.target * (1.0 - 1e-4) {
            warnings.push(format!("{}: SINR {:.4e} below target {:.4e}", l.id, s / d, l.target));
        }
    }
    Ok(DigitalUpdate {
        gram_matrices: gram,
        digital_vectors,
        sdr_objective,
        extraction_gap,
        trace,
        exact_before,
        exact_after,
        accepted,
        trace_residual: trace_res,
        psd_residual: psd_res,
        solves,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmaUpdate {
    pub dma_amplitudes: DMatrix<f64>,
    /// Exact weighted rate at the start and after every SCA step.
    pub trace: Vec<f64>,
    pub solves: usize,
    pub warnings: Vec<String>,
}

/// The DMA optimum often sits where interference terms vanish (cone vertices), which slows the
/// interior-point tail; objectives are in bits, so an absolute gap of 1e-5 is ample.
const DMA_SETTINGS: SolverSettings = SolverSettings { solver_tol: 1e-7, gap_tol: 1e-5, max_iter: 200 };

/// Coefficients `c` with `gᴴ W v = cᵀ vec(Q)` (column-major `vec`).
pub fn amplitude_coeffs(geom: &ArrayGeometry, g: &CVec, v: &CVec) -> Vec<C64> {
    let n = geom.n_elements();
    let mut c = Vec::with_capacity(n * geom.feed_count);
    for k in 0..geom.feed_count {
        for i in 0..n {
            c.push(g[i].conj() * geom.phase_mask[(i, k)] * v[k]);
        }
    }
    c
}

fn linear_form(c: &[C64], q: &[Var]) -> CExpr {
    let mut re = LinExpr::zero();
    let mut im = LinExpr::zero();
    for (ci, &qi) in c.iter().zip(q) {
        re.add_term(qi, ci.re);
        im.add_term(qi, ci.im);
    }
    CExpr::new(re, im)
}

fn dot(c: &[C64], q: &DMatrix<f64>) -> C64 {
    c.iter().zip(q.iter()).map(|(a, b)| a * b).sum()
}

/// SCA update of the DMA amplitudes at fixed digital vectors and channels. When `caps` is given,
/// `P_j|gᴴa_j|² ≤ cap` is enforced for every interfering group (relaxed to the current value when
/// the start point already exceeds it).
pub fn update_dma(
    geom: &ArrayGeometry,
    ch: &GroupChannels,
    v: &[CVec],
    q0: &DMatrix<f64>,
    powers: &PowerSplit,
    caps: Option<&InterferenceCaps>,
    sys: &SystemParams,
    cfg: &BeamformingConfig,
) -> Result<DmaUpdate> {
    let k = ch.group_count();
    let links = links(k, powers, sys);
    let coeffs: Vec<Vec<Vec<C64>>> =
        links.iter().map(|l| (0..k).map(|j| amplitude_coeffs(geom, ch.get(l.id), &v[j])).collect()).collect();
    let exact = |q: &DMatrix<f64>| weighted_rate(ch, &beams(&geom.weights(q), v), powers, sys);

    let mut q = q0.clone();
    // a start with no useful gain gives a degenerate linearization
    if links
        .iter()
        .enumerate()
        .any(|(u, l)| l.weight > 0.0 && l.p_sig > 0.0 && dot(&coeffs[u][l.id.group], &q).norm() == 0.0)
    {
        q.fill(0.5);
    }
    let mut trace = vec![exact(&q)];
    let mut solves = 0;
    let mut warnings = Vec::new();
    for _ in 0..cfg.max_iter {
        let mut p = ConicProgram::with_settings(DMA_SETTINGS);
        let qv: Vec<Var> = (0..q.len()).map(|_| p.bounded_var(0.0, 1.0)).collect();
        let mut obj = LinExpr::zero();
        for (u, l) in links.iter().enumerate() {
            let z: Vec<C64> = (0..k).map(|j| dot(&coeffs[u][j], &q)).collect();
            let s0 = l.p_sig * z[l.id.group].norm_sqr();
            let d0 = l.interf.iter().map(|&(j, pw)| pw * z[j].norm_sqr()).sum::<f64>() + sys.sigma2;
            let sinr0 = s0 / d0;
            let x0 = 1.0 + sinr0;
            let (psi, psib, o) = rate_minorant(&mut p, l.weight, x0);
            obj += o;
            let own = linear_form(&coeffs[u][l.id.group], &qv);
            p.add_le(psi, tangent(&own, z[l.id.group], l.p_sig / (d0 * x0)));
            let mut den = LinExpr::constant(sys.sigma2 / d0);
            for &(j, pw) in &l.interf {
                if pw == 0.0 {
                    continue;
                }
                // name the dense form once; the cones below then touch two variables each
                let e = {
                    let form = linear_form(&coeffs[u][j], &qv);
                    let (re, im) = (p.var(), p.var());
                    p.add_eq(re, form.re);
                    p.add_eq(im, form.im);
                    CExpr::new(re.into(), im.into())
                };
                let y = p.nonneg_var();
                let s = (pw / d0).sqrt();
                p.add_rotated_soc(y, 1.0, vec![e.re.clone() * s, e.im.clone() * s]);
                den += y.into();
                if let Some(caps) = caps {
                    if j != l.id.group {
                        let cap = caps.get(l.id)[j].max(pw * z[j].norm_sqr());
                        if cap > 0.0 {
                            let s = (pw / cap).sqrt();
                            p.add_soc(1.0, vec![e.re * s, e.im * s]);
                        }
                    }
                }
            }
            p.add_ge(psib, den);
            let t = l.target.min(sinr0);
            if t > 0.0 {
                p.add_ge(LinExpr::term(psi, x0), LinExpr::term(psib, t));
            }
        }
        p.maximize(obj);
        let sol = solve(&p)?;
        solves += 1;
        if let Err(e) = check_solution(&sol, "beamforming", "DMA subproblem (caps/QoS)") {
            if !is_numerical(&e) {
                return Err(e);
            }
            // a stalled solve still returns its last iterate; it is clamped and scored exactly below
            if !sol.x.iter().all(|v| v.is_finite()) {
                let msg = format!("DMA SCA stopped early, keeping the incumbent: {e}");
                log::warn!("{msg}");
                warnings.push(msg);
                break;
            }
            log::debug!("using the last iterate of a stalled DMA solve: {e}");
        }
        let next = DMatrix::from_fn(q.nrows(), q.ncols(), |r, c| sol.value(qv[r + c * q.nrows()]).clamp(0.0, 1.0));
        let val = exact(&next);
        let prev = *trace.last().unwrap();
        if val < prev {
            log::debug!("DMA step lowered the exact rate {prev} -> {val} ({:?}, residual {:.1e})", sol.status, sol.primal_residual);
            break;
        }
        q = next;
        trace.push(val);
        if (val - prev).abs() <= cfg.tol * prev.abs().max(1e-12) {
            break;
        }
    }
    Ok(DmaUpdate { dma_amplitudes: q, trace, solves, warnings })
}
