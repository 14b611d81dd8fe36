//! Worst-case CSI errors for a fixed design.
//!
//! Each user's SINR depends only on its own channel, so the weighted sum rate is minimised user by
//! user over `Δh = r·d`, `‖d‖ ≤ 1`. The ratio `S(d)/(I(d) + σ²)` (both convex quadratics in `d`)
//! is handled by successive convex approximation: around the current point `d₀` the denominator is
//! replaced by its tangent (a minorant), giving an upper bound on the SINR that is tight at `d₀`.
//! Each such fractional program is solved by Dinkelbach iterations on `min Ψ − tΨ̄` with
//! `Ψ ≥ S(d)` and `σ² ≤ Ψ̄ ≤ tangent`. The SINR of the iterates is therefore nonincreasing.
//!
//! The interference caps and the QoS target restrict the admissible errors. The QoS constraint is
//! kept convex by pairing the tangent minorant of `S` with convex upper slacks on the interference,
//! which keeps the true SINR at or above the target.

use nfbf_conic::{solve, CExpr, CVecVar, ConicProgram, LinExpr};
use serde::Serialize;

use crate::error::{check_solution, is_numerical, Error, Result};
use crate::geometry::{Field, GroupChannels, UserId};
use crate::power::PowerSplit;
use crate::rate::{gain, SystemParams};
use crate::uncertainty::{InterferenceCaps, UncertaintyBudget};
use crate::{CVec, C64};

/// What to do when a user misses its rate target already at the nominal channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QosPolicy {
    /// Report the user as infeasible.
    Strict,
    /// Use the nominal SINR as that user's floor instead.
    ClampToNominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct WorstCaseConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub dinkelbach_tol: f64,
    pub dinkelbach_max_iter: usize,
    pub qos: QosPolicy,
}

impl Default for WorstCaseConfig {
    fn default() -> Self {
        Self { tol: 1e-4, max_iter: 50, dinkelbach_tol: 1e-9, dinkelbach_max_iter: 30, qos: QosPolicy::Strict }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserWorstCase {
    pub delta_h: CVec,
    /// Signal slack Ψ (W) of the last accepted subproblem.
    pub slack_num: f64,
    /// Interference-plus-noise slack Ψ̄ (W) of the last accepted subproblem.
    pub slack_den: f64,
    pub sinr: f64,
    pub rate: f64,
    /// Rate after every accepted iterate, starting at the nominal channel.
    pub trace: Vec<f64>,
    pub solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseCsi {
    pub near: Vec<UserWorstCase>,
    pub far: Vec<UserWorstCase>,
    /// Weighted sum rate at `ĥ + Δh*`.
    pub objective: f64,
    /// Weighted sum rate at `ĥ`.
    pub nominal: f64,
    /// Weighted sum rate across iterations (users that stopped early hold their last value).
    pub trace: Vec<f64>,
}

impl WorstCaseCsi {
    pub fn get(&self, id: UserId) -> &UserWorstCase {
        match id.field {
            Field::Near => &self.near[id.group],
            Field::Far => &self.far[id.group],
        }
    }

    pub fn delta(&self) -> GroupChannels {
        GroupChannels {
            near: self.near.iter().map(|u| u.delta_h.clone()).collect(),
            far: self.far.iter().map(|u| u.delta_h.clone()).collect(),
        }
    }

    /// `ĥ + Δh*`
    pub fn channels(&self, recon: &GroupChannels) -> GroupChannels {
        recon.plus(&self.delta())
    }

    pub fn solves(&self) -> usize {
        self.near.iter().chain(&self.far).map(|u| u.solves).sum()
    }
}

/// Interference seen by one user: (beam index, transmit power).
fn interferers(id: UserId, nu_p: &[f64], fu_p: &[f64]) -> Vec<(usize, f64)> {
    let i = id.group;
    let mut v: Vec<(usize, f64)> =
        (0..nu_p.len()).filter(|&j| j != i).map(|j| (j, nu_p[j] + fu_p[j])).collect();
    if id.field == Field::Far {
        v.push((i, nu_p[i]));
    }
    v
}

struct UserProblem<'a> {
    id: UserId,
    h_hat: &'a CVec,
    radius: f64,
    beams: &'a [CVec],
    p_sig: f64,
    interf: Vec<(usize, f64)>,
    /// Cap per interfering group (intra-group term uncapped).
    caps: Vec<Option<f64>>,
    sigma2: f64,
}

impl UserProblem<'_> {
    fn channel(&self, d: &CVec) -> CVec {
        self.h_hat + d * C64::from(self.radius)
    }

    fn signal(&self, g: &CVec) -> f64 {
        self.p_sig * gain(g, &self.beams[self.id.group])
    }

    fn denom(&self, g: &CVec) -> f64 {
        self.interf.iter().map(|&(j, p)| p * gain(g, &self.beams[j])).sum::<f64>() + self.sigma2
    }

    fn sinr(&self, d: &CVec) -> f64 {
        let g = self.channel(d);
        self.signal(&g) / self.denom(&g)
    }

    /// `a_jᴴ(ĥ + r d)` as an affine expression of `d`.
    fn inner(&self, d: &CVecVar, j: usize) -> CExpr {
        let a = &self.beams[j];
        CExpr::constant(a.dotc(self.h_hat)) + d.inner_from(a.as_slice()).scale(C64::from(self.radius))
    }

    /// Tangent of `p|e|²` at `e₀`: `p(2Re(ē₀e) − |e₀|²)`.
    fn tangent(e: &CExpr, e0: C64, p: f64) -> LinExpr {
        (e.re.clone() * (2.0 * p * e0.re)) + (e.im.clone() * (2.0 * p * e0.im)) + LinExpr::constant(-p * e0.norm_sqr())
    }

    /// Lowest admissible SINR along the direction that cancels the own-beam gain. The SCA starts
    /// here when it beats the nominal point, which keeps the first subproblems well scaled for
    /// designs whose nominal SINR sits orders of magnitude above the floor.
    fn line_start(&self, target: f64) -> Option<(CVec, f64)> {
        const STEPS: usize = 256;
        let a = &self.beams[self.id.group];
        let c = a.dotc(self.h_hat);
        let na = a.norm();
        if c.norm() == 0.0 || na == 0.0 {
            return None;
        }
        // aᴴ(ĥ + r·s·u) = c(1 − r·s·‖a‖/|c|)
        let u = a * (c * C64::from(-1.0 / (na * c.norm())));
        let mut best: Option<(CVec, f64)> = None;
        for k in 1..=STEPS {
            let d = &u * C64::from(k as f64 / STEPS as f64);
            let g = self.channel(&d);
            let s = self.signal(&g) / self.denom(&g);
            if s < target {
                continue;
            }
            let capped = self.interf.iter().zip(&self.caps).any(|(&(j, pw), cap)| {
                cap.is_some_and(|cap| pw * gain(&g, &self.beams[j]) > cap * (1.0 + 1e-9))
            });
            if !capped && best.as_ref().is_none_or(|b| s < b.1) {
                best = Some((d, s));
            }
        }
        best
    }

    /// One Dinkelbach subproblem `min Ψ − tΨ̄` around `d0`. Ψ is measured in units of `sig_scale`,
    /// Ψ̄ and all interference terms in units of `scale`.
    fn subproblem(&self, d0: &CVec, t: f64, target: f64, scale: f64, sig_scale: f64) -> Result<(CVec, f64, f64)> {
        let n = self.h_hat.len();
        let g0 = self.channel(d0);
        let mut p = ConicProgram::new();
        let d = p.complex_vector(n);
        let psi = p.nonneg_var();
        let psib = p.nonneg_var();
        p.add_soc(1.0, d.stacked());

        let own = self.inner(&d, self.id.group);
        let own0 = self.beams[self.id.group].dotc(&g0);
        // Ψ ≥ P_s|a_iᴴg|²
        let w = (self.p_sig / sig_scale).sqrt();
        p.add_rotated_soc(psi, 1.0, vec![own.re.clone() * w, own.im.clone() * w]);

        // σ²/scale ≤ Ψ̄ ≤ tangent of the interference-plus-noise
        let mut tan = LinExpr::constant(self.sigma2 / scale);
        let mut upper = LinExpr::constant(self.sigma2 / scale);
        for (k, &(j, pw)) in self.interf.iter().enumerate() {
            let e = self.inner(&d, j);
            let e0 = self.beams[j].dotc(&g0);
            tan += Self::tangent(&e, e0, pw / scale);
            if pw == 0.0 {
                continue;
            }
            if let Some(cap) = self.caps[k] {
                // keep the current point admissible when the cap is already exceeded
                let cap = cap.max(pw * e0.norm_sqr());
                if cap > 0.0 {
                    let s = (pw / cap).sqrt();
                    p.add_soc(1.0, vec![e.re.clone() * s, e.im.clone() * s]);
                } else {
                    p.add_eq(e.re.clone(), 0.0);
                    p.add_eq(e.im.clone(), 0.0);
                }
            }
            if target > 0.0 {
                let y = p.nonneg_var();
                let s = (pw / scale).sqrt();
                p.add_rotated_soc(y, 1.0, vec![e.re.clone() * s, e.im * s]);
                upper += y.into();
            }
        }
        p.add_le(psib, tan);
        p.add_ge(psib, self.sigma2 / scale);
        if target > 0.0 {
            let s_lin = Self::tangent(&own, own0, self.p_sig / sig_scale);
            p.add_ge(s_lin, upper * (target * scale / sig_scale));
        }
        p.minimize(LinExpr::from(psi) - LinExpr::term(psib, t * scale / sig_scale));
        let sol = solve(&p)?;
        check_solution(&sol, "worst_case", &format!("{}: admissible error set", self.id))?;
        let mut dv = CVec::from_vec(d.value(&sol.x));
        let nd = dv.norm();
        if nd > 1.0 {
            dv /= C64::from(nd);
        }
        Ok((dv, sol.value(psi) * sig_scale, sol.value(psib) * scale))
    }
}

fn worst_user(pb: &UserProblem, target: f64, qos: QosPolicy, cfg: &WorstCaseConfig) -> Result<UserWorstCase> {
    let n = pb.h_hat.len();
    let zero = CVec::zeros(n);
    let sinr0 = pb.sinr(&zero);
    let target = if sinr0 >= target {
        target
    } else {
        match qos {
            QosPolicy::Strict => {
                return Err(Error::infeasible(
                    "worst_case",
                    format!("{}: nominal SINR {sinr0:.4e} is below the target {target:.4e}", pb.id),
                ))
            }
            QosPolicy::ClampToNominal => sinr0,
        }
    };
    let g0 = pb.channel(&zero);
    let mut out = UserWorstCase {
        delta_h: zero.clone(),
        slack_num: pb.signal(&g0),
        slack_den: pb.denom(&g0),
        sinr: sinr0,
        rate: (1.0 + sinr0).log2(),
        trace: vec![(1.0 + sinr0).log2()],
        solves: 0,
    };
    if pb.radius == 0.0 || pb.p_sig == 0.0 {
        return Ok(out);
    }
    let mut d0 = zero;
    let mut s_cur = sinr0;
    if let Some((d, s)) = pb.line_start(target) {
        if s < s_cur {
            let g = pb.channel(&d);
            let r = (1.0 + s).log2();
            out.delta_h = &d * C64::from(pb.radius);
            out.slack_num = pb.signal(&g);
            out.slack_den = pb.denom(&g);
            out.sinr = s;
            out.rate = r;
            out.trace.push(r);
            d0 = d;
            s_cur = s;
        }
    }
    for _ in 0..cfg.max_iter {
        let g = pb.channel(&d0);
        let scale = pb.denom(&g);
        let sig_scale = pb.signal(&g).max(scale * 1e-12);
        // the QoS floor already binds: no admissible error lowers the SINR further (this is also
        // the degenerate case the solver would otherwise face, with the feasible set pinched at d0)
        if s_cur <= target {
            break;
        }
        // Dinkelbach on the tangent-bounded ratio
        let mut t = s_cur;
        let mut best: Option<(CVec, f64, f64)> = None;
        for _ in 0..cfg.dinkelbach_max_iter {
            let step = pb.subproblem(&d0, t, target, scale, sig_scale);
            out.solves += 1;
            let (d, psi, psib) = match step {
                Ok(v) => v,
                // a later Dinkelbach or SCA step can fail numerically; earlier points stay valid
                Err(e) if is_numerical(&e) && (best.is_some() || out.trace.len() > 1) => {
                    log::warn!("worst-case search for {} stopped early: {e}", pb.id);
                    break;
                }
                Err(e) => return Err(e),
            };
            let t_new = psi / psib;
            best = Some((d, psi, psib));
            if (t - t_new).abs() <= cfg.dinkelbach_tol * t.abs().max(1e-300) || t_new >= t {
                break;
            }
            t = t_new;
        }
        let Some((d, psi, psib)) = best else { break };
        let s_new = pb.sinr(&d);
        // tangent bound makes the true SINR nonincreasing; reject solver noise that goes the other way
        if s_new > s_cur {
            break;
        }
        let r_prev = (1.0 + s_cur).log2();
        let r_new = (1.0 + s_new).log2();
        d0 = d;
        s_cur = s_new;
        out.delta_h = &d0 * C64::from(pb.radius);
        out.slack_num = psi;
        out.slack_den = psib;
        out.sinr = s_new;
        out.rate = r_new;
        out.trace.push(r_new);
        if (r_prev - r_new).abs() <= cfg.tol * r_prev.abs().max(1e-12) {
            break;
        }
    }
    Ok(out)
}

/// Minimise the weighted sum rate over all admissible CSI errors, starting from `Δh = 0`.
pub fn minimize_rate_over_csi(
    recon: &GroupChannels,
    budget: &UncertaintyBudget,
    beams: &[CVec],
    powers: &PowerSplit,
    caps: &InterferenceCaps,
    sys: &SystemParams,
    cfg: &WorstCaseConfig,
) -> Result<WorstCaseCsi> {
    let k = recon.group_count();
    if beams.len() != k || budget.group_count() != k || powers.group_count() != k {
        return Err(Error::InvalidConfig("worst-case inputs disagree on the group count".into()));
    }
    let mut near = Vec::with_capacity(k);
    let mut far = Vec::with_capacity(k);
    for id in recon.ids() {
        let interf = interferers(id, &powers.nu_powers, &powers.fu_powers);
        let cap_row = caps.get(id);
        let capv = interf.iter().map(|&(j, _)| if j == id.group { None } else { Some(cap_row[j]) }).collect();
        let p_sig = match id.field {
            Field::Near => powers.nu_powers[id.group],
            Field::Far => powers.fu_powers[id.group],
        };
        let pb = UserProblem {
            id,
            h_hat: recon.get(id),
            radius: budget.radius(id),
            beams,
            p_sig,
            interf,
            caps: capv,
            sigma2: sys.sigma2,
        };
        let u = worst_user(&pb, sys.sinr_target(id), cfg.qos, cfg)?;
        match id.field {
            Field::Near => near.push(u),
            Field::Far => far.push(u),
        }
    }
    let weighted = |f: &dyn Fn(&UserWorstCase) -> f64| -> f64 {
        (0..k)
            .map(|g| sys.omega * f(&near[g]) + (1.0 - sys.omega) * f(&far[g]))
            .sum()
    };
    let objective = weighted(&|u| u.rate);
    let nominal = weighted(&|u| u.trace[0]);
    let len = near.iter().chain(&far).map(|u| u.trace.len()).max().unwrap_or(1);
    let trace = (0..len)
        .map(|t| weighted(&|u: &UserWorstCase| u.trace[t.min(u.trace.len() - 1)]))
        .collect();
    Ok(WorstCaseCsi { near, far, objective, nominal, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_user_sees_own_group_near_signal() {
        let v = interferers(UserId { group: 1, field: Field::Far }, &[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]);
        assert_eq!(v, vec![(0, 1.5), (2, 3.5), (1, 2.0)]);
        let v = interferers(UserId { group: 1, field: Field::Near }, &[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]);
        assert_eq!(v, vec![(0, 1.5), (2, 3.5)]);
    }
}
