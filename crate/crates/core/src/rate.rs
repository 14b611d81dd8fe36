//! Post-SIC SINR and rate evaluation.
//!
//! Near user i: `P_N,i|h_N,iᴴa_i|² / (Σ_{j≠i} P_j|h_N,iᴴa_j|² + σ²)` — its group's far-user signal is
//! removed by SIC. Far user i additionally sees its own group's near-user signal,
//! `P_N,i|h_F,iᴴa_i|²`, as interference. `a_j = W v_j` is group j's beam, `P_j = P_N,j + P_F,j`.

use serde::Serialize;

use crate::geometry::{Field, GroupChannels, UserId};
use crate::power::PowerSplit;
use crate::{CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UserRate {
    pub sinr: f64,
    pub rate: f64,
    pub signal: f64,
    /// Same-group term. For a near user this is the far-user signal it cancels (diagnostic only).
    pub intra: f64,
    pub inter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub near: Vec<UserRate>,
    pub far: Vec<UserRate>,
    /// `ω R_N,i + (1 − ω) R_F,i`
    pub group_weighted: Vec<f64>,
    pub total: f64,
}

impl RateReport {
    /// Unweighted sum of all user rates.
    pub fn sum_rate(&self) -> f64 {
        self.near.iter().chain(&self.far).map(|u| u.rate).sum()
    }

    pub fn get(&self, id: UserId) -> &UserRate {
        match id.field {
            Field::Near => &self.near[id.group],
            Field::Far => &self.far[id.group],
        }
    }
}

/// Noise power, near-user weight and per-group rate targets (bit/s/Hz).
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SystemParams {
    pub sigma2: f64,
    pub omega: f64,
    pub gamma_n: Vec<f64>,
    pub gamma_f: Vec<f64>,
}

impl SystemParams {
    pub fn uniform(k: usize, sigma2: f64, omega: f64, gamma_n: f64, gamma_f: f64) -> Self {
        Self { sigma2, omega, gamma_n: vec![gamma_n; k], gamma_f: vec![gamma_f; k] }
    }

    pub fn weight(&self, id: UserId) -> f64 {
        match id.field {
            Field::Near => self.omega,
            Field::Far => 1.0 - self.omega,
        }
    }

    pub fn gamma(&self, id: UserId) -> f64 {
        match id.field {
            Field::Near => self.gamma_n[id.group],
            Field::Far => self.gamma_f[id.group],
        }
    }

    /// SINR target `2^γ − 1`.
    pub fn sinr_target(&self, id: UserId) -> f64 {
        2f64.powf(self.gamma(id)) - 1.0
    }
}

/// Group beams `a_j = W v_j`.
pub fn beams(w: &CMat, v: &[CVec]) -> Vec<CVec> {
    v.iter().map(|vj| w * vj).collect()
}

/// `|hᴴ a|²`
pub fn gain(h: &CVec, a: &CVec) -> f64 {
    h.dotc(a).norm_sqr()
}

/// Signal, same-group and other-group received powers of one user.
pub fn user_terms(h: &CVec, id: UserId, beams: &[CVec], nu_p: &[f64], fu_p: &[f64]) -> (f64, f64, f64) {
    let i = id.group;
    let own = gain(h, &beams[i]);
    let inter: f64 = (0..beams.len())
        .filter(|&j| j != i)
        .map(|j| (nu_p[j] + fu_p[j]) * gain(h, &beams[j]))
        .sum();
    match id.field {
        Field::Near => (nu_p[i] * own, fu_p[i] * own, inter),
        Field::Far => (fu_p[i] * own, nu_p[i] * own, inter),
    }
}

pub fn user_sinr(h: &CVec, id: UserId, beams: &[CVec], nu_p: &[f64], fu_p: &[f64], sigma2: f64) -> f64 {
    let (s, intra, inter) = user_terms(h, id, beams, nu_p, fu_p);
    match id.field {
        Field::Near => s / (inter + sigma2),
        Field::Far => s / (intra + inter + sigma2),
    }
}

pub fn evaluate(
    ch: &GroupChannels,
    beams: &[CVec],
    nu_p: &[f64],
    fu_p: &[f64],
    sigma2: f64,
    omega: f64,
) -> RateReport {
    let k = ch.group_count();
    assert_eq!(beams.len(), k);
    assert_eq!(nu_p.len(), k);
    assert_eq!(fu_p.len(), k);
    let one = |id: UserId| {
        let h = ch.get(id);
        let (signal, intra, inter) = user_terms(h, id, beams, nu_p, fu_p);
        let sinr = user_sinr(h, id, beams, nu_p, fu_p, sigma2);
        UserRate { sinr, rate: (1.0 + sinr).log2(), signal, intra, inter }
    };
    let near: Vec<UserRate> = (0..k).map(|g| one(UserId { group: g, field: Field::Near })).collect();
    let far: Vec<UserRate> = (0..k).map(|g| one(UserId { group: g, field: Field::Far })).collect();
    let group_weighted: Vec<f64> = near.iter().zip(&far).map(|(n, f)| omega * n.rate + (1.0 - omega) * f.rate).collect();
    let total = group_weighted.iter().sum();
    RateReport { near, far, group_weighted, total }
}

pub fn evaluate_split(ch: &GroupChannels, beams: &[CVec], p: &PowerSplit, sigma2: f64, omega: f64) -> RateReport {
    evaluate(ch, beams, &p.nu_powers, &p.fu_powers, sigma2, omega)
}

/// Per group: does the near user see the shared beam at least as strongly as the far user?
pub fn check_sic_ordering(ch: &GroupChannels, beams: &[CVec]) -> Vec<bool> {
    (0..ch.group_count()).map(|g| gain(&ch.near[g], &beams[g]) >= gain(&ch.far[g], &beams[g])).collect()
}
