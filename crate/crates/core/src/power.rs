//! NOMA power allocation.
//!
//! Within group i the far user is held exactly at its rate target, which fixes the split of the
//! group power `P_i`. The near user's SINR is then affine in `P_i` (inter-group interference
//! ignored): `u_i = κ_i P_i + μ_i` with
//!
//! ```text
//! κ_i = g_N,i / (σ² 2^{γ_F,i}),   μ_i = −(1 − 2^{−γ_F,i}) g_N,i / g_F,i
//! ```
//!
//! and group powers maximise `Σ log₂(1 + u_i)` by water-filling, with groups whose near user would
//! miss its target pinned at the power that meets it exactly.

use serde::Serialize;

use crate::error::{Error, Result};

/// Rounds of pin-and-refill before giving up on a fixed point.
pub const MAX_CLAMP_ROUNDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSplit {
    pub group_powers: Vec<f64>,
    pub nu_powers: Vec<f64>,
    pub fu_powers: Vec<f64>,
    pub total: f64,
    pub kappa: Vec<f64>,
    pub mu: Vec<f64>,
    pub clamped_set: Vec<usize>,
}

impl PowerSplit {
    pub fn group_count(&self) -> usize {
        self.group_powers.len()
    }

    /// Largest violation of the budget and split identities, relative to the budget.
    pub fn budget_residual(&self) -> f64 {
        let sum: f64 = self.group_powers.iter().sum();
        let split = self
            .group_powers
            .iter()
            .zip(self.nu_powers.iter().zip(&self.fu_powers))
            .map(|(p, (n, f))| (p - n - f).abs())
            .fold(0.0, f64::max);
        ((sum - self.total).abs()).max(split) / self.total
    }
}

/// Fraction `(2^γ − 1)/2^γ` of the effective group power handed to the far user.
fn fu_share(gamma_f: f64) -> f64 {
    1.0 - 2f64.powf(-gamma_f)
}

/// Split `P_i` so the far user's intra-group-only SINR `P_F g/(P_N g + σ²)` equals `2^γ − 1`:
/// `P_F = (1 − 2^{−γ})(P_i + σ²/g)`, `P_N = P_i − P_F`.
pub fn split_group_power(group: usize, p_i: f64, fu_gain: f64, gamma_f: f64, sigma2: f64) -> Result<(f64, f64)> {
    if !(p_i > 0.0) || !(fu_gain > 0.0) || !(gamma_f >= 0.0) || !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "group {}: power split needs P_i > 0, gain > 0, γ_F ≥ 0, σ² > 0",
            group + 1
        )));
    }
    let p_f = fu_share(gamma_f) * (p_i + sigma2 / fu_gain);
    let p_n = p_i - p_f;
    if !(p_n > 0.0) {
        return Err(Error::infeasible(
            "power_alloc",
            format!("group {}: power {p_i:.3e} W cannot meet the far-user target {gamma_f} bit/s/Hz", group + 1),
        ));
    }
    Ok((p_n, p_f))
}

/// Coefficients of the near user's SINR `κ P_i + μ` after the far-user pin.
pub fn kappa_mu(nu_gain: f64, fu_gain: f64, gamma_f: f64, sigma2: f64) -> (f64, f64) {
    let kappa = nu_gain / (sigma2 * 2f64.powf(gamma_f));
    let mu = -fu_share(gamma_f) * nu_gain / fu_gain;
    (kappa, mu)
}

/// `Σ log₂(κ_i P_i + μ_i + 1)`; `-∞` outside the domain.
pub fn group_objective(kappa: &[f64], mu: &[f64], powers: &[f64]) -> f64 {
    kappa
        .iter()
        .zip(mu)
        .zip(powers)
        .map(|((k, m), p)| {
            let x = k * p + m + 1.0;
            if x > 0.0 {
                x.log2()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

/// Stationary point of `Σ log₂(κ_i P_i + μ_i + 1)` on `Σ P_i = P`:
/// `P_i = P/K − (μ_i + 1)/κ_i + (1/K) Σ_j (μ_j + 1)/κ_j`. Entries may come out nonpositive.
pub fn waterfill_unconstrained(kappa: &[f64], mu: &[f64], total: f64) -> Vec<f64> {
    let k = kappa.len() as f64;
    let c: Vec<f64> = kappa.iter().zip(mu).map(|(kp, m)| (m + 1.0) / kp).collect();
    let mean_c = c.iter().sum::<f64>() / k;
    let mut p: Vec<f64> = c.iter().map(|ci| total / k - ci + mean_c).collect();
    // absorb rounding so the budget holds to the last ulp
    let drift = p.iter().sum::<f64>() - total;
    let n = p.len();
    for v in &mut p {
        *v -= drift / n as f64;
    }
    p
}

/// Power meeting the near-user target exactly: `κ P + μ = 2^γ − 1`.
pub fn qos_floor(kappa: f64, mu: f64, gamma_n: f64) -> f64 {
    (2f64.powf(gamma_n) - 1.0 - mu) / kappa
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAllocation {
    pub group_powers: Vec<f64>,
    pub clamped_set: Vec<usize>,
    pub rounds: usize,
}

/// Pin groups below their near-user floor and re-water-fill the rest with what is left, until no
/// new group falls below its floor.
pub fn clamp_qos(kappa: &[f64], mu: &[f64], gamma_n: &[f64], total: f64, group_powers: &[f64]) -> Result<GroupAllocation> {
    let k = kappa.len();
    let floors: Vec<f64> = (0..k).map(|i| qos_floor(kappa[i], mu[i], gamma_n[i])).collect();
    let mut pinned = vec![false; k];
    let mut p = group_powers.to_vec();
    let tol = 1e-12 * total;
    let mut rounds = 0;
    loop {
        let violators: Vec<usize> = (0..k).filter(|&i| !pinned[i] && p[i] < floors[i] - tol).collect();
        if violators.is_empty() {
            break;
        }
        rounds += 1;
        if rounds > MAX_CLAMP_ROUNDS {
            return Err(Error::solver("power_alloc", "pinning did not reach a fixed point"));
        }
        for &i in &violators {
            pinned[i] = true;
        }
        let pinned_sum: f64 = (0..k).filter(|&i| pinned[i]).map(|i| floors[i]).sum();
        if pinned_sum > total + tol {
            let groups: Vec<String> = (0..k).filter(|&i| pinned[i]).map(|i| (i + 1).to_string()).collect();
            return Err(Error::infeasible(
                "power_alloc",
                format!(
                    "near-user targets of groups {} need {pinned_sum:.4e} W > budget {total:.4e} W",
                    groups.join(",")
                ),
            ));
        }
        let free: Vec<usize> = (0..k).filter(|&i| !pinned[i]).collect();
        let rest = total - pinned_sum;
        for i in 0..k {
            if pinned[i] {
                p[i] = floors[i];
            }
        }
        if free.is_empty() {
            // every group sits on its floor; hand any rounding leftover to the last group
            p[k - 1] += rest;
            break;
        }
        let kf: Vec<f64> = free.iter().map(|&i| kappa[i]).collect();
        let mf: Vec<f64> = free.iter().map(|&i| mu[i]).collect();
        for (&i, v) in free.iter().zip(waterfill_unconstrained(&kf, &mf, rest)) {
            p[i] = v;
        }
    }
    let clamped_set = (0..k).filter(|&i| pinned[i]).collect();
    Ok(GroupAllocation { group_powers: p, clamped_set, rounds })
}

/// Full allocation from effective beam gains `|h_N,iᴴ a_i|²`, `|h_F,iᴴ a_i|²`.
pub fn allocate_power(
    nu_gains: &[f64],
    fu_gains: &[f64],
    gamma_n: &[f64],
    gamma_f: &[f64],
    total: f64,
    sigma2: f64,
) -> Result<PowerSplit> {
    let k = nu_gains.len();
    if k == 0 || fu_gains.len() != k || gamma_n.len() != k || gamma_f.len() != k {
        return Err(Error::InvalidConfig("power allocation inputs must have one entry per group".into()));
    }
    if !(total > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig("budget and noise power must be positive".into()));
    }
    for i in 0..k {
        if !(nu_gains[i] > 0.0 && fu_gains[i] > 0.0) {
            return Err(Error::infeasible("power_alloc", format!("group {}: zero beam gain", i + 1)));
        }
    }
    let (kappa, mu): (Vec<f64>, Vec<f64>) =
        (0..k).map(|i| kappa_mu(nu_gains[i], fu_gains[i], gamma_f[i], sigma2)).unzip();
    let wf = waterfill_unconstrained(&kappa, &mu, total);
    let alloc = clamp_qos(&kappa, &mu, gamma_n, total, &wf)?;
    let mut nu = Vec::with_capacity(k);
    let mut fu = Vec::with_capacity(k);
    for i in 0..k {
        let (pn, pf) = split_group_power(i, alloc.group_powers[i], fu_gains[i], gamma_f[i], sigma2)?;
        nu.push(pn);
        fu.push(pf);
    }
    Ok(PowerSplit {
        group_powers: alloc.group_powers,
        nu_powers: nu,
        fu_powers: fu,
        total,
        kappa,
        mu,
        clamped_set: alloc.clamped_set,
    })
}

/// Equal group powers `P/K`, each split by the far-user pin.
pub fn uniform_split(fu_gains: &[f64], nu_gains: &[f64], gamma_f: &[f64], total: f64, sigma2: f64) -> Result<PowerSplit> {
    let k = fu_gains.len();
    let p = total / k as f64;
    let mut nu = Vec::with_capacity(k);
    let mut fu = Vec::with_capacity(k);
    let mut kappa = Vec::with_capacity(k);
    let mut mu = Vec::with_capacity(k);
    for i in 0..k {
        let (pn, pf) = split_group_power(i, p, fu_gains[i], gamma_f[i], sigma2)?;
        nu.push(pn);
        fu.push(pf);
        let (kp, m) = kappa_mu(nu_gains[i], fu_gains[i], gamma_f[i], sigma2);
        kappa.push(kp);
        mu.push(m);
    }
    Ok(PowerSplit { group_powers: vec![p; k], nu_powers: nu, fu_powers: fu, total, kappa, mu, clamped_set: vec![] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_groups_share_equally() {
        let p = waterfill_unconstrained(&[2.0; 4], &[-0.3; 4], 1.0);
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_far_target_gives_all_power_to_near_user_up_to_noise() {
        let (pn, pf) = split_group_power(0, 1.0, 2.0, 0.0, 0.1).unwrap();
        assert_eq!(pf, 0.0);
        assert_eq!(pn, 1.0);
    }

    #[test]
    fn floor_meets_target() {
        let (k, m) = (3.0, -0.4);
        let p = qos_floor(k, m, 1.5);
        assert!(((k * p + m + 1.0).log2() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn split_infeasible_names_group() {
        let e = split_group_power(2, 1e-12, 1e-9, 3.0, 1e-3).unwrap_err();
        assert!(e.to_string().contains("group 3"), "{e}");
    }

    #[test]
    fn joint_infeasibility_reported() {
        let e = clamp_qos(&[1.0, 1.0], &[0.0, 0.0], &[5.0, 5.0], 1.0, &[0.5, 0.5]).unwrap_err();
        assert!(matches!(e, Error::Infeasible { .. }));
    }
}
