//! From position-error balls to CSI-error radii and interference caps.
//!
//! With `b_n = ‖x_n − p̂‖` and `b'_n = ‖x_n − p̂ − Δp‖`, the LoS reconstruction error is
//! `‖h^LoS − ĥ^LoS‖² = s·Ξ(Δp)` with `s` the path-loss prefactor and
//!
//! ```text
//! Ξ(Δp) = Σ_n b_n^{−α} + b'_n^{−α} − 2 (b_n b'_n)^{−α/2} cos(k Θ_n),   Θ_n = b'_n − b_n.
//! ```
//!
//! Ξ is bounded over the ball by a quadratic-minus-quartic surrogate
//! `S(Δp) = ΔpᵀΥΔp − c (ΔpᵀΩΔp)²`, `c = 4π⁴/(3λ⁴N_T)`, maximised by minorize–maximize.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use nfbf_conic::{solve, ConicProgram, LinExpr};
use serde::Serialize;

use crate::error::{check_solution, Error, Result};
use crate::geometry::{ArrayGeometry, Field, GroupChannels, PathLossModel, User, UserEnsemble, UserId};
use crate::power::PowerSplit;
use crate::rate::gain;
use crate::CVec;

/// Exact Ξ(Δp).
pub fn xi_exact(geom: &ArrayGeometry, est_pos: &Vector3<f64>, delta_p: &Vector3<f64>, alpha: f64) -> Result<f64> {
    let k = geom.wavenumber();
    let mut acc = 0.0;
    for x in &geom.element_coords {
        let b = (x - est_pos).norm();
        let bp = (x - est_pos - delta_p).norm();
        if !(b > 0.0 && bp > 0.0) {
            return Err(Error::DegenerateGeometry("position coincides with an element".into()));
        }
        acc += b.powf(-alpha) + bp.powf(-alpha) - 2.0 * (b * bp).powf(-alpha / 2.0) * (k * (bp - b)).cos();
    }
    // rounding can leave a tiny negative for Δp → 0
    Ok(acc.max(0.0))
}

/// Unit vectors `ξ_n = (p̂ − x_n)/‖p̂ − x_n‖` and distances `b_n`.
fn directions(geom: &ArrayGeometry, est_pos: &Vector3<f64>) -> Vec<(Vector3<f64>, f64)> {
    geom.element_coords
        .iter()
        .map(|x| {
            let d = est_pos - x;
            let b = d.norm();
            (d / b, b)
        })
        .collect()
}

/// First-order path-difference `Θ_n ≈ ξ_nᵀΔp` per element.
pub fn theta_linearized(geom: &ArrayGeometry, est_pos: &Vector3<f64>, delta_p: &Vector3<f64>) -> Vec<f64> {
    directions(geom, est_pos).iter().map(|(xi, _)| xi.dot(delta_p)).collect()
}

/// Exact path difference `‖x − p̂ − Δp‖ − ‖x − p̂‖` per element.
pub fn theta_exact(geom: &ArrayGeometry, est_pos: &Vector3<f64>, delta_p: &Vector3<f64>) -> Vec<f64> {
    geom.element_coords
        .iter()
        .map(|x| (x - est_pos - delta_p).norm() - (x - est_pos).norm())
        .collect()
}

/// Hessian of `‖u − Δp‖^{−a}` at `Δp = 0`: `a(a+2)b^{−a−4}uuᵀ − a b^{−a−2}I`.
fn g_mat(u: &Vector3<f64>, b: f64, a: f64) -> Matrix3<f64> {
    u * u.transpose() * (a * (a + 2.0) * b.powf(-a - 4.0)) - Matrix3::identity() * (a * b.powf(-a - 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BoundConfig {
    /// Weight of the phase term in Υ; `None` means `4π²/λ²`.
    pub phase_coef: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { phase_coef: None, tol: 1e-4, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundMatrices {
    pub omega: Matrix3<f64>,
    pub upsilon: Matrix3<f64>,
    /// Path-loss part of Υ (`Σ ½G_α − b^{−α/2}G_{α/2}`), kept for diagnostics.
    pub upsilon_path: Matrix3<f64>,
}

/// Ω and Υ for one estimated position and error radius.
pub fn build_bound_matrices(
    geom: &ArrayGeometry,
    est_pos: &Vector3<f64>,
    pos_err_radius: f64,
    alpha: f64,
    phase_coef: Option<f64>,
) -> Result<BoundMatrices> {
    let dirs = directions(geom, est_pos);
    let min_d = dirs.iter().map(|(_, b)| *b).fold(f64::INFINITY, f64::min);
    if !(pos_err_radius >= 0.0) || pos_err_radius >= min_d {
        return Err(Error::InfeasibleUncertainty { radius: pos_err_radius, min_distance: min_d });
    }
    let coef = phase_coef.unwrap_or_else(|| geom.wavenumber().powi(2));
    let eps = pos_err_radius;
    let mut omega = Matrix3::zeros();
    let mut path = Matrix3::zeros();
    let mut phase = Matrix3::zeros();
    for (xi, b) in &dirs {
        let outer = xi * xi.transpose();
        let shrunk = (b - eps).powf(-alpha / 4.0);
        omega += outer * (shrunk * b.powf(-alpha / 4.0));
        // u = x − p̂ = −b ξ; uuᵀ = b² ξξᵀ
        let u = -xi * *b;
        path += g_mat(&u, *b, alpha) * 0.5 - g_mat(&u, *b, alpha / 2.0) * b.powf(-alpha / 2.0);
        phase += outer * (coef * shrunk * b.powf(-alpha / 2.0));
    }
    let sym = |m: Matrix3<f64>| (m + m.transpose()) * 0.5;
    Ok(BoundMatrices { omega: sym(omega), upsilon: sym(path + phase), upsilon_path: sym(path) })
}

/// Quartic weight `4π⁴/(3λ⁴N_T)`.
pub fn quartic_coef(geom: &ArrayGeometry) -> f64 {
    4.0 * std::f64::consts::PI.powi(4) / (3.0 * geom.wavelength.powi(4) * geom.n_elements() as f64)
}

/// `S(Δp) = ΔpᵀΥΔp − c(ΔpᵀΩΔp)²`.
pub fn surrogate(m: &BoundMatrices, c: f64, dp: &Vector3<f64>) -> f64 {
    let q = dp.dot(&(m.omega * dp));
    dp.dot(&(m.upsilon * dp)) - c * q * q
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstPosition {
    pub xi_max: f64,
    pub worst_pos_err: Vector3<f64>,
    /// Surrogate values of the winning start, one per iteration.
    pub trace: Vec<f64>,
}

/// Rows `R` with `RᵀR = M` for a PSD matrix given by its eigen-decomposition (nonneg part).
fn psd_factor(vals: &[f64], vecs: &Matrix3<f64>) -> Vec<Vector3<f64>> {
    (0..3)
        .filter(|&i| vals[i] > 0.0)
        .map(|i| vecs.column(i).into_owned() * vals[i].sqrt())
        .collect()
}

/// Maximisers of the surrogate along each eigen-direction `v` of Υ with `vᵀΥv > 0`:
/// `λε²t² − c(ωε²t²)²` peaks at `t² = min(1, λ/(2cω²ε²))`. Returns `(Δp, value)` pairs.
fn line_maxima(m: &BoundMatrices, c: f64, eps: f64) -> Vec<(Vector3<f64>, f64)> {
    let eig = SymmetricEigen::new(m.upsilon);
    let e2 = eps * eps;
    (0..3)
        .filter(|&i| eig.eigenvalues[i] > 0.0)
        .map(|i| {
            let v = eig.eigenvectors.column(i).into_owned();
            let lam = eig.eigenvalues[i];
            let om = v.dot(&(m.omega * v));
            let t2 = if c * om > 0.0 { (lam / (2.0 * c * om * om * e2)).min(1.0) } else { 1.0 };
            let dp = v * (eps * t2.sqrt());
            (dp, surrogate(m, c, &dp))
        })
        .collect()
}

/// One minorize–maximize run on the unit-ball parameterisation `Δp = ε u`.
fn mm_run(m: &BoundMatrices, c: f64, eps: f64, start: Vector3<f64>, cfg: &BoundConfig) -> Result<(Vector3<f64>, Vec<f64>)> {
    let eig = SymmetricEigen::new(m.upsilon);
    let pos_vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let neg_vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| (-l).max(0.0)).collect();
    let up = {
        let d = Matrix3::from_diagonal(&Vector3::from_iterator(pos_vals.iter().copied()));
        eig.eigenvectors * d * eig.eigenvectors.transpose()
    };
    let neg_rows = psd_factor(&neg_vals, &eig.eigenvectors);
    let oeig = SymmetricEigen::new(m.omega);
    let om_vals: Vec<f64> = oeig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let om_rows = psd_factor(&om_vals, &oeig.eigenvectors);

    // scale so the optimum is O(1); boundary values can exceed it by many orders of magnitude
    let e2 = eps * eps;
    let lines = line_maxima(m, c, eps);
    let sc = lines.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    let sc = if sc > 0.0 { sc } else { (e2 * m.upsilon.norm()).max(f64::MIN_POSITIVE) };
    // unit of the quartic's inner quadratic ΔpᵀΩΔp
    let ws = lines.iter().map(|(dp, _)| dp.dot(&(m.omega * dp))).fold(0.0, f64::max);
    let ws = if ws > 0.0 { ws } else { (e2 * m.omega.norm()).max(f64::MIN_POSITIVE) };

    let value = |u: &Vector3<f64>| surrogate(m, c, &(u * eps));
    let mut u = start;
    let mut trace = vec![value(&u)];
    for _ in 0..cfg.max_iter {
        let mut p = ConicProgram::new();
        let uv = p.vars(3);
        let sig = p.nonneg_var();
        let w = p.nonneg_var();
        let tau = p.nonneg_var();
        p.add_soc(1.0, uv.iter().map(|&v| v.into()).collect());
        let lin_u = |row: &Vector3<f64>| {
            let mut e = LinExpr::zero();
            for k in 0..3 {
                e.add_term(uv[k], row[k]);
            }
            e
        };
        // ε²uᵀΥ₋u ≤ σ·sc
        p.add_rotated_soc(sig, 1.0, neg_rows.iter().map(|r| lin_u(&(r * (eps / sc.sqrt())))).collect());
        // ε²uᵀΩu ≤ w·ws
        p.add_rotated_soc(w, 1.0, om_rows.iter().map(|r| lin_u(&(r * (eps / ws.sqrt())))).collect());
        // w² ≤ τ
        p.add_rotated_soc(tau, 1.0, vec![w.into()]);
        // tangent of ε²uᵀΥ₊u at u: 2ε²u₀ᵀΥ₊u − ε²u₀ᵀΥ₊u₀
        let g = up * u * (2.0 * e2 / sc);
        let mut obj = lin_u(&g);
        obj = obj + LinExpr::constant(-e2 * u.dot(&(up * u)) / sc) - sig - LinExpr::term(tau, c * ws * ws / sc);
        p.maximize(obj);
        let sol = solve(&p)?;
        check_solution(&sol, "uncertainty", "worst-position subproblem")?;
        let mut next = Vector3::new(sol.value(uv[0]), sol.value(uv[1]), sol.value(uv[2]));
        let nn = next.norm();
        if nn > 1.0 {
            next /= nn;
        }
        let val = value(&next);
        let prev = *trace.last().unwrap();
        // minorization guarantees ascent up to solver accuracy; keep the better point
        if val < prev {
            break;
        }
        u = next;
        trace.push(val);
        if (val - prev).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok((u * eps, trace))
}

/// Maximise the surrogate over `‖Δp‖ ≤ ε` from several starts (±radial, ± eigenvectors of Υ,
/// per-direction line maxima) and keep the best stationary point.
pub fn solve_worst_position(
    geom: &ArrayGeometry,
    est_pos: &Vector3<f64>,
    pos_err_radius: f64,
    alpha: f64,
    cfg: &BoundConfig,
) -> Result<(WorstPosition, BoundMatrices)> {
    let m = build_bound_matrices(geom, est_pos, pos_err_radius, alpha, cfg.phase_coef)?;
    if pos_err_radius == 0.0 {
        return Ok((WorstPosition { xi_max: 0.0, worst_pos_err: Vector3::zeros(), trace: vec![0.0] }, m));
    }
    let c = quartic_coef(geom);
    let radial = if est_pos.norm() > 0.0 { est_pos.normalize() } else { Vector3::y() };
    let eig = SymmetricEigen::new(m.upsilon);
    let mut starts = vec![radial, -radial];
    for i in 0..3 {
        let v = eig.eigenvectors.column(i).into_owned();
        starts.push(v);
        starts.push(-v);
    }
    // line maxima, also completed to the boundary along the other eigen-directions
    for (dp, _) in line_maxima(&m, c, pos_err_radius) {
        let u = dp / pos_err_radius;
        starts.push(u);
        let slack = (1.0 - u.norm_squared()).max(0.0).sqrt();
        for i in 0..3 {
            let v = eig.eigenvectors.column(i).into_owned();
            if slack > 0.0 && v.dot(&u).abs() < 0.5 * u.norm() {
                starts.push(u + v * slack);
                starts.push(u - v * slack);
            }
        }
    }
    let mut best: Option<(f64, Vector3<f64>, Vec<f64>)> = None;
    for s in starts {
        let (dp, trace) = mm_run(&m, c, pos_err_radius, s, cfg)?;
        let val = *trace.last().unwrap();
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, dp, trace));
        }
    }
    let (val, dp, trace) = best.unwrap();
    Ok((WorstPosition { xi_max: val.max(0.0), worst_pos_err: dp, trace }, m))
}

/// CSI-error radius from the surrogate maximum.
///
/// Near user: `√(κ/(1+κ))·√(s·Ξ_max)`. Far user adds the Rician mismatch of the reconstruction
/// `(1 − √(κ/(1+κ)))‖ĥ‖` and the scattered part `δ/√(1+κ)`.
pub fn csi_error_radius(field: Field, xi_max: f64, scale: f64, kappa: f64, recon_norm: f64, nlos_norm: f64) -> f64 {
    let w = if kappa.is_infinite() { 1.0 } else { (kappa / (1.0 + kappa)).sqrt() };
    let base = w * (scale * xi_max).sqrt();
    match field {
        Field::Near => base,
        Field::Far => {
            let scatter = if kappa.is_infinite() { 0.0 } else { nlos_norm / (1.0 + kappa).sqrt() };
            base + (1.0 - w) * recon_norm + scatter
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserBound {
    pub pos_err_radius: f64,
    pub csi_err_radius: f64,
    pub omega_mat: Matrix3<f64>,
    pub upsilon_mat: Matrix3<f64>,
    pub xi_max: f64,
    pub worst_pos_err: Vector3<f64>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyBudget {
    pub near: Vec<UserBound>,
    pub far: Vec<UserBound>,
}

impl UncertaintyBudget {
    pub fn get(&self, id: UserId) -> &UserBound {
        match id.field {
            Field::Near => &self.near[id.group],
            Field::Far => &self.far[id.group],
        }
    }

    pub fn radius(&self, id: UserId) -> f64 {
        self.get(id).csi_err_radius
    }

    pub fn group_count(&self) -> usize {
        self.near.len()
    }
}

pub fn user_bound(
    geom: &ArrayGeometry,
    user: &User,
    field: Field,
    recon: &CVec,
    model: &PathLossModel,
    cfg: &BoundConfig,
) -> Result<UserBound> {
    let (wp, m) = solve_worst_position(geom, &user.est_pos, user.pos_err_radius, model.alpha, cfg)?;
    let r = csi_error_radius(field, wp.xi_max, model.scale(), user.rician_factor, recon.norm(), user.nlos_norm);
    Ok(UserBound {
        pos_err_radius: user.pos_err_radius,
        csi_err_radius: r,
        omega_mat: m.omega,
        upsilon_mat: m.upsilon,
        xi_max: wp.xi_max,
        worst_pos_err: wp.worst_pos_err,
        trace: wp.trace,
    })
}

/// Radii for every user of the ensemble.
pub fn build_budget(
    geom: &ArrayGeometry,
    users: &UserEnsemble,
    recon: &GroupChannels,
    model: &PathLossModel,
    cfg: &BoundConfig,
) -> Result<UncertaintyBudget> {
    let k = users.group_count();
    let mut near = Vec::with_capacity(k);
    let mut far = Vec::with_capacity(k);
    for g in 0..k {
        near.push(user_bound(geom, &users.near[g], Field::Near, &recon.near[g], model, cfg)?);
        far.push(user_bound(geom, &users.far[g], Field::Far, &recon.far[g], model, cfg)?);
    }
    Ok(UncertaintyBudget { near, far })
}

/// A budget with every radius forced to zero (perfect CSI assumed).
pub fn zero_budget(k: usize) -> UncertaintyBudget {
    let z = UserBound {
        pos_err_radius: 0.0,
        csi_err_radius: 0.0,
        omega_mat: Matrix3::zeros(),
        upsilon_mat: Matrix3::zeros(),
        xi_max: 0.0,
        worst_pos_err: Vector3::zeros(),
        trace: vec![0.0],
    };
    UncertaintyBudget { near: vec![z.clone(); k], far: vec![z; k] }
}

/// Caps `cap[i][j]` on the interference group `j` may cause at a user of group `i`:
/// `P_j(|ĥᴴa_j|² + ε_Δh²‖a_j‖²)`, with `P_j` the interfering group's power. Diagonal is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterferenceCaps {
    pub near: Vec<Vec<f64>>,
    pub far: Vec<Vec<f64>>,
}

impl InterferenceCaps {
    pub fn get(&self, id: UserId) -> &[f64] {
        match id.field {
            Field::Near => &self.near[id.group],
            Field::Far => &self.far[id.group],
        }
    }
}

pub fn interference_cap(recon: &CVec, radius: f64, beam: &CVec, power: f64) -> f64 {
    power * (gain(recon, beam) + radius * radius * beam.norm_squared())
}

pub fn interference_caps(budget: &UncertaintyBudget, recon: &GroupChannels, beams: &[CVec], powers: &PowerSplit) -> InterferenceCaps {
    let k = beams.len();
    let row = |id: UserId| -> Vec<f64> {
        (0..k)
            .map(|j| {
                if j == id.group {
                    0.0
                } else {
                    interference_cap(recon.get(id), budget.radius(id), &beams[j], powers.group_powers[j])
                }
            })
            .collect()
    };
    InterferenceCaps {
        near: (0..k).map(|g| row(UserId { group: g, field: Field::Near })).collect(),
        far: (0..k).map(|g| row(UserId { group: g, field: Field::Far })).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry;

    fn geom() -> ArrayGeometry {
        build_geometry(4, 4, 0.005, 2, Vector3::zeros()).unwrap()
    }

    #[test]
    fn xi_vanishes_at_zero() {
        let g = geom();
        assert_eq!(xi_exact(&g, &Vector3::new(10.0, 0.0, 1.0), &Vector3::zeros(), 2.2).unwrap(), 0.0);
    }

    #[test]
    fn theta_orthogonal_is_zero() {
        let g = build_geometry(1, 1, 0.005, 1, Vector3::zeros()).unwrap();
        let p = Vector3::new(3.0, 0.0, 4.0);
        let t = theta_linearized(&g, &p, &Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(t, vec![0.0]);
    }

    #[test]
    fn single_element_omega() {
        let g = build_geometry(1, 1, 0.005, 1, Vector3::zeros()).unwrap();
        let p = Vector3::new(6.0, 0.0, 8.0);
        let (d, eps, a) = (10.0f64, 0.1, 2.2);
        let m = build_bound_matrices(&g, &p, eps, a, None).unwrap();
        let xi = p / d;
        let want = xi * xi.transpose() * ((d - eps).powf(-a / 4.0) * d.powf(-a / 4.0));
        assert!((m.omega - want).norm() < 1e-15);
    }

    #[test]
    fn radius_reaching_element_rejected() {
        let g = geom();
        let e = build_bound_matrices(&g, &Vector3::new(0.05, 0.0, 0.0), 0.06, 2.2, None).unwrap_err();
        assert!(matches!(e, Error::InfeasibleUncertainty { .. }));
    }

    #[test]
    fn zero_radius_zero_bound() {
        let g = geom();
        let (w, _) = solve_worst_position(&g, &Vector3::new(10.0, 0.0, 0.0), 0.0, 2.2, &BoundConfig::default()).unwrap();
        assert_eq!(w.xi_max, 0.0);
        assert_eq!(w.worst_pos_err, Vector3::zeros());
    }

    #[test]
    fn radius_limits() {
        assert_eq!(csi_error_radius(Field::Near, 0.0, 1.0, f64::INFINITY, 3.0, 0.0), 0.0);
        assert_eq!(csi_error_radius(Field::Far, 0.0, 1.0, f64::INFINITY, 3.0, 0.0), 0.0);
    }
}
