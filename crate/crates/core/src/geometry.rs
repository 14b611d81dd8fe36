//! DMA array geometry, user placement and channel synthesis.
//!
//! Frame: the array lies in the x = 0 plane centred on the origin, y is the vertical axis (rows),
//! z the horizontal axis (columns). Users sit in the horizontal x–z plane in front of the array.
//! Element `n = v + h·n_rows` (0-based) is row `v`, column `h`.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::db_to_linear;
use crate::{CVec, C64};

#[derive(Debug, Clone, Serialize)]
pub struct ArrayGeometry {
    pub n_rows: usize,
    pub n_cols: usize,
    pub wavelength: f64,
    pub element_coords: Vec<Vector3<f64>>,
    pub feed_count: usize,
    /// Fixed reference-wave phase of every (element, feed) pair.
    pub phase_mask: DMatrix<C64>,
}

impl ArrayGeometry {
    pub fn n_elements(&self) -> usize {
        self.element_coords.len()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Largest element-to-element distance.
    pub fn aperture(&self) -> f64 {
        let dy = self.wavelength * (self.n_rows as f64 - 1.0) / 2.0;
        let dz = self.wavelength * (self.n_cols as f64 - 1.0) / 2.0;
        dy.hypot(dz)
    }

    /// Near/far boundary 2D²/λ.
    pub fn rayleigh_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength
    }

    /// Effective weights `W = phase_mask ∘ Q`.
    pub fn weights(&self, amplitudes: &DMatrix<f64>) -> DMatrix<C64> {
        assert_eq!(amplitudes.shape(), self.phase_mask.shape());
        self.phase_mask.zip_map(amplitudes, |p, q| p * q)
    }

    fn distances(&self, pos: &Vector3<f64>) -> Result<Vec<f64>> {
        let d: Vec<f64> = self.element_coords.iter().map(|x| (x - pos).norm()).collect();
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateGeometry(format!(
                "position {:?} coincides with an element",
                pos.as_slice()
            )));
        }
        Ok(d)
    }
}

/// Build the element grid and the per-feed reference-wave phase mask.
///
/// Feed `k` (0-based) sees the reference wavevector `m_k·r_s` with the fan multipliers
/// `m_k = (2k + 1 − N_f)/(N_f − 1)` spanning `[−1, 1]` (`m = 1` for a single feed), so the
/// mask entry is `exp(−j m_k r_s·x)`.
pub fn build_geometry(
    n_rows: usize,
    n_cols: usize,
    wavelength: f64,
    feed_count: usize,
    ref_wavevector: Vector3<f64>,
) -> Result<ArrayGeometry> {
    if n_rows == 0 || n_cols == 0 || feed_count == 0 {
        return Err(Error::InvalidConfig(format!(
            "array dimensions must be positive (rows {n_rows}, cols {n_cols}, feeds {feed_count})"
        )));
    }
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::InvalidConfig(format!("wavelength must be positive, got {wavelength}")));
    }
    if ref_wavevector.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidConfig("reference wavevector must be finite".into()));
    }
    let centred = |k: usize, n: usize| wavelength * (2.0 * k as f64 - n as f64 - 1.0) / 4.0;
    let mut coords = Vec::with_capacity(n_rows * n_cols);
    for h in 1..=n_cols {
        for v in 1..=n_rows {
            coords.push(Vector3::new(0.0, centred(v, n_rows), centred(h, n_cols)));
        }
    }
    let fan = |k: usize| {
        if feed_count == 1 {
            1.0
        } else {
            (2.0 * k as f64 + 1.0 - feed_count as f64) / (feed_count as f64 - 1.0)
        }
    };
    let phase_mask = DMatrix::from_fn(coords.len(), feed_count, |n, k| {
        let phase = fan(k) * ref_wavevector.dot(&coords[n]);
        Complex64::from_polar(1.0, -phase)
    });
    Ok(ArrayGeometry { n_rows, n_cols, wavelength, element_coords: coords, feed_count, phase_mask })
}

/// Spherical-wavefront steering vector, entries `exp(−j 2π‖x − p‖/λ)`.
pub fn steering_vector(geom: &ArrayGeometry, pos: &Vector3<f64>) -> Result<CVec> {
    let k = geom.wavenumber();
    let d = geom.distances(pos)?;
    Ok(DVector::from_iterator(d.len(), d.iter().map(|&di| Complex64::from_polar(1.0, -k * di))))
}

/// Distance-based path loss `β = (ζ₀/d₀^α)·d^{−α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    pub zeta0_db: f64,
    pub d0: f64,
    pub alpha: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self { zeta0_db: -30.0, d0: 1.0, alpha: 2.2 }
    }
}

impl PathLossModel {
    /// Linear prefactor `ζ₀/d₀^α`.
    pub fn scale(&self) -> f64 {
        db_to_linear(self.zeta0_db) / self.d0.powf(self.alpha)
    }

    pub fn gain(&self, d: f64) -> f64 {
        self.scale() * d.powf(-self.alpha)
    }
}

pub fn path_loss_vector(geom: &ArrayGeometry, pos: &Vector3<f64>, model: &PathLossModel) -> Result<DVector<f64>> {
    if !(model.alpha > 0.0) || !(model.d0 > 0.0) {
        return Err(Error::InvalidConfig("path-loss exponent and reference distance must be positive".into()));
    }
    let d = geom.distances(pos)?;
    Ok(DVector::from_iterator(d.len(), d.iter().map(|&di| model.gain(di))))
}

/// Line-of-sight channel `√β ∘ a(p)`.
pub fn los_channel(geom: &ArrayGeometry, pos: &Vector3<f64>, model: &PathLossModel) -> Result<CVec> {
    let beta = path_loss_vector(geom, pos, model)?;
    let a = steering_vector(geom, pos)?;
    Ok(a.zip_map(&beta, |ai, b| ai * b.sqrt()))
}

/// LoS channel rebuilt from an estimated position. Uses the same phase convention as
/// [`steering_vector`], so a perfect estimate reproduces the true LoS exactly.
pub fn reconstruct_los(geom: &ArrayGeometry, est_pos: &Vector3<f64>, model: &PathLossModel) -> Result<CVec> {
    los_channel(geom, est_pos, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
pub enum Field {
    Near,
    Far,
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Field::Near => "NU",
            Field::Far => "FU",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct UserId {
    pub group: usize,
    pub field: Field,
}

impl std::fmt::Display for UserId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.field, self.group + 1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct User {
    pub true_pos: Vector3<f64>,
    pub est_pos: Vector3<f64>,
    pub pos_err_radius: f64,
    pub rician_factor: f64,
    /// Norm of the scattered component; zero for near users (NLoS dropped).
    pub nlos_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UserEnsemble {
    pub near: Vec<User>,
    pub far: Vec<User>,
}

impl UserEnsemble {
    pub fn group_count(&self) -> usize {
        self.near.len()
    }

    pub fn user(&self, id: UserId) -> &User {
        match id.field {
            Field::Near => &self.near[id.group],
            Field::Far => &self.far[id.group],
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.group_count())
            .flat_map(|g| [UserId { group: g, field: Field::Near }, UserId { group: g, field: Field::Far }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.near.is_empty() || self.near.len() != self.far.len() {
            return Err(Error::InvalidConfig(format!(
                "need one far user per near user ({} near, {} far)",
                self.near.len(),
                self.far.len()
            )));
        }
        for id in self.ids() {
            let u = self.user(id);
            if !(u.pos_err_radius >= 0.0) {
                return Err(Error::InvalidConfig(format!("{id}: negative position-error radius")));
            }
            if (u.true_pos - u.est_pos).norm() > u.pos_err_radius * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::InvalidConfig(format!("{id}: estimate outside its error ball")));
            }
            if !(u.rician_factor > 0.0) {
                return Err(Error::InvalidConfig(format!("{id}: Rician factor must be positive")));
            }
            if !(u.nlos_norm >= 0.0) {
                return Err(Error::InvalidConfig(format!("{id}: negative NLoS norm")));
            }
        }
        Ok(())
    }
}

/// One row of the near/far-field consistency report.
#[derive(Debug, Clone, Serialize)]
pub struct FieldCheck {
    pub user: UserId,
    pub distance: f64,
    pub rayleigh_distance: f64,
    pub consistent: bool,
}

/// Compare each user's range with the Rayleigh distance: near users should lie inside it, far
/// users outside. Reported rather than enforced — small desk-scale arrays have a Rayleigh
/// distance of centimetres, so "near"/"far" then only name the NOMA roles.
pub fn field_report(geom: &ArrayGeometry, users: &UserEnsemble) -> Vec<FieldCheck> {
    let r = geom.rayleigh_distance();
    users
        .ids()
        .map(|id| {
            let d = users.user(id).true_pos.norm();
            let consistent = match id.field {
                Field::Near => d < r,
                Field::Far => d > r,
            };
            FieldCheck { user: id, distance: d, rayleigh_distance: r, consistent }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    pub group_count: usize,
    pub near_radius: f64,
    pub far_radius: f64,
    /// Users are spread over azimuths in `[−sector, sector]` degrees from broadside.
    pub sector_deg: f64,
    /// Far user azimuth offset from its group direction, uniform in `±jitter` degrees.
    pub pair_jitter_deg: f64,
    pub pos_err_radius: f64,
    pub rician_factor: f64,
    pub nlos_norm: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            group_count: 4,
            near_radius: 10.0,
            far_radius: 15.0,
            sector_deg: 60.0,
            pair_jitter_deg: 3.0,
            pos_err_radius: 0.1,
            rician_factor: 20.0,
            nlos_norm: 1e-4,
        }
    }
}

/// Always consumes the same draws, so sweeping `radius` keeps every other random quantity fixed.
fn uniform_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    let g = Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let g: Vector3<f64> = g;
    let r = radius * rng.random::<f64>().cbrt();
    g.normalize() * r
}

/// Random ring placement. Group directions are stratified over the sector (one uniform draw per
/// equal-width slice) so groups stay angularly separated; each far user shares its group's
/// direction up to a small jitter. Estimates are the true positions plus an error drawn uniformly
/// from the error ball.
pub fn place_users(cfg: &PlacementConfig, rng: &mut ChaCha8Rng) -> Result<UserEnsemble> {
    if cfg.group_count == 0 {
        return Err(Error::InvalidConfig("group count must be at least 1".into()));
    }
    if !(cfg.near_radius > 0.0 && cfg.far_radius > 0.0) {
        return Err(Error::InvalidConfig("ring radii must be positive".into()));
    }
    if !(cfg.pos_err_radius >= 0.0) || !(cfg.rician_factor > 0.0) || !(cfg.nlos_norm >= 0.0) {
        return Err(Error::InvalidConfig("error radius, Rician factor and NLoS norm must be nonnegative".into()));
    }
    let k = cfg.group_count;
    let width = 2.0 * cfg.sector_deg / k as f64;
    let on_ring = |r: f64, deg: f64| {
        let a = deg.to_radians();
        Vector3::new(r * a.cos(), 0.0, r * a.sin())
    };
    let mut near = Vec::with_capacity(k);
    let mut far = Vec::with_capacity(k);
    for g in 0..k {
        let phi = -cfg.sector_deg + width * (g as f64 + rng.random::<f64>());
        let jitter = cfg.pair_jitter_deg * (2.0 * rng.random::<f64>() - 1.0);
        for (list, r, deg, nlos) in [
            (&mut near, cfg.near_radius, phi, 0.0),
            (&mut far, cfg.far_radius, phi + jitter, cfg.nlos_norm),
        ] {
            let true_pos = on_ring(r, deg);
            let est_pos = true_pos + uniform_in_ball(rng, cfg.pos_err_radius);
            list.push(User {
                true_pos,
                est_pos,
                pos_err_radius: cfg.pos_err_radius,
                rician_factor: cfg.rician_factor,
                nlos_norm: nlos,
            });
        }
    }
    Ok(UserEnsemble { near, far })
}

#[derive(Debug, Clone, Serialize)]
pub struct UserChannel {
    pub true_channel: CVec,
    pub recon_los: CVec,
    pub csi_error: CVec,
    pub los_component: CVec,
    pub nlos_component: Option<CVec>,
    pub path_gains: DVector<f64>,
    pub steering: CVec,
}

/// Per-group channel vectors of both users, the common currency of rate evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct GroupChannels {
    pub near: Vec<CVec>,
    pub far: Vec<CVec>,
}

impl GroupChannels {
    pub fn group_count(&self) -> usize {
        self.near.len()
    }

    pub fn get(&self, id: UserId) -> &CVec {
        match id.field {
            Field::Near => &self.near[id.group],
            Field::Far => &self.far[id.group],
        }
    }

    pub fn get_mut(&mut self, id: UserId) -> &mut CVec {
        match id.field {
            Field::Near => &mut self.near[id.group],
            Field::Far => &mut self.far[id.group],
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.group_count())
            .flat_map(|g| [UserId { group: g, field: Field::Near }, UserId { group: g, field: Field::Far }])
    }

    /// Element-wise sum `self + other`.
    pub fn plus(&self, other: &GroupChannels) -> GroupChannels {
        GroupChannels {
            near: self.near.iter().zip(&other.near).map(|(a, b)| a + b).collect(),
            far: self.far.iter().zip(&other.far).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn zeros_like(&self) -> GroupChannels {
        GroupChannels {
            near: self.near.iter().map(|h| CVec::zeros(h.len())).collect(),
            far: self.far.iter().map(|h| CVec::zeros(h.len())).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelSet {
    pub near: Vec<UserChannel>,
    pub far: Vec<UserChannel>,
}

impl ChannelSet {
    pub fn get(&self, id: UserId) -> &UserChannel {
        match id.field {
            Field::Near => &self.near[id.group],
            Field::Far => &self.far[id.group],
        }
    }

    pub fn true_channels(&self) -> GroupChannels {
        GroupChannels {
            near: self.near.iter().map(|c| c.true_channel.clone()).collect(),
            far: self.far.iter().map(|c| c.true_channel.clone()).collect(),
        }
    }

    pub fn recon_channels(&self) -> GroupChannels {
        GroupChannels {
            near: self.near.iter().map(|c| c.recon_los.clone()).collect(),
            far: self.far.iter().map(|c| c.recon_los.clone()).collect(),
        }
    }
}

fn synth_user(
    geom: &ArrayGeometry,
    u: &User,
    model: &PathLossModel,
    field: Field,
    rng: &mut ChaCha8Rng,
) -> Result<UserChannel> {
    let path_gains = path_loss_vector(geom, &u.true_pos, model)?;
    let steering = steering_vector(geom, &u.true_pos)?;
    let los = steering.zip_map(&path_gains, |a, b| a * b.sqrt());
    let k = u.rician_factor;
    let w_los = (k / (1.0 + k)).sqrt();
    let mut h = los.map(|x| x * w_los);
    let nlos = if field == Field::Far {
        let n = geom.n_elements();
        let mut g = CVec::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        });
        let gn = g.norm();
        g *= Complex64::from(u.nlos_norm / gn);
        h += g.map(|x| x / (1.0 + k).sqrt());
        Some(g)
    } else {
        None
    };
    let recon = reconstruct_los(geom, &u.est_pos, model)?;
    let err = &h - &recon;
    Ok(UserChannel {
        true_channel: h,
        recon_los: recon,
        csi_error: err,
        los_component: los,
        nlos_component: nlos,
        path_gains,
        steering,
    })
}

/// True Rician channels (scaled LoS for near users; LoS plus a norm-pinned scattered component for
/// far users), LoS reconstructions from the estimates, and their differences.
pub fn synthesize_channels(
    geom: &ArrayGeometry,
    users: &UserEnsemble,
    model: &PathLossModel,
    rng_seed: u64,
) -> Result<ChannelSet> {
    users.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut near = Vec::new();
    let mut far = Vec::new();
    for g in 0..users.group_count() {
        near.push(synth_user(geom, &users.near[g], model, Field::Near, &mut rng)?);
        far.push(synth_user(geom, &users.far[g], model, Field::Far, &mut rng)?);
    }
    Ok(ChannelSet { near, far })
}
