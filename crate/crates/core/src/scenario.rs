//! Scenario assembly from plain parameters.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_geometry, place_users, synthesize_channels, PathLossModel, PlacementConfig};
use crate::pipeline::Scenario;
use crate::rate::SystemParams;
use crate::units::{dbm_to_watts, wavelength};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub rows: usize,
    pub cols: usize,
    pub feeds: usize,
    pub carrier_hz: f64,
    /// Reference-wave wavenumber along the array's horizontal axis, as a fraction of 2π/λ.
    pub ref_wave_fraction: f64,
    pub placement: PlacementConfig,
    pub path_loss: PathLossModel,
    pub power_dbm: f64,
    pub noise_dbm: f64,
    pub omega: f64,
    pub gamma_n: f64,
    pub gamma_f: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 8,
            feeds: 4,
            carrier_hz: 60e9,
            ref_wave_fraction: 0.75,
            placement: PlacementConfig::default(),
            path_loss: PathLossModel::default(),
            power_dbm: 27.0,
            noise_dbm: -80.0,
            omega: 0.5,
            gamma_n: 0.5,
            gamma_f: 0.5,
        }
    }
}

impl ScenarioConfig {
    /// Small instance for quick checks: 4×4 elements, 4 feeds, 2 groups.
    pub fn desk() -> Self {
        Self { rows: 4, cols: 4, placement: PlacementConfig { group_count: 2, ..PlacementConfig::default() }, ..Self::default() }
    }

    pub fn n_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(Error::InvalidConfig("carrier frequency must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::InvalidConfig(format!("near-user weight must lie in [0, 1], got {}", self.omega)));
        }
        if !(self.gamma_n >= 0.0 && self.gamma_f >= 0.0) {
            return Err(Error::InvalidConfig("rate targets must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Geometry, users and channels for one seed. Placement and small-scale fading use independent
/// streams derived from the seed.
pub fn build_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let lambda = wavelength(cfg.carrier_hz);
    let k0 = 2.0 * std::f64::consts::PI / lambda;
    let geom = build_geometry(cfg.rows, cfg.cols, lambda, cfg.feeds, Vector3::new(0.0, 0.0, cfg.ref_wave_fraction * k0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = place_users(&cfg.placement, &mut rng)?;
    let channels = synthesize_channels(&geom, &users, &cfg.path_loss, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let k = cfg.placement.group_count;
    Ok(Scenario {
        geom,
        users,
        channels,
        model: cfg.path_loss,
        sys: SystemParams::uniform(k, dbm_to_watts(cfg.noise_dbm), cfg.omega, cfg.gamma_n, cfg.gamma_f),
        total_power: dbm_to_watts(cfg.power_dbm),
    })
}
