//! Unit conversions. Configs carry dB/dBm; everything internal is linear / watts.

/// Propagation speed used for the carrier wavelength (m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w / 1e-3)
}

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(27.0) - 0.501_187_233_627_272_3).abs() < 1e-12);
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-24);
        assert!((db_to_linear(-30.0) - 1e-3).abs() < 1e-15);
        assert!((wavelength(60e9) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn roundtrip() {
        for x in [-80.0, -3.0, 0.0, 27.0, 46.5] {
            assert!((watts_to_dbm(dbm_to_watts(x)) - x).abs() < 1e-10);
        }
    }
}
