//! Robust beamforming for near-field DMA-NOMA downlinks.
//!
//! Pipeline: geometry and channels → CSI-error radii from position-error balls → alternating
//! worst-case CSI / digital (SDR) / DMA amplitude (SCA) updates → closed-form NOMA power
//! allocation, repeated until the worst-case weighted sum rate settles.

pub mod beamforming;
pub mod error;
pub mod geometry;
pub mod pipeline;
pub mod power;
pub mod rate;
pub mod scenario;
pub mod uncertainty;
pub mod units;
pub mod worst_case;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use nfbf_conic::VERSION as CONIC_VERSION;
