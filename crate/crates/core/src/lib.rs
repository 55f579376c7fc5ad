//! Affine filter bank modulation (AFBM) with an AFDM baseline.
//!
//! The crate is organised bottom-up:
//!
//! * [`chirp_transforms`]: DFT, chirp diagonals, DAFT, pruned DAFT, the
//!   zero-padding selector and the composite modulator block `Q_P`.
//! * [`prototype_filters`]: PHYDYAS, truncated Hermite and rectangular
//!   prototypes plus their block and frame matrices.
//! * [`afbm_modem`]: symbol mapping, compensation, modulation, demodulation
//!   and the effective channels. [`afbm_modem::Modem`] wraps AFBM and the
//!   AFDM baseline behind one interface.
//! * [`dd_channel`]: the doubly-dispersive channel and noise.
//! * [`gabp_detector`]: GaBP data detection and LMMSE baselines.
//! * [`pda_sensing`]: PDA-EM sparse delay-Doppler estimation.
//! * [`metrics`]: PAPR, PSD, ambiguity function, BER and RMSE.
//! * [`sim_harness`]: experiment configuration, Monte-Carlo runners and the
//!   CSV writers behind the `afbm-sim` binary.

pub mod afbm_modem;
pub mod chirp_transforms;
pub mod dd_channel;
pub mod error;
pub mod gabp_detector;
pub mod metrics;
pub mod pda_sensing;
pub mod prototype_filters;
pub mod sim_harness;

pub use error::{AfbmError, Result};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;
