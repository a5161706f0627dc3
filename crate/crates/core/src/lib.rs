//! Secret-key rates for entanglement-based continuous-variable QKD between two
//! ground stations linked through a reflecting satellite.
//!
//! The pipeline is: a two-mode squeezed vacuum at station A ([`gaussian`]),
//! one mode sent over an uplink and a downlink with beam-wander fading
//! ([`fading`]), averaging or post-selecting over the combined transmittance
//! ([`combined`]), and the Gaussian lower bound on the key rate ([`keyrate`]).
//! [`sweep`] evaluates grids of configurations and writes CSV tables.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combined;
pub mod error;
pub mod fading;
pub mod gaussian;
pub mod keyrate;
pub mod quadrature;
pub mod special;
pub mod sweep;

pub use combined::{CombinedChannel, Estimator, PostSelection, Scheme};
pub use error::{Error, Result};
pub use fading::{BeamWanderChannel, Link};
pub use gaussian::{Squeezing, SymplecticSpectrum, TwoModeCM};
pub use keyrate::{key_rate, KeyRateBreakdown, Protocol};
