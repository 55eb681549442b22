//! Joint numerical/language diffusion for mixed-type tabular data.
//!
//! Numerical columns follow a variance-exploding continuous diffusion with a
//! per-feature power-mean noise schedule; categorical and free-text columns
//! follow an absorbing-state masked diffusion. Both share one time variable
//! and are denoised by a single bidirectional transformer whose numeric
//! positions are read and written through a frozen float codec and trainable
//! projectors.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, configuration and the command line live in the
//! companion `tabmix` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod datasets;
pub mod diffusion;
pub mod error;
pub mod mdlm;
pub mod metrics;
pub mod nn;
pub mod numcodec;
pub mod rng;
pub mod scalar;
pub mod schedules;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
pub use scalar::Scalar;
