//! Walsh-domain neural-network digital predistortion workbench.
//!
//! The crate covers the whole linearization chain on a surrogate power
//! amplifier: multicarrier stimulus generation ([`signal`]), the
//! sequency-ordered Walsh-Hadamard transform ([`walsh`]), a memory-polynomial
//! PA ([`pa_model`]), a from-scratch residual MLP with Adam training
//! ([`nn`]), behavioral-modelling datasets ([`behavioral`]), indirect-learning
//! and knowledge-distillation predistorters ([`dpd`]) and the figures of
//! merit used to compare them ([`metrics`]).

pub mod behavioral;
pub mod dpd;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pa_model;
pub mod seed;
pub mod signal;
pub mod walsh;

pub use error::{Result, WdpdError};
pub use num_complex::Complex64;
pub use signal::IqWaveform;
