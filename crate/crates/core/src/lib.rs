//! Forced-oscillation source localization in wind farms.
//!
//! A farm of swing-equation turbines is simulated (or read from CSV), a
//! candidate set of forcing frequencies is extracted from the spectrum, a
//! library of polynomial and sinusoidal terms is regressed against the state
//! derivatives with a bootstrap ensemble of sparse fits, and the turbines whose
//! sinusoidal coefficients stand out are reported as sources.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod library;
pub mod locate;
pub mod pipeline;
pub mod regression;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
