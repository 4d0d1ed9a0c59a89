//! Quantum-trajectory simulation of a coherently prepared optical cavity whose
//! photon detections trigger instantaneous displacement feedback, together with
//! the estimators used to turn trajectory ensembles into phase-estimation
//! accuracies.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod fock;
pub mod kraus;
pub mod params;
pub mod scaling;
pub mod trajectory;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use params::{CavityParams, CoherentAmplitude};
