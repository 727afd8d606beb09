//! Monte Carlo simulator for the fidelity and device-to-device variability
//! of silicon MOS two-qubit entangling gates under random interface charge
//! traps (random telegraph noise) and quasi-static nuclear dephasing.

pub mod config;
pub mod constants;
pub mod device_model;
pub mod error;
pub mod experiment_stats;
pub mod noise_processes;
pub mod output;
pub mod quadrature;
pub mod trajectory_engine;
pub mod trap_ensemble;

pub use error::{Error, Result};
