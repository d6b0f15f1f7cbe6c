//! Disorder-induced dephasing of EIT quantum memories.
//!
//! Inhomogeneous detuning and light-atom coupling imprint a random Berry phase on
//! each Fock component of a stored state. This crate samples that disorder,
//! evaluates the phase exactly and to first order, and turns it into single-cycle
//! fidelities, multi-cycle device reliabilities, detuning-calibration errors and the
//! capacity / storage-time / driving-time trade-off.

pub mod admissibility;
pub mod berry;
pub mod disorder;
pub mod error;
pub mod fidelity;
pub mod fock;
pub mod metrology;
pub mod pulse;
pub mod quadrature;
pub mod reliability;
pub mod runner;

pub use berry::{build_phase_model, PhaseModel, Protocol};
pub use disorder::{sample_realization, DisorderRealization, RealizationStats, SystemParams};
pub use error::{Error, Result};
pub use fidelity::{FidelityMethod, FidelityResult};
pub use fock::{make_cat, make_coherent, make_fock, make_uniform, photon_stats, PhotonStats, StoredState};
pub use pulse::{pulse_factors, PulseConvention, PulseFactors, PulseProfile};
