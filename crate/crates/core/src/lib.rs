//! Simulation and estimation toolkit for CW ODMR magnetometry with the
//! spin-3/2 silicon vacancy in 4H-SiC.
//!
//! The modules follow the measurement chain:
//!
//! - [`spin_model`]: ground-state Hamiltonian, levels, transition frequencies
//!   and RF coupling strengths.
//! - [`lineshape`]: power-broadened Lorentzian ODMR spectra and sample presets.
//! - [`signal_chain`]: detector, photon shot noise, lock-in demodulation, AM
//!   sweeps and FM field tracking.
//! - [`analysis`]: Lorentzian fits, contrast, shot-noise sensitivity, sensitivity
//!   maps, step-response analysis and ZPL peak ratios.
//! - [`io_formats`]: CSV/JSON file formats, configuration and run manifests.

pub mod analysis;
pub mod consts;
pub mod io_formats;
pub mod lineshape;
pub mod signal_chain;
pub mod spin_model;

pub use analysis::AnalysisError;
pub use io_formats::FormatError;
pub use lineshape::LineshapeError;
pub use signal_chain::SignalError;
pub use spin_model::SpinError;

