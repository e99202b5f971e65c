//! Simulation and Wigner tomography of a levitated nanoparticle under
//! continuous homodyne detection.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! bottom of this file fix the scalar to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod constants;
pub mod detection;
pub mod dynamics;
mod error;
pub mod io;
pub mod lm;
pub mod physics;
mod scalar;
pub mod spectral;
pub mod tomography;

pub use config::ExperimentConfig;
pub use detection::{
    compare_noise_floor, detect_exact, detect_linear, invert_counts, CalibratedPositions, Calibration,
    CountModel, CountRecord, DetectionParams, LinearConstants, NoiseFloorComparison, Scheme,
};
pub use dynamics::{
    oracle_marginals, simulate_coherent, simulate_thermal, OracleMarginals, OracleScale, StateKind,
    Trajectory,
};
pub use error::{Error, Result};
pub use physics::{
    calibrate_waist, decoherence_curve, decoherence_knee, decoherence_time, derive, DerivedQuantities,
};
pub use scalar::{trapezoid, Real};
pub use spectral::{estimate_psd, fit_lorentzian, FitWindow, LorentzianFit, Psd, PsdOptions};
pub use tomography::{analyze, bin_marginals, inverse_radon, project_marginal, MarginalSet, WignerGrid, WignerReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Config = ExperimentConfig<f64>;
pub type Derived = DerivedQuantities<f64>;
pub type Traj = Trajectory<f64>;
pub type Counts = CountRecord<f64>;
pub type Spectrum = Psd<f64>;
pub type Fit = LorentzianFit<f64>;
pub type Marginals = MarginalSet<f64>;
pub type Wigner = WignerGrid<f64>;
