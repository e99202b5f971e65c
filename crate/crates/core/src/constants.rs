//! CODATA 2018 exact or recommended values, SI units.

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum (m/s).
pub const C: f64 = 299_792_458.0;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Atomic mass constant (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mean molecular mass of dry air (u).
pub const AIR_MOLECULAR_MASS_U: f64 = 28.97;
/// Pascal per millibar.
pub const PA_PER_MBAR: f64 = 100.0;
