//! Closed-form trap, scattering, decoherence and cavity-correspondence quantities.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::constants::{AIR_MOLECULAR_MASS_U, AMU, C, HBAR, K_B, PA_PER_MBAR};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Quantities that follow from an [`ExperimentConfig`] without simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DerivedQuantities<T> {
    pub epsilon_c: T,
    pub volume_m3: T,
    pub mass_kg: T,
    pub z_r_m: T,
    pub wavenumber_per_m: T,
    pub omega_laser_rad_s: T,
    pub omega_s_rad_s: T,
    pub omega_x_rad_s: T,
    pub omega_y_rad_s: T,
    pub cross_section_m2: T,
    pub gamma_scatter_per_s: T,
    #[serde(rename = "Gamma_loc_per_m2_s")]
    pub gamma_loc_per_m2_s: T,
    pub z_zpf_m: T,
    pub g0_over_kappa: T,
    /// Gas damping rate (full linewidth in rad/s) of the axial motion.
    pub gas_damping_per_s: T,
}

impl<T: Real> DerivedQuantities<T> {
    /// Stationary position variance `k_B T / (m omega_s^2)` of the axial mode.
    pub fn thermal_variance(&self, temperature: T) -> T {
        T::lit(K_B) * temperature / (self.mass_kg * self.omega_s_rad_s * self.omega_s_rad_s)
    }
}

fn epsilon_c<T: Real>(epsilon_r: T) -> T {
    T::lit(3.0) * (epsilon_r - T::one()) / (epsilon_r + T::lit(2.0))
}

fn rayleigh_range<T: Real>(waist: T, wavelength: T) -> T {
    T::PI() * waist * waist / wavelength
}

/// Gas damping from kinetic theory in the free-molecular regime:
/// `xi = 15.8 r^2 p / (m v_gas)` with `v_gas = sqrt(3 k_B T / m_gas)`.
pub fn gas_damping_rate<T: Real>(config: &ExperimentConfig<T>, mass: T) -> T {
    let m_gas = T::lit(AIR_MOLECULAR_MASS_U * AMU);
    let v_gas = (T::lit(3.0 * K_B) * config.temperature / m_gas).sqrt();
    let p = config.pressure_mbar * T::lit(PA_PER_MBAR);
    T::lit(15.8) * config.particle_radius * config.particle_radius * p / (mass * v_gas)
}

/// Evaluates every closed-form quantity for a configuration.
pub fn derive<T: Real>(config: &ExperimentConfig<T>) -> Result<DerivedQuantities<T>> {
    config.validate()?;
    let pi = T::PI();
    let c = T::lit(C);
    let hbar = T::lit(HBAR);
    let lambda = config.wavelength;

    let eps_c = epsilon_c(config.epsilon_r);
    let r = config.particle_radius;
    let volume = T::lit(4.0 / 3.0) * pi * r * r * r;
    let mass = config.density * volume;
    let z_r = rayleigh_range(config.waist, lambda);
    let k = T::lit(2.0) * pi / lambda;
    let omega_l = T::lit(2.0) * pi * c / lambda;

    let omega_s = (T::lit(2.0) * eps_c * config.power / (config.density * c * lambda * z_r.powi(3)))
        .sqrt();
    let omega_xy = omega_s * z_r * T::SQRT_2() / config.waist;

    let cross_section = if config.rayleigh_standard_form {
        T::lit(8.0) * pi.powi(3) * eps_c * eps_c * volume * volume / (T::lit(3.0) * lambda.powi(4))
    } else {
        T::lit(8.0) * pi.powi(3) * eps_c * volume * volume / lambda.powi(4)
    };
    let gamma = cross_section / (pi * config.waist * config.waist) * config.power / (hbar * omega_l);
    let gamma_loc = T::lit(12.0) * pi * pi * gamma / (T::lit(5.0) * lambda * lambda);
    let z_zpf = (hbar / (T::lit(2.0) * mass * omega_s)).sqrt();
    let g0_over_kappa = T::lit(4.0) * pi * z_zpf / lambda;

    Ok(DerivedQuantities {
        epsilon_c: eps_c,
        volume_m3: volume,
        mass_kg: mass,
        z_r_m: z_r,
        wavenumber_per_m: k,
        omega_laser_rad_s: omega_l,
        omega_s_rad_s: omega_s,
        omega_x_rad_s: omega_xy,
        omega_y_rad_s: omega_xy,
        cross_section_m2: cross_section,
        gamma_scatter_per_s: gamma,
        gamma_loc_per_m2_s: gamma_loc,
        z_zpf_m: z_zpf,
        g0_over_kappa,
        gas_damping_per_s: gas_damping_rate(config, mass),
    })
}

/// Beam waist that places the axial trap frequency at `target_omega_s`.
pub fn calibrate_waist<T: Real>(target_omega_s: T, config: &ExperimentConfig<T>) -> Result<T> {
    config.validate()?;
    if !(target_omega_s.is_finite() && target_omega_s > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "target omega_s must be > 0, got {target_omega_s}"
        )));
    }
    let eps_c = epsilon_c(config.epsilon_r);
    let lambda = config.wavelength;
    let z_r = (T::lit(2.0) * eps_c * config.power
        / (config.density * T::lit(C) * lambda * target_omega_s * target_omega_s))
        .cbrt();
    Ok((lambda * z_r / T::PI()).sqrt())
}

/// Decoherence time `1 / (gamma tanh(Gamma dz^2 / gamma))` of a superposition
/// of size `delta_z`. Returns `+inf` at `delta_z == 0`.
pub fn decoherence_time<T: Real>(delta_z: T, dq: &DerivedQuantities<T>) -> Result<T> {
    if !(delta_z >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "superposition size must be >= 0, got {delta_z}"
        )));
    }
    let gamma = dq.gamma_scatter_per_s;
    let rate = gamma * (dq.gamma_loc_per_m2_s * delta_z * delta_z / gamma).tanh();
    Ok(if rate == T::zero() {
        T::infinity()
    } else {
        rate.recip()
    })
}

/// Pointwise [`decoherence_time`] over a strictly increasing grid.
pub fn decoherence_curve<T: Real>(
    delta_z_grid: &[T],
    dq: &DerivedQuantities<T>,
) -> Result<Vec<(T, T)>> {
    if delta_z_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "decoherence grid must be strictly increasing".into(),
        ));
    }
    delta_z_grid
        .iter()
        .map(|&dz| decoherence_time(dz, dq).map(|tau| (dz, tau)))
        .collect()
}

/// Superposition size where `Gamma dz^2 = gamma`, the crossover between the
/// quadratic and saturated regimes.
pub fn decoherence_knee<T: Real>(dq: &DerivedQuantities<T>) -> T {
    (dq.gamma_scatter_per_s / dq.gamma_loc_per_m2_s).sqrt()
}

/// Steady-state intracavity amplitude `2 e^{-1/2} (E/kappa) exp(i (g0/kappa) z / z_zpf)`
/// of the equivalent lossy cavity.
pub fn cavity_field_amplitude<T: Real>(
    z: T,
    e_drive: T,
    kappa: T,
    dq: &DerivedQuantities<T>,
) -> Result<Complex<T>> {
    if !(kappa > T::zero()) {
        return Err(Error::InvalidArgument(format!("kappa must be > 0, got {kappa}")));
    }
    let modulus = T::lit(2.0) * T::lit(-0.5).exp() * e_drive / kappa;
    let phase = dq.g0_over_kappa * z / dq.z_zpf_m;
    Ok(Complex::from_polar(modulus, phase))
}
