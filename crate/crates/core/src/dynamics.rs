//! Axial motion of the trapped particle.
//!
//! Thermal trajectories integrate the underdamped Langevin equation
//!
//! ```text
//! z'' = -omega^2 z - xi z' + sqrt(2 xi k_B T / m) eta(t)
//! ```
//!
//! with the exact Gaussian transition of the linear `(z, z')` system, so the
//! stationary statistics do not depend on the sample rate.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::constants::K_B;
use crate::error::{Error, Result};
use crate::physics::DerivedQuantities;
use crate::scalar::Real;

/// Minimum number of samples per oscillation period accepted by the simulators.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 10.0;
/// Minimum total sample count of a simulated record.
pub const MIN_SAMPLES: usize = 64;
/// Burn-in length in damping times.
pub const BURN_IN_DAMPING_TIMES: f64 = 10.0;
pub const MAX_BURN_IN_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Thermal,
    Coherent,
    Fock1,
    Custom,
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateKind::Thermal => "thermal",
            StateKind::Coherent => "coherent",
            StateKind::Fock1 => "fock1",
            StateKind::Custom => "custom",
        })
    }
}

impl FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "thermal" => Ok(StateKind::Thermal),
            "coherent" => Ok(StateKind::Coherent),
            "fock1" => Ok(StateKind::Fock1),
            "custom" => Ok(StateKind::Custom),
            _ => Err(Error::UnknownState(s.to_string())),
        }
    }
}

/// Uniformly sampled axial position record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T> {
    pub sample_rate_hz: T,
    pub z_m: Vec<T>,
    pub t0_s: T,
    pub seed: Option<u64>,
    pub state_kind: StateKind,
}

impl<T: Real> Trajectory<T> {
    pub fn new(sample_rate_hz: T, t0_s: T, z_m: Vec<T>, state_kind: StateKind) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be > 0, got {sample_rate_hz}"
            )));
        }
        if z_m.len() < 2 {
            return Err(Error::TooFewSamples {
                got: z_m.len(),
                required: 2,
            });
        }
        Ok(Trajectory {
            sample_rate_hz,
            z_m,
            t0_s,
            seed: None,
            state_kind,
        })
    }

    pub fn len(&self) -> usize {
        self.z_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_m.is_empty()
    }

    pub fn dt(&self) -> T {
        self.sample_rate_hz.recip()
    }

    /// Time of sample `i`. Computed in `f64` to keep phase accuracy.
    pub fn time_f64(&self, i: usize) -> f64 {
        self.t0_s.f64() + i as f64 / self.sample_rate_hz.f64()
    }

    pub fn duration(&self) -> T {
        T::from_usize_lossy(self.len()) / self.sample_rate_hz
    }
}

/// Linear damped oscillator driven by white thermal force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillator {
    pub omega: f64,
    /// Energy damping rate `xi` (rad/s).
    pub damping: f64,
    pub mass: f64,
    pub temperature: f64,
}

/// Exact one-step transition `x_{n+1} = M x_n + L eta`, `eta ~ N(0, I)`.
#[derive(Debug, Clone, Copy)]
struct Propagator {
    m: [[f64; 2]; 2],
    chol: [[f64; 2]; 2],
}

impl Oscillator {
    pub fn position_variance(&self) -> f64 {
        K_B * self.temperature / (self.mass * self.omega * self.omega)
    }

    pub fn velocity_variance(&self) -> f64 {
        K_B * self.temperature / self.mass
    }

    fn propagator(&self, h: f64) -> Propagator {
        let (w, xi) = (self.omega, self.damping);
        let half = 0.5 * xi;
        let disc = w * w - half * half;
        let (c, s) = if disc > 0.0 {
            let wd = disc.sqrt();
            ((wd * h).cos(), (wd * h).sin() / wd)
        } else if disc < 0.0 {
            let wd = (-disc).sqrt();
            ((wd * h).cosh(), (wd * h).sinh() / wd)
        } else {
            (1.0, h)
        };
        let e = (-half * h).exp();
        let m = [
            [e * (c + s * half), e * s],
            [-e * s * w * w, e * (c - s * half)],
        ];
        let (sz, sv) = (self.position_variance(), self.velocity_variance());
        let q11 = sz - (m[0][0] * m[0][0] * sz + m[0][1] * m[0][1] * sv);
        let q12 = -(m[0][0] * m[1][0] * sz + m[0][1] * m[1][1] * sv);
        let q22 = sv - (m[1][0] * m[1][0] * sz + m[1][1] * m[1][1] * sv);
        let l11 = q11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { q12 / l11 } else { 0.0 };
        let l22 = (q22 - l21 * l21).max(0.0).sqrt();
        Propagator {
            m,
            chol: [[l11, 0.0], [l21, l22]],
        }
    }

    /// Integrates `n` samples at `rate` starting from `(z0, v0)` after
    /// discarding `burn_in` steps. Sample 0 is the state after burn-in.
    pub fn integrate<T: Real>(
        &self,
        initial: (f64, f64),
        n: usize,
        rate: f64,
        burn_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<T> {
        let p = self.propagator(1.0 / rate);
        let noisy = p.chol[0][0] > 0.0 || p.chol[1][1] > 0.0;
        let (mut z, mut v) = initial;
        let mut step = |z: &mut f64, v: &mut f64| {
            let (e1, e2) = if noisy {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                (a, b)
            } else {
                (0.0, 0.0)
            };
            let nz = p.m[0][0] * *z + p.m[0][1] * *v + p.chol[0][0] * e1;
            let nv = p.m[1][0] * *z + p.m[1][1] * *v + p.chol[1][0] * e1 + p.chol[1][1] * e2;
            *z = nz;
            *v = nv;
        };
        for _ in 0..burn_in {
            step(&mut z, &mut v);
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(T::lit(z));
            step(&mut z, &mut v);
        }
        out
    }
}

fn check_sampling(omega_s: f64, duration_s: f64, sample_rate_hz: f64) -> Result<usize> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) || !(duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration and sample rate must be > 0 (got {duration_s} s, {sample_rate_hz} Hz)"
        )));
    }
    let required = MIN_SAMPLES_PER_PERIOD * omega_s / (2.0 * std::f64::consts::PI);
    if sample_rate_hz < required {
        return Err(Error::SampleRateTooLow {
            got: sample_rate_hz,
            required,
        });
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: n,
            required: MIN_SAMPLES,
        });
    }
    Ok(n)
}

/// Stationary thermal motion at the configured mode temperature.
pub fn simulate_thermal<T: Real>(
    config: &ExperimentConfig<T>,
    dq: &DerivedQuantities<T>,
    duration_s: T,
    sample_rate_hz: T,
    seed: u64,
) -> Result<Trajectory<T>> {
    let osc = Oscillator {
        omega: dq.omega_s_rad_s.f64(),
        damping: dq.gas_damping_per_s.f64(),
        mass: dq.mass_kg.f64(),
        temperature: config.motion_temperature().f64(),
    };
    let rate = sample_rate_hz.f64();
    let n = check_sampling(osc.omega, duration_s.f64(), rate)?;
    let burn_in = if osc.damping > 0.0 {
        ((BURN_IN_DAMPING_TIMES / osc.damping) * rate)
            .ceil()
            .min(MAX_BURN_IN_SAMPLES as f64) as usize
    } else {
        0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z0: f64 = StandardNormal.sample(&mut rng);
    let v0: f64 = StandardNormal.sample(&mut rng);
    let initial = (
        z0 * osc.position_variance().sqrt(),
        v0 * osc.velocity_variance().sqrt(),
    );
    let z = osc.integrate(initial, n, rate, burn_in, &mut rng);
    let mut traj = Trajectory::new(sample_rate_hz, T::zero(), z, StateKind::Thermal)?;
    traj.seed = Some(seed);
    Ok(traj)
}

/// Noise-free oscillation `a cos(omega_s t + phase)`.
pub fn simulate_coherent<T: Real>(
    dq: &DerivedQuantities<T>,
    amplitude_m: T,
    phase_rad: T,
    duration_s: T,
    sample_rate_hz: T,
) -> Result<Trajectory<T>> {
    if !(amplitude_m >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "amplitude must be >= 0, got {amplitude_m}"
        )));
    }
    let omega = dq.omega_s_rad_s.f64();
    let rate = sample_rate_hz.f64();
    let n = check_sampling(omega, duration_s.f64(), rate)?;
    let (a, phi) = (amplitude_m.f64(), phase_rad.f64());
    let z = (0..n)
        .map(|i| T::lit(a * (omega * (i as f64 / rate) + phi).cos()))
        .collect();
    Trajectory::new(sample_rate_hz, T::zero(), z, StateKind::Coherent)
}

/// Length scales of the analytic reference states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OracleScale<T> {
    /// Position variance of the thermal state.
    pub thermal_variance: T,
    /// Ground-state rms width `z_zpf`.
    pub z_zpf: T,
    pub coherent_amplitude: T,
    pub coherent_phase: T,
}

impl<T: Real> OracleScale<T> {
    pub fn from_derived(dq: &DerivedQuantities<T>, temperature: T) -> Self {
        OracleScale {
            thermal_variance: dq.thermal_variance(temperature),
            z_zpf: dq.z_zpf_m,
            coherent_amplitude: T::zero(),
            coherent_phase: T::zero(),
        }
    }

    /// Fock-state length unit `s = sqrt(2) z_zpf`; in units of `s` the
    /// ground-state density is `exp(-u^2)/sqrt(pi)`.
    pub fn natural_length(&self) -> T {
        T::SQRT_2() * self.z_zpf
    }
}

/// Exact quadrature densities of reference states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OracleMarginals<T> {
    pub state_kind: StateKind,
    pub angles_rad: Vec<T>,
    pub z_grid_m: Vec<T>,
    /// `densities[a][j]` is the density at `z_grid_m[j]` for `angles_rad[a]`.
    pub densities: Vec<Vec<T>>,
}

fn gaussian<T: Real>(z: T, mean: T, variance: T) -> T {
    let d = z - mean;
    (-(d * d) / (T::lit(2.0) * variance)).exp() / (T::lit(2.0) * T::PI() * variance).sqrt()
}

pub fn oracle_marginals<T: Real>(
    state_kind: StateKind,
    angles: &[T],
    z_grid: &[T],
    scale: &OracleScale<T>,
) -> Result<OracleMarginals<T>> {
    let two_pi = T::TAU();
    if let Some(a) = angles.iter().find(|&&a| !(a >= T::zero() && a < two_pi)) {
        return Err(Error::InvalidArgument(format!("angle {a} outside [0, 2pi)")));
    }
    if z_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "position grid must be strictly increasing".into(),
        ));
    }
    let densities = match state_kind {
        StateKind::Thermal => {
            let row: Vec<T> = z_grid
                .iter()
                .map(|&z| gaussian(z, T::zero(), scale.thermal_variance))
                .collect();
            vec![row; angles.len()]
        }
        StateKind::Coherent => {
            let var = scale.z_zpf * scale.z_zpf;
            angles
                .iter()
                .map(|&th| {
                    let centre = scale.coherent_amplitude * (th + scale.coherent_phase).cos();
                    z_grid.iter().map(|&z| gaussian(z, centre, var)).collect()
                })
                .collect()
        }
        StateKind::Fock1 => {
            let s = scale.natural_length();
            let norm = T::lit(2.0) / (T::PI().sqrt() * s);
            let row: Vec<T> = z_grid
                .iter()
                .map(|&z| {
                    let u = z / s;
                    norm * u * u * (-(u * u)).exp()
                })
                .collect();
            vec![row; angles.len()]
        }
        StateKind::Custom => return Err(Error::UnknownState("custom".into())),
    };
    Ok(OracleMarginals {
        state_kind,
        angles_rad: angles.to_vec(),
        z_grid_m: z_grid.to_vec(),
        densities,
    })
}
