//! Photodetection of the scattered-light interference.
//!
//! A single-detector homodyne (CH) counts
//! `P/2 (A^2 + B^2 + 2AB cos(dphi - 2kz))` photons per window and the balanced
//! scheme (CBH) counts the difference of two arms, `P 2AB cos(dphi - 2kz)`,
//! with `P = c eps0 sigma_d T / (hbar omega_L)`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::constants::{C, EPSILON_0, HBAR};
use crate::dynamics::{StateKind, Trajectory};
use crate::error::{Error, Result};
use crate::physics::DerivedQuantities;
use crate::scalar::{mean, variance, Real};
use crate::spectral::{self, FitWindow, NoiseReport, PsdOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ch,
    Cbh,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ch => "ch",
            Scheme::Cbh => "cbh",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ch" => Ok(Scheme::Ch),
            "cbh" => Ok(Scheme::Cbh),
            _ => Err(Error::InvalidArgument(format!("unknown scheme `{s}`"))),
        }
    }
}

/// Default ratio between the largest interferometric phase excursion `|2kz|`
/// and the distance of `dphi` from the nearest multiple of pi.
pub const DEFAULT_LINEARITY_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DetectionParams<T> {
    pub scheme: Scheme,
    #[serde(rename = "A")]
    pub amp_a: T,
    #[serde(rename = "B")]
    pub amp_b: T,
    pub delta_phi_rad: T,
    pub sigma_d_m2: T,
    pub t_int_s: T,
    pub k_rad_per_m: T,
    pub omega_laser_rad_s: T,
    pub shot_noise: bool,
    pub electronic_noise_counts_rms: T,
    pub linearity_ratio: T,
    pub seed: u64,
}

impl<T: Real> DetectionParams<T> {
    pub fn from_config(
        config: &ExperimentConfig<T>,
        dq: &DerivedQuantities<T>,
        scheme: Scheme,
        seed: u64,
    ) -> Self {
        DetectionParams {
            scheme,
            amp_a: config.field_amp_a,
            amp_b: config.field_amp_b,
            delta_phi_rad: config.delta_phi(),
            sigma_d_m2: config.detector_area,
            t_int_s: config.integration_time,
            k_rad_per_m: dq.wavenumber_per_m,
            omega_laser_rad_s: dq.omega_laser_rad_s,
            shot_noise: config.shot_noise,
            electronic_noise_counts_rms: config.electronic_noise_counts_rms,
            linearity_ratio: T::lit(DEFAULT_LINEARITY_RATIO),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_int_s > T::zero() && self.sigma_d_m2 > T::zero()) {
            return Err(Error::InvalidArgument(
                "integration time and detector area must be > 0".into(),
            ));
        }
        if !(self.amp_a >= T::zero() && self.amp_b >= T::zero()) {
            return Err(Error::InvalidArgument("field amplitudes must be >= 0".into()));
        }
        if !(self.electronic_noise_counts_rms >= T::zero()) {
            return Err(Error::InvalidArgument("electronic noise rms must be >= 0".into()));
        }
        Ok(())
    }

    /// Photon-number conversion `c eps0 sigma_d T / (hbar omega_L)`.
    pub fn photon_factor(&self) -> T {
        T::lit(C * EPSILON_0) * self.sigma_d_m2 * self.t_int_s
            / (T::lit(HBAR) * self.omega_laser_rad_s)
    }

    /// Noise-free count for a window whose representative position is `z`.
    pub fn exact_count(&self, z: T) -> T {
        let p = self.photon_factor();
        let (a, b) = (self.amp_a, self.amp_b);
        let fringe = (self.delta_phi_rad - T::lit(2.0) * self.k_rad_per_m * z).cos();
        match self.scheme {
            Scheme::Ch => p * T::lit(0.5) * (a * a + b * b + T::lit(2.0) * a * b * fringe),
            Scheme::Cbh => p * T::lit(2.0) * a * b * fringe,
        }
    }

    /// Expected counts of the two balanced arms, `(I1, I2)`.
    pub fn arm_counts(&self, z: T) -> (T, T) {
        let p = self.photon_factor() * T::lit(0.5);
        let (a, b) = (self.amp_a, self.amp_b);
        let cross = T::lit(2.0) * a * b
            * (self.delta_phi_rad - T::lit(2.0) * self.k_rad_per_m * z).cos();
        (p * (a * a + b * b + cross), p * (a * a + b * b - cross))
    }

    pub fn linear_constants(&self) -> LinearConstants<T> {
        let p = self.photon_factor();
        let ab = self.amp_a * self.amp_b;
        LinearConstants {
            c1: p * T::lit(0.5) * (self.amp_a * self.amp_a + self.amp_b * self.amp_b),
            c2: p * ab * self.delta_phi_rad.cos(),
            d: p * T::lit(2.0) * self.k_rad_per_m * ab * self.delta_phi_rad.sin(),
        }
    }

    /// Largest `|2kz|` admitted by the linear model: `ratio * min_n |dphi - n pi|`.
    pub fn linearity_threshold(&self) -> T {
        let pi = T::PI();
        let r = self.delta_phi_rad - (self.delta_phi_rad / pi).round() * pi;
        self.linearity_ratio * r.abs()
    }
}

/// Taylor coefficients of the CH count about `z = 0`: `N = C1 + C2 + D z`.
/// The balanced count is `2 C2 + 2 D z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LinearConstants<T> {
    #[serde(rename = "C1")]
    pub c1: T,
    #[serde(rename = "C2")]
    pub c2: T,
    #[serde(rename = "D")]
    pub d: T,
}

impl<T: Real> LinearConstants<T> {
    pub fn offset(&self, scheme: Scheme) -> T {
        match scheme {
            Scheme::Ch => self.c1 + self.c2,
            Scheme::Cbh => T::lit(2.0) * self.c2,
        }
    }

    pub fn slope(&self, scheme: Scheme) -> T {
        match scheme {
            Scheme::Ch => self.d,
            Scheme::Cbh => T::lit(2.0) * self.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountModel {
    Exact,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CountRecord<T> {
    pub window_start_s: Vec<T>,
    pub counts: Vec<T>,
    pub params: DetectionParams<T>,
    pub model: CountModel,
    pub linear_constants: Option<LinearConstants<T>>,
    /// Samples of the source trajectory averaged into one window.
    pub samples_per_window: usize,
    pub source_sample_rate_hz: T,
}

impl<T: Real> CountRecord<T> {
    pub fn window_rate_hz(&self) -> T {
        self.params.t_int_s.recip()
    }

    /// Mid-point time of the samples averaged into window `i`.
    pub fn window_time_f64(&self, i: usize) -> f64 {
        let half = (self.samples_per_window as f64 - 1.0) / 2.0;
        self.window_start_s[i].f64() + half / self.source_sample_rate_hz.f64()
    }
}

/// Window-averaged representative positions and window start times.
fn windows<T: Real>(traj: &Trajectory<T>, params: &DetectionParams<T>) -> Result<(Vec<T>, Vec<T>, usize)> {
    params.validate()?;
    let per = (params.t_int_s * traj.sample_rate_hz).f64();
    let duration = traj.duration().f64();
    if per > traj.len() as f64 + 1e-9 {
        return Err(Error::WindowTooLong {
            window_s: params.t_int_s.f64(),
            duration_s: duration,
        });
    }
    let spw = per.round() as usize;
    if spw == 0 || (per - spw as f64).abs() > 1e-6 * per.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "integration time must span a whole number of samples (got {per})"
        )));
    }
    let n = traj.len() / spw;
    let mut starts = Vec::with_capacity(n);
    let mut reps = Vec::with_capacity(n);
    for w in 0..n {
        starts.push(T::lit(traj.time_f64(w * spw)));
        reps.push(mean(&traj.z_m[w * spw..(w + 1) * spw]));
    }
    Ok((starts, reps, spw))
}

fn add_noise<T: Real>(
    expected: &[T],
    params: &DetectionParams<T>,
    arms: Option<&[(T, T)]>,
) -> Result<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let poisson = |mu: f64, rng: &mut ChaCha8Rng| -> f64 {
        if mu <= 0.0 {
            0.0
        } else {
            Poisson::new(mu).map(|d| d.sample(rng)).unwrap_or(mu)
        }
    };
    let mut out = Vec::with_capacity(expected.len());
    for (i, &mu) in expected.iter().enumerate() {
        let mut c = if params.shot_noise {
            match arms {
                Some(arms) => {
                    let (i1, i2) = arms[i];
                    for v in [i1, i2] {
                        if v < T::zero() {
                            return Err(Error::NegativeArmCount {
                                window: i,
                                value: v.f64(),
                            });
                        }
                    }
                    poisson(i1.f64(), &mut rng) - poisson(i2.f64(), &mut rng)
                }
                None => poisson(mu.f64(), &mut rng),
            }
        } else {
            mu.f64()
        };
        let rms = params.electronic_noise_counts_rms.f64();
        if rms > 0.0 {
            c += Normal::new(0.0, rms).expect("rms >= 0").sample(&mut rng);
        }
        out.push(T::lit(c));
    }
    Ok(out)
}

/// Counts from the full interferometric expressions.
pub fn detect_exact<T: Real>(
    traj: &Trajectory<T>,
    params: &DetectionParams<T>,
) -> Result<CountRecord<T>> {
    let (starts, reps, spw) = windows(traj, params)?;
    let expected: Vec<T> = reps.iter().map(|&z| params.exact_count(z)).collect();
    let arms: Option<Vec<(T, T)>> = match params.scheme {
        Scheme::Cbh => Some(reps.iter().map(|&z| params.arm_counts(z)).collect()),
        Scheme::Ch => None,
    };
    let counts = add_noise(&expected, params, arms.as_deref())?;
    let linear = params.linear_constants();
    Ok(CountRecord {
        window_start_s: starts,
        counts,
        params: params.clone(),
        model: CountModel::Exact,
        linear_constants: (linear.d != T::zero()).then_some(linear),
        samples_per_window: spw,
        source_sample_rate_hz: traj.sample_rate_hz,
    })
}

/// Counts from the first-order expansion; refuses trajectories whose phase
/// excursion breaks the linearity guard.
pub fn detect_linear<T: Real>(
    traj: &Trajectory<T>,
    params: &DetectionParams<T>,
) -> Result<CountRecord<T>> {
    let (starts, reps, spw) = windows(traj, params)?;
    let two_k = T::lit(2.0) * params.k_rad_per_m;
    let max_phase = reps
        .iter()
        .fold(T::zero(), |acc, &z| acc.max((two_k * z).abs()));
    let threshold = params.linearity_threshold();
    if !(max_phase < threshold) {
        return Err(Error::LinearityViolated {
            max_phase: max_phase.f64(),
            threshold: threshold.f64(),
        });
    }
    let lc = params.linear_constants();
    let (offset, slope) = (lc.offset(params.scheme), lc.slope(params.scheme));
    let expected: Vec<T> = reps.iter().map(|&z| offset + slope * z).collect();
    let arms: Option<Vec<(T, T)>> = match params.scheme {
        Scheme::Cbh => {
            let p = params.photon_factor() * T::lit(0.5);
            let common = p * (params.amp_a * params.amp_a + params.amp_b * params.amp_b);
            Some(
                expected
                    .iter()
                    .map(|&n| (common + n * T::lit(0.5), common - n * T::lit(0.5)))
                    .collect(),
            )
        }
        Scheme::Ch => None,
    };
    let counts = add_noise(&expected, params, arms.as_deref())?;
    Ok(CountRecord {
        window_start_s: starts,
        counts,
        params: params.clone(),
        model: CountModel::Linear,
        linear_constants: Some(lc),
        samples_per_window: spw,
        source_sample_rate_hz: traj.sample_rate_hz,
    })
}

/// How offset-subtracted counts are mapped to metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Calibration<T> {
    /// Divide by the known slope `D` (or `2D`).
    Absolute,
    /// Rescale so the sample variance equals `variance_m2`, e.g.
    /// `k_B T / (m omega_s^2)`; the sign of the slope is kept.
    Equipartition { variance_m2: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CalibratedPositions<T> {
    pub trajectory: Trajectory<T>,
    pub calibration: Calibration<T>,
    /// Metres per count actually applied.
    pub metres_per_count: T,
}

/// Maps counts back to positions at the window rate.
pub fn invert_counts<T: Real>(
    rec: &CountRecord<T>,
    calibration: Calibration<T>,
) -> Result<CalibratedPositions<T>> {
    let lc = rec.linear_constants.ok_or(Error::MissingLinearConstants)?;
    let scheme = rec.params.scheme;
    let slope = lc.slope(scheme);
    if slope == T::zero() || slope.abs() < T::epsilon() * lc.c1.abs() {
        return Err(Error::ZeroSensitivity);
    }
    let offset = lc.offset(scheme);
    let shifted: Vec<T> = rec.counts.iter().map(|&c| c - offset).collect();
    let metres_per_count = match calibration {
        Calibration::Absolute => slope.recip(),
        Calibration::Equipartition { variance_m2 } => {
            let v = variance(&shifted);
            if !(v > T::zero()) {
                return Err(Error::InvalidArgument(
                    "equipartition calibration needs non-constant counts".into(),
                ));
            }
            (variance_m2 / v).sqrt() * slope.signum()
        }
    };
    let z: Vec<T> = shifted.iter().map(|&c| c * metres_per_count).collect();
    let t0 = T::lit(rec.window_time_f64(0));
    let trajectory = Trajectory::new(rec.window_rate_hz(), t0, z, StateKind::Custom)?;
    Ok(CalibratedPositions {
        trajectory,
        calibration,
        metres_per_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NoiseFloorComparison<T> {
    pub ch: NoiseReport<T>,
    pub cbh: NoiseReport<T>,
    /// CH floor over CBH floor, in position-calibrated units.
    pub floor_ratio_ch_over_cbh: T,
    pub snr_gain_db: T,
}

/// Position-calibrated noise floors and peak SNRs of matched CH and CBH records.
pub fn compare_noise_floor<T: Real>(
    rec_ch: &CountRecord<T>,
    rec_cbh: &CountRecord<T>,
    psd_options: &PsdOptions<T>,
    window: FitWindow<T>,
) -> Result<NoiseFloorComparison<T>> {
    let (r1, r2) = (rec_ch.window_rate_hz(), rec_cbh.window_rate_hz());
    if ((r1 - r2) / r1).abs() > T::lit(1e-12) {
        return Err(Error::MismatchedRates(r1.f64(), r2.f64()));
    }
    let report = |rec: &CountRecord<T>| -> Result<NoiseReport<T>> {
        let pos = invert_counts(rec, Calibration::Absolute)?;
        let psd = spectral::estimate_psd_with(&pos.trajectory.z_m, r1, psd_options)?;
        let fit = spectral::fit_lorentzian(&psd, window)?;
        Ok(spectral::noise_floor_and_snr(&psd, &fit))
    };
    let ch = report(rec_ch)?;
    let cbh = report(rec_cbh)?;
    Ok(NoiseFloorComparison {
        floor_ratio_ch_over_cbh: ch.floor / cbh.floor,
        snr_gain_db: cbh.snr_db - ch.snr_db,
        ch,
        cbh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate_coherent;
    use crate::physics::derive;
    use approx::assert_relative_eq;

    type Cfg = ExperimentConfig<f64>;

    fn setup(scheme: Scheme) -> (DerivedQuantities<f64>, DetectionParams<f64>) {
        let mut cfg = Cfg::reference();
        cfg.shot_noise = false;
        let dq = derive(&cfg).unwrap();
        let p = DetectionParams::from_config(&cfg, &dq, scheme, 1);
        (dq, p)
    }

    fn constant(z: f64, n: usize) -> Trajectory<f64> {
        Trajectory::new(1e6, 0.0, vec![z; n], StateKind::Custom).unwrap()
    }

    #[test]
    fn ch_at_quadrature_with_zero_position() {
        let (_, p) = setup(Scheme::Ch);
        let rec = detect_exact(&constant(0.0, 100), &p).unwrap();
        let expect = p.photon_factor() * 0.5 * (p.amp_a.powi(2) + p.amp_b.powi(2));
        for &c in &rec.counts {
            assert_relative_eq!(c, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn cbh_at_fringe_peak() {
        let (_, mut p) = setup(Scheme::Cbh);
        p.delta_phi_rad = 0.0;
        let rec = detect_exact(&constant(0.0, 10), &p).unwrap();
        for &c in &rec.counts {
            assert_relative_eq!(c, p.photon_factor() * 2.0 * p.amp_a * p.amp_b, max_relative = 1e-12);
        }
    }

    #[test]
    fn linear_model_at_origin() {
        for delta in [0.3, 1.0, std::f64::consts::FRAC_PI_2, 2.5] {
            let (_, mut p) = setup(Scheme::Ch);
            p.delta_phi_rad = delta;
            let lc = p.linear_constants();
            let ch = detect_linear(&constant(0.0, 10), &p).unwrap();
            assert!(ch.counts.iter().all(|&c| ((c - (lc.c1 + lc.c2)) / lc.c1).abs() < 1e-12));
            p.scheme = Scheme::Cbh;
            let cbh = detect_linear(&constant(0.0, 10), &p).unwrap();
            assert!(cbh.counts.iter().all(|&c| c == 2.0 * lc.c2));
        }
    }

    #[test]
    fn cbh_is_twice_ch_minus_common_term() {
        let (dq, p) = setup(Scheme::Ch);
        let traj = simulate_coherent(&dq, 1e-7, 0.3, 1e-4, 1e6).unwrap();
        let ch = detect_exact(&traj, &p).unwrap();
        let mut pc = p.clone();
        pc.scheme = Scheme::Cbh;
        let cbh = detect_exact(&traj, &pc).unwrap();
        let c1 = p.linear_constants().c1;
        for (a, b) in ch.counts.iter().zip(&cbh.counts) {
            assert!((b - 2.0 * (a - c1)).abs() <= 1e-9 * c1);
        }
    }

    #[test]
    fn linear_guard_rejects_large_motion() {
        let (dq, p) = setup(Scheme::Cbh);
        let traj = simulate_coherent(&dq, 1e-7, 0.0, 1e-4, 1e6).unwrap();
        match detect_linear(&traj, &p) {
            Err(Error::LinearityViolated { max_phase, threshold }) => {
                assert!(max_phase > threshold);
                assert_relative_eq!(threshold, 0.1 * std::f64::consts::FRAC_PI_2, max_relative = 1e-12);
            }
            other => panic!("expected guard error, got {other:?}"),
        }
    }

    #[test]
    fn window_errors() {
        let (_, mut p) = setup(Scheme::Ch);
        p.t_int_s = 1e-3;
        assert!(matches!(
            detect_exact(&constant(0.0, 100), &p),
            Err(Error::WindowTooLong { .. })
        ));
        p.t_int_s = 1.5e-6;
        assert!(detect_exact(&constant(0.0, 100), &p).is_err());
    }

    #[test]
    fn multi_sample_windows_average() {
        let (_, mut p) = setup(Scheme::Cbh);
        p.t_int_s = 4e-6;
        let z: Vec<f64> = (0..10).map(|i| i as f64 * 1e-12).collect();
        let traj = Trajectory::new(1e6, 0.0, z, StateKind::Custom).unwrap();
        let rec = detect_linear(&traj, &p).unwrap();
        assert_eq!(rec.counts.len(), 2);
        assert_eq!(rec.samples_per_window, 4);
        let pos = invert_counts(&rec, Calibration::Absolute).unwrap();
        assert_relative_eq!(pos.trajectory.z_m[0], 1.5e-12, max_relative = 1e-6);
        assert_relative_eq!(pos.trajectory.z_m[1], 5.5e-12, max_relative = 1e-6);
        assert_relative_eq!(pos.trajectory.t0_s, 1.5e-6, max_relative = 1e-12);
        assert_relative_eq!(pos.trajectory.sample_rate_hz, 2.5e5, max_relative = 1e-12);
    }

    #[test]
    fn invert_round_trip_noise_free() {
        for scheme in [Scheme::Ch, Scheme::Cbh] {
            let (dq, p) = setup(scheme);
            let traj = simulate_coherent(&dq, 1e-9, 0.4, 1e-4, 1e6).unwrap();
            let rec = detect_linear(&traj, &p).unwrap();
            let back = invert_counts(&rec, Calibration::Absolute).unwrap();
            for (a, b) in back.trajectory.z_m.iter().zip(&traj.z_m) {
                assert!((a - b).abs() <= 1e-10 * 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_sensitivity_phase() {
        let (_, mut p) = setup(Scheme::Ch);
        p.delta_phi_rad = 0.0;
        let rec = detect_exact(&constant(0.0, 10), &p).unwrap();
        assert!(rec.linear_constants.is_none());
        assert!(matches!(
            invert_counts(&rec, Calibration::Absolute),
            Err(Error::MissingLinearConstants)
        ));
        let mut forced = rec.clone();
        forced.linear_constants = Some(p.linear_constants());
        assert!(matches!(
            invert_counts(&forced, Calibration::Absolute),
            Err(Error::ZeroSensitivity)
        ));
    }

    #[test]
    fn sensitivity_peaks_at_quadrature() {
        let (_, p) = setup(Scheme::Ch);
        let best = (0..=180)
            .map(|i| {
                let mut q = p.clone();
                q.delta_phi_rad = i as f64 * std::f64::consts::PI / 180.0;
                (i, q.linear_constants().d.abs())
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(best.0, 90);
    }

    #[test]
    fn shot_noise_is_seeded() {
        let mut cfg = Cfg::reference();
        cfg.shot_noise = true;
        let dq = derive(&cfg).unwrap();
        let p = DetectionParams::from_config(&cfg, &dq, Scheme::Cbh, 9);
        let traj = constant(0.0, 50);
        let a = detect_exact(&traj, &p).unwrap();
        let b = detect_exact(&traj, &p).unwrap();
        assert_eq!(a.counts, b.counts);
        assert!(a.counts.iter().any(|&c| c != a.counts[0]));
    }
}
