//! Welch power spectral densities and damped-oscillator peak fits.
//!
//! The fitted line shape is the thermal spectrum of a damped oscillator,
//!
//! ```text
//! S(omega) = amplitude * xi / ((omega^2 - omega0^2)^2 + xi^2 omega^2) + floor
//! ```
//!
//! evaluated at `omega = 2 pi f` for a one-sided PSD in units^2/Hz. For thermal
//! motion `amplitude = 4 k_B T / m` and `xi` is the energy damping rate.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::constants::K_B;
use crate::error::{Error, Result};
use crate::lm::{self, LeastSquares, LmOptions};
use crate::scalar::{mean, Real};

pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_SEGMENTS: usize = 8;
pub const MIN_SEGMENTS: usize = 4;
/// A peak must rise this far above the median power of the fit window.
pub const PEAK_TO_MEDIAN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Psd<T> {
    /// Bin frequencies `k fs / L`, `k = 0..=L/2`. Bin 0 is kept but never fitted.
    pub freqs_hz: Vec<T>,
    pub power: Vec<T>,
    pub n_segments: usize,
    pub segment_len: usize,
    pub window_kind: String,
    pub sample_rate_hz: T,
}

impl<T: Real> Psd<T> {
    pub fn resolution_hz(&self) -> T {
        self.sample_rate_hz / T::from_usize_lossy(self.segment_len)
    }

    /// Rectangle-rule integral over all bins; equals the variance of the
    /// mean-removed input.
    pub fn total_power(&self) -> T {
        self.power.iter().fold(T::zero(), |a, &p| a + p) * self.resolution_hz()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdOptions<T> {
    /// `None` picks the longest power of two giving at least
    /// [`DEFAULT_SEGMENTS`] segments.
    pub segment_len: Option<usize>,
    pub overlap_fraction: T,
}

impl<T: Real> Default for PsdOptions<T> {
    fn default() -> Self {
        PsdOptions {
            segment_len: None,
            overlap_fraction: T::lit(DEFAULT_OVERLAP),
        }
    }
}

fn segment_count(n: usize, len: usize, step: usize) -> usize {
    if n < len {
        0
    } else {
        (n - len) / step + 1
    }
}

fn step_for(len: usize, overlap: f64) -> usize {
    ((len as f64 * (1.0 - overlap)).round() as usize).max(1)
}

pub fn default_segment_len(n: usize, overlap: f64) -> Option<usize> {
    let mut len = 16usize;
    let mut best = None;
    while len <= n {
        if segment_count(n, len, step_for(len, overlap)) >= DEFAULT_SEGMENTS {
            best = Some(len);
        }
        len *= 2;
    }
    best
}

/// Welch estimate with a periodic Hann window and per-segment mean removal.
pub fn estimate_psd<T: Real>(
    samples: &[T],
    sample_rate_hz: T,
    segment_len: usize,
    overlap_fraction: T,
) -> Result<Psd<T>> {
    if !segment_len.is_power_of_two() || segment_len < 4 {
        return Err(Error::InvalidArgument(format!(
            "segment length must be a power of two >= 4, got {segment_len}"
        )));
    }
    let overlap = overlap_fraction.f64();
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!(
            "overlap fraction must be in [0, 1), got {overlap}"
        )));
    }
    if !(sample_rate_hz > T::zero()) {
        return Err(Error::InvalidArgument("sample rate must be > 0".into()));
    }
    let step = step_for(segment_len, overlap);
    let n_segments = segment_count(samples.len(), segment_len, step);
    if n_segments < MIN_SEGMENTS {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            required: segment_len + (MIN_SEGMENTS - 1) * step,
        });
    }

    let window: Vec<T> = (0..segment_len)
        .map(|i| {
            let x = T::TAU() * T::from_usize_lossy(i) / T::from_usize_lossy(segment_len);
            T::lit(0.5) - T::lit(0.5) * x.cos()
        })
        .collect();
    let w_energy = window.iter().fold(T::zero(), |a, &w| a + w * w);
    let fft = FftPlanner::<T>::new().plan_fft_forward(segment_len);
    let n_bins = segment_len / 2 + 1;

    let periodograms: Vec<Vec<T>> = (0..n_segments)
        .into_par_iter()
        .map(|s| {
            let seg = &samples[s * step..s * step + segment_len];
            let m = mean(seg);
            let mut buf: Vec<Complex<T>> = seg
                .iter()
                .zip(&window)
                .map(|(&x, &w)| Complex::new((x - m) * w, T::zero()))
                .collect();
            fft.process(&mut buf);
            buf[..n_bins].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();

    let scale = (sample_rate_hz * w_energy * T::from_usize_lossy(n_segments)).recip();
    let mut power = vec![T::zero(); n_bins];
    for p in &periodograms {
        for (acc, &v) in power.iter_mut().zip(p) {
            *acc = *acc + v;
        }
    }
    for (k, v) in power.iter_mut().enumerate() {
        let one_sided = if k == 0 || k == n_bins - 1 { T::one() } else { T::lit(2.0) };
        *v = *v * scale * one_sided;
    }
    let df = sample_rate_hz / T::from_usize_lossy(segment_len);
    Ok(Psd {
        freqs_hz: (0..n_bins).map(|k| T::from_usize_lossy(k) * df).collect(),
        power,
        n_segments,
        segment_len,
        window_kind: "hann".into(),
        sample_rate_hz,
    })
}

pub fn estimate_psd_with<T: Real>(
    samples: &[T],
    sample_rate_hz: T,
    opts: &PsdOptions<T>,
) -> Result<Psd<T>> {
    let len = match opts.segment_len {
        Some(l) => l,
        None => default_segment_len(samples.len(), opts.overlap_fraction.f64()).ok_or(
            Error::TooFewSamples {
                got: samples.len(),
                required: 16 * (DEFAULT_SEGMENTS + 1) / 2,
            },
        )?,
    };
    estimate_psd(samples, sample_rate_hz, len, opts.overlap_fraction)
}

/// Frequency band searched and fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FitWindow<T> {
    pub f_min_hz: T,
    pub f_max_hz: T,
}

impl<T: Real> FitWindow<T> {
    pub fn new(f_min_hz: T, f_max_hz: T) -> Self {
        FitWindow { f_min_hz, f_max_hz }
    }

    /// `[f/2, 3f/2]` around an expected resonance.
    pub fn around(f_hz: T) -> Self {
        FitWindow::new(f_hz * T::lit(0.5), f_hz * T::lit(1.5))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LorentzianFit<T> {
    pub omega0_rad_s: T,
    /// Full width `xi` (rad/s).
    pub linewidth_rad_s: T,
    pub amplitude: T,
    pub noise_floor: T,
    /// RMS of the relative residuals `(data - model) / model`.
    pub residual_rms: T,
    /// Covariance of `(omega0, linewidth, amplitude, noise_floor)`.
    pub covariance: [[T; 4]; 4],
    pub iterations: usize,
    pub window: FitWindow<T>,
    pub model: String,
}

impl<T: Real> LorentzianFit<T> {
    pub fn eval(&self, f_hz: T) -> T {
        lorentzian(
            T::TAU() * f_hz,
            self.omega0_rad_s,
            self.linewidth_rad_s,
            self.amplitude,
            self.noise_floor,
        )
    }

    /// Peak frequency in Hz.
    pub fn f0_hz(&self) -> T {
        self.omega0_rad_s / T::TAU()
    }

    /// Area under the resonance (excluding the floor), i.e. the position
    /// variance carried by the mode.
    pub fn mode_variance(&self) -> T {
        self.amplitude / (T::lit(4.0) * self.omega0_rad_s * self.omega0_rad_s)
    }
}

pub fn lorentzian<T: Real>(omega: T, omega0: T, xi: T, amplitude: T, floor: T) -> T {
    let d = omega * omega - omega0 * omega0;
    amplitude * xi / (d * d + xi * xi * omega * omega) + floor
}

/// Particle radius from the fitted amplitude via `amplitude = 4 k_B T / m`.
///
/// Approximate: assumes the PSD is in calibrated metres and the mode is
/// thermalised at `temperature`.
pub fn equipartition_radius<T: Real>(fit: &LorentzianFit<T>, temperature: T, density: T) -> T {
    let mass = T::lit(4.0 * K_B) * temperature / fit.amplitude;
    (T::lit(3.0) * mass / (T::lit(4.0) * T::PI() * density)).cbrt()
}

/// Scaled fit problem: `u = omega / omega_g`, parameters
/// `(w, x, h, f) = (omega0/omega_g, xi/omega_g, H/H_s, floor/F_s)` with peak
/// height `H = amplitude / (xi omega0^2)`.
struct PeakProblem<'a, T> {
    u: &'a [T],
    data: &'a [T],
    weight: Vec<T>,
    h_scale: T,
    f_scale: T,
}

impl<T: Real> PeakProblem<'_, T> {
    fn shape(u: T, w: T, x: T) -> (T, T, T) {
        let d = u * u - w * w;
        let den = d * d + x * x * u * u;
        let num = x * x * w * w;
        let l = num / den;
        let dw = (T::lit(2.0) * x * x * w * den + T::lit(4.0) * w * num * d) / (den * den);
        let dx = (T::lit(2.0) * x * w * w * den - num * T::lit(2.0) * x * u * u) / (den * den);
        (l, dw, dx)
    }

    fn model(&self, p: &[T], u: T) -> T {
        let (l, _, _) = Self::shape(u, p[0], p[1]);
        self.h_scale * p[2] * l + self.f_scale * p[3]
    }
}

impl<T: Real> LeastSquares<T> for PeakProblem<'_, T> {
    fn n_residuals(&self) -> usize {
        self.u.len()
    }

    fn residuals(&self, p: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate().take(self.u.len()) {
            *o = (self.data[i] - self.model(p, self.u[i])) / self.weight[i];
        }
    }

    fn jacobian(&self, p: &[T], out: &mut [T]) {
        for i in 0..self.u.len() {
            let (l, dw, dx) = Self::shape(self.u[i], p[0], p[1]);
            let s = -self.weight[i].recip();
            out[4 * i] = s * self.h_scale * p[2] * dw;
            out[4 * i + 1] = s * self.h_scale * p[2] * dx;
            out[4 * i + 2] = s * self.h_scale * l;
            out[4 * i + 3] = s * self.f_scale;
        }
    }
}

const REWEIGHT_PASSES: usize = 5;

/// Least-squares fit of the damped-oscillator line shape inside `window`.
///
/// Residuals are weighted by the model of the previous pass so every bin has
/// comparable relative variance, as for averaged periodogram values.
pub fn fit_lorentzian<T: Real>(psd: &Psd<T>, window: FitWindow<T>) -> Result<LorentzianFit<T>> {
    let no_peak = || Error::NoPeak {
        f_min: window.f_min_hz.f64(),
        f_max: window.f_max_hz.f64(),
    };
    let idx: Vec<usize> = (1..psd.freqs_hz.len())
        .filter(|&k| psd.freqs_hz[k] >= window.f_min_hz && psd.freqs_hz[k] <= window.f_max_hz)
        .collect();
    if idx.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "fit window holds {} bins, need at least 8",
            idx.len()
        )));
    }
    let freqs: Vec<T> = idx.iter().map(|&k| psd.freqs_hz[k]).collect();
    let data: Vec<T> = idx.iter().map(|&k| psd.power[k]).collect();

    let (peak_i, &peak) = data
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or_else(no_peak)?;
    let mut sorted = data.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = sorted[sorted.len() / 2];
    if peak_i == 0 || peak_i == data.len() - 1 || !(peak > T::lit(PEAK_TO_MEDIAN) * median) {
        return Err(no_peak());
    }

    let omega_g = T::TAU() * freqs[peak_i];
    let floor0 = median;
    let height0 = peak - floor0;
    let half = floor0 + height0 * T::lit(0.5);
    let cross = |range: &mut dyn Iterator<Item = usize>| -> usize {
        let mut last = peak_i;
        for i in range {
            last = i;
            if data[i] < half {
                break;
            }
        }
        last
    };
    let left = cross(&mut (0..peak_i).rev());
    let right = cross(&mut (peak_i + 1..data.len()));
    let df = psd.resolution_hz();
    let width_hz = (freqs[right] - freqs[left]).max(df) * T::lit(0.5);
    let x0 = T::TAU() * width_hz / omega_g;

    let h_scale = height0;
    let f_scale = if floor0 > T::zero() {
        floor0
    } else {
        height0 * T::lit(1e-12)
    };
    let u: Vec<T> = freqs.iter().map(|&f| T::TAU() * f / omega_g).collect();
    let mut params = vec![T::one(), x0, T::one(), if floor0 > T::zero() { T::one() } else { T::zero() }];

    let mut problem = PeakProblem {
        u: &u,
        data: &data,
        weight: vec![T::one(); u.len()],
        h_scale,
        f_scale,
    };
    let opts = LmOptions::default();
    let mut solution = None;
    let mut iterations = 0;
    for _ in 0..REWEIGHT_PASSES {
        problem.weight = u
            .iter()
            .map(|&ui| problem.model(&params, ui).abs().max(f_scale * T::lit(1e-9)))
            .collect();
        let sol = lm::minimize(&problem, &params, &opts)?;
        iterations += sol.iterations;
        params = sol.params.clone();
        params[0] = params[0].abs();
        params[1] = params[1].abs();
        solution = Some(sol);
    }
    let sol = solution.expect("at least one pass");

    let (w, x, h, f) = (params[0], params[1], params[2], params[3]);
    let omega0 = w * omega_g;
    let xi = x * omega_g;
    let g3 = omega_g * omega_g * omega_g;
    let amplitude = h * h_scale * x * w * w * g3;
    let floor = f * f_scale;
    if !(omega0 > T::zero() && xi > T::zero() && amplitude.is_finite()) {
        return Err(Error::FitDiverged {
            iterations,
            cost: sol.cost.f64(),
        });
    }

    let n = T::from_usize_lossy(u.len());
    let dof = n - T::lit(4.0);
    let s2 = sol.cost / dof;
    let residual_rms = (sol.cost / n).sqrt();
    // d(omega0, xi, amplitude, floor) / d(w, x, h, f)
    let mut g = [[T::zero(); 4]; 4];
    g[0][0] = omega_g;
    g[1][1] = omega_g;
    g[2][0] = T::lit(2.0) * h * h_scale * x * w * g3;
    g[2][1] = h * h_scale * w * w * g3;
    g[2][2] = h_scale * x * w * w * g3;
    g[3][3] = f_scale;
    let mut covariance = [[T::zero(); 4]; 4];
    for (a, row) in covariance.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for i in 0..4 {
                for j in 0..4 {
                    acc = acc + g[a][i] * sol.inverse_hessian[i * 4 + j] * g[b][j];
                }
            }
            *cell = acc * s2;
        }
    }

    Ok(LorentzianFit {
        omega0_rad_s: omega0,
        linewidth_rad_s: xi,
        amplitude,
        noise_floor: floor,
        residual_rms,
        covariance,
        iterations,
        window,
        model: "amplitude*xi/((w^2-w0^2)^2+xi^2 w^2)+floor, w=2*pi*f".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NoiseReport<T> {
    pub floor: T,
    pub peak_power: T,
    pub snr_db: T,
}

/// Fitted floor, the largest PSD bin near the resonance and their ratio in dB.
pub fn noise_floor_and_snr<T: Real>(psd: &Psd<T>, fit: &LorentzianFit<T>) -> NoiseReport<T> {
    let f0 = fit.f0_hz();
    let half_width = (fit.linewidth_rad_s / T::TAU() * T::lit(2.0)).max(psd.resolution_hz() * T::lit(2.0));
    let peak_power = psd
        .freqs_hz
        .iter()
        .zip(&psd.power)
        .skip(1)
        .filter(|(&f, _)| (f - f0).abs() <= half_width)
        .fold(T::zero(), |acc, (_, &p)| acc.max(p));
    let floor = fit.noise_floor;
    NoiseReport {
        floor,
        peak_power,
        snr_db: T::lit(10.0) * (peak_power / floor).log10(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn white_noise_level() {
        let fs = 1e4;
        let psd = estimate_psd(&white(1 << 16, 1), fs, 1024, 0.5).unwrap();
        let interior: Vec<f64> = psd.power[1..psd.power.len() - 1].to_vec();
        let level = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!(((level - 2.0 / fs) / (2.0 / fs)).abs() < 0.05, "level {level}");
    }

    #[test]
    fn tone_power() {
        let fs = 1e4;
        let a = 0.7;
        let f = 1234.5;
        let x: Vec<f64> = (0..1 << 15)
            .map(|i| a * (std::f64::consts::TAU * f * i as f64 / fs).sin())
            .collect();
        let psd = estimate_psd(&x, fs, 2048, 0.5).unwrap();
        let df = psd.resolution_hz();
        let band: f64 = psd
            .freqs_hz
            .iter()
            .zip(&psd.power)
            .filter(|(&fr, _)| (fr - f).abs() < 5.0 * df)
            .map(|(_, &p)| p * df)
            .sum();
        assert!(((band - a * a / 2.0) / (a * a / 2.0)).abs() < 0.02, "band {band}");
    }

    #[test]
    fn psd_argument_errors() {
        let x = white(1000, 2);
        assert!(estimate_psd(&x, 1.0, 100, 0.5).is_err());
        assert!(matches!(
            estimate_psd(&x, 1.0, 512, 0.5),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(estimate_psd(&x, 1.0, 64, 1.0).is_err());
    }

    #[test]
    fn default_segment_len_gives_eight_segments() {
        let len = default_segment_len(1_000_000, 0.5).unwrap();
        assert_eq!(len, 1 << 17);
        assert!(segment_count(1_000_000, len, len / 2) >= 8);
        assert!(segment_count(1_000_000, 2 * len, len) < 8);
    }

    fn synthetic(noise: f64, seed: u64) -> (Psd<f64>, [f64; 4]) {
        let truth = [std::f64::consts::TAU * 5000.0, 300.0, 3e8, 1e-7];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs: Vec<f64> = (0..=4096).map(|k| k as f64 * 2.5).collect();
        let power = freqs
            .iter()
            .map(|&f| {
                let m = lorentzian(std::f64::consts::TAU * f, truth[0], truth[1], truth[2], truth[3]);
                let e: f64 = StandardNormal.sample(&mut rng);
                m * (1.0 + noise * e)
            })
            .collect();
        (
            Psd {
                freqs_hz: freqs,
                power,
                n_segments: 8,
                segment_len: 8192,
                window_kind: "synthetic".into(),
                sample_rate_hz: 20480.0,
            },
            truth,
        )
    }

    #[test]
    fn synthetic_lorentzian_recovered() {
        let (psd, truth) = synthetic(0.01, 3);
        let fit = fit_lorentzian(&psd, FitWindow::new(1000.0, 9000.0)).unwrap();
        let got = [fit.omega0_rad_s, fit.linewidth_rad_s, fit.amplitude, fit.noise_floor];
        for (g, t) in got.iter().zip(truth) {
            assert!(((g - t) / t).abs() < 0.02, "{got:?} vs {truth:?}");
        }
        assert!(fit.covariance[0][0] > 0.0);
        assert!(fit.residual_rms < 0.02);
        let rep = noise_floor_and_snr(&psd, &fit);
        assert!(((rep.floor - truth[3]) / truth[3]).abs() < 0.05);
        assert!(rep.snr_db > 30.0);
    }

    #[test]
    fn white_noise_has_no_peak() {
        let fs = 1e4;
        let psd = estimate_psd(&white(1 << 16, 5), fs, 1024, 0.5).unwrap();
        assert!(matches!(
            fit_lorentzian(&psd, FitWindow::new(100.0, 4000.0)),
            Err(Error::NoPeak { .. })
        ));
    }

    #[test]
    fn fit_scale_equivariance() {
        let (psd, _) = synthetic(0.01, 4);
        let fit = fit_lorentzian(&psd, FitWindow::new(1000.0, 9000.0)).unwrap();
        let c2 = 9.0;
        let mut scaled = psd.clone();
        scaled.power.iter_mut().for_each(|p| *p *= c2);
        let fit2 = fit_lorentzian(&scaled, FitWindow::new(1000.0, 9000.0)).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit2.omega0_rad_s, fit.omega0_rad_s) < 1e-6);
        assert!(rel(fit2.linewidth_rad_s, fit.linewidth_rad_s) < 1e-6);
        assert!(rel(fit2.amplitude, c2 * fit.amplitude) < 1e-6);
        assert!(rel(fit2.noise_floor, c2 * fit.noise_floor) < 1e-6);
    }

    #[test]
    fn single_precision_psd() {
        let x: Vec<f32> = white(1 << 14, 6).into_iter().map(|v| v as f32).collect();
        let psd = estimate_psd(&x, 1.0f32, 512, 0.5).unwrap();
        assert!((psd.total_power() - 1.0).abs() < 0.05);
    }
}
