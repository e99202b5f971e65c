//! The individual pipeline stages. Each writes its artifacts through a
//! [`StageIo`] so the manifest sees every file.

use std::f64::consts::TAU;
use std::collections::BTreeMap;
use std::path::Path;

use levitomo::detection::DetectionParams;
use levitomo::spectral::{estimate_psd_with, noise_floor_and_snr, FitWindow, NoiseReport, PsdOptions};
use levitomo::tomography::{
    bin_marginals_with, inverse_radon_with, resolution_variance, symmetric_grid, FbpOptions, WignerReport,
};
use levitomo::{
    analyze, decoherence_curve, decoherence_knee, detect_exact, detect_linear, fit_lorentzian, invert_counts, io,
    oracle_marginals, simulate_coherent, simulate_thermal, Calibration, Config, Counts, Derived, Error, Fit,
    Marginals, OracleScale, Result, Scheme, Spectrum, StateKind, Traj, Wigner,
};
use serde::Serialize;

use crate::run::StageIo;
use crate::settings::{CalibrationChoice, ModelChoice, RunSettings};

pub struct Context {
    pub cfg: Config,
    pub dq: Derived,
    pub settings: RunSettings,
    pub seed: u64,
    pub state: StateKind,
    pub schemes: Vec<Scheme>,
}

/// Independent seed for a numbered random stream of one run.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_MOTION: u64 = 1;
const STREAM_CH: u64 = 2;
const STREAM_CBH: u64 = 3;

impl Context {
    pub fn psd_options(&self) -> PsdOptions<f64> {
        PsdOptions {
            segment_len: self.settings.psd_segment_len,
            overlap_fraction: self.settings.psd_overlap,
        }
    }

    pub fn fit_window(&self) -> FitWindow<f64> {
        FitWindow::around(self.dq.omega_s_rad_s / TAU)
    }

    pub fn fbp_options(&self) -> FbpOptions {
        FbpOptions {
            grid_size: self.settings.grid_size,
            cutoff_fraction: self.settings.filter_cutoff,
        }
    }

    /// Scheme whose positions feed the tomography: CBH when available.
    pub fn primary_scheme(&self) -> Scheme {
        if self.schemes.contains(&Scheme::Cbh) {
            Scheme::Cbh
        } else {
            Scheme::Ch
        }
    }
}

#[derive(Serialize)]
pub struct DerivedOutput<'a> {
    #[serde(flatten)]
    pub derived: &'a Derived,
    pub omega_s_hz: f64,
    #[serde(rename = "motion_temperature_K")]
    pub motion_temperature_k: f64,
    pub position_variance_m2: f64,
    pub decoherence_knee_m: f64,
}

pub fn derive_stage(ctx: &Context, sio: &mut StageIo) -> Result<()> {
    let out = DerivedOutput {
        derived: &ctx.dq,
        omega_s_hz: ctx.dq.omega_s_rad_s / TAU,
        motion_temperature_k: ctx.cfg.motion_temperature(),
        position_variance_m2: ctx.dq.thermal_variance(ctx.cfg.motion_temperature()),
        decoherence_knee_m: decoherence_knee(&ctx.dq),
    };
    io::write_json(&sio.output("derived.json"), &out)
}

pub fn simulate_stage(ctx: &Context, sio: &mut StageIo) -> Result<Traj> {
    let s = &ctx.settings;
    let traj = match ctx.state {
        StateKind::Thermal => simulate_thermal(
            &ctx.cfg,
            &ctx.dq,
            s.duration_s,
            s.sample_rate_hz,
            sub_seed(ctx.seed, STREAM_MOTION),
        )?,
        StateKind::Coherent => simulate_coherent(
            &ctx.dq,
            s.coherent_amplitude_m,
            s.coherent_phase_rad,
            s.duration_s,
            s.sample_rate_hz,
        )?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "state `{other}` has no simulated trajectory; use it with `tomo` or `pipeline`"
            )))
        }
    };
    io::write_trajectory(&sio.output_with_sidecar("trajectory.csv"), &traj)?;
    Ok(traj)
}

pub fn read_input_trajectory(path: &Path, sio: &mut StageIo) -> Result<Traj> {
    sio.input_with_sidecar(path);
    io::read_trajectory(path)
}

pub struct Detected {
    pub scheme: Scheme,
    pub counts: Counts,
    pub positions: Traj,
}

pub fn detect_stage(ctx: &Context, traj: &Traj, scheme: Scheme, sio: &mut StageIo) -> Result<Detected> {
    let stream = match scheme {
        Scheme::Ch => STREAM_CH,
        Scheme::Cbh => STREAM_CBH,
    };
    let params = DetectionParams::from_config(&ctx.cfg, &ctx.dq, scheme, sub_seed(ctx.seed, stream));
    let counts = match ctx.settings.count_model {
        ModelChoice::Linear => detect_linear(traj, &params)?,
        ModelChoice::Exact => detect_exact(traj, &params)?,
        ModelChoice::Auto => match detect_linear(traj, &params) {
            Err(Error::LinearityViolated { .. }) => detect_exact(traj, &params)?,
            other => other?,
        },
    };
    io::write_counts(&sio.output_with_sidecar(&format!("counts_{scheme}.csv")), &counts)?;
    let calibration = match ctx.settings.calibration {
        CalibrationChoice::Absolute => Calibration::Absolute,
        CalibrationChoice::Equipartition => Calibration::Equipartition {
            variance_m2: ctx.dq.thermal_variance(ctx.cfg.motion_temperature()),
        },
    };
    let mut positions = invert_counts(&counts, calibration)?.trajectory;
    positions.seed = traj.seed;
    positions.state_kind = traj.state_kind;
    io::write_trajectory(&sio.output_with_sidecar(&format!("positions_{scheme}.csv")), &positions)?;
    Ok(Detected {
        scheme,
        counts,
        positions,
    })
}

pub struct Spectral {
    pub label: String,
    pub psd: Spectrum,
    /// Absent for coherent motion, whose spectrum is a line rather than a Lorentzian.
    pub fit: Option<Fit>,
    pub noise: Option<NoiseReport<f64>>,
}

impl Spectral {
    /// Oscillation frequency for phase binning: the fitted one when there is
    /// a fit, the trap model otherwise.
    pub fn omega_hat(&self, ctx: &Context) -> f64 {
        self.fit.as_ref().map_or(ctx.dq.omega_s_rad_s, |f| f.omega0_rad_s)
    }
}

pub fn psd_stage(ctx: &Context, positions: &Traj, label: &str, sio: &mut StageIo) -> Result<Spectral> {
    let psd = estimate_psd_with(&positions.z_m, positions.sample_rate_hz, &ctx.psd_options())?;
    io::write_psd(&sio.output_with_sidecar(&format!("psd_{label}.csv")), &psd)?;
    let (fit, noise) = if ctx.state == StateKind::Coherent {
        (None, None)
    } else {
        let fit = fit_lorentzian(&psd, ctx.fit_window())?;
        io::write_json(&sio.output(&format!("fit_{label}.json")), &fit)?;
        let noise = noise_floor_and_snr(&psd, &fit);
        (Some(fit), Some(noise))
    };
    Ok(Spectral {
        label: label.to_string(),
        psd,
        fit,
        noise,
    })
}

#[derive(Serialize)]
struct NoiseSummary<'a> {
    reports: BTreeMap<&'a str, &'a NoiseReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    floor_ratio_ch_over_cbh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_gain_db: Option<f64>,
}

pub fn noise_stage(spectra: &[Spectral], sio: &mut StageIo) -> Result<()> {
    let find = |l: &str| spectra.iter().find(|s| s.label == l).and_then(|s| s.noise.as_ref());
    let (ratio, gain) = match (find("ch"), find("cbh")) {
        (Some(ch), Some(cbh)) => (Some(ch.floor / cbh.floor), Some(cbh.snr_db - ch.snr_db)),
        _ => (None, None),
    };
    let summary = NoiseSummary {
        reports: spectra
            .iter()
            .filter_map(|s| s.noise.as_ref().map(|n| (s.label.as_str(), n)))
            .collect(),
        floor_ratio_ch_over_cbh: ratio,
        snr_gain_db: gain,
    };
    io::write_json(&sio.output("noise_floor.json"), &summary)
}

#[derive(Serialize)]
pub struct AnalyzeOutput {
    #[serde(flatten)]
    pub report: WignerReport<f64>,
    pub negativity_fraction: f64,
    pub state: StateKind,
    /// Phase-space lengths in this file are in units of `length_unit_m` metres.
    pub units: String,
    pub length_unit_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_hat_rad_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_target: Option<f64>,
    /// Per-axis variance added by filtering and interpolation.
    pub resolution_variance: f64,
    /// Fitted `[var z, var p]` minus `resolution_variance`.
    pub corrected_variance: [f64; 2],
    pub n_angles: usize,
    pub grid_size: usize,
    pub filter_cutoff: f64,
}

pub struct Tomography {
    pub marginals: Marginals,
    pub wigner: Wigner,
    pub analysis: AnalyzeOutput,
}

fn finish_tomography(
    ctx: &Context,
    marginals: Marginals,
    unit: f64,
    units: &str,
    omega_hat: Option<f64>,
    variance_target: Option<f64>,
    sio: &mut StageIo,
) -> Result<Tomography> {
    let opts = ctx.fbp_options();
    let wigner = inverse_radon_with(&marginals, &opts)?;
    io::write_marginals(&sio.output_with_sidecar("marginals.csv"), &marginals)?;
    io::write_wigner(&sio.output("wigner.csv"), &wigner)?;
    let report = analyze(&wigner.rescaled(unit));
    let blur = resolution_variance(&marginals, &opts) / (unit * unit);
    let cov = report.gaussian_fit.covariance;
    let analysis = AnalyzeOutput {
        negativity_fraction: report.negativity_fraction(),
        corrected_variance: [cov[0][0] - blur, cov[1][1] - blur],
        report,
        state: ctx.state,
        units: units.to_string(),
        length_unit_m: unit,
        omega_hat_rad_s: omega_hat,
        variance_target,
        resolution_variance: blur,
        n_angles: marginals.angles_rad.len(),
        grid_size: opts.grid_size,
        filter_cutoff: opts.cutoff_fraction,
    };
    io::write_json(&sio.output("analyze.json"), &analysis)?;
    Ok(Tomography {
        marginals,
        wigner,
        analysis,
    })
}

/// Phase-binned tomography of a measured position record.
pub fn tomo_stage(ctx: &Context, positions: &Traj, omega_hat: f64, sio: &mut StageIo) -> Result<Tomography> {
    let s = &ctx.settings;
    let z = &positions.z_m;
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let sd = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (z.len() as f64 - 1.0)).sqrt();
    let grid = symmetric_grid(s.z_half_width_sd * sd, s.z_bins)?;
    let marginals = bin_marginals_with(positions, omega_hat, s.n_angles, &grid, s.min_occupancy)?;
    let target = match ctx.state {
        StateKind::Thermal => Some(ctx.dq.thermal_variance(ctx.cfg.motion_temperature())),
        _ => None,
    };
    finish_tomography(ctx, marginals, 1.0, "m", Some(omega_hat), target, sio)
}

/// Tomography of exact Fock-1 marginals; analysis in units of `sqrt(2) z_zpf`.
pub fn fock_stage(ctx: &Context, sio: &mut StageIo) -> Result<Tomography> {
    let s = &ctx.settings;
    let scale = OracleScale::from_derived(&ctx.dq, 0.0);
    let unit = scale.natural_length();
    let grid = symmetric_grid(s.z_half_width_sd * unit, s.z_bins)?;
    let angles: Vec<f64> = (0..s.n_angles).map(|a| TAU * a as f64 / s.n_angles as f64).collect();
    let oracle = oracle_marginals(StateKind::Fock1, &angles, &grid, &scale)?;
    let marginals = Marginals::from_oracle(&oracle)?;
    finish_tomography(ctx, marginals, unit, "sqrt(2) z_zpf", None, None, sio)
}

pub fn decoherence_stage(ctx: &Context, sio: &mut StageIo) -> Result<Vec<(f64, f64)>> {
    let s = &ctx.settings;
    let n = s.decoherence_points;
    let grid: Vec<f64> = if n == 1 {
        vec![s.decoherence_zmin_m]
    } else {
        let (a, b) = (s.decoherence_zmin_m.ln(), s.decoherence_zmax_m.ln());
        let mut g: Vec<f64> = (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect();
        g[0] = s.decoherence_zmin_m;
        g[n - 1] = s.decoherence_zmax_m;
        g
    };
    let curve = decoherence_curve(&grid, &ctx.dq)?;
    let (dz, tau): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
    io::write_columns(&sio.output("decoherence.csv"), &["delta_z_m", "tau_s"], &[&dz, &tau])?;
    Ok(curve)
}
