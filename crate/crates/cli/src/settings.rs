//! Run-level knobs that live in the same key-value file as the physical
//! configuration but are not part of it.

use std::str::FromStr;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// Linear model when the motion passes its guard, exact otherwise.
    Auto,
    Linear,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationChoice {
    Absolute,
    Equipartition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSettings {
    pub duration_s: f64,
    #[serde(rename = "sample_rate_Hz")]
    pub sample_rate_hz: f64,
    pub n_angles: usize,
    pub z_bins: usize,
    pub z_half_width_sd: f64,
    pub grid_size: usize,
    pub filter_cutoff: f64,
    pub min_occupancy: usize,
    pub psd_segment_len: Option<usize>,
    pub psd_overlap: f64,
    pub count_model: ModelChoice,
    pub calibration: CalibrationChoice,
    pub coherent_amplitude_m: f64,
    pub coherent_phase_rad: f64,
    pub decoherence_zmin_m: f64,
    pub decoherence_zmax_m: f64,
    pub decoherence_points: usize,
    pub plot_trace_windows: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            duration_s: 1.0,
            sample_rate_hz: 1e6,
            n_angles: 90,
            z_bins: 129,
            z_half_width_sd: 5.0,
            grid_size: 128,
            filter_cutoff: 1.0,
            min_occupancy: 100,
            psd_segment_len: None,
            psd_overlap: 0.5,
            count_model: ModelChoice::Auto,
            calibration: CalibrationChoice::Absolute,
            coherent_amplitude_m: 5e-9,
            coherent_phase_rad: 0.0,
            decoherence_zmin_m: 1e-12,
            decoherence_zmax_m: 1e-6,
            decoherence_points: 200,
            plot_trace_windows: 2000,
        }
    }
}

pub const KEYS: &[&str] = &[
    "duration_s",
    "sample_rate_Hz",
    "n_angles",
    "z_bins",
    "z_half_width_sd",
    "grid_size",
    "filter_cutoff",
    "min_occupancy",
    "psd_segment_len",
    "psd_overlap",
    "count_model",
    "calibration",
    "coherent_amplitude_m",
    "coherent_phase_rad",
    "decoherence_zmin_m",
    "decoherence_zmax_m",
    "decoherence_points",
    "plot_trace_windows",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("setting `{key}`: cannot parse `{value}`")))
}

impl RunSettings {
    pub fn is_key(key: &str) -> bool {
        KEYS.contains(&key)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "duration_s" => self.duration_s = parse(key, v)?,
            "sample_rate_Hz" => self.sample_rate_hz = parse(key, v)?,
            "n_angles" => self.n_angles = parse(key, v)?,
            "z_bins" => self.z_bins = parse(key, v)?,
            "z_half_width_sd" => self.z_half_width_sd = parse(key, v)?,
            "grid_size" => self.grid_size = parse(key, v)?,
            "filter_cutoff" => self.filter_cutoff = parse(key, v)?,
            "min_occupancy" => self.min_occupancy = parse(key, v)?,
            "psd_segment_len" => {
                self.psd_segment_len = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "psd_overlap" => self.psd_overlap = parse(key, v)?,
            "count_model" => {
                self.count_model = match v {
                    "auto" => ModelChoice::Auto,
                    "linear" => ModelChoice::Linear,
                    "exact" => ModelChoice::Exact,
                    _ => return Err(CliError::Usage(format!("count_model must be auto, linear or exact, got `{v}`"))),
                }
            }
            "calibration" => {
                self.calibration = match v {
                    "absolute" => CalibrationChoice::Absolute,
                    "equipartition" => CalibrationChoice::Equipartition,
                    _ => {
                        return Err(CliError::Usage(format!(
                            "calibration must be absolute or equipartition, got `{v}`"
                        )))
                    }
                }
            }
            "coherent_amplitude_m" => self.coherent_amplitude_m = parse(key, v)?,
            "coherent_phase_rad" => self.coherent_phase_rad = parse(key, v)?,
            "decoherence_zmin_m" => self.decoherence_zmin_m = parse(key, v)?,
            "decoherence_zmax_m" => self.decoherence_zmax_m = parse(key, v)?,
            "decoherence_points" => self.decoherence_points = parse(key, v)?,
            "plot_trace_windows" => self.plot_trace_windows = parse(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown run setting `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if !(self.duration_s > 0.0) || !(self.sample_rate_hz > 0.0) {
            return bad("duration_s and sample_rate_Hz must be > 0".into());
        }
        if self.z_bins < 3 || self.z_bins.is_multiple_of(2) {
            return bad(format!("z_bins must be odd and >= 3, got {}", self.z_bins));
        }
        if !(self.z_half_width_sd > 0.0) {
            return bad("z_half_width_sd must be > 0".into());
        }
        if self.grid_size < 8 {
            return bad(format!("grid_size must be >= 8, got {}", self.grid_size));
        }
        if !(self.filter_cutoff > 0.0 && self.filter_cutoff <= 1.0) {
            return bad(format!("filter_cutoff must be in (0, 1], got {}", self.filter_cutoff));
        }
        if !(0.0..1.0).contains(&self.psd_overlap) {
            return bad(format!("psd_overlap must be in [0, 1), got {}", self.psd_overlap));
        }
        if !(self.coherent_amplitude_m >= 0.0) {
            return bad("coherent_amplitude_m must be >= 0".into());
        }
        let ordered = self.decoherence_zmax_m > self.decoherence_zmin_m
            || (self.decoherence_points == 1 && self.decoherence_zmax_m == self.decoherence_zmin_m);
        if !(self.decoherence_zmin_m > 0.0 && ordered) {
            return bad(format!(
                "decoherence range needs 0 < zmin < zmax, got [{:e}, {:e}]",
                self.decoherence_zmin_m, self.decoherence_zmax_m
            ));
        }
        if self.decoherence_points == 0 {
            return bad("decoherence_points must be >= 1".into());
        }
        Ok(())
    }
}

/// Splits config text into physical-config text and run settings. Lines
/// holding run settings are blanked so parse errors keep their line numbers.
pub fn split_config_text(text: &str) -> Result<(String, RunSettings), CliError> {
    let mut settings = RunSettings::default();
    let mut physical = String::with_capacity(text.len());
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        match line.split_once('=') {
            Some((k, v)) if RunSettings::is_key(k.trim()) => settings.set(k.trim(), v)?,
            _ => physical.push_str(raw),
        }
        physical.push('\n');
    }
    Ok((physical, settings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_keeps_line_numbers() {
        let (phys, s) = split_config_text("power_W = 1\nn_angles = 16 # comment\nbogus\n").unwrap();
        assert_eq!(phys, "power_W = 1\n\nbogus\n");
        assert_eq!(s.n_angles, 16);
    }

    #[test]
    fn segment_len_auto() {
        let mut s = RunSettings::default();
        s.set("psd_segment_len", "4096").unwrap();
        assert_eq!(s.psd_segment_len, Some(4096));
        s.set("psd_segment_len", "auto").unwrap();
        assert_eq!(s.psd_segment_len, None);
        assert!(s.set("count_model", "quadratic").is_err());
    }

    #[test]
    fn validation() {
        let mut s = RunSettings::default();
        s.validate().unwrap();
        s.z_bins = 128;
        assert!(s.validate().is_err());
    }
}
