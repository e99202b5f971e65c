//! Experiment configuration and its flat `name = value` file format.
//!
//! ```text
//! # 1550 nm trap
//! wavelength_m = 1.55e-6
//! power_W = 0.65
//! ```
//!
//! Keys are the field names below with SI units in the suffix. Unknown keys are
//! rejected so that typos never silently fall back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Every physical parameter of the trap, particle, environment and detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExperimentConfig<T> {
    #[serde(rename = "wavelength_m")]
    pub wavelength: T,
    #[serde(rename = "power_W")]
    pub power: T,
    #[serde(rename = "waist_m")]
    pub waist: T,
    #[serde(rename = "particle_radius_m")]
    pub particle_radius: T,
    #[serde(rename = "density_kg_m3")]
    pub density: T,
    pub epsilon_r: T,
    /// Environment (gas) temperature.
    #[serde(rename = "temperature_K")]
    pub temperature: T,
    /// Temperature of the simulated centre-of-mass mode. `None` means the mode
    /// is thermalised with the environment.
    #[serde(rename = "mode_temperature_K")]
    pub mode_temperature: Option<T>,
    #[serde(rename = "pressure_mbar")]
    pub pressure_mbar: T,
    #[serde(rename = "detector_area_m2")]
    pub detector_area: T,
    #[serde(rename = "integration_time_s")]
    pub integration_time: T,
    #[serde(rename = "field_amp_A")]
    pub field_amp_a: T,
    #[serde(rename = "field_amp_B")]
    pub field_amp_b: T,
    #[serde(rename = "phase_d_rad")]
    pub phase_d: T,
    #[serde(rename = "phase_s_rad")]
    pub phase_s: T,
    pub shot_noise: bool,
    pub electronic_noise_counts_rms: T,
    /// Use the textbook Rayleigh cross section `8 pi^3 eps_c^2 V^2 / (3 lambda^4)`
    /// instead of the default `8 pi^3 eps_c V^2 / lambda^4`.
    pub rayleigh_standard_form: bool,
}

const KEYS: &[&str] = &[
    "wavelength_m",
    "power_W",
    "waist_m",
    "particle_radius_m",
    "density_kg_m3",
    "epsilon_r",
    "temperature_K",
    "mode_temperature_K",
    "pressure_mbar",
    "detector_area_m2",
    "integration_time_s",
    "field_amp_A",
    "field_amp_B",
    "phase_d_rad",
    "phase_s_rad",
    "shot_noise",
    "electronic_noise_counts_rms",
    "rayleigh_standard_form",
];

/// Axial trap frequency reported for the reference experiment (rad/s).
pub const REFERENCE_OMEGA_S: f64 = 2.0 * std::f64::consts::PI * 70.0e3;

impl<T: Real> ExperimentConfig<T> {
    /// Silica sphere in a 1550 nm, 650 mW trap at 1e-2 mbar and 300 K.
    ///
    /// The waist is not a measured quantity; it is calibrated so the axial
    /// frequency is 2 pi x 70 kHz.
    pub fn reference() -> Self {
        let mut cfg = ExperimentConfig {
            wavelength: T::lit(1550e-9),
            power: T::lit(0.65),
            waist: T::lit(1e-6),
            particle_radius: T::lit(17e-9),
            density: T::lit(2200.0),
            epsilon_r: T::lit(2.1),
            temperature: T::lit(300.0),
            mode_temperature: None,
            pressure_mbar: T::lit(1e-2),
            detector_area: T::lit(1e-6),
            integration_time: T::lit(1e-6),
            field_amp_a: T::lit(100.0),
            field_amp_b: T::lit(30.0),
            phase_d: T::FRAC_PI_2(),
            phase_s: T::zero(),
            shot_noise: true,
            electronic_noise_counts_rms: T::zero(),
            rayleigh_standard_form: false,
        };
        cfg.waist = crate::physics::calibrate_waist(T::lit(REFERENCE_OMEGA_S), &cfg)
            .expect("reference config is physical");
        cfg
    }

    /// Temperature that sets the amplitude of the simulated motion.
    pub fn motion_temperature(&self) -> T {
        self.mode_temperature.unwrap_or(self.temperature)
    }

    pub fn delta_phi(&self) -> T {
        self.phase_d - self.phase_s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength_m", self.wavelength),
            ("power_W", self.power),
            ("waist_m", self.waist),
            ("particle_radius_m", self.particle_radius),
            ("density_kg_m3", self.density),
            ("temperature_K", self.temperature),
            ("pressure_mbar", self.pressure_mbar),
            ("detector_area_m2", self.detector_area),
            ("integration_time_s", self.integration_time),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(bad(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.epsilon_r.is_finite() && self.epsilon_r > T::one()) {
            return Err(bad(
                "epsilon_r",
                format!("must exceed 1 for a trapping potential, got {}", self.epsilon_r),
            ));
        }
        if let Some(t) = self.mode_temperature {
            if !(t.is_finite() && t >= T::zero()) {
                return Err(bad("mode_temperature_K", format!("must be >= 0, got {t}")));
            }
        }
        for (name, v) in [
            ("field_amp_A", self.field_amp_a),
            ("field_amp_B", self.field_amp_b),
            ("electronic_noise_counts_rms", self.electronic_noise_counts_rms),
        ] {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(bad(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("phase_d_rad", self.phase_d), ("phase_s_rad", self.phase_s)] {
            if !v.is_finite() {
                return Err(bad(name, "must be finite".into()));
            }
        }
        Ok(())
    }

    /// Sets one field from its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let num = || -> Result<T> {
            value
                .parse::<f64>()
                .ok()
                .and_then(T::from_f64)
                .ok_or_else(|| bad(key, format!("cannot parse `{value}` as a number")))
        };
        let flag = || -> Result<bool> {
            match value {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(bad(key, format!("cannot parse `{value}` as a boolean"))),
            }
        };
        match key {
            "wavelength_m" => self.wavelength = num()?,
            "power_W" => self.power = num()?,
            "waist_m" => self.waist = num()?,
            "particle_radius_m" => self.particle_radius = num()?,
            "density_kg_m3" => self.density = num()?,
            "epsilon_r" => self.epsilon_r = num()?,
            "temperature_K" => self.temperature = num()?,
            "mode_temperature_K" => {
                self.mode_temperature = match value {
                    "none" | "" => None,
                    _ => Some(num()?),
                }
            }
            "pressure_mbar" => self.pressure_mbar = num()?,
            "detector_area_m2" => self.detector_area = num()?,
            "integration_time_s" => self.integration_time = num()?,
            "field_amp_A" => self.field_amp_a = num()?,
            "field_amp_B" => self.field_amp_b = num()?,
            "phase_d_rad" => self.phase_d = num()?,
            "phase_s_rad" => self.phase_s = num()?,
            "shot_noise" => self.shot_noise = flag()?,
            "electronic_noise_counts_rms" => self.electronic_noise_counts_rms = num()?,
            "rayleigh_standard_form" => self.rayleigh_standard_form = flag()?,
            _ => {
                return Err(Error::Config {
                    field: key.to_string(),
                    reason: format!("unknown key (known keys: {})", KEYS.join(", ")),
                })
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("override `{assignment}` is not of the form key=value"))
        })?;
        self.set(k.trim(), v)
    }

    /// Parses config text on top of [`ExperimentConfig::reference`] defaults.
    ///
    /// Keys not present keep their reference values. A file that sets
    /// `waist_m` explicitly uses that waist; otherwise the calibrated one.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::reference();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: idx + 1,
                reason: format!("expected `name = value`, got `{line}`"),
            })?;
            cfg.set(k.trim(), v).map_err(|e| match e {
                Error::Config { field, reason } => Error::ConfigParse {
                    line: idx + 1,
                    reason: format!("`{field}`: {reason}"),
                },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serialises back into the key-value format; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("wavelength_m", self.wavelength.to_string());
        line("power_W", self.power.to_string());
        line("waist_m", self.waist.to_string());
        line("particle_radius_m", self.particle_radius.to_string());
        line("density_kg_m3", self.density.to_string());
        line("epsilon_r", self.epsilon_r.to_string());
        line("temperature_K", self.temperature.to_string());
        line(
            "mode_temperature_K",
            self.mode_temperature
                .map_or_else(|| "none".to_string(), |t| t.to_string()),
        );
        line("pressure_mbar", self.pressure_mbar.to_string());
        line("detector_area_m2", self.detector_area.to_string());
        line("integration_time_s", self.integration_time.to_string());
        line("field_amp_A", self.field_amp_a.to_string());
        line("field_amp_B", self.field_amp_b.to_string());
        line("phase_d_rad", self.phase_d.to_string());
        line("phase_s_rad", self.phase_s.to_string());
        line("shot_noise", self.shot_noise.to_string());
        line(
            "electronic_noise_counts_rms",
            self.electronic_noise_counts_rms.to_string(),
        );
        line("rayleigh_standard_form", self.rayleigh_standard_form.to_string());
        out
    }
}

fn bad(field: &str, reason: String) -> Error {
    Error::Config {
        field: field.to_string(),
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Cfg = ExperimentConfig<f64>;

    #[test]
    fn reference_is_valid() {
        Cfg::reference().validate().unwrap();
        ExperimentConfig::<f32>::reference().validate().unwrap();
    }

    #[test]
    fn parse_comments_and_overrides() {
        let cfg = Cfg::parse("# comment\npower_W = 1.3  # trailing\n\nepsilon_r=2.0\n").unwrap();
        assert_eq!(cfg.power, 1.3);
        assert_eq!(cfg.epsilon_r, 2.0);
        assert_eq!(cfg.wavelength, 1550e-9);
    }

    #[test]
    fn unknown_key_is_error() {
        let err = Cfg::parse("pwoer_W = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 1, .. }), "{err}");
        assert!(err.to_string().contains("pwoer_W"));
    }

    #[test]
    fn missing_equals_is_error() {
        assert!(matches!(
            Cfg::parse("power_W 1\n"),
            Err(Error::ConfigParse { line: 1, .. })
        ));
    }

    #[test]
    fn invariant_violations_name_the_field() {
        for (key, val) in [
            ("epsilon_r", "1.0"),
            ("power_W", "0"),
            ("waist_m", "-1e-6"),
            ("temperature_K", "nan"),
            ("field_amp_B", "-2"),
        ] {
            let err = Cfg::parse(&format!("{key} = {val}\n")).unwrap_err();
            assert!(err.to_string().contains(key), "{key}: {err}");
        }
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = Cfg::reference();
        cfg.mode_temperature = Some(0.003);
        cfg.shot_noise = false;
        assert_eq!(Cfg::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn override_syntax() {
        let mut cfg = Cfg::reference();
        cfg.apply_override("power_W=2.6").unwrap();
        assert_eq!(cfg.power, 2.6);
        assert!(cfg.apply_override("power_W").is_err());
        assert!(cfg.apply_override("shot_noise=maybe").is_err());
    }
}
