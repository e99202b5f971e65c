//! Columnar plot data and a styling hint file. Rendering is left to external tools.

use std::f64::consts::TAU;

use levitomo::{io, Result};
use serde::Serialize;

use crate::run::StageIo;
use crate::stages::{Detected, Spectral, Tomography};

#[derive(Serialize)]
struct Hint {
    file: String,
    title: String,
    kind: String,
    x: String,
    y: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<String>,
    x_scale: String,
    y_scale: String,
}

fn hint(file: &str, title: &str, kind: &str, x: &str, y: &[&str], z: Option<&str>, log: (bool, bool)) -> Hint {
    let scale = |l: bool| if l { "log" } else { "linear" }.to_string();
    Hint {
        file: file.into(),
        title: title.into(),
        kind: kind.into(),
        x: x.into(),
        y: y.iter().map(|s| s.to_string()).collect(),
        z: z.map(Into::into),
        x_scale: scale(log.0),
        y_scale: scale(log.1),
    }
}

pub struct PlotInputs<'a> {
    pub trace: Option<(&'a Detected, f64)>,
    pub tomography: &'a Tomography,
    pub spectra: &'a [Spectral],
    pub decoherence: &'a [(f64, f64)],
    pub trace_windows: usize,
}

pub fn plot_stage(p: &PlotInputs, sio: &mut StageIo) -> Result<()> {
    let mut hints = Vec::new();

    if let Some((det, omega_hat)) = p.trace {
        let n = p.trace_windows.min(det.counts.counts.len());
        let t: Vec<f64> = (0..n).map(|i| det.counts.window_time_f64(i)).collect();
        let theta: Vec<f64> = t.iter().map(|&t| (omega_hat * t).rem_euclid(TAU)).collect();
        let counts = &det.counts.counts[..n];
        let z = &det.positions.z_m[..n];
        io::write_columns(
            &sio.output("fig2a_phase_trace.csv"),
            &["t_s", "theta_rad", "counts", "z_m"],
            &[&t, &theta, counts, z],
        )?;
        hints.push(hint(
            "fig2a_phase_trace.csv",
            &format!("{} signal against oscillator phase", det.scheme.to_string().to_uppercase()),
            "scatter",
            "theta_rad",
            &["counts"],
            None,
            (false, false),
        ));
    }

    let m = &p.tomography.marginals;
    let (mut th, mut zs, mut ds) = (Vec::new(), Vec::new(), Vec::new());
    for (a, row) in m.densities.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            th.push(m.angles_rad[a]);
            zs.push(m.z_grid_m[j]);
            ds.push(d);
        }
    }
    io::write_columns(
        &sio.output("fig2b_marginals.csv"),
        &["theta_rad", "z_m", "density_per_m"],
        &[&th, &zs, &ds],
    )?;
    hints.push(hint(
        "fig2b_marginals.csv",
        "Marginal distributions",
        "heatmap",
        "theta_rad",
        &["z_m"],
        Some("density_per_m"),
        (false, false),
    ));

    let w = &p.tomography.wigner;
    let (mut wz, mut wp, mut wv) = (Vec::new(), Vec::new(), Vec::new());
    for iz in 0..w.nz() {
        for ip in 0..w.np() {
            wz.push(w.z_grid_m[iz]);
            wp.push(w.p_grid[ip]);
            wv.push(w.at(iz, ip));
        }
    }
    io::write_columns(
        &sio.output("fig2c_wigner.csv"),
        &["z_m", "p_scaled_m", "w_per_m2"],
        &[&wz, &wp, &wv],
    )?;
    hints.push(hint(
        "fig2c_wigner.csv",
        "Reconstructed Wigner function",
        "surface",
        "z_m",
        &["p_scaled_m"],
        Some("w_per_m2"),
        (false, false),
    ));

    if let Some(first) = p.spectra.first() {
        let mut names = vec!["freq_Hz".to_string()];
        let mut cols: Vec<Vec<f64>> = vec![first.psd.freqs_hz.clone()];
        for s in p.spectra {
            names.push(format!("psd_{}_m2_per_Hz", s.label));
            cols.push(s.psd.power.clone());
            if let Some(fit) = &s.fit {
                names.push(format!("fit_{}_m2_per_Hz", s.label));
                cols.push(s.psd.freqs_hz.iter().map(|&f| fit.eval(f)).collect());
            }
        }
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let col_refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        io::write_columns(&sio.output("fig2d_psd.csv"), &name_refs, &col_refs)?;
        hints.push(hint(
            "fig2d_psd.csv",
            "Position power spectral density",
            "line",
            "freq_Hz",
            &name_refs[1..],
            None,
            (false, true),
        ));
    }

    let (dz, tau): (Vec<f64>, Vec<f64>) = p.decoherence.iter().copied().unzip();
    io::write_columns(&sio.output("fig3_decoherence.csv"), &["delta_z_m", "tau_s"], &[&dz, &tau])?;
    hints.push(hint(
        "fig3_decoherence.csv",
        "Decoherence time from light scattering",
        "line",
        "delta_z_m",
        &["tau_s"],
        None,
        (true, true),
    ));

    io::write_json(&sio.output("plot_hints.json"), &hints)
}
