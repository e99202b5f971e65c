use levitomo::spectral::estimate_psd;
use levitomo::{derive, io, simulate_coherent, simulate_thermal, Config, Error, StateKind, Trajectory};

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Relative standard deviation of a sample variance over `duration` for an
/// underdamped oscillator with energy damping rate `xi`: `sqrt(2 / (xi T))`.
fn variance_rel_sd(xi: f64, duration: f64) -> f64 {
    (2.0 / (xi * duration)).sqrt()
}

#[test]
fn equipartition_at_room_temperature() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    let traj = simulate_thermal(&cfg, &dq, 1.0, 1e6, 11).unwrap();
    let expected = dq.thermal_variance(300.0);
    let rel = variance(&traj.z_m) / expected - 1.0;
    let tol = 3.0 * variance_rel_sd(dq.gas_damping_per_s, 1.0);
    assert!(rel.abs() < tol, "relative error {rel}, 3 sigma {tol}");
}

#[test]
fn first_and_second_half_agree() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    let traj = simulate_thermal(&cfg, &dq, 1.0, 1e6, 12).unwrap();
    let (a, b) = traj.z_m.split_at(traj.len() / 2);
    let sd_each = variance_rel_sd(dq.gas_damping_per_s, 0.5);
    let rel = variance(a) / variance(b) - 1.0;
    assert!(rel.abs() < 3.0 * 2f64.sqrt() * sd_each, "halves differ by {rel}");
}

#[test]
fn half_period_autocorrelation_is_negative() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    assert!(dq.gas_damping_per_s < 1e-3 * dq.omega_s_rad_s);
    let traj = simulate_thermal(&cfg, &dq, 0.2, 1e6, 13).unwrap();
    let lag = (std::f64::consts::PI / dq.omega_s_rad_s * 1e6).round() as usize;
    let z = &traj.z_m;
    let n = z.len() - lag;
    let c0: f64 = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    let c: f64 = (0..n).map(|i| z[i] * z[i + lag]).sum::<f64>() / n as f64;
    assert!(c / c0 < -0.9, "normalised autocorrelation {}", c / c0);
}

#[test]
fn spectrum_peaks_at_trap_frequency() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    let traj = simulate_thermal(&cfg, &dq, 1.0, 1e6, 14).unwrap();
    let psd = estimate_psd(&traj.z_m, 1e6, 1 << 14, 0.5).unwrap();
    let (k, _) = psd
        .power
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let f_s = dq.omega_s_rad_s / std::f64::consts::TAU;
    assert!(
        (psd.freqs_hz[k] - f_s).abs() <= psd.resolution_hz(),
        "peak at {} Hz, expected {f_s}",
        psd.freqs_hz[k]
    );
}

#[test]
fn same_seed_is_bitwise_identical() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    let a = simulate_thermal(&cfg, &dq, 0.01, 1e6, 99).unwrap();
    let b = simulate_thermal(&cfg, &dq, 0.01, 1e6, 99).unwrap();
    let c = simulate_thermal(&cfg, &dq, 0.01, 1e6, 100).unwrap();
    assert!(a.z_m.iter().zip(&b.z_m).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.z_m, c.z_m);
    assert_eq!(a.seed, Some(99));
}

#[test]
fn cold_undamped_mode_stays_at_rest() {
    let mut cfg = Config::reference();
    cfg.mode_temperature = Some(0.0);
    let mut dq = derive(&cfg).unwrap();
    dq.gas_damping_per_s = 0.0;
    let traj = simulate_thermal(&cfg, &dq, 1e-4, 1e7, 1).unwrap();
    assert!(traj.z_m.iter().all(|&z| z == 0.0));
}

#[test]
fn coherent_half_period() {
    let cfg = Config::reference();
    let mut dq = derive(&cfg).unwrap();
    // 5 samples per half period at this rate.
    dq.omega_s_rad_s = std::f64::consts::PI * 1e5;
    let traj = simulate_coherent(&dq, 2e-9, 0.0, 1e-3, 1e6).unwrap();
    assert!((traj.z_m[10] + 2e-9).abs() < 1e-20);
    let zero = simulate_coherent(&dq, 0.0, 0.3, 1e-3, 1e6).unwrap();
    assert!(zero.z_m.iter().all(|&z| z == 0.0));
    assert!(simulate_coherent(&dq, -1.0, 0.0, 1e-3, 1e6).is_err());
}

#[test]
fn undersampling_names_the_minimum() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    match simulate_thermal(&cfg, &dq, 1.0, 2e5, 1) {
        Err(Error::SampleRateTooLow { required, .. }) => {
            assert!(required > 2e5);
        }
        other => panic!("expected sample-rate error, got {other:?}"),
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    let traj = simulate_thermal(&cfg, &dq, 1e-3, 1e6, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    io::write_trajectory(&path, &traj).unwrap();
    let back: Trajectory<f64> = io::read_trajectory(&path).unwrap();
    assert_eq!(back, traj);
    assert_eq!(back.state_kind, StateKind::Thermal);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t_s,z_m\n"));
}
