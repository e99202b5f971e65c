use levitomo::tomography::{
    bin_marginals_with, density_l1, inverse_radon_with, project_marginal_on, symmetric_grid, FbpOptions,
};
use levitomo::{
    analyze, bin_marginals, derive, inverse_radon, io, oracle_marginals, project_marginal, simulate_thermal,
    Config, Marginals, OracleScale, StateKind, Wigner, WignerGrid,
};
use levitomo::spectral::{estimate_psd_with, FitWindow, PsdOptions};
use levitomo::fit_lorentzian;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn angles(n: usize) -> Vec<f64> {
    (0..n).map(|a| TAU * a as f64 / n as f64).collect()
}

fn scale() -> OracleScale<f64> {
    OracleScale {
        thermal_variance: 1.0,
        z_zpf: 0.5,
        coherent_amplitude: 1.5,
        coherent_phase: 0.4,
    }
}

fn oracle(kind: StateKind, n_angles: usize, half_width: f64, n_z: usize) -> Marginals {
    let grid = symmetric_grid(half_width, n_z).unwrap();
    let o = oracle_marginals(kind, &angles(n_angles), &grid, &scale()).unwrap();
    Marginals::from_oracle(&o).unwrap()
}

fn argmax(w: &Wigner) -> (f64, f64) {
    let (mut best, mut at) = (f64::MIN, (0.0, 0.0));
    for iz in 0..w.nz() {
        for ip in 0..w.np() {
            if w.at(iz, ip) > best {
                best = w.at(iz, ip);
                at = (w.z_grid_m[iz], w.p_grid[ip]);
            }
        }
    }
    at
}

#[test]
fn thermal_oracle_normalisation_and_peak() {
    let m = oracle(StateKind::Thermal, 90, 5.0, 129);
    let w = inverse_radon(&m, 128).unwrap();
    assert!((w.total_integral() - 1.0).abs() < 0.01);
    let peak = w.value_at(0.0, 0.0);
    let target = 1.0 / (2.0 * PI);
    assert!((peak / target - 1.0).abs() < 0.02, "peak {peak}");
    let report = analyze(&w);
    assert!(report.gaussian_fit.r_squared > 0.999);
}

#[test]
fn reconstruction_keeps_the_zero_frequency_term() {
    let m = oracle(StateKind::Thermal, 45, 5.0, 129);
    let mut tripled = m.clone();
    for row in &mut tripled.densities {
        for d in row.iter_mut() {
            *d *= 3.0;
        }
    }
    let w = inverse_radon(&tripled, 96).unwrap();
    assert!((w.total_integral() / 3.0 - 1.0).abs() < 1e-3);
}

#[test]
fn fock_state_is_negative_at_origin() {
    let cfg = Config::reference();
    let dq = derive(&cfg).unwrap();
    let sc = OracleScale::from_derived(&dq, 0.0);
    let s = sc.natural_length();
    let grid = symmetric_grid(5.0 * s, 129).unwrap();
    let o = oracle_marginals(StateKind::Fock1, &angles(90), &grid, &sc).unwrap();
    let w = inverse_radon(&Marginals::from_oracle(&o).unwrap(), 128).unwrap();
    let natural = w.rescaled(s);
    let w00 = natural.value_at(0.0, 0.0);
    assert!(w00 <= -0.2, "W(0,0) = {w00}");
    assert!(w00 >= -1.0 / PI - 0.02);
}

#[test]
fn coherent_ridge_sits_at_the_amplitude() {
    let m = oracle(StateKind::Coherent, 90, 4.0, 129);
    let w = inverse_radon(&m, 128).unwrap();
    let sc = scale();
    let expect = (
        sc.coherent_amplitude * sc.coherent_phase.cos(),
        -sc.coherent_amplitude * sc.coherent_phase.sin(),
    );
    let (z, p) = argmax(&w);
    assert!((z - expect.0).abs() <= w.dz && (p - expect.1).abs() <= w.dp, "peak at ({z}, {p})");
}

#[test]
fn point_source_stays_concentrated() {
    let grid: Vec<f64> = symmetric_grid(4.0, 129).unwrap();
    let dz = grid[1] - grid[0];
    let n = 90;
    let densities = vec![
        grid.iter().map(|&z| if z.abs() < dz / 2.0 { 1.0 / dz } else { 0.0 }).collect::<Vec<_>>();
        n
    ];
    let m = Marginals::from_densities(angles(n), grid, densities).unwrap();
    let w = inverse_radon(&m, 128).unwrap();
    let r = 3.0 * w.dz;
    let inner = w.integrate_with(|z, p, v| if z * z + p * p <= r * r { v } else { 0.0 });
    let total = w.total_integral();
    assert!(inner / total > 0.9, "{}", inner / total);
}

#[test]
fn rotation_covariance() {
    let n = 90;
    let m = oracle(StateKind::Coherent, n, 4.0, 129);
    let w = inverse_radon(&m, 128).unwrap();
    for shift in [5usize, 22, 45] {
        let turned = inverse_radon(&m.shifted(shift), 128).unwrap();
        let expect = w.rotated(TAU * shift as f64 / n as f64);
        let l1 = turned.l1_distance(&expect);
        assert!(l1 < 0.02, "shift {shift}: L1 {l1}");
    }
}

#[test]
fn projection_of_reconstruction_matches_marginals() {
    let m = oracle(StateKind::Coherent, 90, 4.0, 129);
    let w = inverse_radon(&m, 128).unwrap();
    for a in [0usize, 17, 60] {
        let back = project_marginal_on(&w, m.angles_rad[a], &m.z_grid_m);
        let l1 = density_l1(&back, &m.densities[a], m.dz());
        assert!(l1 < 0.02, "angle {a}: {l1}");
    }
}

#[test]
fn projection_of_analytic_coherent_wigner() {
    let sc = scale();
    let (z0, p0) = (
        sc.coherent_amplitude * sc.coherent_phase.cos(),
        -sc.coherent_amplitude * sc.coherent_phase.sin(),
    );
    let v = sc.z_zpf * sc.z_zpf;
    let w = WignerGrid::from_fn(5.0, 201, |z: f64, p: f64| {
        (-((z - z0).powi(2) + (p - p0).powi(2)) / (2.0 * v)).exp() / (TAU * v)
    })
    .unwrap();
    let grid = symmetric_grid(4.0, 129).unwrap();
    let o = oracle_marginals(StateKind::Coherent, &[0.0, 1.0, 4.0], &grid, &sc).unwrap();
    for (a, &th) in o.angles_rad.iter().enumerate() {
        let proj = project_marginal_on(&w, th, &grid);
        assert!(density_l1(&proj, &o.densities[a], grid[1] - grid[0]) < 2e-3);
    }
    assert_eq!(project_marginal(&w, 0.3).len(), w.nz());
}

fn combine(a: &Marginals, b: &Marginals, x: f64, y: f64) -> Marginals {
    let mut out = a.clone();
    for (ro, (ra, rb)) in out.densities.iter_mut().zip(a.densities.iter().zip(&b.densities)) {
        for (o, (p, q)) in ro.iter_mut().zip(ra.iter().zip(rb)) {
            *o = x * p + y * q;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reconstruction_is_linear(x in -3.0f64..3.0, y in -3.0f64..3.0, cut in 0.2f64..1.0) {
        let a = oracle(StateKind::Coherent, 16, 4.0, 33);
        let b = oracle(StateKind::Fock1, 16, 4.0, 33);
        let opts = FbpOptions { grid_size: 32, cutoff_fraction: cut };
        let wa = inverse_radon_with(&a, &opts).unwrap();
        let wb = inverse_radon_with(&b, &opts).unwrap();
        let wc = inverse_radon_with(&combine(&a, &b, x, y), &opts).unwrap();
        let scale = wa.values.iter().chain(&wb.values).fold(0.0f64, |m, v| m.max(v.abs()));
        for ((c, p), q) in wc.values.iter().zip(&wa.values).zip(&wb.values) {
            prop_assert!((c - (x * p + y * q)).abs() <= 1e-10 * scale * (x.abs() + y.abs() + 1.0));
        }
    }

    #[test]
    fn thermal_oracle_normalises(var in 0.3f64..3.0) {
        let sc = OracleScale { thermal_variance: var, ..scale() };
        let grid = symmetric_grid(5.0 * var.sqrt(), 65).unwrap();
        let o = oracle_marginals(StateKind::Thermal, &angles(24), &grid, &sc).unwrap();
        let w = inverse_radon(&Marginals::from_oracle(&o).unwrap(), 64).unwrap();
        prop_assert!((w.total_integral() - 1.0).abs() < 0.01);
    }
}

fn thermal_record(duration: f64, seed: u64) -> (Config, levitomo::Derived, levitomo::Traj) {
    let mut cfg = Config::reference();
    cfg.pressure_mbar = 1.0;
    cfg.mode_temperature = Some(0.003);
    let dq = derive(&cfg).unwrap();
    let traj = simulate_thermal(&cfg, &dq, duration, 1e6, seed).unwrap();
    (cfg, dq, traj)
}

#[test]
fn thermal_marginal_variances_agree_with_equipartition() {
    let (_, dq, traj) = thermal_record(1.0, 7);
    let target = dq.thermal_variance(0.003);
    let sd = target.sqrt();
    let grid = symmetric_grid(5.0 * sd, 129).unwrap();
    let m = bin_marginals(&traj, dq.omega_s_rad_s, 90, &grid).unwrap();
    assert!(!m.under_sampled);
    let dz = m.dz();
    for a in 0..m.angles_rad.len() {
        let (mean, var) = m.moments(a);
        let n = m.occupancy[a] as f64;
        let sigma = (4.0 / (dq.gas_damping_per_s * traj.duration()) + 2.0 / n).sqrt();
        let rel = (var - dz * dz / 12.0) / target - 1.0;
        assert!(rel.abs() < 3.0 * sigma, "angle {a}: {rel} vs 3 sigma {}", 3.0 * sigma);
        assert!(mean.abs() < 3.0 * sd * sigma);
    }
}

#[test]
fn eight_angle_occupancy_is_uniform() {
    let (_, dq, traj) = thermal_record(1.0, 8);
    let grid = symmetric_grid(5.0 * dq.thermal_variance(0.003).sqrt(), 129).unwrap();
    let psd = estimate_psd_with(&traj.z_m, 1e6, &PsdOptions::default()).unwrap();
    let fit = fit_lorentzian(&psd, FitWindow::around(dq.omega_s_rad_s / TAU)).unwrap();
    let m = bin_marginals(&traj, fit.omega0_rad_s, 8, &grid).unwrap();
    let expect = traj.len() as f64 / 8.0;
    for &o in &m.occupancy {
        assert!((o as f64 - expect).abs() < 3.0 * expect.sqrt(), "{o} vs {expect}");
    }
    assert_eq!(m.occupancy.iter().sum::<usize>(), traj.len());
}

#[test]
fn commensurate_phases_fill_bins_unevenly() {
    // 70 kHz at 1 MHz visits 100 phases, which 8 nearest-centre bins split 13/12.
    let (_, dq, traj) = thermal_record(1.0, 8);
    let grid = symmetric_grid(5.0 * dq.thermal_variance(0.003).sqrt(), 129).unwrap();
    let m = bin_marginals(&traj, TAU * 7e4, 8, &grid).unwrap();
    let total = traj.len();
    for (a, &o) in m.occupancy.iter().enumerate() {
        let share = if a % 2 == 0 { 13 } else { 12 };
        assert_eq!(o, total / 100 * share, "bin {a}");
    }
}

#[test]
fn sparse_bins_are_flagged_and_rejected() {
    let (_, dq, traj) = thermal_record(1e-3, 9);
    let grid = symmetric_grid(5.0 * dq.thermal_variance(0.003).sqrt(), 129).unwrap();
    let m = bin_marginals_with(&traj, dq.omega_s_rad_s, 90, &grid, 100).unwrap();
    assert!(m.under_sampled);
    assert!(matches!(
        inverse_radon(&m, 64),
        Err(levitomo::Error::UnderSampled { .. })
    ));
}

#[test]
fn marginal_and_wigner_csv_round_trip() {
    let (_, dq, traj) = thermal_record(0.02, 10);
    let grid = symmetric_grid(5.0 * dq.thermal_variance(0.003).sqrt(), 65).unwrap();
    let m = bin_marginals_with(&traj, dq.omega_s_rad_s, 16, &grid, 10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mp = dir.path().join("marginals.csv");
    io::write_marginals(&mp, &m).unwrap();
    let back: Marginals = io::read_marginals(&mp).unwrap();
    assert_eq!(back, m);

    let w = inverse_radon(&m, 48).unwrap();
    let wp = dir.path().join("wigner.csv");
    io::write_wigner(&wp, &w).unwrap();
    let back: Wigner = io::read_wigner(&wp).unwrap();
    assert_eq!(back, w);
}
