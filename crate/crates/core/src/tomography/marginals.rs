use serde::{Deserialize, Serialize};

use crate::dynamics::{OracleMarginals, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::{trapezoid, variance, Real};

pub const DEFAULT_N_ANGLES: usize = 90;
pub const DEFAULT_Z_BINS: usize = 129;
/// Half-width of the default position grid in sample standard deviations.
pub const DEFAULT_Z_HALF_WIDTH_SD: f64 = 5.0;
pub const DEFAULT_MIN_OCCUPANCY: usize = 100;
pub const MIN_ANGLES: usize = 8;
pub const MIN_PERIODS: f64 = 50.0;

/// Quadrature histograms indexed by oscillator phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MarginalSet<T> {
    /// Bin centres `2 pi a / n_angles`.
    pub angles_rad: Vec<T>,
    pub z_grid_m: Vec<T>,
    /// `densities[a][j]`, each row with unit trapezoid integral.
    pub densities: Vec<Vec<T>>,
    /// Raw histogram counts, empty for analytic marginals.
    pub counts_per_bin: Vec<Vec<u64>>,
    /// Samples assigned to each angle, in range or not.
    pub occupancy: Vec<usize>,
    pub omega_used_rad_s: T,
    pub min_occupancy: usize,
    pub under_sampled: bool,
}

impl<T: Real> MarginalSet<T> {
    /// Wraps analytic densities; occupancy is reported as unbounded.
    pub fn from_densities(angles_rad: Vec<T>, z_grid_m: Vec<T>, densities: Vec<Vec<T>>) -> Result<Self> {
        check_grid(&z_grid_m)?;
        if densities.len() != angles_rad.len() || densities.iter().any(|d| d.len() != z_grid_m.len()) {
            return Err(Error::InvalidArgument(
                "density matrix shape does not match angles x grid".into(),
            ));
        }
        let n = angles_rad.len();
        Ok(MarginalSet {
            angles_rad,
            z_grid_m,
            densities,
            counts_per_bin: Vec::new(),
            occupancy: vec![usize::MAX; n],
            omega_used_rad_s: T::zero(),
            min_occupancy: 0,
            under_sampled: false,
        })
    }

    pub fn from_oracle(oracle: &OracleMarginals<T>) -> Result<Self> {
        Self::from_densities(
            oracle.angles_rad.clone(),
            oracle.z_grid_m.clone(),
            oracle.densities.clone(),
        )
    }

    pub fn dz(&self) -> T {
        self.z_grid_m[1] - self.z_grid_m[0]
    }

    /// Mean and variance of the density at angle index `a`.
    pub fn moments(&self, a: usize) -> (T, T) {
        let dz = self.dz();
        let row = &self.densities[a];
        let norm = trapezoid(row, dz);
        let first: Vec<T> = row.iter().zip(&self.z_grid_m).map(|(&d, &z)| d * z).collect();
        let m = trapezoid(&first, dz) / norm;
        let second: Vec<T> = row
            .iter()
            .zip(&self.z_grid_m)
            .map(|(&d, &z)| d * (z - m) * (z - m))
            .collect();
        (m, trapezoid(&second, dz) / norm)
    }

    /// Cyclically relabels angle bins: density `a` moves to `a + shift`.
    pub fn shifted(&self, shift: usize) -> Self {
        let n = self.angles_rad.len();
        let mut out = self.clone();
        for a in 0..n {
            out.densities[(a + shift) % n] = self.densities[a].clone();
            if !self.counts_per_bin.is_empty() {
                out.counts_per_bin[(a + shift) % n] = self.counts_per_bin[a].clone();
            }
            out.occupancy[(a + shift) % n] = self.occupancy[a];
        }
        out
    }
}

/// Odd-length uniform grid over `[-half_width, half_width]`.
pub fn symmetric_grid<T: Real>(half_width: T, n: usize) -> Result<Vec<T>> {
    if n < 3 || n.is_multiple_of(2) || !(half_width > T::zero()) {
        return Err(Error::BadGrid(format!(
            "need odd n >= 3 and positive half width (n = {n}, half width = {half_width})"
        )));
    }
    let step = T::lit(2.0) * half_width / T::from_usize_lossy(n - 1);
    let mid = (n / 2) as isize;
    Ok((0..n)
        .map(|i| T::from_isize(i as isize - mid).expect("small index") * step)
        .collect())
}

/// Default grid for a record: +-5 sample standard deviations, 129 points.
pub fn default_grid<T: Real>(samples: &[T]) -> Result<Vec<T>> {
    let sd = variance(samples).sqrt();
    symmetric_grid(sd * T::lit(DEFAULT_Z_HALF_WIDTH_SD), DEFAULT_Z_BINS)
}

pub(crate) fn check_grid<T: Real>(grid: &[T]) -> Result<()> {
    let n = grid.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::BadGrid(format!("length {n}")));
    }
    let step = grid[1] - grid[0];
    if !(step > T::zero()) {
        return Err(Error::BadGrid("not increasing".into()));
    }
    let tol = step * T::lit(1e-6);
    for i in 1..n {
        let d = grid[i] - grid[i - 1];
        if (d - step).abs() > tol {
            return Err(Error::BadGrid(format!("step {i} is {d}, expected {step}")));
        }
    }
    if (grid[0] + grid[n - 1]).abs() > tol || grid[n / 2].abs() > tol {
        return Err(Error::BadGrid("not centred on zero".into()));
    }
    Ok(())
}

/// Assigns each sample to the nearest phase bin of `omega_hat t mod 2 pi` and
/// histograms its position on `z_grid`.
pub fn bin_marginals<T: Real>(
    samples: &Trajectory<T>,
    omega_hat: T,
    n_angles: usize,
    z_grid: &[T],
) -> Result<MarginalSet<T>> {
    bin_marginals_with(samples, omega_hat, n_angles, z_grid, DEFAULT_MIN_OCCUPANCY)
}

pub fn bin_marginals_with<T: Real>(
    samples: &Trajectory<T>,
    omega_hat: T,
    n_angles: usize,
    z_grid: &[T],
    min_occupancy: usize,
) -> Result<MarginalSet<T>> {
    if !(omega_hat > T::zero()) {
        return Err(Error::InvalidArgument(format!("omega_hat must be > 0, got {omega_hat}")));
    }
    if n_angles < MIN_ANGLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_ANGLES} angle bins, got {n_angles}"
        )));
    }
    check_grid(z_grid)?;
    let omega = omega_hat.f64();
    let periods = samples.duration().f64() * omega / std::f64::consts::TAU;
    if periods < MIN_PERIODS {
        return Err(Error::InvalidArgument(format!(
            "record spans {periods:.1} oscillation periods, need {MIN_PERIODS}"
        )));
    }

    let nz = z_grid.len();
    let z0 = z_grid[0].f64();
    let dz = (z_grid[1] - z_grid[0]).f64();
    let bin_width = std::f64::consts::TAU / n_angles as f64;
    let mut counts = vec![vec![0u64; nz]; n_angles];
    let mut occupancy = vec![0usize; n_angles];
    for (i, &z) in samples.z_m.iter().enumerate() {
        let phase = (omega * samples.time_f64(i)).rem_euclid(std::f64::consts::TAU);
        let a = ((phase / bin_width).round() as usize) % n_angles;
        occupancy[a] += 1;
        let j = ((z.f64() - z0) / dz).round();
        if j >= 0.0 && (j as usize) < nz {
            counts[a][j as usize] += 1;
        }
    }

    let step = z_grid[1] - z_grid[0];
    let mut densities = Vec::with_capacity(n_angles);
    for (a, row) in counts.iter().enumerate() {
        let theta = a as f64 * bin_width;
        if occupancy[a] == 0 {
            return Err(Error::EmptyAngleBin { bin: a, theta });
        }
        let raw: Vec<T> = row.iter().map(|&c| T::from_u64(c).expect("count")).collect();
        let area = trapezoid(&raw, step);
        if !(area > T::zero()) {
            return Err(Error::EmptyAngleBin { bin: a, theta });
        }
        densities.push(raw.into_iter().map(|c| c / area).collect());
    }
    let under_sampled = occupancy.iter().any(|&o| o < min_occupancy);
    Ok(MarginalSet {
        angles_rad: (0..n_angles).map(|a| T::lit(a as f64 * bin_width)).collect(),
        z_grid_m: z_grid.to_vec(),
        densities,
        counts_per_bin: counts,
        occupancy,
        omega_used_rad_s: omega_hat,
        min_occupancy,
        under_sampled,
    })
}
