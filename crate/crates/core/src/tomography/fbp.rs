use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::marginals::{check_grid, MarginalSet, MIN_ANGLES};
use super::wigner::{square_axis, WignerGrid};
use crate::error::{Error, Result};
use crate::scalar::{trapezoid, Real};

pub const DEFAULT_GRID_SIZE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbpOptions {
    pub grid_size: usize,
    /// Hann cutoff as a fraction of the marginal grid's Nyquist frequency.
    pub cutoff_fraction: f64,
}

impl Default for FbpOptions {
    fn default() -> Self {
        FbpOptions {
            grid_size: DEFAULT_GRID_SIZE,
            cutoff_fraction: 1.0,
        }
    }
}

impl FbpOptions {
    /// Hann cutoff in cycles per metre for a marginal grid step `dz`.
    pub fn cutoff_frequency(&self, dz: f64) -> f64 {
        self.cutoff_fraction / (2.0 * dz)
    }
}

/// Per-axis variance the reconstruction adds to a point source.
///
/// The Hann point-spread function contributes `1 / (8 nu_c^2)` and linear
/// interpolation of the filtered projections `dz^2 / 6`. Histogram marginals
/// carry a further `dz^2 / 12` from nearest-bin assignment.
pub fn resolution_variance<T: Real>(marginals: &MarginalSet<T>, opts: &FbpOptions) -> T {
    let dz = marginals.dz().f64();
    let nu = opts.cutoff_frequency(dz);
    let mut v = 1.0 / (8.0 * nu * nu) + dz * dz / 6.0;
    if !marginals.counts_per_bin.is_empty() {
        v += dz * dz / 12.0;
    }
    T::lit(v)
}

/// Filtered back-projection with default options at the given grid size.
pub fn inverse_radon<T: Real>(marginals: &MarginalSet<T>, grid_size: usize) -> Result<WignerGrid<T>> {
    inverse_radon_with(
        marginals,
        &FbpOptions {
            grid_size,
            ..FbpOptions::default()
        },
    )
}

pub fn inverse_radon_with<T: Real>(marginals: &MarginalSet<T>, opts: &FbpOptions) -> Result<WignerGrid<T>> {
    let n_angles = marginals.angles_rad.len();
    if n_angles < MIN_ANGLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_ANGLES} angles, got {n_angles}"
        )));
    }
    if let Some((bin, &count)) = marginals
        .occupancy
        .iter()
        .enumerate()
        .find(|(_, &o)| o < marginals.min_occupancy)
    {
        return Err(Error::UnderSampled {
            bin,
            count,
            minimum: marginals.min_occupancy,
        });
    }
    check_grid(&marginals.z_grid_m)?;
    if opts.grid_size < 2 {
        return Err(Error::BadGrid(format!("grid size {}", opts.grid_size)));
    }
    if !(opts.cutoff_fraction > 0.0 && opts.cutoff_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff fraction must be in (0, 1], got {}",
            opts.cutoff_fraction
        )));
    }

    let filter = RampFilter::new(&marginals.z_grid_m, opts.cutoff_fraction);
    let filtered: Vec<Vec<T>> = marginals
        .densities
        .par_iter()
        .map(|row| filter.apply(row))
        .collect();

    let half_width = *marginals.z_grid_m.last().expect("checked grid");
    let axis = square_axis(half_width, opts.grid_size)?;
    let trig: Vec<(T, T)> = marginals.angles_rad.iter().map(|&a| a.sin_cos()).collect();
    let weight = T::PI() / T::from_usize_lossy(n_angles);
    let n = opts.grid_size;
    let rows: Vec<Vec<T>> = axis
        .par_iter()
        .map(|&z| {
            let mut row = vec![T::zero(); n];
            for (q, &(s, c)) in filtered.iter().zip(&trig) {
                let zc = z * c;
                for (acc, &p) in row.iter_mut().zip(&axis) {
                    *acc = *acc + filter.sample(q, zc + p * s);
                }
            }
            row.iter_mut().for_each(|v| *v = *v * weight);
            row
        })
        .collect();
    WignerGrid::new(axis.clone(), axis, rows.concat())
}

/// Band-limited ramp filter on a zero-padded copy of the marginal grid.
struct RampFilter<T> {
    /// Frequency response including the Hann window and the `dz` quadrature factor.
    response: Vec<T>,
    len: usize,
    offset: usize,
    z0: T,
    dz: T,
}

impl<T: Real> RampFilter<T> {
    fn new(z_grid: &[T], cutoff_fraction: f64) -> Self {
        let n = z_grid.len();
        let len = (2 * n).next_power_of_two();
        let dz = z_grid[1] - z_grid[0];
        let dzf = dz.f64();

        // Spatial ramp kernel sampled at integer offsets, then transformed.
        let mut kernel = vec![Complex::new(0.0f64, 0.0); len];
        for (j, k) in kernel.iter_mut().enumerate() {
            let m = if j <= len / 2 { j as i64 } else { j as i64 - len as i64 };
            k.re = if m == 0 {
                1.0 / (4.0 * dzf * dzf)
            } else if m % 2 != 0 {
                let mf = m as f64;
                -1.0 / (std::f64::consts::PI * std::f64::consts::PI * mf * mf * dzf * dzf)
            } else {
                0.0
            };
        }
        FftPlanner::new().plan_fft_forward(len).process(&mut kernel);

        let nu_c = cutoff_fraction / (2.0 * dzf);
        let response = kernel
            .iter()
            .enumerate()
            .map(|(j, h)| {
                let m = if j <= len / 2 { j as f64 } else { j as f64 - len as f64 };
                let nu = (m / (len as f64 * dzf)).abs();
                let hann = if nu <= nu_c {
                    0.5 * (1.0 + (std::f64::consts::PI * nu / nu_c).cos())
                } else {
                    0.0
                };
                T::lit(h.re * hann * dzf / len as f64)
            })
            .collect();
        RampFilter {
            response,
            len,
            offset: (len - n) / 2,
            z0: z_grid[0],
            dz,
        }
    }

    fn apply(&self, density: &[T]) -> Vec<T> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.len];
        for (b, &d) in buf[self.offset..].iter_mut().zip(density) {
            b.re = d;
        }
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(self.len).process(&mut buf);
        for (b, &r) in buf.iter_mut().zip(&self.response) {
            *b = *b * r;
        }
        planner.plan_fft_inverse(self.len).process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Linear interpolation of a filtered projection at coordinate `s`.
    fn sample(&self, q: &[T], s: T) -> T {
        let f = (s - self.z0) / self.dz + T::from_usize_lossy(self.offset);
        if !(f >= T::zero()) {
            return T::zero();
        }
        let i = f.floor().to_usize().unwrap_or(usize::MAX);
        if i + 1 >= self.len {
            return T::zero();
        }
        let t = f - T::from_usize_lossy(i);
        q[i] + t * (q[i + 1] - q[i])
    }
}

/// Projection of `w` onto the quadrature at angle `theta`, on the grid's own z axis.
pub fn project_marginal<T: Real>(w: &WignerGrid<T>, theta: T) -> Vec<T> {
    project_marginal_on(w, theta, &w.z_grid_m)
}

/// Line integrals `int W(s cos - t sin, s sin + t cos) dt` for each `s`.
pub fn project_marginal_on<T: Real>(w: &WignerGrid<T>, theta: T, s_grid: &[T]) -> Vec<T> {
    let (sn, cs) = theta.sin_cos();
    let step = w.dz.min(w.dp);
    let reach = w.z_grid_m[0]
        .abs()
        .max(*w.z_grid_m.last().expect("grid"))
        .hypot(w.p_grid[0].abs().max(*w.p_grid.last().expect("grid")));
    let n_t = (reach / step).ceil().to_usize().unwrap_or(1).max(1);
    let ts: Vec<T> = (0..=2 * n_t)
        .map(|i| (T::from_usize_lossy(i) - T::from_usize_lossy(n_t)) * step)
        .collect();
    s_grid
        .iter()
        .map(|&s| {
            let line: Vec<T> = ts
                .iter()
                .map(|&t| w.value_at(s * cs - t * sn, s * sn + t * cs))
                .collect();
            trapezoid(&line, step)
        })
        .collect()
}

/// Trapezoid-weighted L1 distance between two densities on a common grid.
pub fn density_l1<T: Real>(a: &[T], b: &[T], dz: T) -> T {
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).collect();
    trapezoid(&d, dz)
}
