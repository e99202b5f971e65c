use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Phase-space density sampled on a square grid.
///
/// The momentum axis is `p / (m omega)`, in metres, so free evolution is a
/// rigid rotation of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct WignerGrid<T> {
    pub z_grid_m: Vec<T>,
    pub p_grid: Vec<T>,
    /// Row-major, `values[iz * p_grid.len() + ip]`.
    pub values: Vec<T>,
    pub dz: T,
    pub dp: T,
}

impl<T: Real> WignerGrid<T> {
    pub fn new(z_grid_m: Vec<T>, p_grid: Vec<T>, values: Vec<T>) -> Result<Self> {
        if z_grid_m.len() < 2 || p_grid.len() < 2 {
            return Err(Error::BadGrid("Wigner axes need at least two points".into()));
        }
        if values.len() != z_grid_m.len() * p_grid.len() {
            return Err(Error::BadGrid(format!(
                "{} values for a {}x{} grid",
                values.len(),
                z_grid_m.len(),
                p_grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadGrid("non-finite Wigner value".into()));
        }
        let dz = z_grid_m[1] - z_grid_m[0];
        let dp = p_grid[1] - p_grid[0];
        Ok(WignerGrid {
            z_grid_m,
            p_grid,
            values,
            dz,
            dp,
        })
    }

    /// Samples `f(z, p)` on the square grid spanning `[-half_width, half_width]`.
    pub fn from_fn(half_width: T, n: usize, f: impl Fn(T, T) -> T) -> Result<Self> {
        let axis = square_axis(half_width, n)?;
        let mut values = Vec::with_capacity(n * n);
        for &z in &axis {
            for &p in &axis {
                values.push(f(z, p));
            }
        }
        Self::new(axis.clone(), axis, values)
    }

    pub fn nz(&self) -> usize {
        self.z_grid_m.len()
    }

    pub fn np(&self) -> usize {
        self.p_grid.len()
    }

    pub fn at(&self, iz: usize, ip: usize) -> T {
        self.values[iz * self.np() + ip]
    }

    /// Bilinear interpolation; zero outside the grid.
    pub fn value_at(&self, z: T, p: T) -> T {
        let fz = (z - self.z_grid_m[0]) / self.dz;
        let fp = (p - self.p_grid[0]) / self.dp;
        let (nz, np) = (self.nz(), self.np());
        let (lz, lp) = (T::from_usize_lossy(nz - 1), T::from_usize_lossy(np - 1));
        // Points on the boundary may land a rounding error outside it.
        let eps = T::lit(1e-6);
        if !(fz >= -eps && fz <= lz + eps && fp >= -eps && fp <= lp + eps) {
            return T::zero();
        }
        let (fz, fp) = (fz.max(T::zero()).min(lz), fp.max(T::zero()).min(lp));
        let iz = fz.floor().to_usize().unwrap_or(usize::MAX);
        let ip = fp.floor().to_usize().unwrap_or(usize::MAX);
        let tz = fz - T::from_usize_lossy(iz);
        let tp = fp - T::from_usize_lossy(ip);
        // On the last row or column the far neighbour has zero weight.
        let iz1 = (iz + 1).min(nz - 1);
        let ip1 = (ip + 1).min(np - 1);
        let one = T::one();
        (one - tz) * ((one - tp) * self.at(iz, ip) + tp * self.at(iz, ip1))
            + tz * ((one - tp) * self.at(iz1, ip) + tp * self.at(iz1, ip1))
    }

    /// 2D trapezoid integral of `f(W)`.
    pub fn integrate_with(&self, f: impl Fn(T, T, T) -> T) -> T {
        let (nz, np) = (self.nz(), self.np());
        let half = T::lit(0.5);
        let mut total = T::zero();
        for iz in 0..nz {
            let wz = if iz == 0 || iz == nz - 1 { half } else { T::one() };
            let mut row = T::zero();
            for ip in 0..np {
                let wp = if ip == 0 || ip == np - 1 { half } else { T::one() };
                row = row + wp * f(self.z_grid_m[iz], self.p_grid[ip], self.at(iz, ip));
            }
            total = total + wz * row;
        }
        total * self.dz * self.dp
    }

    pub fn total_integral(&self) -> T {
        self.integrate_with(|_, _, w| w)
    }

    /// The grid resampled so that `W'(v) = W(R(-angle) v)`.
    pub fn rotated(&self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let mut values = Vec::with_capacity(self.values.len());
        for &z in &self.z_grid_m {
            for &p in &self.p_grid {
                values.push(self.value_at(c * z + s * p, -s * z + c * p));
            }
        }
        WignerGrid {
            values,
            ..self.clone()
        }
    }

    /// Re-expresses the grid with lengths measured in `unit`.
    pub fn rescaled(&self, unit: T) -> Self {
        let u2 = unit * unit;
        WignerGrid {
            z_grid_m: self.z_grid_m.iter().map(|&z| z / unit).collect(),
            p_grid: self.p_grid.iter().map(|&p| p / unit).collect(),
            values: self.values.iter().map(|&w| w * u2).collect(),
            dz: self.dz / unit,
            dp: self.dp / unit,
        }
    }

    /// Trapezoid-weighted L1 distance between grids on identical axes.
    pub fn l1_distance(&self, other: &Self) -> T {
        let mut diff = self.clone();
        for (d, &o) in diff.values.iter_mut().zip(&other.values) {
            *d = *d - o;
        }
        diff.integrate_with(|_, _, w| w.abs())
    }
}

/// `n` points spanning `[-half_width, half_width]`; `n` may be even.
pub fn square_axis<T: Real>(half_width: T, n: usize) -> Result<Vec<T>> {
    if n < 2 || !(half_width > T::zero()) {
        return Err(Error::BadGrid(format!(
            "square axis needs n >= 2 and positive half width (n = {n})"
        )));
    }
    let step = T::lit(2.0) * half_width / T::from_usize_lossy(n - 1);
    Ok((0..n).map(|i| -half_width + T::from_usize_lossy(i) * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(s: f64) -> impl Fn(f64, f64) -> f64 {
        move |z, p| (-(z * z + p * p) / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s)
    }

    #[test]
    fn integral_of_gaussian() {
        // Mass beyond +-5 sd is about 1.1e-6.
        let w = WignerGrid::from_fn(5.0, 128, gaussian(1.0)).unwrap();
        assert!((w.total_integral() - 1.0).abs() < 2e-6);
    }

    #[test]
    fn bilinear_is_exact_on_planes() {
        let w = WignerGrid::from_fn(1.0, 11, |z: f64, p: f64| 2.0 * z - 3.0 * p + 0.5).unwrap();
        for &(z, p) in &[(0.13, -0.77), (-0.99, 0.99), (0.0, 0.0), (1.0, 1.0)] {
            assert!((w.value_at(z, p) - (2.0 * z - 3.0 * p + 0.5)).abs() < 1e-12);
        }
        assert_eq!(w.value_at(1.01, 0.0), 0.0);
        assert_eq!(w.value_at(0.0, -1.2), 0.0);
    }

    #[test]
    fn rotation_moves_an_offset_blob() {
        let s = 0.3;
        let w = WignerGrid::from_fn(3.0, 121, |z, p| gaussian(s)(z - 1.0, p)).unwrap();
        let r = w.rotated(std::f64::consts::FRAC_PI_2);
        let target = WignerGrid::from_fn(3.0, 121, |z, p| gaussian(s)(z, p - 1.0)).unwrap();
        assert!(r.l1_distance(&target) < 0.02);
    }

    #[test]
    fn rescale_preserves_integral() {
        let w = WignerGrid::from_fn(5e-7, 64, gaussian(1e-7)).unwrap();
        let n = w.rescaled(1e-7);
        assert!((n.total_integral() - w.total_integral()).abs() < 1e-9);
        assert!((n.z_grid_m[0] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn shape_errors() {
        assert!(WignerGrid::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0; 3]).is_err());
        assert!(WignerGrid::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![f64::NAN; 4]).is_err());
    }
}
