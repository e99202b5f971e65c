use serde::{Deserialize, Serialize};

use super::wigner::WignerGrid;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GaussianFit<T> {
    /// `[<z>, <p>]`
    pub means: [T; 2],
    pub covariance: [[T; 2]; 2],
    pub r_squared: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct WignerReport<T> {
    pub total_integral: T,
    pub min_value: T,
    /// `int int max(0, -W)`
    pub negativity_volume: T,
    /// `int int |W|`
    pub abs_volume: T,
    pub gaussian_fit: GaussianFit<T>,
}

impl<T: Real> WignerReport<T> {
    pub fn negativity_fraction(&self) -> T {
        self.negativity_volume / self.abs_volume
    }
}

/// Integrals, extremes and a moment-matched Gaussian for a Wigner grid.
pub fn analyze<T: Real>(w: &WignerGrid<T>) -> WignerReport<T> {
    let total = w.total_integral();
    let min_value = w.values.iter().copied().fold(T::infinity(), T::min);
    let negativity_volume = w.integrate_with(|_, _, v| (-v).max(T::zero()));
    let abs_volume = w.integrate_with(|_, _, v| v.abs());

    let mz = w.integrate_with(|z, _, v| z * v) / total;
    let mp = w.integrate_with(|_, p, v| p * v) / total;
    let czz = w.integrate_with(|z, _, v| (z - mz) * (z - mz) * v) / total;
    let cpp = w.integrate_with(|_, p, v| (p - mp) * (p - mp) * v) / total;
    let czp = w.integrate_with(|z, p, v| (z - mz) * (p - mp) * v) / total;

    let det = czz * cpp - czp * czp;
    let norm = total / (T::TAU() * det.sqrt());
    let model = |z: T, p: T| {
        let (dz, dp) = (z - mz, p - mp);
        let q = (cpp * dz * dz - T::lit(2.0) * czp * dz * dp + czz * dp * dp) / det;
        norm * (-T::lit(0.5) * q).exp()
    };
    let n = T::from_usize_lossy(w.values.len());
    let mean_value = w.values.iter().fold(T::zero(), |a, &v| a + v) / n;
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for (iz, &z) in w.z_grid_m.iter().enumerate() {
        for (ip, &p) in w.p_grid.iter().enumerate() {
            let v = w.at(iz, ip);
            let r = v - model(z, p);
            ss_res = ss_res + r * r;
            ss_tot = ss_tot + (v - mean_value) * (v - mean_value);
        }
    }
    let r_squared = if det > T::zero() && ss_tot > T::zero() {
        T::one() - ss_res / ss_tot
    } else {
        T::nan()
    };

    WignerReport {
        total_integral: total,
        min_value,
        negativity_volume,
        abs_volume,
        gaussian_fit: GaussianFit {
            means: [mz, mp],
            covariance: [[czz, czp], [czp, cpp]],
            r_squared,
        },
    }
}
