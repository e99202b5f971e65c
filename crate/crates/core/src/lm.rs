//! Levenberg-Marquardt for small dense least-squares problems.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A residual vector `r(p)` with its Jacobian `dr_i/dp_j`.
pub trait LeastSquares<T: Real> {
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[T], out: &mut [T]);
    /// Row-major `n_residuals x n_params`.
    fn jacobian(&self, params: &[T], out: &mut [T]);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions<T> {
    pub max_iterations: usize,
    /// Relative cost decrease below which the iteration stops.
    pub ftol: T,
    /// Relative step size below which the iteration stops.
    pub xtol: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            ftol: T::lit(1e-12),
            xtol: T::lit(1e-12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmSolution<T> {
    pub params: Vec<T>,
    /// Sum of squared residuals.
    pub cost: T,
    pub iterations: usize,
    /// `(J^T J)^{-1}` at the solution, row-major.
    pub inverse_hessian: Vec<T>,
}

pub fn minimize<T: Real, P: LeastSquares<T>>(
    problem: &P,
    initial: &[T],
    opts: &LmOptions<T>,
) -> Result<LmSolution<T>> {
    let n = problem.n_residuals();
    let k = initial.len();
    let mut p = initial.to_vec();
    let mut r = vec![T::zero(); n];
    let mut jac = vec![T::zero(); n * k];
    let mut trial_r = vec![T::zero(); n];

    problem.residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::FitDiverged {
            iterations: 0,
            cost: cost.f64(),
        });
    }
    let mut lambda = T::lit(1e-3);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        problem.jacobian(&p, &mut jac);
        let (jtj, jtr) = normal_equations(&jac, &r, n, k);

        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..k {
                let diag = jtj[d * k + d].max(T::lit(1e-300));
                a[d * k + d] = jtj[d * k + d] + lambda * diag;
            }
            let rhs: Vec<T> = jtr.iter().map(|&g| -g).collect();
            let Some(step) = solve(&a, &rhs, k) else {
                lambda = lambda * T::lit(10.0);
                continue;
            };
            let trial: Vec<T> = p.iter().zip(&step).map(|(&a, &b)| a + b).collect();
            problem.residuals(&trial, &mut trial_r);
            let trial_cost = sum_sq(&trial_r);
            if trial_cost.is_finite() && trial_cost <= cost {
                let rel_drop = (cost - trial_cost) / cost.max(T::min_positive_value());
                let step_norm = sum_sq(&step).sqrt();
                let p_norm = sum_sq(&trial).sqrt();
                p = trial;
                std::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                lambda = (lambda / T::lit(10.0)).max(T::lit(1e-15));
                accepted = true;
                if rel_drop < opts.ftol || step_norm < opts.xtol * (p_norm + opts.xtol) {
                    converged = true;
                }
                break;
            }
            lambda = lambda * T::lit(10.0);
        }
        if !accepted {
            // No downhill step at any damping: stationary to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::FitDiverged {
            iterations,
            cost: cost.f64(),
        });
    }
    problem.jacobian(&p, &mut jac);
    let (jtj, _) = normal_equations(&jac, &r, n, k);
    let inverse_hessian = invert(&jtj, k).unwrap_or_else(|| vec![T::nan(); k * k]);
    Ok(LmSolution {
        params: p,
        cost,
        iterations,
        inverse_hessian,
    })
}

fn sum_sq<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

fn normal_equations<T: Real>(jac: &[T], r: &[T], n: usize, k: usize) -> (Vec<T>, Vec<T>) {
    let mut jtj = vec![T::zero(); k * k];
    let mut jtr = vec![T::zero(); k];
    for i in 0..n {
        let row = &jac[i * k..(i + 1) * k];
        for a in 0..k {
            jtr[a] = jtr[a] + row[a] * r[i];
            for b in a..k {
                jtj[a * k + b] = jtj[a * k + b] + row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            jtj[a * k + b] = jtj[b * k + a];
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve<T: Real>(a: &[T], b: &[T], k: usize) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| {
            m[i * k + col]
                .abs()
                .partial_cmp(&m[j * k + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(m[pivot * k + col].abs() > T::zero()) {
            return None;
        }
        if pivot != col {
            for c in 0..k {
                m.swap(col * k + c, pivot * k + c);
            }
            x.swap(col, pivot);
        }
        for row in col + 1..k {
            let f = m[row * k + col] / m[col * k + col];
            for c in col..k {
                m[row * k + c] = m[row * k + c] - f * m[col * k + c];
            }
            x[row] = x[row] - f * x[col];
        }
    }
    for row in (0..k).rev() {
        let mut acc = x[row];
        for c in row + 1..k {
            acc = acc - m[row * k + c] * x[c];
        }
        x[row] = acc / m[row * k + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub(crate) fn invert<T: Real>(a: &[T], k: usize) -> Option<Vec<T>> {
    let mut inv = vec![T::zero(); k * k];
    for c in 0..k {
        let mut e = vec![T::zero(); k];
        e[c] = T::one();
        let col = solve(a, &e, k)?;
        for r in 0..k {
            inv[r * k + c] = col[r];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a exp(-b x)
    struct Decay {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares<f64> for Decay {
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (i, o) in out.iter_mut().enumerate().take(self.x.len()) {
                *o = p[0] * (-p[1] * self.x[i]).exp() - self.y[i];
            }
        }
        fn jacobian(&self, p: &[f64], out: &mut [f64]) {
            for i in 0..self.x.len() {
                let e = (-p[1] * self.x[i]).exp();
                out[2 * i] = e;
                out[2 * i + 1] = -p[0] * self.x[i] * e;
            }
        }
    }

    #[test]
    fn recovers_exponential_decay() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|&t| 3.0 * (-0.7 * t).exp()).collect();
        let sol = minimize(&Decay { x, y }, &[1.0, 0.1], &LmOptions::default()).unwrap();
        assert!((sol.params[0] - 3.0).abs() < 1e-8);
        assert!((sol.params[1] - 0.7).abs() < 1e-8);
        assert!(sol.cost < 1e-16);
    }

    #[test]
    fn solve_and_invert() {
        let a = [4.0f64, 1.0, 1.0, 3.0];
        let x = solve(&a, &[1.0, 2.0], 2).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        let inv = invert(&a, 2).unwrap();
        assert!((inv[0] * 4.0 + inv[1] * 1.0 - 1.0).abs() < 1e-14);
        assert!(solve(&[0.0, 0.0, 0.0, 0.0], &[1.0, 1.0], 2).is_none());
    }
}
