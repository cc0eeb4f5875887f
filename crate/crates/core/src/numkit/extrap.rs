//! Richardson extrapolation, trapezoid quadrature and small least-squares
//! polynomial fits.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Extrapolate samples `(h, v)` to h = 0 assuming the error expands in
/// powers h^order, h^{2·order}, … (Neville scheme in t = h^order).
pub fn richardson(values: &[(f64, f64)], order: u32) -> Result<f64> {
    richardson_with_error(values, order).map(|(v, _)| v)
}

/// As [`richardson`], also returning |full − extrapolation without the
/// coarsest sample| as an error estimate.
pub fn richardson_with_error(values: &[(f64, f64)], order: u32) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidInput("richardson needs at least two samples".into()));
    }
    if order == 0 {
        return Err(Error::InvalidInput("richardson order must be positive".into()));
    }
    for (i, a) in values.iter().enumerate() {
        if !(a.0 > 0.0) {
            return Err(Error::InvalidInput("step sizes must be positive".into()));
        }
        for b in &values[i + 1..] {
            if (a.0 - b.0).abs() <= 1e-14 * a.0.abs().max(b.0.abs()) {
                return Err(Error::InvalidInput(format!("repeated step size {}", a.0)));
            }
        }
    }
    let full = neville_at_zero(values, order);
    let err = if values.len() > 2 {
        (full - neville_at_zero(&values[1..], order)).abs()
    } else {
        (full - values[1].1).abs()
    };
    Ok((full, err))
}

fn neville_at_zero(values: &[(f64, f64)], order: u32) -> f64 {
    let t: Vec<f64> = values.iter().map(|(h, _)| h.powi(order as i32)).collect();
    let mut p: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
    let n = p.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (t[i + k] * p[i] - t[i] * p[i + 1]) / (t[i + k] - t[i]);
        }
    }
    p[0]
}

/// Composite trapezoid rule on a uniform grid, or Σ wᵢ fᵢ when weights are
/// supplied (the discrete inner product of the eigensolvers).
pub fn quad_trapezoid(samples: &[f64], h: f64, weight: Option<&[f64]>) -> Result<f64> {
    match weight {
        Some(w) => {
            if w.len() != samples.len() {
                return Err(Error::InvalidInput(format!(
                    "weight length {} vs samples {}",
                    w.len(),
                    samples.len()
                )));
            }
            Ok(samples.iter().zip(w).map(|(f, w)| f * w).sum())
        }
        None => {
            let n = samples.len();
            if n < 2 {
                return Err(Error::InvalidInput("trapezoid needs two samples".into()));
            }
            let inner: f64 = samples[1..n - 1].iter().sum();
            Ok(h * (inner + 0.5 * (samples[0] + samples[n - 1])))
        }
    }
}

/// Least-squares polynomial fit, ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub coeffs: Vec<f64>,
    pub max_residual: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Vertex of a quadratic fit.
    pub fn vertex(&self) -> Option<f64> {
        let a = *self.coeffs.get(2)?;
        (a != 0.0).then(|| -self.coeffs[1] / (2.0 * a))
    }
}

/// Fit a polynomial of `degree` through `(xs, ys)` by Householder QR.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<PolyFit> {
    let m = xs.len();
    let n = degree + 1;
    if ys.len() != m || m < n {
        return Err(Error::InvalidInput(format!(
            "polyfit needs at least {n} samples, got {m}"
        )));
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|j| xs.iter().map(|x| x.powi(j as i32)).collect())
        .collect();
    let mut b = ys.to_vec();
    for k in 0..n {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput("degenerate polyfit nodes".into()));
        }
        let alpha = -norm.copysign(a[k][k]);
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for col in a.iter_mut().skip(k) {
            let s: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum::<f64>() * 2.0 / vv;
            col[k..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
        }
        let s: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum::<f64>() * 2.0 / vv;
        b[k..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
    }
    let mut coeffs = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[j][i] * coeffs[j];
        }
        coeffs[i] = s / a[i][i];
    }
    let mut fit = PolyFit {
        coeffs,
        max_residual: 0.0,
    };
    fit.max_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (fit.eval(*x) - y).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("log-log slope needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    Ok(polyfit(&lx, &ly, 1)?.coeffs[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic_error_model() {
        let v = richardson(&[(0.1, 1.01), (0.05, 1.0025)], 2).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn three_levels_remove_two_orders() {
        let f = |h: f64| 3.0 + 2.0 * h * h - 5.0 * h.powi(4);
        let v = richardson(&[(0.2, f(0.2)), (0.1, f(0.1)), (0.05, f(0.05))], 2).unwrap();
        assert!((v - 3.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(richardson(&[(0.1, 1.0)], 2).is_err());
        assert!(richardson(&[(0.1, 1.0), (0.1, 1.0)], 2).is_err());
    }

    #[test]
    fn trapezoid_basics() {
        let h = 0.1;
        let ones = vec![1.0; 11];
        assert!((quad_trapezoid(&ones, h, None).unwrap() - 1.0).abs() < 1e-14);
        let lin: Vec<f64> = (0..11).map(|i| i as f64 * h).collect();
        assert!((quad_trapezoid(&lin, h, None).unwrap() - 0.5).abs() < 1e-15);
        assert!(quad_trapezoid(&lin, h, Some(&[1.0])).is_err());
    }

    #[test]
    fn polyfit_recovers_cubic() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x + 0.25 * x * x * x).collect();
        let fit = polyfit(&xs, &ys, 3).unwrap();
        for (c, e) in fit.coeffs.iter().zip([1.0, -2.0, 0.5, 0.25]) {
            assert!((c - e).abs() < 1e-13);
        }
        assert!(fit.max_residual < 1e-13);
        let q = polyfit(&xs, &xs.iter().map(|x| (x - 0.3) * (x - 0.3)).collect::<Vec<_>>(), 2).unwrap();
        assert!((q.vertex().unwrap() - 0.3).abs() < 1e-13);
    }
}
