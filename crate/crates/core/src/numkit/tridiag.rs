//! Symmetric tridiagonal matrices: Sturm bisection, inverse iteration and
//! factored solves.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

/// Eigenvalue with its eigenvector (unit norm in the caller's inner product).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidInput("empty tridiagonal matrix".into()));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "offdiag length {} does not match dim {}",
                offdiag.len(),
                diag.len()
            )));
        }
        if diag.iter().chain(offdiag.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite tridiagonal entry".into()));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.offdiag[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.offdiag[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// Largest absolute entry, used as the operator scale.
    pub fn scale(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below `x` (LDLᵀ Sturm count).
    pub fn sturm_count(&self, x: f64) -> usize {
        let guard = f64::EPSILON * self.scale() * 1e-3;
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.dim() {
            let qs = if q.abs() < guard { guard.copysign(q) } else { q };
            let e = self.offdiag[i - 1];
            q = (self.diag[i] - x) - e * e / qs;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.offdiag[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.offdiag[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// Bisection for the eigenvalue with ascending index `k` (0-based).
    pub fn bisect(&self, k: usize, tol: f64) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-12 * (hi - lo).abs().max(1.0);
        lo -= pad;
        hi += pad;
        loop {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= tol || mid <= lo || mid >= hi {
                return mid;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
}

/// LU factorization with partial pivoting of T − σI (LAPACK gttrf layout).
struct ShiftedLu {
    l: Vec<f64>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    pivot: Vec<bool>,
}

impl ShiftedLu {
    fn new(t: &SymTridiag, shift: f64) -> Self {
        let n = t.dim();
        let tiny = f64::EPSILON * t.scale();
        let mut d: Vec<f64> = t.diag.iter().map(|v| v - shift).collect();
        let mut du: Vec<f64> = t.offdiag.clone();
        let dl: Vec<f64> = t.offdiag.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut l = vec![0.0; n.saturating_sub(1)];
        let mut pivot = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                let di = if d[i] == 0.0 { tiny } else { d[i] };
                d[i] = di;
                let f = dl[i] / di;
                l[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                l[i] = f;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - f * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -f;
                }
                pivot[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        for v in d.iter_mut() {
            if v.abs() < tiny {
                *v = tiny.copysign(*v);
            }
        }
        Self {
            l,
            u0: d,
            u1: du,
            u2: du2,
            pivot,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.pivot[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.l[i] * b[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= self.u1[i] * b[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * b[i + 2];
            }
            b[i] = s / self.u0[i];
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The `count` smallest eigenpairs of `t`, ascending, vectors with unit
/// Euclidean norm. Eigenvalues by bisection to `tol`; vectors by inverse
/// iteration with reorthogonalization inside clusters.
pub fn tridiag_lowest(t: &SymTridiag, count: usize, tol: f64) -> Result<Vec<EigenPair>> {
    if count == 0 || count > t.dim() {
        return Err(Error::InvalidInput(format!(
            "count {count} outside 1..={}",
            t.dim()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let n = t.dim();
    let scale = t.scale();
    let res_tol = (1e3 * f64::EPSILON * scale).max(tol);
    let cluster = 1e-7 * scale;
    let mut out: Vec<EigenPair> = Vec::with_capacity(count);
    for k in 0..count {
        let value = t.bisect(k, tol);
        let mut converged = None;
        'restart: for attempt in 0..4usize {
            let shift = value + (attempt as f64) * 10.0 * f64::EPSILON * scale;
            let lu = ShiftedLu::new(t, shift);
            let mut x: Vec<f64> = (0..n)
                .map(|i| 1.0 + 0.1 * (((i * 7 + k * 13 + attempt * 31) % 17) as f64) / 17.0)
                .collect();
            let mut ax = vec![0.0; n];
            let deflate = |x: &mut Vec<f64>| {
                for prev in out.iter().filter(|p| (p.value - value).abs() < cluster) {
                    let d: f64 = prev.vector.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    x.iter_mut().zip(&prev.vector).for_each(|(xi, pi)| *xi -= d * pi);
                }
            };
            for _ in 0..6 {
                deflate(&mut x);
                lu.solve(&mut x);
                deflate(&mut x);
                let nx = norm(&x);
                if !nx.is_finite() || nx == 0.0 {
                    continue 'restart;
                }
                x.iter_mut().for_each(|v| *v /= nx);
                t.matvec(&x, &mut ax);
                let r = ax
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - value * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if r <= res_tol {
                    converged = Some(x);
                    break 'restart;
                }
            }
        }
        match converged {
            Some(vector) => out.push(EigenPair { value, vector }),
            None => {
                return Err(Error::InverseIteration {
                    index: k,
                    value,
                    iterations: 24,
                })
            }
        }
    }
    Ok(out)
}

/// LDLᵀ factor of a symmetric positive definite tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct SpdTridiagFactor {
    pivots: Vec<f64>,
    mult: Vec<f64>,
}

impl SpdTridiagFactor {
    /// Factor the matrix with diagonal `diag` and off-diagonal `off`.
    pub fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut pivots = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n.saturating_sub(1));
        let mut prev = 0.0;
        for i in 0..n {
            let p = if i == 0 {
                diag[0]
            } else {
                let m = off[i - 1] / prev;
                mult.push(m);
                diag[i] - m * off[i - 1]
            };
            if !(p > 0.0) {
                return Err(Error::SingularBordered { pivot: p });
            }
            pivots.push(p);
            prev = p;
        }
        Ok(Self { pivots, mult })
    }

    pub fn dim(&self) -> usize {
        self.pivots.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.pivots.len();
        for i in 1..n {
            b[i] -= self.mult[i - 1] * b[i - 1];
        }
        b[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = b[i] / self.pivots[i] - self.mult[i] * b[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_three_by_three() {
        let t = SymTridiag::new(vec![2.0; 3], vec![-1.0; 2]).unwrap();
        let pairs = tridiag_lowest(&t, 3, 1e-14).unwrap();
        let s2 = 2f64.sqrt();
        let expected = [2.0 - s2, 2.0, 2.0 + s2];
        for (p, e) in pairs.iter().zip(expected) {
            assert!((p.value - e).abs() < 1e-13, "{} vs {e}", p.value);
        }
        let d: f64 = pairs[0].vector.iter().zip(&pairs[1].vector).map(|(a, b)| a * b).sum();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn sturm_count_brackets_each_index() {
        let n = 50;
        let t = SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap();
        let pairs = tridiag_lowest(&t, 5, 1e-13).unwrap();
        for (k, p) in pairs.iter().enumerate() {
            assert_eq!(t.sturm_count(p.value - 1e-10), k);
            assert_eq!(t.sturm_count(p.value + 1e-10), k + 1);
        }
    }

    #[test]
    fn harmonic_oscillator_levels() {
        let h = 1e-2;
        let n = (20.0 / h) as usize - 1;
        let diag: Vec<f64> = (1..=n)
            .map(|i| {
                let x = -10.0 + i as f64 * h;
                2.0 / (h * h) + x * x
            })
            .collect();
        let t = SymTridiag::new(diag, vec![-1.0 / (h * h); n - 1]).unwrap();
        let pairs = tridiag_lowest(&t, 2, 1e-12).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-4);
        assert!((pairs[1].value - 3.0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_blocks_get_orthogonal_vectors() {
        let t = SymTridiag::new(vec![1.0, 1.0, 3.0], vec![0.0, 0.0]).unwrap();
        let pairs = tridiag_lowest(&t, 2, 1e-14).unwrap();
        let d: f64 = pairs[0].vector.iter().zip(&pairs[1].vector).map(|(a, b)| a * b).sum();
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn spd_factor_solves() {
        let diag = [4.0, 5.0, 6.0, 7.0];
        let off = [1.0, -2.0, 0.5];
        let f = SpdTridiagFactor::new(&diag, &off).unwrap();
        let x = [1.0, -1.0, 2.0, 0.25];
        let t = SymTridiag::new(diag.to_vec(), off.to_vec()).unwrap();
        let mut b = vec![0.0; 4];
        t.matvec(&x, &mut b);
        f.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(x) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SymTridiag::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(SymTridiag::new(vec![f64::NAN], vec![]).is_err());
    }
}
