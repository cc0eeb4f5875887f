//! Lowest eigenpairs of small dense symmetric matrices via Householder
//! reduction to tridiagonal form.

use super::lanczos::{DenseSym, SparseSymOp};
use super::tridiag::{tridiag_lowest, EigenPair, SymTridiag};
use crate::error::{Error, Result};

/// Householder reduction Q^T A Q = T. Reflectors are kept for the
/// back-transform.
struct Householder {
    n: usize,
    // reflector k acts on indices k+1..n, stored as full-length vectors
    reflectors: Vec<(Vec<f64>, f64)>,
    tri: SymTridiag,
}

fn reduce(a: &DenseSym) -> Result<Householder> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty dense matrix".into()));
    }
    let mut m = a.data().to_vec();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite dense entry".into()));
    }
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let alpha_norm: f64 = ((k + 1)..n).map(|i| m[i * n + k].powi(2)).sum::<f64>().sqrt();
        let mut v = vec![0.0; n];
        if alpha_norm == 0.0 {
            reflectors.push((v, 0.0));
            continue;
        }
        let x0 = m[(k + 1) * n + k];
        let alpha = -alpha_norm.copysign(x0);
        for i in (k + 1)..n {
            v[i] = m[i * n + k];
        }
        v[k + 1] -= alpha;
        let vtv: f64 = v[(k + 1)..].iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            reflectors.push((v, 0.0));
            continue;
        }
        let beta = 2.0 / vtv;
        // A <- H A H with H = I - beta v v^T, restricted to the trailing block
        for i in k..n {
            p[i] = beta * ((k + 1)..n).map(|j| m[i * n + j] * v[j]).sum::<f64>();
        }
        let kv: f64 = 0.5 * beta * ((k + 1)..n).map(|i| v[i] * p[i]).sum::<f64>();
        for i in (k + 1)..n {
            p[i] -= kv * v[i];
        }
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                m[i * n + j] -= v[i] * p[j] + p[i] * v[j];
            }
        }
        m[(k + 1) * n + k] = alpha;
        m[k * n + k + 1] = alpha;
        for i in (k + 2)..n {
            m[i * n + k] = 0.0;
            m[k * n + i] = 0.0;
        }
        reflectors.push((v, beta));
    }
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    let off: Vec<f64> = (0..n.saturating_sub(1)).map(|i| m[(i + 1) * n + i]).collect();
    Ok(Householder {
        n,
        reflectors,
        tri: SymTridiag::new(diag, off)?,
    })
}

impl Householder {
    fn back_transform(&self, y: &mut [f64]) {
        for (v, beta) in self.reflectors.iter().rev() {
            if *beta == 0.0 {
                continue;
            }
            let d: f64 = v.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            y.iter_mut().zip(v).for_each(|(yi, vi)| *yi -= beta * d * vi);
        }
        debug_assert_eq!(y.len(), self.n);
    }
}

/// The `count` smallest eigenpairs of a dense symmetric matrix, ascending,
/// with unit Euclidean eigenvectors.
pub fn dense_lowest(a: &DenseSym, count: usize, tol: f64) -> Result<Vec<EigenPair>> {
    let h = reduce(a)?;
    let mut pairs = tridiag_lowest(&h.tri, count, tol)?;
    for p in &mut pairs {
        h.back_transform(&mut p.vector);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> DenseSym {
        let mut a = DenseSym::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5 + if i == j { i as f64 } else { 0.0 };
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        a
    }

    #[test]
    fn residuals_and_orthogonality() {
        let a = sample(30);
        let pairs = dense_lowest(&a, 5, 1e-14).unwrap();
        let mut ax = vec![0.0; 30];
        for (k, p) in pairs.iter().enumerate() {
            a.apply(&p.vector, &mut ax);
            let r: f64 = ax.iter().zip(&p.vector).map(|(x, v)| (x - p.value * v).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-10, "residual {r}");
            for q in &pairs[..k] {
                let d: f64 = q.vector.iter().zip(&p.vector).map(|(x, y)| x * y).sum();
                assert!(d.abs() < 1e-8);
            }
        }
        assert!(pairs.windows(2).all(|w| w[0].value <= w[1].value));
    }

    #[test]
    fn diagonal_matrix() {
        let mut a = DenseSym::zeros(4);
        for (i, v) in [3.0, -1.0, 2.0, 0.5].iter().enumerate() {
            a.set(i, i, *v);
        }
        let pairs = dense_lowest(&a, 2, 1e-14).unwrap();
        assert!((pairs[0].value + 1.0).abs() < 1e-13);
        assert!((pairs[1].value - 0.5).abs() < 1e-13);
    }
}
