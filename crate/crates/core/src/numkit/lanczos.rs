//! Symmetric operators given by their action, and Lanczos with full
//! reorthogonalization for the lowest eigenpairs.

use super::tridiag::{tridiag_lowest, EigenPair, SymTridiag};
use crate::error::{Error, Result};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Linear operator that is symmetric in the Euclidean inner product.
pub trait SparseSymOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }
}

impl SparseSymOp for SymTridiag {
    fn dim(&self) -> usize {
        SymTridiag::dim(self)
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(self.diag().to_vec())
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    n: usize,
    data: Vec<f64>,
}

impl DenseSym {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidInput("dense matrix size mismatch".into()));
        }
        Ok(Self { n, data })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// self += a·other
    pub fn axpy(&mut self, a: f64, other: &DenseSym) {
        self.data.iter_mut().zip(&other.data).for_each(|(s, o)| *s += a * o);
    }
}

impl SparseSymOp for DenseSym {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
    fn diagonal(&self) -> Option<Vec<f64>> {
        Some((0..self.n).map(|i| self.get(i, i)).collect())
    }
}

/// D^{-1/2} A D^{-1/2} for an operator A and a positive diagonal mass D.
pub struct MassSymmetrized<'a, A: SparseSymOp + ?Sized> {
    op: &'a A,
    inv_sqrt: Vec<f64>,
}

impl<'a, A: SparseSymOp + ?Sized> MassSymmetrized<'a, A> {
    pub fn new(op: &'a A, mass: &[f64]) -> Result<Self> {
        if mass.len() != op.dim() {
            return Err(Error::InvalidInput("mass length mismatch".into()));
        }
        if mass.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidInput("mass must be positive".into()));
        }
        Ok(Self {
            op,
            inv_sqrt: mass.iter().map(|m| 1.0 / m.sqrt()).collect(),
        })
    }

    /// Map a symmetrized eigenvector back to the weighted variables.
    pub fn unsymmetrize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.inv_sqrt).map(|(a, b)| a * b).collect()
    }
}

impl<A: SparseSymOp + ?Sized> SparseSymOp for MassSymmetrized<'_, A> {
    fn dim(&self) -> usize {
        self.op.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xs: Vec<f64> = x.iter().zip(&self.inv_sqrt).map(|(a, b)| a * b).collect();
        self.op.apply(&xs, y);
        y.iter_mut().zip(&self.inv_sqrt).for_each(|(v, s)| *v *= s);
    }
    fn diagonal(&self) -> Option<Vec<f64>> {
        self.op.diagonal().map(|d| {
            d.iter()
                .zip(&self.inv_sqrt)
                .map(|(a, s)| a * s * s)
                .collect()
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power-iteration estimate of the operator norm.
pub fn norm_estimate(op: &dyn SparseSymOp, seed: u64) -> f64 {
    let n = op.dim();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mut y = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..20 {
        let nx = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        op.apply(&x, &mut y);
        est = dot(&y, &y).sqrt();
        std::mem::swap(&mut x, &mut y);
    }
    est
}

/// Randomized symmetry probe: max |⟨Ax,y⟩ − ⟨x,Ay⟩| / (‖x‖‖y‖‖A‖) over trials.
pub fn symmetry_probe(op: &dyn SparseSymOp, trials: usize, seed: u64) -> f64 {
    let n = op.dim();
    let scale = norm_estimate(op, seed ^ 0x9e37).max(f64::MIN_POSITIVE);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut ax = vec![0.0; n];
    let mut ay = vec![0.0; n];
    for _ in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        op.apply(&x, &mut ax);
        op.apply(&y, &mut ay);
        let asym = (dot(&ax, &y) - dot(&x, &ay)).abs();
        worst = worst.max(asym / (dot(&x, &x).sqrt() * dot(&y, &y).sqrt() * scale));
    }
    worst
}

/// The `count` smallest eigenpairs of `op` by Lanczos with full
/// reorthogonalization. Converged when every residual ‖Av − λv‖ ≤ tol.
pub fn lanczos_lowest(
    op: &dyn SparseSymOp,
    count: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<EigenPair>> {
    let n = op.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidInput(format!("count {count} outside 1..={n}")));
    }
    let steps = max_iter.min(n);
    let mut rng = StdRng::seed_from_u64(0x5eed_1a2c);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= nq);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut best: (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());

    for j in 0..steps {
        basis.push(q.clone());
        op.apply(&q, &mut w);
        let a = dot(&q, &w);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let bnext = dot(&w, &w).sqrt();
        let m = j + 1;
        let exhausted = bnext <= 1e-14 * a.abs().max(1.0) || m == n;
        if m >= count && (m % 4 == 0 || exhausted || m == steps) {
            let t = SymTridiag::new(alpha.clone(), beta.clone())?;
            let ritz = tridiag_lowest(&t, count, 1e-15 * t.scale().max(1.0))?;
            let est: Vec<f64> = ritz
                .iter()
                .map(|p| if exhausted { 0.0 } else { bnext * p.vector[m - 1].abs() })
                .collect();
            best = (ritz.iter().map(|p| p.value).collect(), est.clone());
            if est.iter().all(|r| *r <= 0.5 * tol) || exhausted {
                let mut out = Vec::with_capacity(count);
                let mut av = vec![0.0; n];
                let mut worst: f64 = 0.0;
                for p in &ritz {
                    let mut v = vec![0.0; n];
                    for (coef, b) in p.vector.iter().zip(&basis) {
                        v.iter_mut().zip(b).for_each(|(vi, bi)| *vi += coef * bi);
                    }
                    let nv = dot(&v, &v).sqrt();
                    v.iter_mut().for_each(|x| *x /= nv);
                    op.apply(&v, &mut av);
                    let value = dot(&v, &av);
                    let r = av
                        .iter()
                        .zip(&v)
                        .map(|(x, y)| (x - value * y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(r);
                    out.push(EigenPair { value, vector: v });
                }
                if worst <= tol {
                    return Ok(out);
                }
                if exhausted {
                    return Err(Error::LanczosNotConverged {
                        iterations: m,
                        ritz: best.0,
                        residuals: vec![worst; count],
                    });
                }
            }
        }
        if exhausted {
            break;
        }
        beta.push(bnext);
        q = w.iter().map(|v| v / bnext).collect();
    }
    Err(Error::LanczosNotConverged {
        iterations: steps,
        ritz: best.0,
        residuals: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Laplace2d {
        n: usize,
        h: f64,
    }

    impl SparseSymOp for Laplace2d {
        fn dim(&self) -> usize {
            self.n * self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = self.n;
            let c = 1.0 / (self.h * self.h);
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let mut s = 4.0 * x[k];
                    if i > 0 {
                        s -= x[k - n];
                    }
                    if i + 1 < n {
                        s -= x[k + n];
                    }
                    if j > 0 {
                        s -= x[k - 1];
                    }
                    if j + 1 < n {
                        s -= x[k + 1];
                    }
                    y[k] = c * s;
                }
            }
        }
    }

    #[test]
    fn laplacian_closed_form() {
        let h = 1.0 / 11.0;
        let op = Laplace2d { n: 10, h };
        let pairs = lanczos_lowest(&op, 1, 1e-9, 100).unwrap();
        let exact = 4.0 / (h * h) * 2.0 * (std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert!((pairs[0].value - exact).abs() < 1e-9);
        assert!(symmetry_probe(&op, 4, 1) < 1e-14);
    }

    #[test]
    fn identity_operator() {
        let op = DenseSym::from_row_major(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let pairs = lanczos_lowest(&op, 1, 1e-12, 10).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_tridiagonal_solver() {
        let n = 200;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 * 0.05).sin()).collect();
        let t = SymTridiag::new(diag, vec![-1.0; n - 1]).unwrap();
        let a = tridiag_lowest(&t, 3, 1e-13).unwrap();
        let b = lanczos_lowest(&t, 3, 1e-10, 200).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).abs() < 1e-9);
        }
    }

    #[test]
    fn max_iter_reports_best_estimates() {
        let n = 400;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let t = SymTridiag::new(diag, vec![-0.5; n - 1]).unwrap();
        match lanczos_lowest(&t, 1, 1e-14, 8) {
            Err(Error::LanczosNotConverged { ritz, .. }) => assert_eq!(ritz.len(), 1),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
