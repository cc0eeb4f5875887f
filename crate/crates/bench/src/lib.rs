//! Fixtures shared by the benchmarks in `benches/`.

use ballmag::ballsolver::BasisShape;
use ballmag::numkit::DenseSym;
use ballmag::SymTridiag;

/// Finite-difference harmonic oscillator on [−8, 8] with `n` interior points.
pub fn oscillator(n: usize) -> SymTridiag {
    let h = 16.0 / (n + 1) as f64;
    let diag = (1..=n)
        .map(|i| {
            let x = -8.0 + i as f64 * h;
            2.0 / (h * h) + x * x
        })
        .collect();
    SymTridiag::new(diag, vec![-1.0 / (h * h); n - 1]).expect("valid tridiagonal")
}

/// Deterministic dense symmetric matrix with a dominant diagonal.
pub fn dense_sample(n: usize) -> DenseSym {
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

/// Basis shape near the converged expansion coefficients.
pub fn shape() -> BasisShape {
    BasisShape {
        xi: -0.768_183_653,
        kappa: 0.585_512_900,
        nu: -0.414_490_746,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ballmag::numkit::tridiag_lowest;

    #[test]
    fn oscillator_levels_are_odd_integers() {
        let p = tridiag_lowest(&oscillator(1999), 3, 1e-12).unwrap();
        for (k, e) in p.iter().enumerate() {
            assert!((e.value - (2 * k + 1) as f64).abs() < 1e-3, "{}", e.value);
        }
    }
}
