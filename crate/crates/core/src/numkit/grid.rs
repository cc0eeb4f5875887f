//! Uniform 1-D grids and variational finite-difference Sturm–Liouville
//! pencils on them.
//!
//! A pencil is given by its quadratic forms
//!
//! ```text
//! E[u] = Σ_edges c_e (u_{i+1} − u_i)² / h + Σ_i w_i v_i u_i²,
//! N[u] = Σ_i w_i m_i u_i²,
//! ```
//!
//! with trapezoid weights w (h/2 at a Neumann end). At a Neumann node this is
//! the ghost-point scheme u₋₁ = u₁; Dirichlet nodes are not unknowns.

use super::tridiag::{tridiag_lowest, SpdTridiagFactor, SymTridiag};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

/// Uniform grid on `[lo, hi]` with `points` nodes including both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub left: Boundary,
    pub right: Boundary,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, points: usize, left: Boundary, right: Boundary) -> Result<Self> {
        if !(hi > lo) || points < 3 {
            return Err(Error::InvalidInput(format!(
                "grid [{lo}, {hi}] with {points} points"
            )));
        }
        Ok(Self {
            lo,
            hi,
            points,
            left,
            right,
        })
    }

    /// `[0, length]`, Neumann at 0, Dirichlet at the far end.
    pub fn half_line(length: f64, points: usize) -> Result<Self> {
        Self::new(0.0, length, points, Boundary::Neumann, Boundary::Dirichlet)
    }

    /// `[−half_width, half_width]`, Dirichlet at both ends.
    pub fn symmetric(half_width: f64, points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, points, Boundary::Dirichlet, Boundary::Dirichlet)
    }

    /// Same interval with the spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * (self.points - 1) + 1,
            ..self.clone()
        }
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Index of the first and one past the last unknown node.
    pub fn unknown_range(&self) -> (usize, usize) {
        let first = usize::from(self.left == Boundary::Dirichlet);
        let last = self.points - usize::from(self.right == Boundary::Dirichlet);
        (first, last)
    }

    pub fn unknowns(&self) -> usize {
        let (a, b) = self.unknown_range();
        b - a
    }

    /// Coordinates of the unknown nodes.
    pub fn coords(&self) -> Vec<f64> {
        let (a, b) = self.unknown_range();
        let h = self.h();
        (a..b).map(|i| self.lo + i as f64 * h).collect()
    }

    /// Trapezoid weights on the unknown nodes.
    pub fn weights(&self) -> Vec<f64> {
        let (a, b) = self.unknown_range();
        let h = self.h();
        (a..b)
            .map(|i| if i == 0 || i == self.points - 1 { 0.5 * h } else { h })
            .collect()
    }

    /// Midpoints of every edge between consecutive nodes (all nodes).
    pub fn edge_midpoints(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.points - 1).map(|i| self.lo + (i as f64 + 0.5) * h).collect()
    }
}

/// Variational finite-difference pencil (E, N) on a [`Grid1D`].
#[derive(Debug, Clone)]
pub struct LineOperator {
    grid: Grid1D,
    edge_coef: Vec<f64>,
    potential: Vec<f64>,
    density: Vec<f64>,
    weights: Vec<f64>,
}

impl LineOperator {
    /// `edge_coef` at edge midpoints (length points − 1); `potential` and
    /// `density` at unknown nodes.
    pub fn new(grid: Grid1D, edge_coef: Vec<f64>, potential: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        let n = grid.unknowns();
        if edge_coef.len() != grid.points - 1 || potential.len() != n || density.len() != n {
            return Err(Error::InvalidInput("line operator array sizes".into()));
        }
        if density.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidInput("mass density must be positive".into()));
        }
        let weights = grid.weights();
        Ok(Self {
            grid,
            edge_coef,
            potential,
            density,
            weights,
        })
    }

    /// −(c u′)′ + v u with unit density, coefficients given as functions.
    pub fn from_fns(grid: Grid1D, coef: impl Fn(f64) -> f64, pot: impl Fn(f64) -> f64) -> Result<Self> {
        Self::weighted(grid, coef, pot, |_| 1.0)
    }

    /// Pencil with kinetic coefficient `coef`, potential form `pot` (already
    /// multiplied by the density) and mass density `dens`.
    pub fn weighted(
        grid: Grid1D,
        coef: impl Fn(f64) -> f64,
        pot: impl Fn(f64) -> f64,
        dens: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let edge = grid.edge_midpoints().into_iter().map(&coef).collect();
        let xs = grid.coords();
        let v = xs.iter().map(|x| pot(*x)).collect();
        let d = xs.iter().map(|x| dens(*x)).collect();
        Self::new(grid, edge, v, d)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    /// Diagonal of the mass matrix, wᵢmᵢ.
    pub fn mass(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.density).map(|(w, m)| w * m).collect()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Stiffness-plus-potential matrix K + W·v as (diag, offdiag).
    pub fn stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.h();
        let (first, last) = self.grid.unknown_range();
        let n = self.dim();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for (e, c) in self.edge_coef.iter().enumerate() {
            let k = c / h;
            let (i, j) = (e, e + 1);
            let ii = (i >= first && i < last).then(|| i - first);
            let jj = (j >= first && j < last).then(|| j - first);
            if let Some(a) = ii {
                diag[a] += k;
            }
            if let Some(b) = jj {
                diag[b] += k;
            }
            if let (Some(a), Some(_)) = (ii, jj) {
                off[a] -= k;
            }
        }
        for i in 0..n {
            diag[i] += self.weights[i] * self.potential[i];
        }
        (diag, off)
    }

    /// Symmetrized matrix M^{-1/2}(K + Wv)M^{-1/2}.
    pub fn symmetrized(&self) -> Result<SymTridiag> {
        let (mut diag, mut off) = self.stiffness();
        let s: Vec<f64> = self.mass().iter().map(|m| 1.0 / m.sqrt()).collect();
        for i in 0..diag.len() {
            diag[i] *= s[i] * s[i];
        }
        for i in 0..off.len() {
            off[i] *= s[i] * s[i + 1];
        }
        SymTridiag::new(diag, off)
    }

    /// Energy E[u], evaluated without cancellation.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let h = self.grid.h();
        let (first, last) = self.grid.unknown_range();
        let at = |i: usize| if i >= first && i < last { u[i - first] } else { 0.0 };
        let kin: f64 = self
            .edge_coef
            .iter()
            .enumerate()
            .map(|(e, c)| c * (at(e + 1) - at(e)).powi(2) / h)
            .sum();
        let pot: f64 = (0..u.len())
            .map(|i| self.weights[i] * self.potential[i] * u[i] * u[i])
            .sum();
        kin + pot
    }

    /// Mass inner product Σ wᵢmᵢuᵢvᵢ.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..u.len())
            .map(|i| self.weights[i] * self.density[i] * u[i] * v[i])
            .sum()
    }

    /// Operator application M^{-1}(K + Wv)u.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let (diag, off) = self.stiffness();
        let mass = self.mass();
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * u[i];
                if i > 0 {
                    s += off[i - 1] * u[i - 1];
                }
                if i + 1 < n {
                    s += off[i] * u[i + 1];
                }
                s / mass[i]
            })
            .collect()
    }

    /// Lowest `count` eigenpairs; vectors M-normalized, eigenvalues refined
    /// by the energy-form Rayleigh quotient, sign fixed so the largest entry
    /// is positive.
    pub fn lowest(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let s = self.symmetrized()?;
        let tol = 4.0 * f64::EPSILON * s.scale();
        let pairs = tridiag_lowest(&s, count, tol)?;
        let mass = self.mass();
        Ok(pairs
            .into_iter()
            .map(|p| {
                let mut u: Vec<f64> = p.vector.iter().zip(&mass).map(|(y, m)| y / m.sqrt()).collect();
                let nrm = self.inner(&u, &u).sqrt();
                let peak = u.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
                let sign = if peak < 0.0 { -1.0 } else { 1.0 };
                u.iter_mut().for_each(|x| *x *= sign / nrm);
                let value = self.energy(&u);
                (value, u)
            })
            .collect())
    }
}

/// Ground state of a 1-D model operator at a parameter value.
#[derive(Debug, Clone, Serialize)]
pub struct GroundState1D {
    pub param: f64,
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
    pub boundary_value: f64,
    #[serde(skip)]
    pub grid: Grid1D,
}

impl GroundState1D {
    /// Trapezoid integral of g·u.
    pub fn inner(&self, g: &[f64]) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.vector)
            .zip(g)
            .map(|((w, u), g)| w * u * g)
            .sum()
    }
}

/// Regularized resolvent of a pencil at a simple eigenvalue: solves
/// (L − λ)w = g − ⟨g,u⟩u with ⟨w,u⟩ = 0 (inner products in the mass).
///
/// The singular system is bordered by pinning the unknown at the peak of the
/// symmetrized null vector z; the two remaining blocks are positive definite.
/// With y = p + t·q the constraint zᵀy = 0 fixes t, and the pinned equation
/// then holds because z is a null vector.
#[derive(Debug, Clone)]
pub struct BorderedResolvent {
    z: Vec<f64>,
    sqrt_mass: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    k: usize,
    top: Option<SpdTridiagFactor>,
    bottom: Option<SpdTridiagFactor>,
    q: Vec<f64>,
    zq: f64,
}

impl BorderedResolvent {
    pub fn new(op: &LineOperator, lambda: f64, ground: &[f64]) -> Result<Self> {
        let s = op.symmetrized()?;
        let mass = op.mass();
        let sqrt_mass: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
        let mut z: Vec<f64> = ground.iter().zip(&sqrt_mass).map(|(u, m)| u * m).collect();
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v /= nz);
        let diag: Vec<f64> = s.diag().iter().map(|d| d - lambda).collect();
        let off = s.offdiag().to_vec();
        let n = diag.len();
        let k = (0..n)
            .max_by(|&a, &b| z[a].abs().partial_cmp(&z[b].abs()).unwrap())
            .unwrap();
        let top = (k > 0)
            .then(|| SpdTridiagFactor::new(&diag[..k], &off[..k.saturating_sub(1)]))
            .transpose()?;
        let bottom = (k + 1 < n)
            .then(|| SpdTridiagFactor::new(&diag[k + 1..], &off[k + 1..]))
            .transpose()?;
        let mut me = Self {
            z,
            sqrt_mass,
            diag,
            off,
            k,
            top,
            bottom,
            q: Vec::new(),
            zq: 0.0,
        };
        let mut q = vec![0.0; n];
        me.blocks(&mut q, 1.0);
        q[k] = 1.0;
        let zq: f64 = me.z.iter().zip(&q).map(|(a, b)| a * b).sum();
        if zq.abs() < 1e-8 {
            return Err(Error::SingularBordered { pivot: zq });
        }
        me.q = q;
        me.zq = zq;
        Ok(me)
    }

    /// Solve the off-pivot blocks with y_k = t moved to the right side.
    fn blocks(&self, y: &mut [f64], t: f64) {
        let k = self.k;
        let n = y.len();
        if let Some(f) = &self.top {
            y[k - 1] -= self.off[k - 1] * t;
            f.solve_in_place(&mut y[..k]);
        }
        if let Some(f) = &self.bottom {
            y[k + 1] -= self.off[k] * t;
            f.solve_in_place(&mut y[k + 1..n]);
        }
    }

    /// Apply the regularized resolvent to `g` (operator variables).
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut b: Vec<f64> = g.iter().zip(&self.sqrt_mass).map(|(g, m)| g * m).collect();
        let zb: f64 = self.z.iter().zip(&b).map(|(a, c)| a * c).sum();
        b.iter_mut().zip(&self.z).for_each(|(bi, zi)| *bi -= zb * zi);
        let mut p = b;
        p[self.k] = 0.0;
        self.blocks(&mut p, 0.0);
        let t = -self.z.iter().zip(&p).map(|(a, c)| a * c).sum::<f64>() / self.zq;
        p.iter()
            .zip(&self.q)
            .zip(&self.sqrt_mass)
            .map(|((pi, qi), m)| (pi + t * qi) / m)
            .collect()
    }

    /// Residual ‖(S − λ)y − b⊥‖ in symmetrized variables, for diagnostics.
    pub fn defect(&self, g: &[f64], w: &[f64]) -> f64 {
        let n = g.len();
        let mut b: Vec<f64> = g.iter().zip(&self.sqrt_mass).map(|(g, m)| g * m).collect();
        let zb: f64 = self.z.iter().zip(&b).map(|(a, c)| a * c).sum();
        b.iter_mut().zip(&self.z).for_each(|(bi, zi)| *bi -= zb * zi);
        let y: Vec<f64> = w.iter().zip(&self.sqrt_mass).map(|(w, m)| w * m).collect();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * y[i];
                if i > 0 {
                    s += self.off[i - 1] * y[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * y[i + 1];
                }
                (s - b[i]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(points: usize) -> LineOperator {
        let g = Grid1D::symmetric(10.0, points).unwrap();
        LineOperator::from_fns(g, |_| 1.0, |x| x * x).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = Grid1D::half_line(12.0, 4801).unwrap();
        assert!((g.h() - 0.0025).abs() < 1e-15);
        assert_eq!(g.unknowns(), 4800);
        let w = g.weights();
        assert_eq!(w[0], 0.5 * g.h());
        assert_eq!(g.refined().points, 9601);
        assert!(Grid1D::half_line(1.0, 2).is_err());
    }

    #[test]
    fn oscillator_ground_energy_and_norm() {
        let op = oscillator(2001);
        let pairs = op.lowest(2).unwrap();
        assert!((pairs[0].0 - 1.0).abs() < 1e-4);
        assert!((pairs[1].0 - 3.0).abs() < 1e-3);
        let n = op.inner(&pairs[0].1, &pairs[0].1);
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrized_is_symmetric_and_matches_apply() {
        let g = Grid1D::half_line(5.0, 101).unwrap();
        let op = LineOperator::weighted(g, |x| 1.0 + 0.1 * x, |x| x * x, |x| 2.0 - 0.1 * x).unwrap();
        let u: Vec<f64> = (0..op.dim()).map(|i| (i as f64 * 0.3).sin()).collect();
        let au = op.apply(&u);
        let e = op.energy(&u);
        assert!((op.inner(&u, &au) - e).abs() < 1e-9 * e.abs());
    }

    #[test]
    fn bordered_resolvent_defining_properties() {
        let op = oscillator(801);
        let pairs = op.lowest(1).unwrap();
        let (lam, u) = &pairs[0];
        let r = BorderedResolvent::new(&op, *lam, u).unwrap();
        let zero = r.apply(u);
        assert!(zero.iter().all(|v| v.abs() < 1e-8));
        let xs = op.grid().coords();
        let g: Vec<f64> = xs.iter().zip(u).map(|(x, u)| x * u).collect();
        let w = r.apply(&g);
        assert!(op.inner(&w, u).abs() < 1e-12);
        let lw = op.apply(&w);
        let res: f64 = lw
            .iter()
            .zip(&w)
            .zip(&g)
            .map(|((a, b), c)| (a - lam * b - c).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-7, "{res}");
        assert!(r.defect(&g, &w) < 1e-9);
        // x·ϕ₀ is an eigenfunction at 3, so the continuum solution is x·ϕ₀/2
        let exact: Vec<f64> = xs.iter().zip(u).map(|(x, u)| 0.5 * x * u).collect();
        let err = w.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }
}
