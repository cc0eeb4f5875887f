//! The de Gennes model G(ξ) = −d²/dx² + (x+ξ)² on the half-line with a
//! Neumann condition at 0.

use crate::error::{Error, Result};
use crate::numkit::{
    richardson_with_error, try_find_root, try_minimize_scalar, BorderedResolvent, Grid1D,
    GroundState1D, LineOperator,
};
use serde::{Deserialize, Serialize};

/// Truncation length of the half-line.
pub const DEFAULT_LENGTH: f64 = 12.0;
/// Coarsest grid of the three-level study (h = 0.005 at L = 12).
pub const DEFAULT_POINTS: usize = 2401;
/// Curvature steps for δ₀.
pub const CURVATURE_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub uncertainty: f64,
}

/// Grid study settings shared by the 1-D model pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStudy {
    pub length: f64,
    pub points: usize,
    pub levels: usize,
}

impl Default for GridStudy {
    fn default() -> Self {
        Self {
            length: DEFAULT_LENGTH,
            points: DEFAULT_POINTS,
            levels: 3,
        }
    }
}

impl GridStudy {
    /// Halve the base resolution.
    pub fn quick(self) -> Self {
        Self {
            points: (self.points - 1) / 2 + 1,
            ..self
        }
    }
}

pub fn de_gennes_operator(xi: f64, grid: &Grid1D) -> Result<LineOperator> {
    let far = grid.hi + xi;
    if far < 0.0 || far * far < 26.0 {
        return Err(Error::TailClip(format!(
            "(L + ξ)² = {:.2} at ξ = {xi}",
            far * far
        )));
    }
    LineOperator::from_fns(grid.clone(), |_| 1.0, |x| (x + xi) * (x + xi))
}

/// Lowest eigenpair of G(ξ) on `grid`; u > 0, trapezoid-normalized.
pub fn eig1_de_gennes(xi: f64, grid: &Grid1D) -> Result<GroundState1D> {
    let op = de_gennes_operator(xi, grid)?;
    let (eigenvalue, vector) = op.lowest(1)?.remove(0);
    if (grid.hi + xi).powi(2) < eigenvalue + 25.0 {
        return Err(Error::TailClip(format!("eigenvalue {eigenvalue} at ξ = {xi}")));
    }
    Ok(GroundState1D {
        param: xi,
        eigenvalue,
        boundary_value: vector[0],
        vector,
        grid: grid.clone(),
    })
}

/// Two lowest eigenvalues of G(ξ).
pub fn eig2_de_gennes(xi: f64, grid: &Grid1D) -> Result<(f64, f64)> {
    let pairs = de_gennes_operator(xi, grid)?.lowest(2)?;
    Ok((pairs[0].0, pairs[1].0))
}

/// λ′(ξ) = ∫ 2(x+ξ)u² (Feynman–Hellmann).
pub fn fh_derivative(state: &GroundState1D) -> f64 {
    let xs = state.grid.coords();
    let w = state.grid.weights();
    xs.iter()
        .zip(&w)
        .zip(&state.vector)
        .map(|((x, w), u)| 2.0 * w * (x + state.param) * u * u)
        .sum()
}

/// The discrete minimizer of ξ ↦ λ₁(G(ξ)) on one grid with its ground state
/// and regularized resolvent.
#[derive(Debug, Clone)]
pub struct DeGennesOnGrid {
    pub state: GroundState1D,
    pub op: LineOperator,
    pub resolvent: BorderedResolvent,
}

impl DeGennesOnGrid {
    pub fn solve(grid: &Grid1D, tol: f64) -> Result<Self> {
        let bracket = (-1.2, -0.4);
        let rough = match try_minimize_scalar(|xi| Ok(eig1_de_gennes(xi, grid)?.eigenvalue), bracket, 1e-6) {
            Ok(m) => m,
            Err(Error::MonotoneBracket { .. }) => {
                try_minimize_scalar(|xi| Ok(eig1_de_gennes(xi, grid)?.eigenvalue), (-2.0, 0.0), 1e-6)?
            }
            Err(e) => return Err(e),
        };
        let xi = try_find_root(
            |xi| Ok(fh_derivative(&eig1_de_gennes(xi, grid)?)),
            (rough.arg - 1e-3, rough.arg + 1e-3),
            tol,
        )?;
        Self::at(xi, grid)
    }

    /// Ground state, operator and resolvent at a prescribed ξ.
    pub fn at(xi: f64, grid: &Grid1D) -> Result<Self> {
        let state = eig1_de_gennes(xi, grid)?;
        let op = de_gennes_operator(xi, grid)?;
        let resolvent = BorderedResolvent::new(&op, state.eigenvalue, &state.vector)?;
        Ok(Self { state, op, resolvent })
    }

    pub fn xi(&self) -> f64 {
        self.state.param
    }

    /// Shifted coordinate y = x + ξ at the unknown nodes.
    pub fn y(&self) -> Vec<f64> {
        self.state.grid.coords().iter().map(|x| x + self.xi()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.state.grid.weights()
    }

    /// Regularized resolvent applied to `g`.
    pub fn reg_resolvent(&self, g: &[f64]) -> Vec<f64> {
        self.resolvent.apply(g)
    }

    /// k_j = ∫ y u₀ [R_reg y]^j u₀.
    pub fn k(&self, j: usize) -> f64 {
        let y = self.y();
        let u = &self.state.vector;
        let mut v = u.clone();
        for _ in 0..j {
            let yv: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a * b).collect();
            v = self.reg_resolvent(&yv);
        }
        self.weights()
            .iter()
            .zip(&y)
            .zip(u)
            .zip(&v)
            .map(|(((w, y), u), v)| w * y * u * v)
            .sum()
    }

    /// δ₀ on this grid from central second differences with Richardson in the step.
    pub fn curvature(&self) -> Result<Estimate> {
        let grid = &self.state.grid;
        let xi = self.xi();
        let l0 = self.state.eigenvalue;
        let mut samples = Vec::new();
        for s in CURVATURE_STEPS {
            let lp = eig1_de_gennes(xi + s, grid)?.eigenvalue;
            let lm = eig1_de_gennes(xi - s, grid)?.eigenvalue;
            samples.push((s, 0.5 * (lp - 2.0 * l0 + lm) / (s * s)));
        }
        let (value, uncertainty) = richardson_with_error(&samples, 2)?;
        Ok(Estimate { value, uncertainty })
    }
}

/// Four moments ∫ yᵏ u² (k = 0..3), y = x + ξ with ξ = `state.param`.
pub fn star_moments(state: &GroundState1D) -> [f64; 4] {
    let xs = state.grid.coords();
    let w = state.grid.weights();
    let mut m = [0.0; 4];
    for ((x, w), u) in xs.iter().zip(&w).zip(&state.vector) {
        let y = x + state.param;
        let wu = w * u * u;
        m[0] += wu;
        m[1] += wu * y;
        m[2] += wu * y * y;
        m[3] += wu * y * y * y;
    }
    m
}

/// Ends at which the boundary bracket of the moment lemma is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentBoundary {
    /// Neumann end at the left of the grid, decay at the right.
    HalfLine,
    /// Decay at both ends.
    FullLine,
}

fn poly_derivs(b: &[f64], x: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, c) in b.iter().enumerate() {
        let k = k as i32;
        out[0] += c * x.powi(k);
        if k >= 1 {
            out[1] += c * k as f64 * x.powi(k - 1);
        }
        if k >= 2 {
            out[2] += c * (k * (k - 1)) as f64 * x.powi(k - 2);
        }
        if k >= 3 {
            out[3] += c * (k * (k - 1) * (k - 2)) as f64 * x.powi(k - 3);
        }
    }
    out
}

/// Signed defect ∫[b‴ + 4(λ−p)b′ − 2p′b]u² − bracket of the moment lemma,
/// with b a polynomial (ascending coefficients in the grid variable) and u
/// an eigenvector of −d² + p at λ, normalized on `grid`.
pub fn moment_identity_defect(
    b: &[f64],
    p: &dyn Fn(f64) -> f64,
    dp: &dyn Fn(f64) -> f64,
    lambda: f64,
    u: &[f64],
    grid: &Grid1D,
    boundary: MomentBoundary,
) -> f64 {
    let xs = grid.coords();
    let w = grid.weights();
    let lhs: f64 = xs
        .iter()
        .zip(&w)
        .zip(u)
        .map(|((x, w), u)| {
            let d = poly_derivs(b, *x);
            w * (d[3] + 4.0 * (lambda - p(*x)) * d[1] - 2.0 * dp(*x) * d[0]) * u * u
        })
        .sum();
    let rhs = match boundary {
        MomentBoundary::FullLine => 0.0,
        MomentBoundary::HalfLine => {
            let x0 = grid.lo;
            let d = poly_derivs(b, x0);
            let u0 = u[0];
            -(d[2] * u0 * u0 + 2.0 * (lambda - p(x0)) * d[0] * u0 * u0)
        }
    };
    lhs - rhs
}

/// Absolute value of [`moment_identity_defect`].
pub fn moment_identity_residual(
    b: &[f64],
    p: &dyn Fn(f64) -> f64,
    dp: &dyn Fn(f64) -> f64,
    lambda: f64,
    u: &[f64],
    grid: &Grid1D,
    boundary: MomentBoundary,
) -> f64 {
    moment_identity_defect(b, p, dp, lambda, u, grid, boundary).abs()
}

/// ξ₀, Θ₀ and u₀(0) from the grid study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theta0Result {
    pub xi0: Estimate,
    pub theta0: Estimate,
    pub u0_at_0: Estimate,
}

fn study_grids(study: GridStudy) -> Result<Vec<Grid1D>> {
    let mut g = Grid1D::half_line(study.length, study.points)?;
    let mut out = Vec::with_capacity(study.levels);
    for _ in 0..study.levels {
        out.push(g.clone());
        g = g.refined();
    }
    Ok(out)
}

fn extrapolate(samples: &[(f64, f64)]) -> Result<Estimate> {
    let (value, uncertainty) = richardson_with_error(samples, 2)?;
    Ok(Estimate { value, uncertainty })
}

/// Per-grid minimizers for a study.
pub fn solve_study(study: GridStudy, tol: f64) -> Result<Vec<DeGennesOnGrid>> {
    study_grids(study)?
        .iter()
        .map(|g| DeGennesOnGrid::solve(g, tol))
        .collect()
}

/// Minimize λ₁(G(ξ)) on three grids and extrapolate ξ₀, Θ₀, u₀(0).
pub fn find_theta0(tol: f64) -> Result<Theta0Result> {
    if !(tol >= 1e-9) {
        return Err(Error::InvalidInput("find_theta0 needs tol ≥ 1e-9".into()));
    }
    theta0_from(&solve_study(GridStudy::default(), 1e-3 * tol)?)
}

pub fn theta0_from(sols: &[DeGennesOnGrid]) -> Result<Theta0Result> {
    let pick = |f: &dyn Fn(&DeGennesOnGrid) -> f64| {
        extrapolate(&sols.iter().map(|s| (s.state.grid.h(), f(s))).collect::<Vec<_>>())
    };
    Ok(Theta0Result {
        xi0: pick(&|s| s.xi())?,
        theta0: pick(&|s| s.state.eigenvalue)?,
        u0_at_0: pick(&|s| s.state.boundary_value)?,
    })
}

/// Hermite function H_ν(x) and its derivative, as the recessive solution of
/// y″ − 2xy′ + 2νy = 0 integrated inward from `x_max` with asymptotic data.
pub fn hermite_function(nu: f64, x: f64, x_max: f64) -> (f64, f64) {
    let asym = |nu: f64, x: f64| {
        let z = -1.0 / (x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..40 {
            let kf = k as f64;
            term *= (-nu / 2.0 + kf) * ((1.0 - nu) / 2.0 + kf) * z / (kf + 1.0);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        (2.0 * x).powf(nu) * sum
    };
    let mut y = asym(nu, x_max);
    let mut z = 2.0 * nu * asym(nu - 1.0, x_max);
    let steps = ((x_max - x) / 1e-3).ceil().max(1.0) as usize;
    let h = (x - x_max) / steps as f64;
    let rhs = |t: f64, y: f64, z: f64| (z, 2.0 * t * z - 2.0 * nu * y);
    let mut t = x_max;
    for _ in 0..steps {
        let (a1, b1) = rhs(t, y, z);
        let (a2, b2) = rhs(t + 0.5 * h, y + 0.5 * h * a1, z + 0.5 * h * b1);
        let (a3, b3) = rhs(t + 0.5 * h, y + 0.5 * h * a2, z + 0.5 * h * b2);
        let (a4, b4) = rhs(t + h, y + h * a3, z + h * b3);
        y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        z += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        t += h;
    }
    (y, z)
}

/// ξ₀ as the largest root in (−1, −0.5) of
/// (ξ²−1)·H_{(ξ²−3)/2}(ξ) − ξ·H_{(ξ²−1)/2}(ξ).
pub fn hermite_root_xi0(tol: f64) -> Result<f64> {
    if !(tol >= 1e-8) {
        return Err(Error::InvalidInput("hermite_root_xi0 needs tol ≥ 1e-8".into()));
    }
    let x_max = 12.0;
    let f = |xi: f64| {
        let a = hermite_function((xi * xi - 3.0) / 2.0, xi, x_max).0;
        let b = hermite_function((xi * xi - 1.0) / 2.0, xi, x_max).0;
        (xi * xi - 1.0) * a - xi * b
    };
    // scan from the right for the largest sign change
    let n = 50;
    let (lo, hi) = (-1.0, -0.5);
    let mut right = (hi, f(hi));
    for i in (0..n).rev() {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let left = (x, f(x));
        if left.1.signum() != right.1.signum() {
            let mut g = |x: f64| Ok(f(x));
            return crate::numkit::try_find_root_with(&mut g, left, right, 1e-3 * tol);
        }
        right = left;
    }
    Err(Error::NoSignChange {
        lo,
        hi,
        flo: f(lo),
        fhi: f(hi),
    })
}

/// δ₀ = ½λ₁″(ξ₀) from curvature, extrapolated over the grid study.
pub fn delta0_curvature(sols: &[DeGennesOnGrid]) -> Result<Estimate> {
    let mut samples = Vec::new();
    let mut step_err: f64 = 0.0;
    for s in sols {
        let c = s.curvature()?;
        step_err = step_err.max(c.uncertainty);
        samples.push((s.state.grid.h(), c.value));
    }
    let e = extrapolate(&samples)?;
    Ok(Estimate {
        value: e.value,
        uncertainty: e.uncertainty + step_err,
    })
}

/// k_j extrapolated over the grid study.
pub fn compute_kj(j: usize, sols: &[DeGennesOnGrid]) -> Result<Estimate> {
    if j > 3 {
        return Err(Error::InvalidInput(format!("k_{j} not supported (j ≤ 3)")));
    }
    extrapolate(&sols.iter().map(|s| (s.state.grid.h(), s.k(j))).collect::<Vec<_>>())
}

/// The universal de Gennes constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeGennesConstants {
    pub xi0: f64,
    pub theta0: f64,
    pub u0_at_0: f64,
    pub delta0: f64,
    pub k: [f64; 3],
    pub uncertainty: DeGennesUncertainty,
    pub xi0_hermite: f64,
    pub study: GridStudy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeGennesUncertainty {
    pub xi0: f64,
    pub theta0: f64,
    pub u0_at_0: f64,
    pub delta0: f64,
    pub k: [f64; 3],
}

impl DeGennesConstants {
    /// Full pipeline on the given grid study.
    pub fn compute(study: GridStudy) -> Result<Self> {
        let sols = solve_study(study, 1e-13)?;
        Self::from_solutions(&sols, study)
    }

    pub fn from_solutions(sols: &[DeGennesOnGrid], study: GridStudy) -> Result<Self> {
        let t = theta0_from(sols)?;
        let d = delta0_curvature(sols)?;
        let k: Vec<Estimate> = (1..=3).map(|j| compute_kj(j, sols)).collect::<Result<_>>()?;
        Ok(Self {
            xi0: t.xi0.value,
            theta0: t.theta0.value,
            u0_at_0: t.u0_at_0.value,
            delta0: d.value,
            k: [k[0].value, k[1].value, k[2].value],
            uncertainty: DeGennesUncertainty {
                xi0: t.xi0.uncertainty,
                theta0: t.theta0.uncertainty,
                u0_at_0: t.u0_at_0.uncertainty,
                delta0: d.uncertainty,
                k: [k[0].uncertainty, k[1].uncertainty, k[2].uncertainty],
            },
            xi0_hermite: hermite_root_xi0(1e-8)?,
            study,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D {
        Grid1D::half_line(12.0, 2401).unwrap()
    }

    #[test]
    fn xi_zero_gives_oscillator_energy() {
        let g = Grid1D::half_line(12.0, 4801).unwrap();
        let s = eig1_de_gennes(0.0, &g).unwrap();
        assert!((s.eigenvalue - 1.0).abs() < 1e-6);
        assert!(s.vector.iter().take(4000).all(|u| *u > 0.0));
    }

    #[test]
    fn tail_clip_is_reported() {
        let g = Grid1D::half_line(4.0, 401).unwrap();
        assert!(matches!(eig1_de_gennes(0.0, &g), Err(Error::TailClip(_))));
    }

    #[test]
    fn monotone_on_each_side_of_minimum() {
        let g = grid();
        let l = |xi: f64| eig1_de_gennes(xi, &g).unwrap().eigenvalue;
        assert!(l(-1.5) > l(-1.2) && l(-1.2) > l(-0.9));
        assert!(l(-0.6) < l(-0.3) && l(-0.3) < l(0.0));
        assert!(l(1.5) > l(0.0) && l(1.5) > 2.0);
        let far = l(-5.0);
        assert!(far > 0.59 && far < 1.0);
    }

    #[test]
    fn hermite_order_zero_is_constant() {
        for x in [-0.8, 0.0, 3.0] {
            let (y, dy) = hermite_function(0.0, x, 12.0);
            assert!((y - 1.0).abs() < 1e-12 && dy.abs() < 1e-12);
        }
        // H₁(x) = 2x
        let (y, _) = hermite_function(1.0, -0.7, 12.0);
        assert!((y + 1.4).abs() < 1e-10);
    }

    #[test]
    fn fh_derivative_matches_moment_formula() {
        let s = eig1_de_gennes(-0.5, &grid()).unwrap();
        let fh = fh_derivative(&s);
        let closed = (s.eigenvalue - 0.25) * s.boundary_value.powi(2);
        assert!((fh - closed).abs() < 1e-5);
    }

    #[test]
    fn resolvent_kills_ground_state() {
        let sol = DeGennesOnGrid::solve(&grid(), 1e-13).unwrap();
        let w = sol.reg_resolvent(&sol.state.vector);
        assert!(w.iter().all(|v| v.abs() < 1e-9));
        // k₀ = λ′(ξ)/2 vanishes at the discrete minimizer
        assert!(sol.k(0).abs() < 1e-12);
    }
}
