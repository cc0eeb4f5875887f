//! Formal expansion of the boundary-layer operator in ε = B^{−1/6}.
//!
//! The operator expands as Σ ε^j h_j with
//! h₀ = −∂τ² + (τ+n₀)², h₁ = 2(n₁+ρ²/2)(τ+n₀), h₂ = −∂ρ² + (n₁+ρ²/2)² + 2n₂(τ+n₀), …
//! The Grušin recursion builds ψ_j = u₀⊗φ_j − E₀ T_j with
//! T_j = Σ_{l≥1} (h_l − λ_l) ψ_{j−l}, where E₀ is the de Gennes regularized
//! resolvent acting along τ. Solvability of R⁻T_k = 0 fixes λ_k and φ_{k−2}.
//!
//! Every quantity is computed with the discrete operators of one tensor grid,
//! so the recursion is exact at the discrete level; grid dependence is removed
//! afterwards by Richardson extrapolation over three grids.

use crate::degennes::{DeGennesOnGrid, Estimate};
use crate::error::{Error, Result};
use crate::montgomery::ScaledOnGrid;
use crate::numkit::{loglog_slope, polyfit, richardson_with_error, Grid1D, SparseSymOp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Highest level the recursion supports (h₀ … h₈ are implemented).
pub const MAX_LEVEL: usize = 8;
/// Stencil for the free parameters n₂ and n₃.
pub const STENCIL: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
/// Solvability residual above which a level is rejected.
pub const SOLVABILITY_TOL: f64 = 1e-8;
/// Fit residual above which a polynomial extraction is rejected.
pub const FIT_TOL: f64 = 1e-6;

/// Which form of h₆ to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum HVariant {
    /// Taylor expansion of the operator: 2((n₀+τ)ρ² + 2τn₁) multiplies n₂.
    #[default]
    Corrected,
    /// The same term multiplied by n₃.
    Printed,
}

/// Potential part V_j of h_j at (τ, ρ) for parameters n = (n₀, n₁, n₂, n₃).
pub fn potential(j: usize, n: &[f64; 4], t: f64, r: f64, variant: HVariant) -> f64 {
    let [n0, n1, n2, n3] = *n;
    let r2 = r * r;
    let r4 = r2 * r2;
    let a = n1 + 0.5 * r2;
    let y = t + n0;
    match j {
        0 => y * y,
        1 => 2.0 * a * y,
        2 => a * a + 2.0 * n2 * y,
        3 => t * (t + 2.0 * n0) * y + 2.0 * n3 * y + 2.0 * n2 * a,
        4 => n0 * n0 * r2 + 0.5 * (6.0 * n1 + r2) * t * t + 4.0 * n0 * a * t + 2.0 * n3 * a + n2 * n2,
        5 => {
            2.0 * n2 * n3
                + t * (3.0 * t + 4.0 * n0) * n2
                + r4 / 6.0 * (4.0 * n0 + t)
                + 2.0 * n1 * r2 * y
                + 2.0 * n1 * n1 * t
        }
        6 => {
            let mixed = match variant {
                HVariant::Corrected => n2,
                HVariant::Printed => n3,
            };
            n3 * n3
                + t * (3.0 * t + 4.0 * n0) * n3
                + 2.0 * (y * r2 + 2.0 * t * n1) * mixed
                + r4 * r2 / 12.0
                + 2.0 * n1 / 3.0 * r4
                + n1 * n1 * r2
                + 1.25 * t.powi(4)
                + 4.0 * n0 * t.powi(3)
                + 3.0 * n0 * n0 * t * t
        }
        7 => {
            2.0 * n0 * n0 * r2 * t
                + 6.0 * n0 * n1 * t * t
                + 2.0 * n0 * n3 * r2
                + 3.0 * n0 * r2 * t * t
                + 2.0 * n1 * n2 * r2
                + 4.0 * n1 * n3 * t
                + 4.0 * n1 * t.powi(3)
                + 2.0 * n2 * n2 * t
                + 2.0 * n2 * r4 / 3.0
                + 2.0 * n3 * r2 * t
                + r2 * t.powi(3)
        }
        8 => {
            2.0 * n0 * n0 * r4 / 3.0
                + 4.0 * n0 * n1 * r2 * t
                + 6.0 * n0 * n2 * t * t
                + 4.0 * n0 * r4 * t / 3.0
                + 3.0 * n1 * n1 * t * t
                + 2.0 * n1 * n3 * r2
                + 3.0 * n1 * r2 * t * t
                + n2 * n2 * r2
                + 4.0 * n2 * n3 * t
                + 4.0 * n2 * t.powi(3)
                + 2.0 * n3 * r4 / 3.0
                + 7.0 * r4 * t * t / 12.0
        }
        _ => 0.0,
    }
}

/// Coefficients of the derivative terms of h_j:
/// (∂τ coefficient, ∂ρ² coefficient, ρ∂ρ coefficient), each a function of τ.
fn derivative_terms(j: usize, t: f64) -> (f64, f64, f64) {
    match j {
        2 => (0.0, -1.0, 0.0),
        3 => (2.0, 0.0, 0.0),
        5 => (0.0, -2.0 * t, 0.0),
        6 => (2.0 * t, 0.0, 1.0),
        8 => (0.0, -3.0 * t * t, 0.0),
        _ => (0.0, 0.0, 0.0),
    }
}

/// Product grid: half-line in τ (Neumann at 0) times a symmetric interval in ρ.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub tau: Grid1D,
    pub rho: Grid1D,
    tau_x: Vec<f64>,
    rho_x: Vec<f64>,
    tau_w: Vec<f64>,
    rho_w: Vec<f64>,
}

impl TensorGrid {
    pub fn new(tau: Grid1D, rho: Grid1D) -> Self {
        Self {
            tau_x: tau.coords(),
            rho_x: rho.coords(),
            tau_w: tau.weights(),
            rho_w: rho.weights(),
            tau,
            rho,
        }
    }

    /// τ ∈ [0, tau_length], ρ ∈ [−rho_half_width, rho_half_width], spacing ≈ h in both.
    pub fn with_spacing(tau_length: f64, rho_half_width: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("spacing {h}")));
        }
        let nt = (tau_length / h).round() as usize + 1;
        let nr = (2.0 * rho_half_width / h).round() as usize + 1;
        Ok(Self::new(
            Grid1D::half_line(tau_length, nt)?,
            Grid1D::symmetric(rho_half_width, nr)?,
        ))
    }

    pub fn refined(&self) -> Self {
        Self::new(self.tau.refined(), self.rho.refined())
    }

    pub fn nt(&self) -> usize {
        self.tau_x.len()
    }

    pub fn nr(&self) -> usize {
        self.rho_x.len()
    }

    pub fn tau_coords(&self) -> &[f64] {
        &self.tau_x
    }

    pub fn rho_coords(&self) -> &[f64] {
        &self.rho_x
    }

    pub fn tau_weights(&self) -> &[f64] {
        &self.tau_w
    }

    pub fn rho_weights(&self) -> &[f64] {
        &self.rho_w
    }

    /// Common spacing used as the Richardson parameter.
    pub fn h(&self) -> f64 {
        self.tau.h()
    }

    /// Product trapezoid weight at (i, j).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.tau_w[i] * self.rho_w[j]
    }
}

/// Values on the unknown nodes of a [`TensorGrid`], τ index fastest:
/// `data[j * nt + i]` is the value at (τ_i, ρ_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFunction {
    pub nt: usize,
    pub nr: usize,
    pub data: Vec<f64>,
}

impl TensorFunction {
    pub fn zeros(nt: usize, nr: usize) -> Self {
        Self {
            nt,
            nr,
            data: vec![0.0; nt * nr],
        }
    }

    /// u ⊗ φ.
    pub fn product(u: &[f64], phi: &[f64]) -> Self {
        let nt = u.len();
        let mut data = Vec::with_capacity(nt * phi.len());
        for p in phi {
            data.extend(u.iter().map(|v| v * p));
        }
        Self { nt, nr: phi.len(), data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nt + i]
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        &self.data[j * self.nt..(j + 1) * self.nt]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, a: f64, x: &TensorFunction) {
        self.data.iter_mut().zip(&x.data).for_each(|(y, x)| *y += a * x);
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// Product-trapezoid inner product.
    pub fn inner(&self, other: &TensorFunction, grid: &TensorGrid) -> f64 {
        (0..self.nr)
            .map(|j| {
                let s: f64 = self
                    .slice(j)
                    .iter()
                    .zip(other.slice(j))
                    .zip(grid.tau_weights())
                    .map(|((a, b), w)| w * a * b)
                    .sum();
                s * grid.rho_weights()[j]
            })
            .sum()
    }

    pub fn norm(&self, grid: &TensorGrid) -> f64 {
        self.inner(self, grid).sqrt()
    }
}

/// Per-grid data the recursion needs: the de Gennes minimizer with its
/// resolvent, k₁ and k₂, κ = 1 − 4k₁, and the scaled Montgomery minimizer
/// with quartic strength κ.
#[derive(Debug, Clone)]
pub struct GrusinContext {
    pub grid: TensorGrid,
    pub dg: DeGennesOnGrid,
    pub kappa: f64,
    pub k2: f64,
    pub mont: ScaledOnGrid,
}

impl GrusinContext {
    pub fn new(grid: TensorGrid) -> Result<Self> {
        let dg = DeGennesOnGrid::solve(&grid.tau, 1e-13)?;
        let kappa = 1.0 - 4.0 * dg.k(1);
        let k2 = dg.k(2);
        let mont = ScaledOnGrid::minimize(kappa, &grid.rho, 1e-13)?;
        Ok(Self {
            grid,
            dg,
            kappa,
            k2,
            mont,
        })
    }

    pub fn theta(&self) -> f64 {
        self.dg.state.eigenvalue
    }

    /// (n₀, n₁) fixed by the de Gennes and Montgomery minimizers.
    pub fn base_params(&self) -> [f64; 2] {
        [self.dg.xi(), self.mont.params.nu]
    }

    pub fn operators(&self, n2: f64, n3: f64, variant: HVariant) -> HOperatorSet<'_> {
        let [n0, n1] = self.base_params();
        HOperatorSet {
            ctx: self,
            n: [n0, n1, n2, n3],
            variant,
        }
    }

    /// E₀ = I ⊗ R_reg: the de Gennes regularized resolvent on every τ-slice.
    pub fn apply_e0(&self, f: &TensorFunction) -> TensorFunction {
        let nt = f.nt;
        let mut out = TensorFunction::zeros(nt, f.nr);
        out.data
            .par_chunks_mut(nt)
            .zip(f.data.par_chunks(nt))
            .for_each(|(o, s)| o.copy_from_slice(&self.dg.reg_resolvent(s)));
        out
    }

    /// R⁻f(ρ) = ∫ f(τ, ρ) u₀(τ) dτ.
    pub fn project(&self, f: &TensorFunction) -> Vec<f64> {
        let u = &self.dg.state.vector;
        let w = self.grid.tau_weights();
        f.data
            .chunks(f.nt)
            .map(|s| s.iter().zip(u).zip(w).map(|((f, u), w)| f * u * w).sum())
            .collect()
    }

    /// R⁺φ = u₀ ⊗ φ.
    pub fn lift(&self, phi: &[f64]) -> TensorFunction {
        TensorFunction::product(&self.dg.state.vector, phi)
    }

    fn rho_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(self.grid.rho_weights())
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    /// Run the recursion to `max_level` with the free parameters n₂, n₃.
    pub fn run(&self, n2: f64, n3: f64, max_level: usize, variant: HVariant) -> Result<GrusinRun> {
        if !(2..=MAX_LEVEL).contains(&max_level) {
            return Err(Error::InvalidInput(format!(
                "recursion level {max_level} outside 2..={MAX_LEVEL}"
            )));
        }
        let ops = self.operators(n2, n3, variant);
        let phi0 = self.mont.state.vector.clone();
        let psi0 = self.lift(&phi0);
        let lambda1 = ops.apply(1, &psi0).inner(&psi0, &self.grid);
        let mut lambdas = vec![self.theta(), lambda1, self.mont.state.eigenvalue];
        let mut psis = vec![psi0];

        // level 2: R⁻[h₁χ₁ + (h₂ − λ₂)ψ₀] must vanish for the Montgomery ground state
        let chi1 = self.chi(&ops, 1, &psis, &lambdas);
        let mut t2 = ops.apply(1, &chi1);
        ops.apply_into(2, &psis[0], 1.0, &mut t2);
        t2.axpy(-lambdas[2], &psis[0]);
        let r2 = self.project(&t2);
        let mut solvability = vec![self.rho_inner(&r2, &r2).sqrt()];
        let mut phis = vec![phi0.clone()];

        for k in 3..=max_level {
            // ψ_{k−2}, ψ_{k−1} with the unknown φ_{k−2}, φ_{k−1} set to zero
            let chi_a = self.chi(&ops, k - 2, &psis, &lambdas);
            psis.push(chi_a);
            let chi_b = self.chi(&ops, k - 1, &psis, &lambdas);
            psis.push(chi_b);
            lambdas.push(0.0);
            let t = self.t_sum(&ops, k, &psis, &lambdas);
            let g = self.project(&t);
            let lk = self.rho_inner(&phi0, &g);
            lambdas[k] = lk;
            let rhs: Vec<f64> = phi0.iter().zip(&g).map(|(p, g)| lk * p - g).collect();
            let phi = self.mont.reg_resolvent(&rhs);
            psis.pop();
            let lifted = self.lift(&phi);
            psis[k - 2].axpy(1.0, &lifted);

            // L φ = R⁻[−h₁E₀h₁ + (h₂ − λ₂)] u₀⊗φ through the tensor operators
            let mut l_phi = ops.apply(1, &self.apply_e0(&ops.apply(1, &lifted)));
            l_phi.scale(-1.0);
            ops.apply_into(2, &lifted, 1.0, &mut l_phi);
            l_phi.axpy(-lambdas[2], &lifted);
            let lp = self.project(&l_phi);
            let res: Vec<f64> = g
                .iter()
                .zip(&phi0)
                .zip(&lp)
                .map(|((g, p), l)| g - lk * p + l)
                .collect();
            let r = self.rho_inner(&res, &res).sqrt();
            if !(r <= SOLVABILITY_TOL) {
                return Err(Error::Solvability { level: k, residual: r });
            }
            solvability.push(r);
            phis.push(phi);
        }
        Ok(GrusinRun {
            n: ops.n,
            variant,
            lambdas,
            phis,
            psis,
            solvability,
        })
    }

    /// T_j = Σ_{l=1..j} (h_l − λ_l) ψ_{j−l}.
    fn t_sum(&self, ops: &HOperatorSet, j: usize, psis: &[TensorFunction], lambdas: &[f64]) -> TensorFunction {
        let mut t = TensorFunction::zeros(self.grid.nt(), self.grid.nr());
        for l in 1..=j {
            ops.apply_into(l, &psis[j - l], 1.0, &mut t);
            t.axpy(-lambdas[l], &psis[j - l]);
        }
        t
    }

    /// χ_j = −E₀ T_j.
    fn chi(&self, ops: &HOperatorSet, j: usize, psis: &[TensorFunction], lambdas: &[f64]) -> TensorFunction {
        let mut c = self.apply_e0(&self.t_sum(ops, j, psis, lambdas));
        c.scale(-1.0);
        c
    }

    /// All coefficients on this grid.
    pub fn coefficients(&self, variant: HVariant) -> Result<GridCoefficients> {
        let mut l4 = Vec::new();
        let mut lambda3 = Vec::new();
        let mut max_solv: f64 = 0.0;
        let mut first = None;
        for n2 in STENCIL {
            let run = self.run(n2, 0.0, 4, variant)?;
            max_solv = max_solv.max(run.max_solvability());
            l4.push(run.lambdas[4]);
            lambda3.push(run.lambdas[3]);
            first.get_or_insert(run);
        }
        let first = first.expect("stencil is not empty");
        let fit4 = checked_fit(&STENCIL, &l4, 2, "λ₄(n₂)")?;
        let m2_hat = fit4
            .vertex()
            .ok_or_else(|| Error::InvalidInput("λ₄(n₂) is not quadratic".into()))?;

        let mut l4d = Vec::new();
        let mut l5d = Vec::new();
        for d in STENCIL {
            let run = self.run(m2_hat + d, 0.0, 5, variant)?;
            max_solv = max_solv.max(run.max_solvability());
            l4d.push(run.lambdas[4]);
            l5d.push(run.lambdas[5]);
        }
        let fit4d = checked_fit(&STENCIL, &l4d, 2, "λ₄(δ)")?;
        let fit5d = checked_fit(&STENCIL, &l5d, 3, "λ₅(δ)")?;

        let mut l5n = Vec::new();
        let mut l6n = Vec::new();
        let mut vertex_run = None;
        for n3 in STENCIL {
            let run = self.run(m2_hat, n3, 6, variant)?;
            max_solv = max_solv.max(run.max_solvability());
            l5n.push(run.lambdas[5]);
            l6n.push(run.lambdas[6]);
            if n3 == 0.0 {
                vertex_run = Some(run);
            }
        }
        let vertex_run = vertex_run.expect("stencil contains 0");
        let fit5n = checked_fit(&STENCIL, &l5n, 1, "λ₅(n₃)")?;
        let fit6 = checked_fit(&STENCIL, &l6n, 2, "λ₆(n₃)")?;
        let m3_hat = fit6
            .vertex()
            .ok_or_else(|| Error::InvalidInput("λ₆(n₃) is not quadratic".into()))?;

        let nu = self.mont.params.nu;
        let grid = &self.grid.rho;
        let phi0 = &self.mont.state.vector;
        let m2_00 = crate::montgomery::m_moment(2, nu, grid, phi0, phi0);
        let m1_01_frozen = crate::montgomery::m_moment(1, nu, grid, phi0, &first.phis[1]);
        let m1_01_vertex = crate::montgomery::m_moment(1, nu, grid, phi0, &vertex_run.phis[1]);
        let shift = 12.0 * m2_00 * self.k2 / self.kappa;
        let lambda4_linear = fit4.coeffs[1];
        let fit_residual = [fit4, fit4d.clone(), fit5d.clone(), fit5n.clone(), fit6.clone()]
            .iter()
            .map(|f| f.max_residual)
            .fold(0.0, f64::max);

        Ok(GridCoefficients {
            h: self.grid.h(),
            xi0: self.dg.xi(),
            theta0: self.theta(),
            kappa: self.kappa,
            k2: self.k2,
            m1_hat: nu,
            lambda1: first.lambdas[1],
            lambda2: first.lambdas[2],
            lambda3: lambda3.iter().sum::<f64>() / lambda3.len() as f64,
            lambda3_spread: lambda3.iter().fold(0.0, |a: f64, v| a.max((v - lambda3[0]).abs())),
            m2_hat,
            lambda4_poly: [fit4d.coeffs[0], fit4d.coeffs[1], fit4d.coeffs[2]],
            lambda5_poly: [fit5d.coeffs[0], fit5d.coeffs[1], fit5d.coeffs[2], fit5d.coeffs[3]],
            lambda5_n3_slope: fit5n.coeffs[1],
            lambda6_coefficient: fit6.coeffs[2],
            m3_hat,
            c_hat: fit6.eval(m3_hat),
            lambda4_linear,
            m2_00,
            m1_01_frozen,
            m1_01_vertex,
            m2_formula_frozen: -m1_01_frozen - shift,
            m2_formula_vertex: -m1_01_vertex - shift,
            max_solvability: max_solv,
            max_fit_residual: fit_residual,
        })
    }

    /// Expansion at (n₂, n₃) to level 8, ready for trial-state assembly.
    pub fn trial_series(&self, n2: f64, n3: f64, variant: HVariant) -> Result<TrialSeries<'_>> {
        Ok(TrialSeries {
            ctx: self,
            run: self.run(n2, n3, MAX_LEVEL, variant)?,
        })
    }
}

fn checked_fit(xs: &[f64], ys: &[f64], degree: usize, context: &str) -> Result<crate::numkit::PolyFit> {
    let fit = polyfit(xs, ys, degree)?;
    let scale = ys.iter().fold(1.0, |a: f64, v| a.max(v.abs()));
    if !(fit.max_residual <= FIT_TOL * scale) {
        return Err(Error::FitResidual {
            residual: fit.max_residual,
            limit: FIT_TOL * scale,
            context: context.to_string(),
        });
    }
    Ok(fit)
}

/// The operators h₀ … h₈ at fixed (n₀, n₁, n₂, n₃) on a context's grid.
#[derive(Debug, Clone, Copy)]
pub struct HOperatorSet<'a> {
    ctx: &'a GrusinContext,
    pub n: [f64; 4],
    pub variant: HVariant,
}

impl HOperatorSet<'_> {
    pub fn apply(&self, j: usize, f: &TensorFunction) -> TensorFunction {
        let mut out = TensorFunction::zeros(f.nt, f.nr);
        self.apply_into(j, f, 1.0, &mut out);
        out
    }

    /// out += scale · h_j f. Derivatives are central; the τ-stencil reflects at
    /// the Neumann end and all stencils see zero beyond a Dirichlet end.
    pub fn apply_into(&self, j: usize, f: &TensorFunction, scale: f64, out: &mut TensorFunction) {
        let grid = &self.ctx.grid;
        let (nt, nr) = (f.nt, f.nr);
        let ht = grid.tau.h();
        let hr = grid.rho.h();
        let taus = grid.tau_coords();
        let rhos = grid.rho_coords();
        if j == 0 {
            out.data
                .par_chunks_mut(nt)
                .zip(f.data.par_chunks(nt))
                .for_each(|(o, s)| {
                    let v = self.ctx.dg.op.apply(s);
                    o.iter_mut().zip(v).for_each(|(o, v)| *o += scale * v);
                });
            return;
        }
        let data = &f.data;
        out.data.par_chunks_mut(nt).enumerate().for_each(|(jr, o)| {
            let r = rhos[jr];
            let row = &data[jr * nt..(jr + 1) * nt];
            let below = (jr > 0).then(|| &data[(jr - 1) * nt..jr * nt]);
            let above = (jr + 1 < nr).then(|| &data[(jr + 1) * nt..(jr + 2) * nt]);
            for i in 0..nt {
                let t = taus[i];
                let mut v = potential(j, &self.n, t, r, self.variant) * row[i];
                let (c_t, c_rr, c_r) = derivative_terms(j, t);
                if c_t != 0.0 {
                    let right = if i + 1 < nt { row[i + 1] } else { 0.0 };
                    let left = if i > 0 { row[i - 1] } else { right };
                    v += c_t * (right - left) / (2.0 * ht);
                }
                if c_rr != 0.0 || c_r != 0.0 {
                    let lo = below.map_or(0.0, |b| b[i]);
                    let hi = above.map_or(0.0, |a| a[i]);
                    v += c_rr * (lo - 2.0 * row[i] + hi) / (hr * hr);
                    v += c_r * r * (hi - lo) / (2.0 * hr);
                }
                o[i] += scale * v;
            }
        });
    }

    /// h_j as a matrix-free operator, symmetrized by the product weight, for
    /// symmetry probing.
    pub fn weighted(&self, j: usize) -> WeightedH<'_> {
        let g = &self.ctx.grid;
        let mut sqrt_w = Vec::with_capacity(g.nt() * g.nr());
        for jr in 0..g.nr() {
            for i in 0..g.nt() {
                sqrt_w.push(g.weight(i, jr).sqrt());
            }
        }
        WeightedH { ops: *self, j, sqrt_w }
    }
}

/// W^{1/2} h_j W^{−1/2} with W the product trapezoid weight.
#[derive(Debug, Clone)]
pub struct WeightedH<'a> {
    ops: HOperatorSet<'a>,
    j: usize,
    sqrt_w: Vec<f64>,
}

impl SparseSymOp for WeightedH<'_> {
    fn dim(&self) -> usize {
        self.sqrt_w.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.ops.ctx.grid;
        let f = TensorFunction {
            nt: g.nt(),
            nr: g.nr(),
            data: x.iter().zip(&self.sqrt_w).map(|(x, s)| x / s).collect(),
        };
        let hf = self.ops.apply(self.j, &f);
        y.iter_mut()
            .zip(hf.data)
            .zip(&self.sqrt_w)
            .for_each(|((y, v), s)| *y = v * s);
    }
}

/// Output of one recursion run.
#[derive(Debug, Clone)]
pub struct GrusinRun {
    pub n: [f64; 4],
    pub variant: HVariant,
    /// λ₀ … λ_K.
    pub lambdas: Vec<f64>,
    /// φ₀ … φ_{K−2}.
    pub phis: Vec<Vec<f64>>,
    /// ψ₀ … ψ_{K−2}, complete.
    pub psis: Vec<TensorFunction>,
    /// ‖R⁻T_k‖ after the choice of λ_k, k = 2 … K.
    pub solvability: Vec<f64>,
}

impl GrusinRun {
    pub fn max_solvability(&self) -> f64 {
        self.solvability.iter().copied().fold(0.0, f64::max)
    }
}

/// Coefficients extracted on a single tensor grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCoefficients {
    pub h: f64,
    pub xi0: f64,
    pub theta0: f64,
    pub kappa: f64,
    pub k2: f64,
    pub m1_hat: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Largest change of λ₃ across the n₂ stencil (λ₃ does not depend on n₂).
    pub lambda3_spread: f64,
    pub m2_hat: f64,
    /// λ₄(δ) = c₀ + c₁δ + c₂δ² with n₂ = m̂₂ + δ.
    pub lambda4_poly: [f64; 3],
    /// λ₅(δ) = λ₅ + a₁δ + a₂δ² + a₃δ³.
    pub lambda5_poly: [f64; 4],
    /// ∂λ₅/∂n₃ at n₂ = m̂₂.
    pub lambda5_n3_slope: f64,
    pub lambda6_coefficient: f64,
    pub m3_hat: f64,
    pub c_hat: f64,
    /// Linear coefficient of λ₄ in n₂ at n₂ = 0.
    pub lambda4_linear: f64,
    pub m2_00: f64,
    /// M¹₀,₁ with φ₁ at n₂ = 0.
    pub m1_01_frozen: f64,
    /// M¹₀,₁ with φ₁ at n₂ = m̂₂.
    pub m1_01_vertex: f64,
    /// −M¹₀,₁ − 12 M²₀,₀ k₂/κ with the two φ₁ above.
    pub m2_formula_frozen: f64,
    pub m2_formula_vertex: f64,
    pub max_solvability: f64,
    pub max_fit_residual: f64,
}

/// Settings of the three-grid study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorStudy {
    pub tau_length: f64,
    pub rho_half_width: f64,
    pub h: f64,
    pub levels: usize,
}

impl Default for TensorStudy {
    fn default() -> Self {
        Self {
            tau_length: 12.0,
            rho_half_width: 9.0,
            h: 0.06,
            levels: 3,
        }
    }
}

impl TensorStudy {
    /// Coarser grids for smoke runs.
    pub fn quick(self) -> Self {
        Self {
            h: 0.12,
            levels: 2,
            ..self
        }
    }

    pub fn grids(&self) -> Result<Vec<TensorGrid>> {
        let mut g = TensorGrid::with_spacing(self.tau_length, self.rho_half_width, self.h)?;
        let mut out = Vec::new();
        for _ in 0..self.levels {
            let next = g.refined();
            out.push(g);
            g = next;
        }
        Ok(out)
    }
}

/// Value of λ₆ split as in λ₆(n₃) = c(n₃ − m̂₃)² + Ĉ.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Lambda6 {
    pub coefficient: f64,
    pub m3_hat: f64,
    pub c_hat: f64,
}

/// Grid-extrapolated expansion coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub variant: HVariant,
    /// λ₀ … λ₅ (λ₄ and λ₅ at n₂ = m̂₂).
    pub lambda: [f64; 6],
    pub lambda6: Lambda6,
    /// m̂₀ … m̂₃.
    pub m_hat: [f64; 4],
    /// λ₄(δ) = c₀ + c₁δ + c₂δ².
    pub lambda4_poly: [f64; 3],
    /// (λ₅, a₁, a₂, a₃).
    pub lambda5_poly: [f64; 4],
    pub c_hat: f64,
    pub lambda5_n3_slope: f64,
    /// δ₀ = 1 − 4k₁ as seen by the recursion.
    pub kappa: f64,
    pub m2_formula_frozen: f64,
    pub m2_formula_vertex: f64,
    pub lambda4_linear: f64,
    pub uncertainty: ExpansionUncertainty,
    pub per_grid: Vec<GridCoefficients>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionUncertainty {
    pub lambda: [f64; 6],
    pub lambda6_coefficient: f64,
    pub m_hat: [f64; 4],
    pub c_hat: f64,
    pub lambda5_poly: [f64; 4],
}

impl ExpansionCoefficients {
    pub fn compute(study: TensorStudy, variant: HVariant) -> Result<Self> {
        let per_grid = study
            .grids()?
            .into_iter()
            .map(|g| GrusinContext::new(g)?.coefficients(variant))
            .collect::<Result<Vec<_>>>()?;
        Self::from_grids(per_grid, variant)
    }

    pub fn from_grids(per_grid: Vec<GridCoefficients>, variant: HVariant) -> Result<Self> {
        let ex = |f: &dyn Fn(&GridCoefficients) -> f64| -> Result<Estimate> {
            let s: Vec<(f64, f64)> = per_grid.iter().map(|c| (c.h, f(c))).collect();
            if s.len() == 1 {
                return Ok(Estimate {
                    value: s[0].1,
                    uncertainty: f64::NAN,
                });
            }
            let (value, uncertainty) = richardson_with_error(&s, 2)?;
            Ok(Estimate { value, uncertainty })
        };
        let lam = [
            ex(&|c| c.theta0)?,
            ex(&|c| c.lambda1)?,
            ex(&|c| c.lambda2)?,
            ex(&|c| c.lambda3)?,
            ex(&|c| c.lambda4_poly[0])?,
            ex(&|c| c.lambda5_poly[0])?,
        ];
        let m = [
            ex(&|c| c.xi0)?,
            ex(&|c| c.m1_hat)?,
            ex(&|c| c.m2_hat)?,
            ex(&|c| c.m3_hat)?,
        ];
        let l6c = ex(&|c| c.lambda6_coefficient)?;
        let c_hat = ex(&|c| c.c_hat)?;
        let l4 = [
            lam[4].value,
            ex(&|c| c.lambda4_poly[1])?.value,
            ex(&|c| c.lambda4_poly[2])?.value,
        ];
        let l5: Vec<Estimate> = (0..4)
            .map(|i| ex(&|c| c.lambda5_poly[i]))
            .collect::<Result<_>>()?;
        Ok(Self {
            variant,
            lambda: lam.map(|e| e.value),
            lambda6: Lambda6 {
                coefficient: l6c.value,
                m3_hat: m[3].value,
                c_hat: c_hat.value,
            },
            m_hat: m.map(|e| e.value),
            lambda4_poly: l4,
            lambda5_poly: [l5[0].value, l5[1].value, l5[2].value, l5[3].value],
            c_hat: c_hat.value,
            lambda5_n3_slope: ex(&|c| c.lambda5_n3_slope)?.value,
            kappa: ex(&|c| c.kappa)?.value,
            m2_formula_frozen: ex(&|c| c.m2_formula_frozen)?.value,
            m2_formula_vertex: ex(&|c| c.m2_formula_vertex)?.value,
            lambda4_linear: ex(&|c| c.lambda4_linear)?.value,
            uncertainty: ExpansionUncertainty {
                lambda: lam.map(|e| e.uncertainty),
                lambda6_coefficient: l6c.uncertainty,
                m_hat: m.map(|e| e.uncertainty),
                c_hat: c_hat.uncertainty,
                lambda5_poly: [l5[0].uncertainty, l5[1].uncertainty, l5[2].uncertainty, l5[3].uncertainty],
            },
            per_grid,
        })
    }

    /// λ₆ at a given n₃.
    pub fn lambda6_at(&self, n3: f64) -> f64 {
        self.lambda6.coefficient * (n3 - self.lambda6.m3_hat).powi(2) + self.lambda6.c_hat
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let mut row = |name: &str, v: f64, e: f64| {
            s.push_str(&format!("{name:<22} {v:>20.12} {e:>12.2e}\n"));
        };
        for (j, (v, e)) in self.lambda.iter().zip(&self.uncertainty.lambda).enumerate() {
            row(&format!("lambda{j}"), *v, *e);
        }
        row("lambda6 coefficient", self.lambda6.coefficient, self.uncertainty.lambda6_coefficient);
        row("C_hat", self.c_hat, self.uncertainty.c_hat);
        for (j, (v, e)) in self.m_hat.iter().zip(&self.uncertainty.m_hat).enumerate() {
            row(&format!("m_hat{j}"), *v, *e);
        }
        for (j, (v, e)) in self.lambda5_poly.iter().zip(&self.uncertainty.lambda5_poly).enumerate().skip(1) {
            row(&format!("lambda5 a{j}"), *v, *e);
        }
        row("lambda4 quadratic", self.lambda4_poly[2], f64::NAN);
        row("lambda5 n3 slope", self.lambda5_n3_slope, f64::NAN);
        s
    }
}

/// C² smoothstep: 1 on [0, a], 0 beyond b.
fn cutoff_1d(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        1.0
    } else if x >= b {
        0.0
    } else {
        let s = (x - a) / (b - a);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// χ_B(τ, ρ): 1 for τ < √B/6, |ρ| < πB^{1/3}/8; zero for τ > √B/3 or |ρ| > πB^{1/3}/4.
pub fn cutoff(b: f64, t: f64, r: f64) -> f64 {
    let s = b.sqrt();
    let c = std::f64::consts::PI * b.cbrt();
    cutoff_1d(t, s / 6.0, s / 3.0) * cutoff_1d(r.abs(), c / 8.0, c / 4.0)
}

/// Recursion output at fixed (n₂, n₃) from which trial states are built.
#[derive(Debug, Clone)]
pub struct TrialSeries<'a> {
    ctx: &'a GrusinContext,
    pub run: GrusinRun,
}

/// ψ̂ = χ_B Σ_{j≤K} ψ_j B^{−j/6} and λ̂ = Σ_{j≤K} λ_j B^{−j/6}.
#[derive(Debug, Clone)]
pub struct TrialState {
    pub b: f64,
    pub order: usize,
    pub psi: TensorFunction,
    pub lambda: f64,
}

impl TrialSeries<'_> {
    fn check_order(&self, order: usize) -> Result<()> {
        if !(4..=6).contains(&order) || order >= self.run.psis.len() {
            return Err(Error::InvalidInput(format!(
                "trial order {order} not in 4..=6 or beyond the solved levels"
            )));
        }
        Ok(())
    }

    pub fn assemble(&self, b: f64, order: usize) -> Result<TrialState> {
        self.check_order(order)?;
        if !(b > 1.0) {
            return Err(Error::InvalidInput(format!("field strength {b}")));
        }
        let eps = b.powf(-1.0 / 6.0);
        let g = &self.ctx.grid;
        let mut psi = TensorFunction::zeros(g.nt(), g.nr());
        let mut lambda = 0.0;
        for j in 0..=order {
            psi.axpy(eps.powi(j as i32), &self.run.psis[j]);
            lambda += eps.powi(j as i32) * self.run.lambdas[j];
        }
        let taus = g.tau_coords();
        for (jr, r) in g.rho_coords().iter().enumerate() {
            for (i, t) in taus.iter().enumerate() {
                psi.data[jr * g.nt() + i] *= cutoff(b, *t, *r);
            }
        }
        Ok(TrialState { b, order, psi, lambda })
    }

    /// ‖(Σ_{j≤K} h_j B^{−j/6} − λ̂) ψ̂‖ / ‖ψ̂‖.
    pub fn residual(&self, b: f64, order: usize) -> Result<f64> {
        let trial = self.assemble(b, order)?;
        let eps = b.powf(-1.0 / 6.0);
        let ops = self.ctx.operators(self.run.n[2], self.run.n[3], self.run.variant);
        let mut out = TensorFunction::zeros(trial.psi.nt, trial.psi.nr);
        for j in 0..=order {
            ops.apply_into(j, &trial.psi, eps.powi(j as i32), &mut out);
        }
        out.axpy(-trial.lambda, &trial.psi);
        let g = &self.ctx.grid;
        let r = out.norm(g) / trial.psi.norm(g);
        if !(r <= 1.0) {
            return Err(Error::TrialResidual { b, value: r });
        }
        Ok(r)
    }

    /// Least-squares slope of log r(B) against log B, with the residuals.
    pub fn residual_order_check(&self, bs: &[f64], order: usize) -> Result<(f64, Vec<f64>)> {
        let rs = bs
            .iter()
            .map(|b| self.residual(*b, order))
            .collect::<Result<Vec<_>>>()?;
        Ok((loglog_slope(bs, &rs)?, rs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::symmetry_probe;

    fn ctx() -> GrusinContext {
        GrusinContext::new(TensorGrid::with_spacing(10.0, 7.0, 0.1).unwrap()).unwrap()
    }

    /// Exact potential of the boundary-layer operator with ℓ(x) = x, Cos = cos,
    /// written so that nothing cancels at small ε.
    fn exact_potential(eps: f64, n: &[f64; 4], t: f64, r: f64) -> f64 {
        let e3 = eps.powi(3);
        let m = n[0] + eps * n[1] + eps * eps * n[2] + e3 * n[3];
        let (s, c) = (eps * eps * r).sin_cos();
        let l = 1.0 - e3 * t;
        let num = (-s * s + (e3 * e3 * t * t - 2.0 * e3 * t) * c * c - 2.0 * e3 * m) / e3;
        num * num / (4.0 * l * l * c * c)
    }

    #[test]
    fn potentials_match_series_of_exact_operator() {
        let n = [-0.77, -0.41, 0.3, -0.6];
        for (t, r) in [(0.5, 1.0), (2.0, -1.5), (1.0, 0.3)] {
            let err = |eps: f64| {
                let series: f64 = (0..=8)
                    .map(|j| eps.powi(j as i32) * potential(j, &n, t, r, HVariant::Corrected))
                    .sum();
                (exact_potential(eps, &n, t, r) - series).abs()
            };
            let (e1, e2) = (err(0.04), err(0.02));
            // truncation after ε⁸ leaves O(ε⁹)
            let ratio = e1 / e2;
            assert!(ratio > 2f64.powf(8.5) && ratio < 2f64.powf(9.5), "ratio {ratio}");
        }
    }

    #[test]
    fn printed_variant_differs_only_in_h6() {
        let n = [-0.77, -0.41, 0.3, -0.6];
        for j in 0..=8 {
            let a = potential(j, &n, 1.3, 0.7, HVariant::Corrected);
            let b = potential(j, &n, 1.3, 0.7, HVariant::Printed);
            assert_eq!(a == b, j != 6, "h{j}");
        }
    }

    #[test]
    fn h0_eigen_relation_and_e0_kills_ground_state() {
        let c = ctx();
        let psi0 = c.lift(&c.mont.state.vector);
        let ops = c.operators(0.0, 0.0, HVariant::Corrected);
        let mut r = ops.apply(0, &psi0);
        r.axpy(-c.theta(), &psi0);
        assert!(r.norm(&c.grid) < 1e-9);
        assert!(c.apply_e0(&psi0).norm(&c.grid) < 1e-10);
    }

    #[test]
    fn e0_on_separable_input() {
        let c = ctx();
        let y = c.dg.y();
        let yu: Vec<f64> = y.iter().zip(&c.dg.state.vector).map(|(y, u)| y * u).collect();
        let phi = &c.mont.state.vector;
        let out = c.apply_e0(&TensorFunction::product(&yu, phi));
        let ry = c.dg.reg_resolvent(&yu);
        let expect = TensorFunction::product(&ry, phi);
        let mut d = out.clone();
        d.axpy(-1.0, &expect);
        assert!(d.norm(&c.grid) < 1e-12);
        // ⟨yu₀, E₀(yu₀⊗φ)⟩_τ = k₁ φ
        let k1 = (1.0 - c.kappa) / 4.0;
        let yphi = TensorFunction::product(&yu, phi);
        assert!((yphi.inner(&out, &c.grid) - k1).abs() < 1e-12);
    }

    #[test]
    fn lambda1_vanishes_and_h2_projection() {
        let c = ctx();
        let run = c.run(0.0, 0.0, 2, HVariant::Corrected).unwrap();
        assert!(run.lambdas[1].abs() < 1e-9);
        assert!(run.solvability[0] < 1e-9);
        let psi0 = &run.psis[0];
        let ops = c.operators(0.0, 0.0, HVariant::Corrected);
        let lhs = ops.apply(2, psi0).inner(psi0, &c.grid);
        // ⟨φ₀, (−∂² + (n₁+ρ²/2)²) φ₀⟩
        let nu = c.mont.params.nu;
        let free = crate::numkit::LineOperator::from_fns(c.grid.rho.clone(), |_| 1.0, |r| (nu + 0.5 * r * r).powi(2))
            .unwrap()
            .energy(&c.mont.state.vector);
        assert!((lhs - free).abs() < 1e-10, "{lhs} vs {free}");
    }

    #[test]
    fn symmetric_operators_pass_probe() {
        let c = GrusinContext::new(TensorGrid::with_spacing(8.0, 6.0, 0.2).unwrap()).unwrap();
        let ops = c.operators(0.3, -0.2, HVariant::Corrected);
        for j in [0, 1, 2, 4, 5, 7, 8] {
            let p = symmetry_probe(&ops.weighted(j), 3, 7);
            assert!(p < 1e-12, "h{j}: {p}");
        }
        assert!(symmetry_probe(&ops.weighted(3), 3, 7) > 1e-6);
    }

    #[test]
    fn recursion_is_solvable_to_level_eight() {
        let c = ctx();
        let run = c.run(0.2, -0.1, 8, HVariant::Corrected).unwrap();
        assert_eq!(run.lambdas.len(), 9);
        assert_eq!(run.psis.len(), 7);
        assert!(run.max_solvability() < 1e-9);
        assert!(run.psis.iter().all(|p| p.is_finite()));
        for phi in &run.phis[1..] {
            let d: f64 = phi
                .iter()
                .zip(&run.phis[0])
                .zip(c.grid.rho_weights())
                .map(|((a, b), w)| a * b * w)
                .sum();
            assert!(d.abs() < 1e-10);
        }
    }

    #[test]
    fn lambda3_does_not_depend_on_free_parameters() {
        let c = ctx();
        let a = c.run(0.0, 0.0, 3, HVariant::Corrected).unwrap().lambdas[3];
        let b = c.run(1.5, -2.0, 3, HVariant::Corrected).unwrap().lambdas[3];
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn psi3_is_linear_in_n3() {
        let c = ctx();
        let psi3 = |n3: f64| c.run(0.1, n3, 5, HVariant::Corrected).unwrap().psis[3].clone();
        let (a, b, d) = (psi3(-1.0), psi3(0.0), psi3(1.0));
        let mut second = a.clone();
        second.axpy(-2.0, &b);
        second.axpy(1.0, &d);
        assert!(second.norm(&c.grid) < 1e-9 * b.norm(&c.grid).max(1.0));
    }

    #[test]
    fn trial_state_neumann_and_leading_term() {
        let c = ctx();
        let series = c.trial_series(0.0, 0.0, HVariant::Corrected).unwrap();
        let trial = series.assemble(1e6, 6).unwrap();
        let h = c.grid.tau.h();
        let norm0 = series.run.psis[0].norm(&c.grid);
        let scale = trial.psi.data.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        for jr in 0..c.grid.nr() {
            let d = (-3.0 * trial.psi.get(0, jr) + 4.0 * trial.psi.get(1, jr) - trial.psi.get(2, jr)) / (2.0 * h);
            assert!(d.abs() < 0.05 * scale, "row {jr}: {d}");
        }
        assert!((trial.psi.norm(&c.grid) - norm0).abs() < 1e-2);
        assert!(series.assemble(1e6, 3).is_err());
    }

    #[test]
    fn cutoff_boxes() {
        let b: f64 = 1e6;
        assert_eq!(cutoff(b, b.sqrt() / 6.0 - 1e-9, 0.0), 1.0);
        assert_eq!(cutoff(b, b.sqrt() / 3.0, 0.0), 0.0);
        let c = std::f64::consts::PI * b.cbrt();
        assert_eq!(cutoff(b, 0.0, c / 8.0), 1.0);
        assert_eq!(cutoff(b, 0.0, -c / 4.0), 0.0);
        let mid = cutoff(b, 0.0, 3.0 * c / 16.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }
}
