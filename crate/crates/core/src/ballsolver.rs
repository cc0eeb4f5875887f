//! Finite-B sector solves on the ball.
//!
//! Every sector form used here (the exact boundary-layer form q̃_m, the
//! effective form q_m and the polar H_m) is a sum of Kronecker products of
//! 1-D finite-difference stiffness and mass matrices. The full 2-D pencil is
//! available as a matrix-free operator; production solves project it onto
//! tensor products of 1-D eigenvector bases and diagonalize the small dense
//! matrix, split by parity in the tangential variable.

use crate::error::{Error, Result};
use crate::grusin::ExpansionCoefficients;
use crate::numkit::{
    dense_lowest, loglog_slope, richardson_with_error, Boundary, DenseSym, Grid1D, LineOperator, MassSymmetrized,
    SparseSymOp,
};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Largest layer box used at production.
pub const MAX_BOX: f64 = 10.0;
/// Fraction of the admissible coordinate range the layer box may use.
const BOX_FILL: f64 = 0.95;
/// Default sector window half-width.
pub const WINDOW: i64 = 12;

/// Truncated boundary-layer box τ ∈ [0, T], ρ ∈ [−R, R].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerBox {
    pub tau_length: f64,
    pub rho_half_width: f64,
}

impl LayerBox {
    /// Largest box up to [`MAX_BOX`] on which the coordinate factors stay
    /// positive with margin.
    pub fn for_field(b: f64) -> Self {
        Self {
            tau_length: MAX_BOX.min(BOX_FILL * b.sqrt() / 3.0),
            rho_half_width: MAX_BOX.min(BOX_FILL * PI / 4.0 * b.cbrt()),
        }
    }

    /// T < √B/3 and R < (π/4)B^{1/3}.
    pub fn check(&self, b: f64) -> Result<()> {
        if !(self.tau_length > 0.0 && self.rho_half_width > 0.0) {
            return Err(Error::InvalidInput(format!("degenerate layer box {self:?}")));
        }
        if self.tau_length >= b.sqrt() / 3.0 {
            return Err(Error::Geometry(format!(
                "T = {} is not below √B/3 = {} at B = {b}",
                self.tau_length,
                b.sqrt() / 3.0
            )));
        }
        if self.rho_half_width >= PI / 4.0 * b.cbrt() {
            return Err(Error::Geometry(format!(
                "R = {} is not below (π/4)B^(1/3) = {} at B = {b}",
                self.rho_half_width,
                PI / 4.0 * b.cbrt()
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            tau_length: f * self.tau_length,
            rho_half_width: f * self.rho_half_width,
        }
    }
}

/// Tensor grid: a normal coordinate (τ or r) and a tangential one (ρ or θ).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub normal: Grid1D,
    pub tangential: Grid1D,
}

impl Grid2D {
    /// Layer grid with spacing close to `h` in both directions.
    pub fn layer(bx: LayerBox, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("grid spacing {h}")));
        }
        let nt = (bx.tau_length / h).round() as usize + 1;
        let nr = (2.0 * bx.rho_half_width / h).round() as usize + 1;
        Ok(Self {
            normal: Grid1D::half_line(bx.tau_length, nt.max(3))?,
            tangential: Grid1D::symmetric(bx.rho_half_width, nr.max(3))?,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.normal.unknowns() * self.tangential.unknowns()
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "n[{:.6},{:.6};{}]t[{:.6},{:.6};{}]",
            self.normal.lo,
            self.normal.hi,
            self.normal.points,
            self.tangential.lo,
            self.tangential.hi,
            self.tangential.points
        )
    }
}

/// A single angular-momentum sector on a layer grid.
#[derive(Debug, Clone)]
pub struct SectorProblem {
    pub b: f64,
    pub m: i64,
    pub grid: Grid2D,
}

impl SectorProblem {
    pub fn new(b: f64, m: i64, bx: LayerBox, h: f64) -> Result<Self> {
        bx.check(b)?;
        Ok(Self {
            b,
            m,
            grid: Grid2D::layer(bx, h)?,
        })
    }
}

/// 1-D factor of a Kronecker term.
#[derive(Debug, Clone)]
pub enum Factor {
    /// Σ c(edge midpoint)·(uᵢ₊₁ − uᵢ)²/h
    Stiffness(Vec<f64>),
    /// Σ wᵢ g(xᵢ) uᵢ² over unknown nodes
    Mass(Vec<f64>),
}

impl Factor {
    pub fn stiffness(grid: &Grid1D, c: impl Fn(f64) -> f64) -> Self {
        Factor::Stiffness(grid.edge_midpoints().into_iter().map(c).collect())
    }

    pub fn mass(grid: &Grid1D, g: impl Fn(f64) -> f64) -> Self {
        Factor::Mass(grid.coords().into_iter().map(g).collect())
    }

    /// Tridiagonal matrix of the factor as (diag, offdiag).
    fn matrix(&self, grid: &Grid1D) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = grid.unknowns();
        match self {
            Factor::Stiffness(c) => {
                LineOperator::new(grid.clone(), c.clone(), vec![0.0; n], vec![1.0; n]).map(|op| op.stiffness())
            }
            Factor::Mass(g) => {
                if g.len() != n {
                    return Err(Error::InvalidInput("mass factor length".into()));
                }
                let w = grid.weights();
                Ok((w.iter().zip(g).map(|(a, b)| a * b).collect(), vec![0.0; n.saturating_sub(1)]))
            }
        }
    }
}

/// c(m)·(X ⊗ Y) with c(m) = c₀ + c₁m + c₂m².
#[derive(Debug, Clone)]
pub struct KronTerm {
    pub coef: [f64; 3],
    pub normal: Factor,
    pub tangential: Factor,
}

impl KronTerm {
    fn at(&self, m: f64) -> f64 {
        self.coef[0] + m * (self.coef[1] + m * self.coef[2])
    }
}

/// Family of sector pencils indexed by the angular momentum m. The mass is
/// the tensor product of the two 1-D densities.
#[derive(Debug, Clone)]
pub struct SectorFamily {
    pub b: f64,
    pub grid: Grid2D,
    pub terms: Vec<KronTerm>,
    pub mass_normal: Vec<f64>,
    pub mass_tangential: Vec<f64>,
    /// Eigenvalues of the pencil times `scale` are eigenvalues of H_m.
    pub scale: f64,
}

/// Which sector form a family discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Route {
    Exact,
    Effective,
    Polar,
}

fn positive(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !(*v > 0.0)) {
        Some(i) => Err(Error::Geometry(format!("{what} is {} at node {i}", values[i]))),
        None => Ok(()),
    }
}

/// Exact transformed form q̃_m: weight (1−s)²c with s = B^{−1/2}τ and
/// c = cos(B^{−1/3}ρ).
pub fn qm_exact_family(b: f64, grid: &Grid2D) -> Result<SectorFamily> {
    let sb = b.sqrt();
    let eb = b.cbrt();
    let one_s = move |t: f64| 1.0 - t / sb;
    let cosr = move |r: f64| (r / eb).cos();
    let (gt, gr) = (&grid.normal, &grid.tangential);
    let mass_normal: Vec<f64> = gt.coords().iter().map(|t| one_s(*t).powi(2)).collect();
    let mass_tangential: Vec<f64> = gr.coords().iter().map(|r| cosr(*r)).collect();
    positive(&mass_normal, "radial factor 1 − B^(-1/2)τ")?;
    positive(&mass_tangential, "cos(B^(-1/3)ρ)")?;
    positive(
        &gr.edge_midpoints().iter().map(|r| cosr(*r)).collect::<Vec<_>>(),
        "cos(B^(-1/3)ρ) at edges",
    )?;
    let terms = vec![
        KronTerm {
            coef: [1.0, 0.0, 0.0],
            normal: Factor::stiffness(gt, |t| one_s(t).powi(2)),
            tangential: Factor::mass(gr, cosr),
        },
        KronTerm {
            coef: [1.0 / eb, 0.0, 0.0],
            normal: Factor::mass(gt, |_| 1.0),
            tangential: Factor::stiffness(gr, cosr),
        },
        KronTerm {
            coef: [b / 4.0, 0.0, 0.0],
            normal: Factor::mass(gt, |t| one_s(t).powi(4)),
            tangential: Factor::mass(gr, |r| cosr(r).powi(3)),
        },
        KronTerm {
            coef: [0.0, -1.0, 0.0],
            normal: Factor::mass(gt, |t| one_s(t).powi(2)),
            tangential: Factor::mass(gr, cosr),
        },
        KronTerm {
            coef: [0.0, 0.0, 1.0 / b],
            normal: Factor::mass(gt, |_| 1.0),
            tangential: Factor::mass(gr, |r| 1.0 / cosr(r)),
        },
    ];
    Ok(SectorFamily {
        b,
        grid: grid.clone(),
        terms,
        mass_normal,
        mass_tangential,
        scale: b,
    })
}

/// Effective form q_m: |∂τψ|² + (τ + (m−B/2)/√B + B^{−1/6}ρ²/2)²|ψ|² + B^{−1/3}|∂ρψ|².
pub fn qm_effective_family(b: f64, grid: &Grid2D) -> Result<SectorFamily> {
    let sb = b.sqrt();
    let eps = b.powf(-1.0 / 6.0);
    // μ = a + c·m
    let (a, c) = (-0.5 * sb, 1.0 / sb);
    let (gt, gr) = (&grid.normal, &grid.tangential);
    let one = |_: f64| 1.0;
    let terms = vec![
        KronTerm {
            coef: [1.0, 0.0, 0.0],
            normal: Factor::stiffness(gt, one),
            tangential: Factor::mass(gr, one),
        },
        KronTerm {
            coef: [eps * eps, 0.0, 0.0],
            normal: Factor::mass(gt, one),
            tangential: Factor::stiffness(gr, one),
        },
        KronTerm {
            coef: [1.0, 0.0, 0.0],
            normal: Factor::mass(gt, |t| t * t),
            tangential: Factor::mass(gr, one),
        },
        KronTerm {
            coef: [2.0 * a, 2.0 * c, 0.0],
            normal: Factor::mass(gt, |t| t),
            tangential: Factor::mass(gr, one),
        },
        KronTerm {
            coef: [a * a, 2.0 * a * c, c * c],
            normal: Factor::mass(gt, one),
            tangential: Factor::mass(gr, one),
        },
        KronTerm {
            coef: [eps, 0.0, 0.0],
            normal: Factor::mass(gt, |t| t),
            tangential: Factor::mass(gr, |r| r * r),
        },
        KronTerm {
            coef: [eps * a, eps * c, 0.0],
            normal: Factor::mass(gt, one),
            tangential: Factor::mass(gr, |r| r * r),
        },
        KronTerm {
            coef: [eps * eps / 4.0, 0.0, 0.0],
            normal: Factor::mass(gt, one),
            tangential: Factor::mass(gr, |r| r.powi(4)),
        },
    ];
    Ok(SectorFamily {
        b,
        grid: grid.clone(),
        terms,
        mass_normal: vec![1.0; gt.unknowns()],
        mass_tangential: vec![1.0; gr.unknowns()],
        scale: b,
    })
}

/// Smallest inner radius used by the polar route.
pub const POLAR_R_FLOOR: f64 = 0.1;
/// Layer widths B^{−1/2} the polar shell must contain.
const POLAR_MIN_WIDTHS: f64 = 8.0;

/// Inner radius of the polar domain, 1 − 20B^{−1/2}, floored at
/// [`POLAR_R_FLOOR`] for small B.
pub fn polar_r_min(b: f64) -> f64 {
    (1.0 - 20.0 / b.sqrt()).max(POLAR_R_FLOOR)
}

/// Polar grid: r ∈ [r_min, 1] (Dirichlet, Neumann), θ ∈ [0, π] (Dirichlet).
pub fn polar_grid(b: f64, r_points: usize, theta_points: usize) -> Result<Grid2D> {
    let r_min = polar_r_min(b);
    if (1.0 - r_min) * b.sqrt() < POLAR_MIN_WIDTHS {
        return Err(Error::Geometry(format!(
            "shell [{r_min}, 1] holds fewer than {POLAR_MIN_WIDTHS} layer widths at B = {b}"
        )));
    }
    Ok(Grid2D {
        normal: Grid1D::new(r_min, 1.0, r_points, Boundary::Dirichlet, Boundary::Neumann)?,
        tangential: Grid1D::new(0.0, PI, theta_points, Boundary::Dirichlet, Boundary::Dirichlet)?,
    })
}

/// H_m(B) in (r, θ): |ψ_r|²r²sinθ + |ψ_θ|²sinθ + (m²/sinθ − Bm r²sinθ + B²r⁴sin³θ/4)|ψ|²,
/// mass r²sinθ.
pub fn hm_polar_family(b: f64, grid: &Grid2D) -> Result<SectorFamily> {
    let (gr, gth) = (&grid.normal, &grid.tangential);
    if gr.lo <= 0.0 || gr.right != Boundary::Neumann || (gr.hi - 1.0).abs() > 1e-14 {
        return Err(Error::Geometry("polar radial grid must be (r_min, 1] with r_min > 0".into()));
    }
    let mass_normal: Vec<f64> = gr.coords().iter().map(|r| r * r).collect();
    let mass_tangential: Vec<f64> = gth.coords().iter().map(|t| t.sin()).collect();
    positive(&mass_tangential, "sin θ")?;
    let terms = vec![
        KronTerm {
            coef: [1.0, 0.0, 0.0],
            normal: Factor::stiffness(gr, |r| r * r),
            tangential: Factor::mass(gth, f64::sin),
        },
        KronTerm {
            coef: [1.0, 0.0, 0.0],
            normal: Factor::mass(gr, |_| 1.0),
            tangential: Factor::stiffness(gth, f64::sin),
        },
        KronTerm {
            coef: [0.0, 0.0, 1.0],
            normal: Factor::mass(gr, |_| 1.0),
            tangential: Factor::mass(gth, |t| 1.0 / t.sin()),
        },
        KronTerm {
            coef: [0.0, -b, 0.0],
            normal: Factor::mass(gr, |r| r * r),
            tangential: Factor::mass(gth, f64::sin),
        },
        KronTerm {
            coef: [b * b / 4.0, 0.0, 0.0],
            normal: Factor::mass(gr, |r| r.powi(4)),
            tangential: Factor::mass(gth, |t| t.sin().powi(3)),
        },
    ];
    Ok(SectorFamily {
        b,
        grid: grid.clone(),
        terms,
        mass_normal,
        mass_tangential,
        scale: 1.0,
    })
}

/// Matrix-free 2-D pencil (A, D) of one sector. `apply` is A; use
/// [`SectorPencil::symmetrized`] for D^{−1/2}AD^{−1/2}.
#[derive(Debug, Clone)]
pub struct SectorPencil {
    nn: usize,
    nt: usize,
    terms: Vec<(f64, (Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))>,
    mass: Vec<f64>,
    pub scale: f64,
}

fn tri_apply(d: &[f64], o: &[f64], x: &[f64], y: &mut [f64]) {
    let n = d.len();
    for i in 0..n {
        let mut s = d[i] * x[i];
        if i > 0 {
            s += o[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            s += o[i] * x[i + 1];
        }
        y[i] = s;
    }
}

impl SectorFamily {
    /// Full 2-D pencil at angular momentum m. Unknowns are ordered with the
    /// normal index fastest.
    pub fn pencil(&self, m: f64) -> Result<SectorPencil> {
        let (gn, gt) = (&self.grid.normal, &self.grid.tangential);
        let terms = self
            .terms
            .iter()
            .map(|t| Ok((t.at(m), t.normal.matrix(gn)?, t.tangential.matrix(gt)?)))
            .collect::<Result<Vec<_>>>()?;
        let wn = gn.weights();
        let wt = gt.weights();
        let mut mass = Vec::with_capacity(self.grid.unknowns());
        for j in 0..gt.unknowns() {
            for i in 0..gn.unknowns() {
                mass.push(wn[i] * self.mass_normal[i] * wt[j] * self.mass_tangential[j]);
            }
        }
        Ok(SectorPencil {
            nn: gn.unknowns(),
            nt: gt.unknowns(),
            terms,
            mass,
            scale: self.scale,
        })
    }

    /// Project every term onto the tensor basis.
    pub fn reduce(&self, basis: &TensorBasis) -> Result<ReducedFamily> {
        let (gn, gt) = (&self.grid.normal, &self.grid.tangential);
        let ident_n = Factor::Mass(self.mass_normal.clone()).matrix(gn)?;
        let ident_t = Factor::Mass(self.mass_tangential.clone()).matrix(gt)?;
        let defect = project(&ident_n, &basis.normal)
            .identity_defect()
            .max(project(&ident_t, &basis.tangential).identity_defect());
        if defect > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "tensor basis is not orthonormal in the sector mass (defect {defect:.2e})"
            )));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                Ok((
                    t.coef,
                    project(&t.normal.matrix(gn)?, &basis.normal),
                    project(&t.tangential.matrix(gt)?, &basis.tangential),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReducedFamily {
            p: basis.normal.len(),
            even: basis.parity.iter().enumerate().filter(|(_, e)| **e).map(|(i, _)| i).collect(),
            odd: basis.parity.iter().enumerate().filter(|(_, e)| !**e).map(|(i, _)| i).collect(),
            terms,
            scale: self.scale,
        })
    }
}

impl SectorPencil {
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn symmetrized(&self) -> Result<MassSymmetrized<'_, SectorPencil>> {
        MassSymmetrized::new(self, &self.mass)
    }
}

impl SparseSymOp for SectorPencil {
    fn dim(&self) -> usize {
        self.nn * self.nt
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nn, nt) = (self.nn, self.nt);
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut tmp = vec![0.0; nn * nt];
        let mut col = vec![0.0; nt];
        let mut col_out = vec![0.0; nt];
        for (c, (xd, xo), (yd, yo)) in &self.terms {
            // normal factor on every row
            for j in 0..nt {
                tri_apply(xd, xo, &x[j * nn..(j + 1) * nn], &mut tmp[j * nn..(j + 1) * nn]);
            }
            // tangential factor on every column
            for i in 0..nn {
                for j in 0..nt {
                    col[j] = tmp[j * nn + i];
                }
                tri_apply(yd, yo, &col, &mut col_out);
                for j in 0..nt {
                    y[j * nn + i] += c * col_out[j];
                }
            }
        }
    }
}

/// Small dense square matrix, row-major.
#[derive(Debug, Clone)]
pub struct Small {
    n: usize,
    data: Vec<f64>,
}

impl Small {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn identity_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let e = if i == j { 1.0 } else { 0.0 };
                d = d.max((self.get(i, j) - e).abs());
            }
        }
        d
    }
}

/// Vᵀ F V for a tridiagonal F.
fn project(f: &(Vec<f64>, Vec<f64>), basis: &[Vec<f64>]) -> Small {
    let n = basis.len();
    let len = f.0.len();
    let mut fv = vec![0.0; len];
    let mut data = vec![0.0; n * n];
    for (b, vb) in basis.iter().enumerate() {
        tri_apply(&f.0, &f.1, vb, &mut fv);
        for (a, va) in basis.iter().enumerate().take(b + 1) {
            let s: f64 = va.iter().zip(&fv).map(|(p, q)| p * q).sum();
            data[a * n + b] = s;
            data[b * n + a] = s;
        }
    }
    Small { n, data }
}

/// Lowest eigenvectors of 1-D reference pencils, orthonormal in the sector
/// mass densities. Tangential vectors carry their parity.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    pub normal: Vec<Vec<f64>>,
    pub tangential: Vec<Vec<f64>>,
    pub parity: Vec<bool>,
}

fn parity_of(v: &[f64]) -> bool {
    let n = v.len();
    let even: f64 = (0..n).map(|i| (v[i] - v[n - 1 - i]).abs()).fold(0.0, f64::max);
    let odd: f64 = (0..n).map(|i| (v[i] + v[n - 1 - i]).abs()).fold(0.0, f64::max);
    even <= odd
}

/// Parameters shaping the reference operators of the bases: the de Gennes
/// shift ξ, the curvature κ and the Montgomery shift ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasisShape {
    pub xi: f64,
    pub kappa: f64,
    pub nu: f64,
}

impl BasisShape {
    pub fn from_coefficients(c: &ExpansionCoefficients) -> Self {
        Self {
            xi: c.m_hat[0],
            kappa: c.kappa,
            nu: c.m_hat[1],
        }
    }
}

/// Modified Gram–Schmidt (two passes) in the diagonal mass `w`; vectors
/// that become dependent are dropped.
pub fn orthonormalize(vecs: Vec<Vec<f64>>, w: &[f64]) -> Vec<Vec<f64>> {
    let ip = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), m)| x * y * m).sum() };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vecs.len());
    for mut v in vecs {
        let n0 = ip(&v, &v).sqrt();
        for _ in 0..2 {
            for u in &out {
                let d = ip(u, &v);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n1 = ip(&v, &v).sqrt();
        if n1 > 1e-7 * n0 {
            v.iter_mut().for_each(|x| *x /= n1);
            out.push(v);
        }
    }
    out
}

/// Shift offsets of the normal fibre basis: `count` values spread over
/// [−1.5, 3].
pub fn normal_shifts(count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![0.0],
        n => (0..n).map(|k| -1.5 + 4.5 * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Sizes of a tensor basis: `modes` fibre eigenvectors at each of `shifts`
/// de Gennes shifts in the normal direction, `tangential` eigenvectors in
/// the tangential direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BasisSize {
    pub shifts: usize,
    pub modes: usize,
    pub tangential: usize,
}

/// Reference bases adapted to a route.
pub fn route_basis(route: Route, family: &SectorFamily, shape: BasisShape, size: BasisSize) -> Result<TensorBasis> {
    let b = family.b;
    let (gn, gt) = (&family.grid.normal, &family.grid.tangential);
    let normal_ref = |xi: f64| -> Result<LineOperator> {
        match route {
            Route::Exact => {
                let sb = b.sqrt();
                let w = move |t: f64| (1.0 - t / sb).powi(2);
                LineOperator::weighted(gn.clone(), w, |t| w(t) * (t + xi).powi(2), w)
            }
            Route::Effective => LineOperator::from_fns(gn.clone(), |_| 1.0, |t| (t + xi).powi(2)),
            Route::Polar => {
                let sb = b.sqrt();
                LineOperator::weighted(gn.clone(), |r| r * r, |r| r * r * b * (sb * (1.0 - r) + xi).powi(2), |r| r * r)
            }
        }
    };
    let tangential = match route {
        Route::Exact => {
            let eb = b.cbrt();
            let c = move |r: f64| (r / eb).cos();
            LineOperator::weighted(gt.clone(), c, |r| c(r) * shape.kappa * (shape.nu + 0.5 * r * r).powi(2), c)?
        }
        Route::Effective => {
            LineOperator::from_fns(gt.clone(), |_| 1.0, |r| shape.kappa * (shape.nu + 0.5 * r * r).powi(2))?
        }
        Route::Polar => {
            let e2 = b.powf(2.0 / 3.0);
            LineOperator::weighted(
                gt.clone(),
                f64::sin,
                |t| t.sin() * e2 * shape.kappa * (shape.nu + 0.5 * e2 * (t - PI / 2.0).powi(2)).powi(2),
                f64::sin,
            )?
        }
    };
    let mut raw = Vec::with_capacity(size.shifts * size.modes);
    for d in normal_shifts(size.shifts) {
        raw.extend(normal_ref(shape.xi + d)?.lowest(size.modes)?.into_iter().map(|(_, v)| v));
    }
    let w: Vec<f64> = gn.weights().iter().zip(&family.mass_normal).map(|(a, b)| a * b).collect();
    let normal = orthonormalize(raw, &w);
    let wt: Vec<f64> = gt.weights().iter().zip(&family.mass_tangential).map(|(a, b)| a * b).collect();
    let tangential = orthonormalize(
        tangential.lowest(size.tangential)?.into_iter().map(|(_, v)| v).collect(),
        &wt,
    );
    let parity = tangential.iter().map(|v| parity_of(v)).collect();
    Ok(TensorBasis {
        normal,
        tangential,
        parity,
    })
}

/// Sector family projected on a tensor basis.
#[derive(Debug, Clone)]
pub struct ReducedFamily {
    p: usize,
    even: Vec<usize>,
    odd: Vec<usize>,
    terms: Vec<([f64; 3], Small, Small)>,
    scale: f64,
}

/// Lowest two reduced eigenvalues of a sector (pencil units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorPair {
    pub mu1: f64,
    pub mu2: f64,
}

impl ReducedFamily {
    pub fn dim(&self) -> usize {
        self.p * (self.even.len() + self.odd.len())
    }

    fn block(&self, m: f64, idx: &[usize]) -> DenseSym {
        let (p, q) = (self.p, idx.len());
        let n = p * q;
        let mut a = DenseSym::zeros(n);
        let mut data = vec![0.0; n * n];
        for (coef, x, y) in &self.terms {
            let c = coef[0] + m * (coef[1] + m * coef[2]);
            if c == 0.0 {
                continue;
            }
            for a1 in 0..p {
                for b1 in 0..q {
                    let row = a1 * q + b1;
                    for a2 in 0..p {
                        let xv = c * x.get(a1, a2);
                        if xv == 0.0 {
                            continue;
                        }
                        let base = row * n + a2 * q;
                        for (b2, j) in idx.iter().enumerate() {
                            data[base + b2] += xv * y.get(idx[b1], *j);
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (data[i * n + j] + data[j * n + i]);
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        a
    }

    /// μ₁ and μ₂ of the reduced pencil at angular momentum m.
    pub fn solve(&self, m: f64) -> Result<SectorPair> {
        let mut values = Vec::with_capacity(3);
        if !self.even.is_empty() {
            let a = self.block(m, &self.even);
            let k = 2.min(a.dim());
            values.extend(dense_lowest(&a, k, 1e-13 * scale_of(&a))?.into_iter().map(|p| p.value));
        }
        if !self.odd.is_empty() {
            let a = self.block(m, &self.odd);
            values.extend(dense_lowest(&a, 1, 1e-13 * scale_of(&a))?.into_iter().map(|p| p.value));
        }
        values.sort_by(|a, b| a.total_cmp(b));
        if values.len() < 2 {
            return Err(Error::InvalidInput("reduced sector needs at least two modes".into()));
        }
        Ok(SectorPair {
            mu1: values[0],
            mu2: values[1],
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

fn scale_of(a: &DenseSym) -> f64 {
    a.data().iter().fold(1.0f64, |s, v| s.max(v.abs()))
}

/// Discretization and basis settings for sector solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Coarsest 1-D spacing; each further level halves it.
    pub spacing: f64,
    pub levels: usize,
    pub basis: BasisSize,
    /// Basis used for the enlargement certificate.
    pub enlarged: BasisSize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            spacing: 0.05,
            levels: 3,
            basis: BasisSize {
                shifts: 5,
                modes: 2,
                tangential: 24,
            },
            enlarged: BasisSize {
                shifts: 7,
                modes: 3,
                tangential: 30,
            },
        }
    }
}

impl SolverConfig {
    pub fn quick() -> Self {
        Self {
            spacing: 0.1,
            levels: 2,
            basis: BasisSize {
                shifts: 5,
                modes: 3,
                tangential: 16,
            },
            enlarged: BasisSize {
                shifts: 7,
                modes: 3,
                tangential: 20,
            },
        }
    }
}

/// One certified sector eigenvalue pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorResult {
    pub b: f64,
    pub m: i64,
    /// Lowest eigenvalue of the sector form (H_m units divided by B).
    pub mu1: f64,
    pub mu2: f64,
    /// Certificate on B·mu1: grid Richardson error plus basis-enlargement change.
    pub cert_error: f64,
    pub converged: bool,
    pub fingerprint: String,
}

/// Reduced exact-route families at every grid level of one field strength.
#[derive(Debug, Clone)]
pub struct SectorSolver {
    pub b: f64,
    pub layer: LayerBox,
    pub config: SolverConfig,
    levels: Vec<(f64, ReducedFamily)>,
    enlarged: ReducedFamily,
    fingerprint: String,
    /// Certificate above which a sector counts as unconverged (H units).
    pub cert_limit: f64,
}

impl SectorSolver {
    pub fn new(b: f64, config: SolverConfig, shape: BasisShape) -> Result<Self> {
        Self::with_box(b, LayerBox::for_field(b), config, shape)
    }

    pub fn with_box(b: f64, layer: LayerBox, config: SolverConfig, shape: BasisShape) -> Result<Self> {
        layer.check(b)?;
        if config.levels == 0 {
            return Err(Error::InvalidInput("at least one grid level".into()));
        }
        let mut levels = Vec::with_capacity(config.levels);
        let mut enlarged = None;
        let mut fingerprint = String::new();
        for l in 0..config.levels {
            let h = config.spacing / f64::powi(2.0, l as i32);
            let grid = Grid2D::layer(layer, h)?;
            let fam = qm_exact_family(b, &grid)?;
            let basis = route_basis(Route::Exact, &fam, shape, config.basis)?;
            levels.push((grid.normal.h(), fam.reduce(&basis)?));
            if l + 1 == config.levels {
                let big = route_basis(Route::Exact, &fam, shape, config.enlarged)?;
                enlarged = Some(fam.reduce(&big)?);
                fingerprint = format!(
                    "{}|S{}K{}Q{}L{}",
                    grid.fingerprint(),
                    config.basis.shifts,
                    config.basis.modes,
                    config.basis.tangential,
                    config.levels
                );
            }
        }
        Ok(Self {
            b,
            layer,
            config,
            levels,
            enlarged: enlarged.expect("at least one level"),
            fingerprint,
            cert_limit: 1e-2,
        })
    }

    /// Certified eigenvalue pair of sector m.
    pub fn solve(&self, m: i64) -> Result<SectorResult> {
        let mf = m as f64;
        let pairs = self
            .levels
            .iter()
            .map(|(h, fam)| fam.solve(mf).map(|p| (*h, p)))
            .collect::<Result<Vec<_>>>()?;
        let finest = pairs.last().expect("levels").1;
        let big = self.enlarged.solve(mf)?;
        let (mu1, mu2, grid_err) = if pairs.len() >= 2 {
            let s1: Vec<(f64, f64)> = pairs.iter().map(|(h, p)| (*h, p.mu1)).collect();
            let s2: Vec<(f64, f64)> = pairs.iter().map(|(h, p)| (*h, p.mu2)).collect();
            let (v1, e1) = richardson_with_error(&s1, 2)?;
            let (v2, _) = richardson_with_error(&s2, 2)?;
            (v1, v2, e1)
        } else {
            (finest.mu1, finest.mu2, f64::NAN)
        };
        let basis_err = (finest.mu1 - big.mu1).abs();
        let cert_error = self.b * (grid_err + basis_err);
        Ok(SectorResult {
            b: self.b,
            m,
            mu1,
            mu2,
            cert_error,
            converged: cert_error.is_finite() && cert_error <= self.cert_limit && mu1 <= mu2,
            fingerprint: self.fingerprint.clone(),
        })
    }
}

/// mom₃(m, B) = m − B/2 − m̂₀√B − m̂₁B^{1/3} − m̂₂B^{1/6}.
pub fn mom3(m: f64, b: f64, m_hat: &[f64; 4]) -> f64 {
    m - b / 2.0 - m_hat[0] * b.sqrt() - m_hat[1] * b.cbrt() - m_hat[2] * b.powf(1.0 / 6.0)
}

/// Real-valued optimal sector B/2 + m̂₀√B + m̂₁B^{1/3} + m̂₂B^{1/6} + m̂₃.
fn optimal_sector(b: f64, m_hat: &[f64; 4]) -> f64 {
    m_hat[3] - mom3(0.0, b, m_hat)
}

/// Predicted minimizing sector m_c, the nearest integer to the optimal one.
pub fn predicted_sector(b: f64, m_hat: &[f64; 4]) -> i64 {
    optimal_sector(b, m_hat).round() as i64
}

/// Δ_B = inf over integers m of |mom₃(m, B) − m̂₃|.
pub fn delta_b(b: f64, m_hat: &[f64; 4]) -> f64 {
    let target = optimal_sector(b, m_hat);
    let m0 = target.round();
    [m0 - 1.0, m0, m0 + 1.0]
        .iter()
        .map(|m| (m - target).abs())
        .fold(f64::INFINITY, f64::min)
}

/// B·Σ_{j≤order} λ_j B^{−j/6}, order ≤ 5.
pub fn series_partial(b: f64, c: &ExpansionCoefficients, order: usize) -> f64 {
    let eps = b.powf(-1.0 / 6.0);
    b * (0..=order.min(5)).map(|j| c.lambda[j] * eps.powi(j as i32)).sum::<f64>()
}

/// B·Σ_{j≤5} λ_j B^{−j/6} + q·Δ_B² + Ĉ with the quadratic coefficient q of
/// λ₆ taken from the expansion.
pub fn asymptotic_eval(b: f64, c: &ExpansionCoefficients) -> f64 {
    asymptotic_eval_with(b, c, c.lambda6.coefficient)
}

/// As [`asymptotic_eval`] with an explicit quadratic coefficient.
pub fn asymptotic_eval_with(b: f64, c: &ExpansionCoefficients, quadratic: f64) -> f64 {
    let d = delta_b(b, &c.m_hat);
    series_partial(b, c, 5) + quadratic * d * d + c.c_hat
}

/// Result of an angular-momentum sweep at one field strength.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub b: f64,
    /// B · min over swept m of mu1.
    pub mu1_global: f64,
    pub m_star: i64,
    pub m_predicted: i64,
    pub sectors: Vec<SectorResult>,
    pub delta_b: f64,
    pub asymptotic_value: f64,
    pub residual: f64,
    /// Largest sector certificate in the window (H units).
    pub cert_error: f64,
    /// Edge sectors exceed the interior minimum by at least twice the certificate.
    pub edge_margin_ok: bool,
    /// m ↦ mu1 decreases then increases across the window.
    pub unimodal: bool,
}

fn solve_window(solver: &SectorSolver, lo: i64, hi: i64) -> Result<Vec<SectorResult>> {
    (lo..=hi).into_par_iter().map(|m| solver.solve(m)).collect()
}

fn argmin(sectors: &[SectorResult]) -> usize {
    sectors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mu1.total_cmp(&b.1.mu1))
        .map(|(i, _)| i)
        .expect("non-empty window")
}

/// Sweep sectors m_c − W … m_c + W; if the minimizer sits at an edge the
/// window is recentred once.
pub fn sweep_m(solver: &SectorSolver, half_width: i64, c: &ExpansionCoefficients) -> Result<SweepResult> {
    if half_width < 1 {
        return Err(Error::InvalidInput("window half-width must be positive".into()));
    }
    let b = solver.b;
    let mc = predicted_sector(b, &c.m_hat);
    let (mut lo, mut hi) = (mc - half_width, mc + half_width);
    let mut sectors = solve_window(solver, lo, hi)?;
    let mut k = argmin(&sectors);
    if k == 0 || k + 1 == sectors.len() {
        let centre = sectors[k].m;
        lo = centre - half_width;
        hi = centre + half_width;
        sectors = solve_window(solver, lo, hi)?;
        k = argmin(&sectors);
        if k == 0 || k + 1 == sectors.len() {
            return Err(Error::WindowEdge {
                lo,
                hi,
                m: sectors[k].m,
            });
        }
    }
    let best = &sectors[k];
    let cert_error = sectors.iter().map(|s| s.cert_error).fold(0.0, f64::max);
    let edge_gap = sectors[0].mu1.min(sectors[sectors.len() - 1].mu1) - best.mu1;
    let unimodal = sectors[..=k].windows(2).all(|w| w[1].mu1 <= w[0].mu1)
        && sectors[k..].windows(2).all(|w| w[1].mu1 >= w[0].mu1);
    let mu1_global = b * best.mu1;
    let asymptotic_value = asymptotic_eval(b, c);
    Ok(SweepResult {
        b,
        mu1_global,
        m_star: best.m,
        m_predicted: mc,
        delta_b: delta_b(b, &c.m_hat),
        asymptotic_value,
        residual: mu1_global - asymptotic_value,
        cert_error,
        edge_margin_ok: b * edge_gap >= 2.0 * cert_error,
        unimodal,
        sectors,
    })
}

/// Build the exact-route solver at B and sweep the sectors around m_c.
pub fn sweep_at(b: f64, config: SolverConfig, half_width: i64, c: &ExpansionCoefficients) -> Result<SweepResult> {
    let solver = SectorSolver::new(b, config, BasisShape::from_coefficients(c))?;
    sweep_m(&solver, half_width, c)
}

/// CSV table of a sweep: B, m, mu1, mu2, cert_error.
pub fn sweep_csv(s: &SweepResult) -> String {
    let mut out = String::from("B,m,mu1,mu2,cert_error\n");
    for r in &s.sectors {
        out.push_str(&format!("{},{},{:.15e},{:.15e},{:.3e}\n", r.b, r.m, r.mu1, r.mu2, r.cert_error));
    }
    out
}

/// JSON summary fields of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub b: f64,
    pub mu1_global: f64,
    pub m_star: i64,
    pub delta_b: f64,
    pub asymptotic_value: f64,
    pub residual: f64,
}

impl From<&SweepResult> for SweepSummary {
    fn from(s: &SweepResult) -> Self {
        Self {
            b: s.b,
            mu1_global: s.mu1_global,
            m_star: s.m_star,
            delta_b: s.delta_b,
            asymptotic_value: s.asymptotic_value,
            residual: s.residual,
        }
    }
}

/// One row of the series comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub b: f64,
    pub mu1_global: f64,
    pub asymptotic_value: f64,
    pub residual: f64,
    pub scaled_residual: f64,
    pub cert_error: f64,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    /// Log-log slope of |r(B)| over the conclusive rows, when at least two exist.
    pub slope: Option<f64>,
}

/// r(B) = μ₁(H(B)) − asymptotic_eval(B) for each sweep.
pub fn compare_series(sweeps: &[SweepResult], c: &ExpansionCoefficients) -> CompareTable {
    let rows: Vec<CompareRow> = sweeps
        .iter()
        .map(|s| {
            let a = asymptotic_eval(s.b, c);
            let r = s.mu1_global - a;
            CompareRow {
                b: s.b,
                mu1_global: s.mu1_global,
                asymptotic_value: a,
                residual: r,
                scaled_residual: r * s.b.powf(1.0 / 6.0),
                cert_error: s.cert_error,
                inconclusive: !(s.cert_error < r.abs()),
            }
        })
        .collect();
    let good: Vec<&CompareRow> = rows.iter().filter(|r| !r.inconclusive && r.residual != 0.0).collect();
    let slope = (good.len() >= 2)
        .then(|| {
            loglog_slope(
                &good.iter().map(|r| r.b).collect::<Vec<_>>(),
                &good.iter().map(|r| r.residual.abs()).collect::<Vec<_>>(),
            )
            .ok()
        })
        .flatten();
    CompareTable { rows, slope }
}

/// Sector gap at the minimizing sector.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub b: f64,
    pub m: i64,
    pub mu1: f64,
    pub mu2: f64,
    /// (μ₂ − μ₁)·B^{1/3}
    pub scaled_gap: f64,
    pub cert_error: f64,
}

pub fn spectral_gap_row(s: &SweepResult) -> GapRow {
    let best = s.sectors.iter().find(|r| r.m == s.m_star).expect("m_star is in the window");
    GapRow {
        b: s.b,
        m: best.m,
        mu1: best.mu1,
        mu2: best.mu2,
        scaled_gap: (best.mu2 - best.mu1) * s.b.cbrt(),
        cert_error: best.cert_error,
    }
}

/// Gap rows for a set of sweeps.
pub fn spectral_gap_check(sweeps: &[SweepResult]) -> Vec<GapRow> {
    sweeps.iter().map(spectral_gap_row).collect()
}

/// Spectral gaps (λ₂ − λ₁) of the de Gennes operator at ξ and of the scaled
/// Montgomery operator −d² + κ(ν + ρ²/2)².
pub fn model_gaps(shape: BasisShape) -> Result<(f64, f64)> {
    let g = Grid1D::half_line(12.0, 2401)?;
    let (a1, a2) = crate::degennes::eig2_de_gennes(shape.xi, &g)?;
    let r = Grid1D::symmetric(8.0, 1601)?;
    let p = crate::montgomery::ScaledMontgomeryParams {
        k: shape.kappa,
        nu: shape.nu,
    };
    let (b1, b2) = crate::montgomery::scaled_eig2(p, &r)?;
    Ok((a2 - a1, b2 - b1))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Finite-B property checks over a set of sweeps.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteBChecks {
    /// max |μ₁ − B·Σ_{j≤3}λ_jB^{−j/6}| / B^{1/3}
    pub max_scaled_r3: f64,
    /// 3|λ₄|
    pub r3_bound: f64,
    pub median_abs_r3: f64,
    /// Median |μ₁ − B·Σ_{j≤5}λ_jB^{−j/6}|.
    pub median_abs_r5: f64,
    /// Largest |m* − m_c|.
    pub max_sector_offset: i64,
    pub min_scaled_gap: f64,
    /// min(γ_G, γ_M̃)
    pub model_gap: f64,
    pub max_cert_error: f64,
}

impl FiniteBChecks {
    pub fn residual_bounded(&self) -> bool {
        self.max_scaled_r3 <= self.r3_bound
    }

    pub fn higher_terms_help(&self) -> bool {
        self.median_abs_r5 < self.median_abs_r3
    }

    pub fn sectors_predicted(&self) -> bool {
        self.max_sector_offset <= 1
    }

    pub fn gap_bounded(&self) -> bool {
        self.min_scaled_gap >= 0.5 * self.model_gap
    }
}

pub fn finite_b_checks(sweeps: &[SweepResult], c: &ExpansionCoefficients, model_gap: f64) -> FiniteBChecks {
    let r3: Vec<f64> = sweeps.iter().map(|s| (s.mu1_global - series_partial(s.b, c, 3)).abs()).collect();
    let r5: Vec<f64> = sweeps.iter().map(|s| (s.mu1_global - series_partial(s.b, c, 5)).abs()).collect();
    FiniteBChecks {
        max_scaled_r3: sweeps.iter().zip(&r3).map(|(s, r)| r / s.b.cbrt()).fold(0.0, f64::max),
        r3_bound: 3.0 * c.lambda[4].abs(),
        median_abs_r3: median(r3),
        median_abs_r5: median(r5),
        max_sector_offset: sweeps.iter().map(|s| (s.m_star - s.m_predicted).abs()).max().unwrap_or(i64::MAX),
        min_scaled_gap: spectral_gap_check(sweeps)
            .iter()
            .map(|g| g.scaled_gap)
            .fold(f64::INFINITY, f64::min),
        model_gap,
        max_cert_error: sweeps.iter().map(|s| s.cert_error).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{lanczos_lowest, symmetry_probe};

    const XI0: f64 = -0.768_183_653_14;
    const SHAPE: BasisShape = BasisShape {
        xi: XI0,
        kappa: 0.585_512_900_29,
        nu: -0.2,
    };

    #[test]
    fn layer_box_respects_coordinate_limits() {
        for b in [50.0, 300.0, 1e3, 1e4, 1e6] {
            LayerBox::for_field(b).check(b).unwrap();
        }
        assert!(matches!(
            LayerBox {
                tau_length: 10.0,
                rho_half_width: 10.0
            }
            .check(300.0),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn pencils_are_symmetric() {
        let b = 400.0;
        let bx = LayerBox::for_field(b);
        let grid = Grid2D::layer(bx, 0.4).unwrap();
        for fam in [qm_exact_family(b, &grid).unwrap(), qm_effective_family(b, &grid).unwrap()] {
            let p = fam.pencil(207.0).unwrap();
            assert!(symmetry_probe(&p, 4, 1) < 1e-12);
            assert!(symmetry_probe(&p.symmetrized().unwrap(), 4, 2) < 1e-12);
        }
        let pg = polar_grid(b, 21, 41).unwrap();
        let p = hm_polar_family(b, &pg).unwrap().pencil(207.0).unwrap();
        assert!(symmetry_probe(&p.symmetrized().unwrap(), 4, 3) < 1e-12);
    }

    #[test]
    fn polar_matches_exact_route() {
        let b = 200.0;
        let m = 87;
        let exact = SectorSolver::new(b, SolverConfig::default(), SHAPE).unwrap().solve(m).unwrap();
        let grid = polar_grid(b, 4001, 8001).unwrap();
        let fam = hm_polar_family(b, &grid).unwrap();
        let size = BasisSize {
            shifts: 7,
            modes: 3,
            tangential: 30,
        };
        let basis = route_basis(Route::Polar, &fam, SHAPE, size).unwrap();
        let polar = fam.reduce(&basis).unwrap().solve(m as f64).unwrap().mu1;
        assert!((polar - b * exact.mu1).abs() < 1e-4 * polar, "{polar} vs {}", b * exact.mu1);
    }

    #[test]
    fn polar_shell_must_hold_the_layer() {
        assert!(matches!(polar_grid(50.0, 101, 101), Err(Error::Geometry(_))));
        assert!(polar_grid(200.0, 101, 101).is_ok());
        assert!((polar_r_min(1e4) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn field_free_polar_sector_is_positive() {
        let grid = Grid2D {
            normal: Grid1D::new(0.5, 1.0, 41, Boundary::Dirichlet, Boundary::Neumann).unwrap(),
            tangential: Grid1D::new(0.0, PI, 61, Boundary::Dirichlet, Boundary::Dirichlet).unwrap(),
        };
        let fam = hm_polar_family(0.0, &grid).unwrap();
        let p = fam.pencil(0.0).unwrap();
        let sym = p.symmetrized().unwrap();
        assert!(symmetry_probe(&sym, 4, 9) < 1e-12);
        let mu = lanczos_lowest(&sym, 1, 1e-9, 3000).unwrap()[0].value;
        assert!(mu > 0.0);
    }

    #[test]
    fn delta_b_is_a_nearest_integer_distance() {
        let m_hat = [-0.768, -0.414, -0.073, 0.355];
        for b in [300.0, 1234.5, 1e4, 3e4] {
            let d = delta_b(b, &m_hat);
            assert!((0.0..=0.5).contains(&d));
            let mc = predicted_sector(b, &m_hat) as f64;
            assert!(((mom3(mc, b, &m_hat) - m_hat[3]).abs() - d).abs() < 1e-9);
        }
        // integer hit
        let b: f64 = 1e4;
        let mut hit = m_hat;
        hit[3] -= optimal_sector(b, &m_hat).fract();
        assert!(delta_b(b, &hit) < 1e-9);
    }

    #[test]
    fn galerkin_bounds_full_grid_from_above() {
        let b = 400.0;
        let grid = Grid2D::layer(LayerBox::for_field(b), 0.25).unwrap();
        let fam = qm_exact_family(b, &grid).unwrap();
        let m = (b / 2.0 + XI0 * b.sqrt()).round();
        let full = fam.pencil(m).unwrap();
        let sym = full.symmetrized().unwrap();
        let exact = lanczos_lowest(&sym, 1, 1e-11, 3000).unwrap()[0].value;
        let mut prev = f64::INFINITY;
        for (shifts, modes, tangential) in [(2, 2, 6), (4, 3, 12), (7, 3, 24)] {
            let size = BasisSize { shifts, modes, tangential };
            let basis = route_basis(Route::Exact, &fam, SHAPE, size).unwrap();
            let mu = fam.reduce(&basis).unwrap().solve(m).unwrap().mu1;
            assert!(mu >= exact - 1e-10, "{mu} < {exact}");
            assert!(mu <= prev + 1e-12);
            prev = mu;
        }
        assert!((prev - exact).abs() < 1e-6, "{prev} vs {exact}");
    }

    #[test]
    fn constant_measure_factor_leaves_spectrum() {
        let b = 400.0;
        let grid = Grid2D::layer(LayerBox::for_field(b), 0.2).unwrap();
        let fam = qm_exact_family(b, &grid).unwrap();
        let mut scaled = fam.clone();
        let f = b.powf(-5.0 / 12.0);
        scaled.terms.iter_mut().for_each(|t| t.coef.iter_mut().for_each(|c| *c *= f));
        scaled.mass_normal.iter_mut().for_each(|v| *v *= f);
        let size = BasisSize {
            shifts: 3,
            modes: 3,
            tangential: 10,
        };
        let basis = route_basis(Route::Exact, &fam, SHAPE, size).unwrap();
        let mu = fam.reduce(&basis).unwrap().solve(207.0).unwrap().mu1;
        let sb: Vec<Vec<f64>> = basis.normal.iter().map(|v| v.iter().map(|x| x / f.sqrt()).collect()).collect();
        let basis_s = TensorBasis {
            normal: sb,
            ..basis.clone()
        };
        let mu_s = scaled.reduce(&basis_s).unwrap().solve(207.0).unwrap().mu1;
        assert!((mu - mu_s).abs() < 1e-12 * mu.abs());
    }

    #[test]
    fn frozen_tangential_reduces_to_de_gennes() {
        // one tangential unknown at ρ = 0, m = B/2 + ξ₀√B
        let b: f64 = 1e6;
        let grid = Grid2D {
            normal: Grid1D::half_line(10.0, 2001).unwrap(),
            tangential: Grid1D::symmetric(1.0, 3).unwrap(),
        };
        let mut fam = qm_effective_family(b, &grid).unwrap();
        // drop the tangential kinetic term so only ρ = 0 remains
        fam.terms.remove(1);
        let m = b / 2.0 + XI0 * b.sqrt();
        let p = fam.pencil(m).unwrap();
        let sym = p.symmetrized().unwrap();
        let mu = lanczos_lowest(&sym, 1, 1e-9, 4000).unwrap()[0].value;
        assert!((mu - crate::reference::THETA0).abs() < 1e-4, "{mu}");
    }
}
