//! The Montgomery model M(ν) = −d²/dρ² + (ν+ρ²)² on the line and its scaled
//! variant −d²/dρ² + k(ν+ρ²/2)².

use crate::degennes::{moment_identity_defect, DeGennesConstants, Estimate, GridStudy, MomentBoundary};
use crate::error::{Error, Result};
use crate::numkit::{
    richardson_with_error, try_find_root, try_minimize_scalar, BorderedResolvent, Grid1D,
    GroundState1D, LineOperator,
};
use serde::{Deserialize, Serialize};

/// Half-width of the truncated line.
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;

/// Study on [−8, 8] with h = 0.01, 0.005, 0.0025.
pub fn default_study() -> GridStudy {
    GridStudy {
        length: DEFAULT_HALF_WIDTH,
        points: 1601,
        levels: 3,
    }
}

fn study_grids(study: GridStudy) -> Result<Vec<Grid1D>> {
    let mut g = Grid1D::symmetric(study.length, study.points)?;
    let mut out = Vec::new();
    for _ in 0..study.levels {
        out.push(g.clone());
        g = g.refined();
    }
    Ok(out)
}

/// Quartic strength and offset of −d² + k(ν+ρ²/2)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledMontgomeryParams {
    pub k: f64,
    pub nu: f64,
}

fn check_tail(grid: &Grid1D, edge_potential: f64, eigenvalue: f64) -> Result<()> {
    if edge_potential < eigenvalue + 25.0 {
        return Err(Error::TailClip(format!(
            "edge potential {edge_potential:.2} on [{}, {}]",
            grid.lo, grid.hi
        )));
    }
    Ok(())
}

pub fn montgomery_operator(nu: f64, grid: &Grid1D) -> Result<LineOperator> {
    LineOperator::from_fns(grid.clone(), |_| 1.0, |r| (nu + r * r).powi(2))
}

pub fn scaled_operator(p: ScaledMontgomeryParams, grid: &Grid1D) -> Result<LineOperator> {
    if !(p.k > 0.0) {
        return Err(Error::InvalidInput(format!("quartic strength k = {}", p.k)));
    }
    LineOperator::from_fns(grid.clone(), |_| 1.0, |r| p.k * (p.nu + 0.5 * r * r).powi(2))
}

fn ground(op: &LineOperator, param: f64, grid: &Grid1D) -> Result<GroundState1D> {
    let (eigenvalue, vector) = op.lowest(1)?.remove(0);
    let mid = vector.len() / 2;
    Ok(GroundState1D {
        param,
        eigenvalue,
        boundary_value: vector[mid],
        vector,
        grid: grid.clone(),
    })
}

/// Lowest eigenpair of M(ν); φ > 0, `boundary_value` holds φ(0).
pub fn eig1_montgomery(nu: f64, grid: &Grid1D) -> Result<GroundState1D> {
    let s = ground(&montgomery_operator(nu, grid)?, nu, grid)?;
    check_tail(grid, (nu + grid.hi * grid.hi).powi(2), s.eigenvalue)?;
    Ok(s)
}

/// Lowest eigenpair of the scaled operator.
pub fn scaled_ground(p: ScaledMontgomeryParams, grid: &Grid1D) -> Result<GroundState1D> {
    let s = ground(&scaled_operator(p, grid)?, p.nu, grid)?;
    check_tail(grid, p.k * (p.nu + 0.5 * grid.hi * grid.hi).powi(2), s.eigenvalue)?;
    Ok(s)
}

/// Lowest eigenvalue of the scaled operator on `grid`.
pub fn scaled_eig1(p: ScaledMontgomeryParams, grid: &Grid1D) -> Result<f64> {
    Ok(scaled_ground(p, grid)?.eigenvalue)
}

/// Two lowest eigenvalues of the scaled operator.
pub fn scaled_eig2(p: ScaledMontgomeryParams, grid: &Grid1D) -> Result<(f64, f64)> {
    let pairs = scaled_operator(p, grid)?.lowest(2)?;
    Ok((pairs[0].0, pairs[1].0))
}

/// Grid-extrapolated lowest eigenvalue of the scaled operator.
pub fn scaled_eig1_extrapolated(p: ScaledMontgomeryParams, study: GridStudy) -> Result<Estimate> {
    let samples = study_grids(study)?
        .iter()
        .map(|g| Ok((g.h(), scaled_eig1(p, g)?)))
        .collect::<Result<Vec<_>>>()?;
    let (value, uncertainty) = richardson_with_error(&samples, 2)?;
    Ok(Estimate { value, uncertainty })
}

/// Grid-extrapolated λ₁(M(ν)).
pub fn eig1_montgomery_extrapolated(nu: f64, study: GridStudy) -> Result<Estimate> {
    let samples = study_grids(study)?
        .iter()
        .map(|g| Ok((g.h(), eig1_montgomery(nu, g)?.eigenvalue)))
        .collect::<Result<Vec<_>>>()?;
    let (value, uncertainty) = richardson_with_error(&samples, 2)?;
    Ok(Estimate { value, uncertainty })
}

/// λ′ for a ground state of −d² + k(ν + cρ²)²: ∫ 2k(ν + cρ²)φ².
fn fh(state: &GroundState1D, k: f64, c: f64) -> f64 {
    let xs = state.grid.coords();
    xs.iter()
        .zip(state.grid.weights())
        .zip(&state.vector)
        .map(|((r, w), u)| 2.0 * k * w * (state.param + c * r * r) * u * u)
        .sum()
}

/// Discrete minimizer ν̂ of λ₁(M(ν)) on one grid: (ν̂, ν̂₀, λ″(ν̂)).
pub fn nuhat_on_grid(grid: &Grid1D, tol: f64) -> Result<(f64, f64, f64)> {
    let rough = try_minimize_scalar(|nu| Ok(eig1_montgomery(nu, grid)?.eigenvalue), (-3.0, 0.0), 1e-6)?;
    let nu = try_find_root(
        |nu| Ok(fh(&eig1_montgomery(nu, grid)?, 1.0, 1.0)),
        (rough.arg - 1e-3, rough.arg + 1e-3),
        tol,
    )?;
    let l0 = eig1_montgomery(nu, grid)?.eigenvalue;
    let mut curv = Vec::new();
    for s in [1e-2, 5e-3, 2.5e-3] {
        let lp = eig1_montgomery(nu + s, grid)?.eigenvalue;
        let lm = eig1_montgomery(nu - s, grid)?.eigenvalue;
        curv.push((s, (lp - 2.0 * l0 + lm) / (s * s)));
    }
    let second = richardson_with_error(&curv, 2)?.0;
    Ok((nu, l0, second))
}

/// ν̂ and ν̂₀ = λ₁(M(ν̂)), extrapolated; also λ″(ν̂).
pub fn find_nuhat(tol: f64, study: GridStudy) -> Result<(Estimate, Estimate, Estimate)> {
    if !(tol >= 1e-9) {
        return Err(Error::InvalidInput("find_nuhat needs tol ≥ 1e-9".into()));
    }
    let per = study_grids(study)?
        .iter()
        .map(|g| Ok((g.h(), nuhat_on_grid(g, 1e-3 * tol)?)))
        .collect::<Result<Vec<_>>>()?;
    let ex = |f: &dyn Fn(&(f64, f64, f64)) -> f64| -> Result<Estimate> {
        let s: Vec<(f64, f64)> = per.iter().map(|(h, t)| (*h, f(t))).collect();
        let (value, uncertainty) = richardson_with_error(&s, 2)?;
        Ok(Estimate { value, uncertainty })
    };
    Ok((ex(&|t| t.0)?, ex(&|t| t.1)?, ex(&|t| t.2)?))
}

/// γ̂₀ = 2^{−2/3} δ₀^{1/3} ν̂₀.
pub fn gamma0_hat(delta0: f64, nu0_hat: f64) -> f64 {
    2f64.powf(-2.0 / 3.0) * delta0.cbrt() * nu0_hat
}

/// Ground state, operator and regularized resolvent of the scaled operator
/// on one grid.
#[derive(Debug, Clone)]
pub struct ScaledOnGrid {
    pub params: ScaledMontgomeryParams,
    pub state: GroundState1D,
    pub op: LineOperator,
    pub resolvent: BorderedResolvent,
}

impl ScaledOnGrid {
    pub fn at(p: ScaledMontgomeryParams, grid: &Grid1D) -> Result<Self> {
        let state = scaled_ground(p, grid)?;
        let op = scaled_operator(p, grid)?;
        let resolvent = BorderedResolvent::new(&op, state.eigenvalue, &state.vector)?;
        Ok(Self {
            params: p,
            state,
            op,
            resolvent,
        })
    }

    /// The discrete minimizer over ν at fixed k.
    pub fn minimize(k: f64, grid: &Grid1D, tol: f64) -> Result<Self> {
        let f = |nu: f64| Ok(scaled_eig1(ScaledMontgomeryParams { k, nu }, grid)?);
        let rough = try_minimize_scalar(f, (-3.0, 0.0), 1e-6)?;
        let nu = try_find_root(
            |nu| Ok(fh(&scaled_ground(ScaledMontgomeryParams { k, nu }, grid)?, k, 0.5)),
            (rough.arg - 1e-3, rough.arg + 1e-3),
            tol,
        )?;
        Self::at(ScaledMontgomeryParams { k, nu }, grid)
    }

    pub fn reg_resolvent(&self, g: &[f64]) -> Vec<f64> {
        self.resolvent.apply(g)
    }

    /// M^l_{j,k} = ∫ (ν + ρ²/2)^l φ_j φ_k.
    pub fn moment(&self, l: i32, a: &[f64], b: &[f64]) -> f64 {
        m_moment(l, self.params.nu, &self.state.grid, a, b)
    }
}

/// ∫ (m + ρ²/2)^l a b on `grid`.
pub fn m_moment(l: i32, m: f64, grid: &Grid1D, a: &[f64], b: &[f64]) -> f64 {
    grid.coords()
        .iter()
        .zip(grid.weights())
        .zip(a.iter().zip(b))
        .map(|((r, w), (x, y))| w * (m + 0.5 * r * r).powi(l) * x * y)
        .sum()
}

/// M^l_{j,k} from a list of functions φ₀, φ₁, … on a common grid.
pub fn m_moment_indexed(l: i32, j: usize, k: usize, phis: &[Vec<f64>], m: f64, grid: &Grid1D) -> Result<f64> {
    let a = phis
        .get(j)
        .ok_or_else(|| Error::InvalidInput(format!("φ_{j} not supplied ({} given)", phis.len())))?;
    let b = phis
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("φ_{k} not supplied ({} given)", phis.len())))?;
    Ok(m_moment(l, m, grid, a, b))
}

/// Printed closed form of M²₀,₀.
pub fn m2_closed_form(delta0: f64, nu0_hat: f64) -> f64 {
    nu0_hat / (3.0 * (2.0 * delta0).powf(2.0 / 3.0))
}

/// Printed closed form of M³₀,₀.
pub fn m3_closed_form_printed(delta0: f64, nu0_hat: f64, m_tilde: f64) -> f64 {
    1.0 / (6.0 * delta0) - m_tilde * nu0_hat / (3.0 * (2.0 * delta0).powf(2.0 / 3.0))
}

/// M³₀,₀ from the moment lemma with b = ρ³ and potential δ₀(m̃+ρ²/2)².
pub fn m3_closed_form(delta0: f64, gamma0: f64, m_tilde: f64) -> f64 {
    3.0 / (20.0 * delta0) - 2.0 * m_tilde * gamma0 / (15.0 * delta0)
}

/// Montgomery constants and the ground-state moments of the scaled model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MontgomeryConstants {
    pub nu_hat: f64,
    pub nu0_hat: f64,
    pub second_derivative: f64,
    pub m_tilde: f64,
    pub gamma0_hat: f64,
    /// M^l_{0,0}, l = 0..=3, at k = δ₀, ν = m̃.
    pub moments: [f64; 4],
    /// Moment-lemma residuals for b = ρ and b = ρ³.
    pub identity_residuals: [f64; 2],
    /// γ̂₀ by direct minimization of the scaled model.
    pub gamma0_direct: f64,
    pub uncertainty: MontgomeryUncertainty,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MontgomeryUncertainty {
    pub nu_hat: f64,
    pub nu0_hat: f64,
    pub second_derivative: f64,
    pub moments: [f64; 4],
}

impl MontgomeryConstants {
    pub fn compute(dg: &DeGennesConstants, study: GridStudy) -> Result<Self> {
        let (nu_hat, nu0_hat, second) = find_nuhat(1e-9, study)?;
        let delta0 = dg.delta0;
        let m_tilde = (2.0 * delta0).powf(-1.0 / 3.0) * nu_hat.value;
        let gamma0 = gamma0_hat(delta0, nu0_hat.value);
        let p = ScaledMontgomeryParams {
            k: delta0,
            nu: m_tilde,
        };
        let mut mom_samples = vec![Vec::new(); 4];
        let mut res_samples = vec![Vec::new(); 2];
        let mut direct = Vec::new();
        for g in study_grids(study)? {
            let s = ScaledOnGrid::at(p, &g)?;
            let phi = &s.state.vector;
            for (l, bucket) in mom_samples.iter_mut().enumerate() {
                bucket.push((g.h(), s.moment(l as i32, phi, phi)));
            }
            let pot = move |r: f64| delta0 * (m_tilde + 0.5 * r * r).powi(2);
            let dpot = move |r: f64| 2.0 * delta0 * (m_tilde + 0.5 * r * r) * r;
            for (i, b) in [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]].iter().enumerate() {
                let r = moment_identity_defect(b, &pot, &dpot, s.state.eigenvalue, phi, &g, MomentBoundary::FullLine);
                res_samples[i].push((g.h(), r));
            }
            direct.push((g.h(), ScaledOnGrid::minimize(delta0, &g, 1e-13)?.state.eigenvalue));
        }
        let ex = |s: &[(f64, f64)]| richardson_with_error(s, 2);
        let mut moments = [0.0; 4];
        let mut mom_err = [0.0; 4];
        for l in 0..4 {
            let (v, e) = ex(&mom_samples[l])?;
            moments[l] = v;
            mom_err[l] = e;
        }
        Ok(Self {
            nu_hat: nu_hat.value,
            nu0_hat: nu0_hat.value,
            second_derivative: second.value,
            m_tilde,
            gamma0_hat: gamma0,
            moments,
            identity_residuals: [ex(&res_samples[0])?.0.abs(), ex(&res_samples[1])?.0.abs()],
            gamma0_direct: ex(&direct)?.0,
            uncertainty: MontgomeryUncertainty {
                nu_hat: nu_hat.uncertainty,
                nu0_hat: nu0_hat.uncertainty,
                second_derivative: second.uncertainty,
                moments: mom_err,
            },
        })
    }
}
