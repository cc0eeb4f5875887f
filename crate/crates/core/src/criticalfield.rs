//! The third critical field σ(κ), defined by μ₁(H(κσ)) = κ², and the
//! monotonicity diagnostics of B ↦ μ₁(H(B)).

use crate::ballsolver::{delta_b, series_partial, sweep_at, SolverConfig, WINDOW};
use crate::error::{Error, Result};
use crate::grusin::ExpansionCoefficients;
use crate::numkit::try_find_root_with;
use serde::Serialize;

/// Six-term expansion of σ(κ), obtained by inverting the eigenvalue series.
/// Δ is evaluated at B = κ·(κ/Θ₀ − γ̂₀κ^{1/3}/Θ₀^{5/3}).
pub fn hc3_expansion(kappa: f64, c: &ExpansionCoefficients) -> f64 {
    hc3_terms(kappa, c, Variant::Inverted)
}

/// The six-term formula in its printed form: 2γ̂₀ instead of 2γ̂₀² in the
/// κ^{−1/3} coefficient and Δ² + Ĉ instead of the quadratic λ₆.
pub fn hc3_expansion_printed(kappa: f64, c: &ExpansionCoefficients) -> f64 {
    hc3_terms(kappa, c, Variant::Printed)
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    Inverted,
    Printed,
}

/// κ/Θ₀ − γ̂₀κ^{1/3}/Θ₀^{5/3}
pub fn hc3_leading(kappa: f64, c: &ExpansionCoefficients) -> f64 {
    let th = c.lambda[0];
    kappa / th - c.lambda[2] * kappa.cbrt() / th.powf(5.0 / 3.0)
}

fn hc3_terms(kappa: f64, c: &ExpansionCoefficients, v: Variant) -> f64 {
    let th = c.lambda[0];
    let g = c.lambda[2];
    let (l3, l4, l5) = (c.lambda[3], c.lambda[4], c.lambda[5]);
    let lead = hc3_leading(kappa, c);
    let d = delta_b(kappa * lead, &c.m_hat);
    let (g2, l6) = match v {
        Variant::Inverted => (g * g, c.lambda6.coefficient * d * d + c.c_hat),
        Variant::Printed => (g, d * d + c.c_hat),
    };
    let k13 = kappa.powf(-1.0 / 3.0);
    lead - l3 / th.powf(1.5)
        + (2.0 * g2 / (3.0 * th.powf(7.0 / 3.0)) - l4 / th.powf(4.0 / 3.0)) * k13
        + (7.0 * l3 * g / (6.0 * th.powf(13.0 / 6.0)) - l5 / th.powf(7.0 / 6.0)) * k13 * k13
        + (l3 * l3 / (2.0 * th * th) + l4 * g / (th * th) - g.powi(3) / (3.0 * th.powi(3)) - l6 / th) / kappa
}

/// Solved critical field at one κ.
#[derive(Debug, Clone, Serialize)]
pub struct Hc3Result {
    pub kappa: f64,
    pub sigma_solved: f64,
    pub sigma_expansion: f64,
    /// σ_solved − σ_expansion
    pub residual: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    /// μ₁(H(κσ_solved)) − κ²
    pub equation_residual: f64,
    pub m_star: i64,
    pub cert_error: f64,
}

/// Settings for [`hc3_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hc3Config {
    pub solver: SolverConfig,
    pub half_width: i64,
    /// Absolute tolerance on σ.
    pub tol: f64,
    /// Initial relative half-width of the bracket around the expansion.
    pub bracket: f64,
}

impl Default for Hc3Config {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            half_width: WINDOW,
            tol: 1e-9,
            bracket: 0.01,
        }
    }
}

/// Solve μ₁(H(κσ)) = κ² for σ; every evaluation is a full sector sweep.
pub fn hc3_solve(kappa: f64, cfg: Hc3Config, c: &ExpansionCoefficients) -> Result<Hc3Result> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!("kappa = {kappa}")));
    }
    let k2 = kappa * kappa;
    let sigma0 = hc3_expansion(kappa, c);
    let mut evaluations = 0;
    let mut f = |sigma: f64| -> Result<f64> {
        evaluations += 1;
        Ok(sweep_at(kappa * sigma, cfg.solver, cfg.half_width, c)?.mu1_global - k2)
    };
    let mut width = cfg.bracket;
    let mut bracket = None;
    for _ in 0..4 {
        let (lo, hi) = (sigma0 * (1.0 - width), sigma0 * (1.0 + width));
        let (flo, fhi) = (f(lo)?, f(hi)?);
        if flo.signum() != fhi.signum() {
            bracket = Some(((lo, flo), (hi, fhi)));
            break;
        }
        width *= 4.0;
    }
    let (left, right) = bracket.ok_or(Error::NoSignChange {
        lo: sigma0 * (1.0 - width / 4.0),
        hi: sigma0 * (1.0 + width / 4.0),
        flo: f64::NAN,
        fhi: f64::NAN,
    })?;
    let sigma = try_find_root_with(&mut f, left, right, cfg.tol)?;
    let s = sweep_at(kappa * sigma, cfg.solver, cfg.half_width, c)?;
    Ok(Hc3Result {
        kappa,
        sigma_solved: sigma,
        sigma_expansion: sigma0,
        residual: sigma - sigma0,
        bracket: (left.0, right.0),
        evaluations: evaluations + 1,
        equation_residual: s.mu1_global - k2,
        m_star: s.m_star,
        cert_error: s.cert_error,
    })
}

/// CSV: kappa, sigma_solved, sigma_expansion, residual.
pub fn hc3_csv(rows: &[Hc3Result]) -> String {
    let mut out = String::from("kappa,sigma_solved,sigma_expansion,residual\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.12},{:.12},{:.6e}\n",
            r.kappa, r.sigma_solved, r.sigma_expansion, r.residual
        ));
    }
    out
}

/// Least-squares a, b in σ(κ) − tail(κ) ≈ aκ − bκ^{1/3}, where tail holds
/// the expansion terms beyond the second.
pub fn fit_leading_terms(rows: &[Hc3Result], c: &ExpansionCoefficients) -> Result<(f64, f64)> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput("need at least two solved kappas".into()));
    }
    // normal equations for the two-column model
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let k = r.kappa;
        let y = r.sigma_solved - (hc3_expansion(k, c) - hc3_leading(k, c));
        let (x1, x2) = (k, -k.cbrt());
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        r1 += x1 * y;
        r2 += x2 * y;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-12 * s11 * s22 {
        return Err(Error::InvalidInput("degenerate kappa sample".into()));
    }
    Ok(((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det))
}

/// One certified μ₁(H(B)) sample.
#[derive(Debug, Clone, Serialize)]
pub struct EnergySample {
    pub b: f64,
    pub mu1: f64,
    pub m_star: i64,
    pub delta_b: f64,
    pub cert_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardDifference {
    pub b0: f64,
    pub b1: f64,
    pub difference: f64,
    pub quotient: f64,
    /// Certificate on the quotient, (cert₀ + cert₁)/(B₁ − B₀).
    pub cert: f64,
}

/// Forward differences of B ↦ μ₁(H(B)) with the derivative band.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityScan {
    pub samples: Vec<EnergySample>,
    pub differences: Vec<ForwardDifference>,
    /// Left ends of nonpositive differences.
    pub nonpositive: Vec<f64>,
    /// [Θ₀ − δ₀/2, Θ₀ + δ₀/2]
    pub band: (f64, f64),
    /// Band checks apply to differences starting at or above this B.
    pub band_from: f64,
    /// Slack added to the band on top of each quotient certificate.
    pub band_slack: f64,
    /// Left ends of quotients outside the widened band.
    pub band_violations: Vec<f64>,
    pub min_quotient: f64,
    pub max_quotient: f64,
    /// Correlation of μ₁ − B·Σ_{j≤5}λ_jB^{−j/6} with Δ_B² across samples.
    pub delta_correlation: f64,
}

/// Blocks of equally spaced samples start, start + step, …, start + span.
pub fn fine_samples(starts: &[f64], span: f64, step: f64) -> Vec<f64> {
    let n = (span / step).round() as usize;
    let mut out: Vec<f64> = starts
        .iter()
        .flat_map(|s| (0..=n).map(move |k| s + k as f64 * step))
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup();
    out
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Scan μ₁(H(B)) over sorted field values.
pub fn monotonicity_scan(
    bs: &[f64],
    band_from: f64,
    band_slack: f64,
    config: SolverConfig,
    half_width: i64,
    c: &ExpansionCoefficients,
) -> Result<MonotonicityScan> {
    if bs.len() < 2 || bs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("need at least two increasing field values".into()));
    }
    let samples = bs
        .iter()
        .map(|&b| {
            let s = sweep_at(b, config, half_width, c)?;
            Ok(EnergySample {
                b,
                mu1: s.mu1_global,
                m_star: s.m_star,
                delta_b: s.delta_b,
                cert_error: s.cert_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (th, d0) = (c.lambda[0], c.kappa);
    let band = (th - d0 / 2.0, th + d0 / 2.0);
    let differences: Vec<ForwardDifference> = samples
        .windows(2)
        .map(|w| {
            let db = w[1].b - w[0].b;
            let diff = w[1].mu1 - w[0].mu1;
            ForwardDifference {
                b0: w[0].b,
                b1: w[1].b,
                difference: diff,
                quotient: diff / db,
                cert: (w[0].cert_error + w[1].cert_error) / db,
            }
        })
        .collect();
    let nonpositive = differences.iter().filter(|d| d.difference <= 0.0).map(|d| d.b0).collect();
    let banded: Vec<&ForwardDifference> = differences.iter().filter(|d| d.b0 >= band_from).collect();
    let band_violations = banded
        .iter()
        .filter(|d| {
            let eps = d.cert + band_slack;
            d.quotient < band.0 - eps || d.quotient > band.1 + eps
        })
        .map(|d| d.b0)
        .collect();
    let min_quotient = banded.iter().map(|d| d.quotient).fold(f64::INFINITY, f64::min);
    let max_quotient = banded.iter().map(|d| d.quotient).fold(f64::NEG_INFINITY, f64::max);
    let osc: Vec<f64> = samples.iter().map(|s| s.mu1 - series_partial(s.b, c, 5)).collect();
    let d2: Vec<f64> = samples.iter().map(|s| s.delta_b * s.delta_b).collect();
    Ok(MonotonicityScan {
        delta_correlation: correlation(&d2, &osc),
        samples,
        differences,
        nonpositive,
        band,
        band_from,
        band_slack,
        band_violations,
        min_quotient,
        max_quotient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_blocks_are_sorted_and_unique() {
        let s = fine_samples(&[10.0, 5.0], 1.0, 0.25);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(s[0], 5.0);
        assert_eq!(s[9], 11.0);
    }

    #[test]
    fn correlation_of_affine_data() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        assert!((correlation(&x, &y) + 1.0).abs() < 1e-14);
    }
}
