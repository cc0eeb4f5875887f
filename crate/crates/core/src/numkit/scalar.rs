//! Scalar minimization (golden section with parabolic steps) and bracketed
//! root finding (Brent).

use crate::error::{Error, Result};

/// Result of a scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub arg: f64,
    pub value: f64,
    pub evaluations: usize,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Minimize `f` on `(lo, hi)` to absolute tolerance `tol` in the argument.
pub fn minimize_scalar(mut f: impl FnMut(f64) -> f64, bracket: (f64, f64), tol: f64) -> Result<ScalarMin> {
    try_minimize_scalar(|x| Ok(f(x)), bracket, tol)
}

/// Fallible variant of [`minimize_scalar`].
pub fn try_minimize_scalar(
    mut f: impl FnMut(f64) -> Result<f64>,
    bracket: (f64, f64),
    tol: f64,
) -> Result<ScalarMin> {
    let (mut a, mut b) = bracket;
    if !(a < b) || !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("bad bracket ({a}, {b}) or tol {tol}")));
    }
    let (lo, hi) = (a, b);
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evals = 1;
    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = tol / 3.0 + 1e-15 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(m - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    let edge = 2.0 * tol + 1e-12 * (hi - lo);
    if x - lo <= edge {
        return Err(Error::MonotoneBracket {
            lo,
            hi,
            direction: "increasing (minimum at the left end)",
        });
    }
    if hi - x <= edge {
        return Err(Error::MonotoneBracket {
            lo,
            hi,
            direction: "decreasing (minimum at the right end)",
        });
    }
    Ok(ScalarMin {
        arg: x,
        value: fx,
        evaluations: evals,
    })
}

/// Bracketed root of `f` on `(lo, hi)` to absolute tolerance `tol` (Brent).
pub fn find_root(mut f: impl FnMut(f64) -> f64, bracket: (f64, f64), tol: f64) -> Result<f64> {
    try_find_root(|x| Ok(f(x)), bracket, tol)
}

/// Fallible variant of [`find_root`].
pub fn try_find_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let (a, b) = bracket;
    let fa = f(a)?;
    let fb = f(b)?;
    try_find_root_with(&mut f, (a, fa), (b, fb), tol)
}

/// Brent's method with both end values already evaluated.
pub fn try_find_root_with(
    f: &mut impl FnMut(f64) -> Result<f64>,
    left: (f64, f64),
    right: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let (mut a, mut fa) = left;
    let (mut b, mut fb) = right;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NoSignChange {
            lo: a,
            hi: b,
            flo: fa,
            fhi: fb,
        });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_minimum() {
        let m = minimize_scalar(|x| (x - 2.0).powi(2), (0.0, 5.0), 1e-10).unwrap();
        assert!((m.arg - 2.0).abs() < 1e-9);
        assert!(m.value.abs() < 1e-18);
    }

    #[test]
    fn cosh_minimum() {
        // a flat minimum is resolved only to about sqrt(eps) from values
        let m = minimize_scalar(f64::cosh, (-1.0, 1.0), 1e-10).unwrap();
        assert!(m.arg.abs() < 1e-7);
        assert!((m.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_bracket_names_direction() {
        match minimize_scalar(|x| x, (0.0, 1.0), 1e-8) {
            Err(Error::MonotoneBracket { direction, .. }) => assert!(direction.starts_with("increasing")),
            other => panic!("{other:?}"),
        }
        match minimize_scalar(|x| -x, (0.0, 1.0), 1e-8) {
            Err(Error::MonotoneBracket { direction, .. }) => assert!(direction.starts_with("decreasing")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn roots() {
        let r = find_root(|x| x * x - 2.0, (1.0, 2.0), 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        let r = find_root(|x| x, (-1.0, 1.0), 1e-14).unwrap();
        assert!(r.abs() < 1e-14);
        assert!(matches!(
            find_root(|x| x * x + 1.0, (-1.0, 1.0), 1e-10),
            Err(Error::NoSignChange { .. })
        ));
    }
}
