//! Adaptive Simpson quadrature and scalar root bracketing used across the
//! certificate and comparison modules.

use crate::error::{Error, Result};

/// Simpson estimate on [a, b].
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() || !frm.is_finite() {
        return Err(Error::Quadrature {
            a,
            b,
            reason: "integrand not finite inside interval".into(),
        });
    }
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if depth == 0 {
        return Err(Error::Quadrature {
            a,
            b,
            reason: "max subdivision depth reached".into(),
        });
    }
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    Ok(adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Integrate f over [a, b] (a <= b) with adaptive Simpson.
///
/// `tol` is treated as an absolute tolerance scaled by the coarse estimate.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a < b) {
        return Err(Error::Quadrature {
            a,
            b,
            reason: "reversed interval".into(),
        });
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    if !fa.is_finite() || !fb.is_finite() || !fm.is_finite() {
        return Err(Error::Quadrature {
            a,
            b,
            reason: "integrand not finite at nodes".into(),
        });
    }
    let whole = simpson(a, b, fa, fm, fb);
    let tol = rel_tol * whole.abs().max(1e-300).max((b - a) * 1e-3);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// Integrate over [a, b], splitting at the given interior breakpoints.
pub fn integrate_split(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
) -> Result<f64> {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    for c in cuts {
        total += integrate(f, lo, c, rel_tol)?;
        lo = c;
    }
    total += integrate(f, lo, b, rel_tol)?;
    Ok(total)
}

/// Signed integral: integrate from a to b, negating when b < a.
pub fn integrate_signed(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
) -> Result<f64> {
    if a <= b {
        integrate_split(f, a, b, breakpoints, rel_tol)
    } else {
        Ok(-integrate_split(f, b, a, breakpoints, rel_tol)?)
    }
}

/// Bisection for strictly monotone increasing g on [lo, hi] with g(lo) <= y <= g(hi).
pub fn bisect_increasing(
    g: &dyn Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    y: f64,
    atol: f64,
    rtol: f64,
    max_steps: u32,
) -> f64 {
    for _ in 0..max_steps {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let gm = g(mid);
        if (gm - y).abs() <= atol + rtol * y.abs() && (hi - lo) <= atol + rtol * mid.abs() {
            return mid;
        }
        if gm < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the maximum of g on [a, b].
///
/// Returns (argmax, max). Assumes unimodality near the bracket; callers seed
/// the bracket from a grid scan so a locally wrong assumption only costs
/// refinement accuracy, not correctness of the grid-level value.
pub fn golden_max(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, g(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        let v = integrate(&|s| s * s, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-10);
    }

    #[test]
    fn splits_at_kinks() {
        // |s - 1| on [0, 2] = 1
        let f = |s: f64| (s - 1.0).abs();
        let v = integrate_split(&f, 0.0, 2.0, &[1.0], 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signed_reverses() {
        let v = integrate_signed(&|s| 1.0 / s, 2.0, 1.0, &[], 1e-12).unwrap();
        assert!((v + std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn golden_finds_peak() {
        let (x, v) = golden_max(&|s| -(s - 0.7) * (s - 0.7), 0.0, 2.0, 1e-12);
        assert!((x - 0.7).abs() < 1e-8);
        assert!(v.abs() < 1e-14);
    }
}
