//! Comparison functions (classes C*, P, K, K∞, KL): representation, sampled
//! validation, numeric inversion, iteration and nondecreasing majorization.

pub mod expr;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

/// Declared comparison-function class.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum ClassTag {
    Cstar,
    P,
    K,
    Kinf,
    Generic,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar rate function on `[0, domain_max]` with a declared class tag.
///
/// The tag is the user's claim; [`verify_class`] checks it by sampling.
/// Breakpoints mark kinks so quadrature splits there. When the closed-form
/// antiderivative of `1/f` is known it is attached so that flow transforms
/// bypass numeric quadrature.
#[derive(Clone)]
pub struct RateFunction {
    name: String,
    f: ScalarFn,
    tag: ClassTag,
    domain_max: f64,
    breakpoints: Vec<f64>,
    recip_antideriv: Option<ScalarFn>,
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("RateFunction")
            .field("name", &self.name)
            .field("tag", &self.tag)
            .field("domain_max", &self.domain_max)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl RateFunction {
    pub fn new<F>(name: &str, tag: ClassTag, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        RateFunction {
            name: name.to_string(),
            f: Arc::new(f),
            tag,
            domain_max: f64::INFINITY,
            breakpoints: Vec::new(),
            recip_antideriv: None,
        }
    }

    pub fn identity() -> Self {
        RateFunction::new("id", ClassTag::Kinf, |s| s)
    }

    pub fn with_breakpoints(mut self, pts: &[f64]) -> Self {
        self.breakpoints = pts.to_vec();
        self
    }

    pub fn with_domain_max(mut self, s_max: f64) -> Self {
        self.domain_max = s_max;
        self
    }

    /// Attach the closed-form antiderivative of `1/f`.
    pub fn with_recip_antideriv<F>(mut self, g: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.recip_antideriv = Some(Arc::new(g));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tag(&self) -> ClassTag {
        self.tag
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    pub fn recip_antideriv(&self) -> Option<&ScalarFn> {
        self.recip_antideriv.as_ref()
    }

    /// Evaluate, saturating silently (callers that must refuse extrapolation
    /// use [`RateFunction::try_eval`]).
    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    /// Evaluate, refusing points beyond the domain hint.
    pub fn try_eval(&self, s: f64) -> Result<f64> {
        if s > self.domain_max {
            return Err(Error::DomainExceeded {
                name: self.name.clone(),
                value: s,
                max: self.domain_max,
            });
        }
        Ok((self.f)(s))
    }

    /// True when f coincides with the identity on a log-spaced probe grid.
    /// Used to short-circuit the jump-cost integral to exact zero.
    pub fn is_identity_on_probes(&self) -> bool {
        let hi = if self.domain_max.is_finite() {
            self.domain_max
        } else {
            1e6
        };
        probe_grid(1e-9, hi, 64).into_iter().all(|s| self.eval(s) == s)
    }

    /// Solve f(x) = y for K/K∞-tagged functions by bracketing bisection.
    pub fn invert(&self, y: f64) -> Result<f64> {
        self.invert_with(y, 1e-12, 1e-10, 200)
    }

    pub fn invert_with(&self, y: f64, atol: f64, rtol: f64, max_steps: u32) -> Result<f64> {
        let f0 = self.eval(0.0);
        if y < f0 {
            return Err(Error::OutOfRange {
                name: self.name.clone(),
                y,
                lo: f0,
                hi: f64::INFINITY,
            });
        }
        if y == f0 {
            return Ok(0.0);
        }
        // grow the bracket
        let mut hi = 1.0_f64;
        let cap = if self.domain_max.is_finite() {
            self.domain_max
        } else {
            1e300
        };
        let mut fhi = self.eval(hi);
        while fhi < y {
            if hi >= cap {
                return Err(Error::OutOfRange {
                    name: self.name.clone(),
                    y,
                    lo: f0,
                    hi: fhi,
                });
            }
            hi = (hi * 2.0).min(cap);
            fhi = self.eval(hi);
            if !fhi.is_finite() {
                break;
            }
        }
        let g = |x: f64| self.eval(x);
        Ok(quad::bisect_increasing(&g, 0.0, hi, y, atol, rtol, max_steps))
    }

    /// k-fold composition; k = 0 yields the identity.
    pub fn iterate(&self, k: u32) -> RateFunction {
        if k == 0 {
            return RateFunction::identity();
        }
        let f = self.f.clone();
        let domain_max = self.domain_max;
        let name = format!("{}^{}", self.name, k);
        RateFunction {
            name: name.clone(),
            f: Arc::new(move |s| {
                let mut v = s;
                for _ in 0..k {
                    if v > domain_max {
                        return f64::INFINITY;
                    }
                    v = f(v);
                    if !v.is_finite() {
                        return f64::INFINITY;
                    }
                }
                v
            }),
            tag: self.tag,
            domain_max,
            breakpoints: self.breakpoints.clone(),
            recip_antideriv: None,
        }
    }

    /// Like `iterate(k).eval(s)` but reporting a domain error instead of
    /// saturating when an intermediate value leaves the domain hint.
    pub fn try_iterate_at(&self, k: u32, s: f64) -> Result<f64> {
        let mut v = s;
        for _ in 0..k {
            v = self.try_eval(v)?;
        }
        Ok(v)
    }

    /// Pointwise maximum with another rate.
    pub fn max_with(&self, other: &RateFunction) -> RateFunction {
        let f = self.f.clone();
        let g = other.f.clone();
        let mut bps = self.breakpoints.clone();
        bps.extend_from_slice(&other.breakpoints);
        RateFunction {
            name: format!("max({},{})", self.name, other.name),
            f: Arc::new(move |s| f(s).max(g(s))),
            tag: ClassTag::Generic,
            domain_max: self.domain_max.min(other.domain_max),
            breakpoints: bps,
            recip_antideriv: None,
        }
    }

    /// Running maximum `r ↦ max_{0≤s≤r} f(s)`: nondecreasing and ≥ f.
    ///
    /// Evaluated on a deterministic sample grid of [0, r] (grid size recorded
    /// in the name) with one local refinement pass around the argmax.
    pub fn majorize_nondecreasing(&self) -> RateFunction {
        let f = self.f.clone();
        let bps = self.breakpoints.clone();
        const GRID: usize = 256;
        RateFunction {
            name: format!("runmax[{}]({})", GRID, self.name),
            f: Arc::new(move |r| {
                if r <= 0.0 {
                    return f(r.max(0.0));
                }
                let mut best = f(0.0);
                let mut best_s = 0.0;
                let probe = |s: f64, best: &mut f64, best_s: &mut f64| {
                    let v = f(s);
                    if v > *best {
                        *best = v;
                        *best_s = s;
                    }
                };
                for i in 0..=GRID {
                    probe(r * i as f64 / GRID as f64, &mut best, &mut best_s);
                }
                for &b in &bps {
                    if b > 0.0 && b <= r {
                        probe(b, &mut best, &mut best_s);
                    }
                }
                // local refinement around the grid argmax
                let h = r / GRID as f64;
                let lo = (best_s - h).max(0.0);
                let hi = (best_s + h).min(r);
                for i in 0..=64 {
                    probe(lo + (hi - lo) * i as f64 / 64.0, &mut best, &mut best_s);
                }
                best
            }),
            tag: ClassTag::Generic,
            domain_max: self.domain_max,
            breakpoints: self.breakpoints.clone(),
            recip_antideriv: None,
        }
    }
}

/// Log-spaced probes in [lo, hi] plus the endpoints.
pub fn probe_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (la, lb) = (lo.ln(), hi.ln());
    (0..=n)
        .map(|i| (la + (lb - la) * i as f64 / n as f64).exp())
        .collect()
}

/// Grid specification for sampled class validation.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        GridSpec { lo, hi, points }
    }

    fn samples(&self) -> Vec<f64> {
        let mut v = vec![0.0];
        let lo = self.lo.max(1e-12);
        v.extend(probe_grid(lo, self.hi, self.points));
        v
    }
}

/// One violated class predicate with a witness point.
#[derive(Clone, Debug)]
pub struct ClassViolation {
    pub predicate: String,
    pub at: f64,
    pub value: f64,
}

/// Result of sampled class validation; empty violations = consistent.
#[derive(Clone, Debug, Default)]
pub struct ClassReport {
    pub violations: Vec<ClassViolation>,
}

impl ClassReport {
    pub fn consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the declared class tag on a sample grid. A failed check blocks
/// downstream certificate computation; a clean one is consistency evidence,
/// not proof.
pub fn verify_class(f: &RateFunction, tag: ClassTag, grid: &GridSpec) -> Result<ClassReport> {
    let mut report = ClassReport::default();
    let pts = grid.samples();
    let vals: Vec<f64> = pts.iter().map(|&s| f.eval(s)).collect();
    for (&s, &v) in pts.iter().zip(&vals) {
        if !v.is_finite() {
            return Err(Error::NonFinite { t: s });
        }
    }
    let zero_tol = 1e-12;
    match tag {
        ClassTag::Generic => {}
        ClassTag::Cstar | ClassTag::P | ClassTag::K | ClassTag::Kinf => {
            if vals[0].abs() > zero_tol {
                report.violations.push(ClassViolation {
                    predicate: "f(0) = 0".into(),
                    at: 0.0,
                    value: vals[0],
                });
            }
            if tag != ClassTag::Cstar {
                for (&s, &v) in pts.iter().zip(&vals).skip(1) {
                    if v <= 0.0 {
                        report.violations.push(ClassViolation {
                            predicate: "f(s) > 0 for s > 0".into(),
                            at: s,
                            value: v,
                        });
                        break;
                    }
                }
            }
            if tag == ClassTag::K || tag == ClassTag::Kinf {
                for w in pts.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if f.eval(b) <= f.eval(a) {
                        report.violations.push(ClassViolation {
                            predicate: "strictly increasing".into(),
                            at: b,
                            value: f.eval(b) - f.eval(a),
                        });
                        break;
                    }
                }
            }
            if tag == ClassTag::Kinf {
                // unboundedness heuristic: value at the top of the grid must
                // clearly dominate the value at the bottom decade
                let top = f.eval(grid.hi);
                if !top.is_finite() || top <= vals[vals.len() / 2] {
                    report.violations.push(ClassViolation {
                        predicate: "unbounded growth".into(),
                        at: grid.hi,
                        value: top,
                    });
                }
            }
        }
    }
    Ok(report)
}

type KlFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A class-KL candidate `β(r, s)`.
#[derive(Clone)]
pub struct KLFunction {
    name: String,
    f: KlFn,
}

impl KLFunction {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        KLFunction {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, r: f64, s: f64) -> f64 {
        (self.f)(r, s)
    }

    /// Sampled sanity check: nondecreasing in r, nonincreasing in s, β(0,s)=0.
    pub fn verify_on(&self, r_grid: &[f64], s_grid: &[f64], tol: f64) -> ClassReport {
        let mut report = ClassReport::default();
        for &s in s_grid {
            if self.eval(0.0, s).abs() > tol {
                report.violations.push(ClassViolation {
                    predicate: "beta(0, s) = 0".into(),
                    at: s,
                    value: self.eval(0.0, s),
                });
            }
            for w in r_grid.windows(2) {
                if self.eval(w[1], s) < self.eval(w[0], s) - tol {
                    report.violations.push(ClassViolation {
                        predicate: "nondecreasing in r".into(),
                        at: w[1],
                        value: self.eval(w[1], s) - self.eval(w[0], s),
                    });
                }
            }
        }
        for &r in r_grid {
            for w in s_grid.windows(2) {
                if self.eval(r, w[1]) > self.eval(r, w[0]) + tol {
                    report.violations.push(ClassViolation {
                        predicate: "nonincreasing in s".into(),
                        at: w[1],
                        value: self.eval(r, w[1]) - self.eval(r, w[0]),
                    });
                }
            }
        }
        report
    }
}

impl fmt::Debug for KLFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "KLFunction({})", self.name)
    }
}
