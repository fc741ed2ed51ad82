//! Built-in worked-example systems with their certificates pinned in code:
//! "example-5.1" (stabilizing flow, destabilizing quadratic/cubic jumps,
//! single input) and "example-5.2" (time-varying destabilized flow,
//! stabilizing cube-law jumps, no input).

use std::sync::Arc;

use crate::certificates::{FlowRate, FlowShape, LyapunovCandidate, TailHint};
use crate::ratefns::{ClassTag, RateFunction};
use crate::sequences::ClassKind;
use crate::simulator::ImpulsiveSystem;

/// A named system + certificate bundle with its default impulse-class
/// parameters.
pub struct Preset {
    pub name: &'static str,
    pub note: &'static str,
    pub system: ImpulsiveSystem,
    pub candidate: LyapunovCandidate,
    /// default window length for the budget comparison
    pub theta: f64,
    /// sequence class the verdict certifies at the default θ
    pub class: ClassKind,
}

pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "example-5.1" => Some(example_51()),
        "example-5.2" => Some(example_52()),
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["example-5.1", "example-5.2"]
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Piecewise flow-cost shape: s below 1, s² above; closed-form ∫ ds/φ.
pub fn phi_51() -> RateFunction {
    RateFunction::new("phi-51", ClassTag::P, |s: f64| if s <= 1.0 { s } else { s * s })
        .with_breakpoints(&[1.0])
        .with_recip_antideriv(|s: f64| if s <= 1.0 { s.ln() } else { 1.0 - 1.0 / s })
}

/// Jump gain for the quadratic certificate: ψ(s) = s + 4s² + 4s³.
pub fn psi_51() -> RateFunction {
    RateFunction::new("psi-51", ClassTag::Kinf, |s: f64| s + 4.0 * s * s + 4.0 * s * s * s)
}

// input threshold |μ| ≤ η(|ξ|) gating the decay estimates
fn eta_inv_51(r: f64) -> f64 {
    if r <= 0.5 {
        2.0 * SQRT2 * r
    } else {
        2.0 * r.sqrt()
    }
}

pub fn example_51() -> Preset {
    let system = ImpulsiveSystem::new(
        1,
        1,
        |_t, x: &[f64], u: &[f64]| {
            let xi = x[0];
            let mu = u[0];
            if xi.abs() <= SQRT2 {
                vec![-xi + SQRT2 * mu]
            } else {
                vec![-xi.powi(3) / 2.0 + xi.abs() * mu]
            }
        },
        |_t, x: &[f64], u: &[f64]| {
            let xi = x[0];
            let mu = u[0];
            if xi.abs() <= SQRT2 {
                vec![2.0 * SQRT2 * xi * xi * mu]
            } else {
                vec![xi.powi(3)]
            }
        },
    );
    let half_square = RateFunction::new("half-square", ClassTag::Kinf, |s: f64| s * s / 2.0);
    let candidate = LyapunovCandidate {
        v: Arc::new(|_t, x: &[f64]| x[0] * x[0] / 2.0),
        phi1: half_square.clone(),
        phi2: half_square,
        chi: RateFunction::new("chi-51", ClassTag::Kinf, |r: f64| {
            let e = eta_inv_51(r);
            e * e / 2.0
        })
        .with_breakpoints(&[0.5]),
        pi: RateFunction::new("pi-51", ClassTag::Kinf, |r: f64| {
            let e = eta_inv_51(r);
            let w = e + e.powi(3);
            w * w / 2.0
        })
        .with_breakpoints(&[0.5]),
        p: FlowRate::constant(1.0),
        shape: FlowShape::Decay(phi_51()),
        psi: psi_51(),
        h: Arc::new(|_t, x: &[f64]| x[0].abs()),
        h0: Arc::new(|_t, x: &[f64]| x[0].abs()),
        escape_declared_divergent: false,
    };
    Preset {
        name: "example-5.1",
        note: "stabilizing scalar flow with input-driven destabilizing jumps; \
               quadratic certificate, jump-cost budget ≈ 1.1931",
        system,
        candidate,
        theta: 1.25,
        class: ClassKind::FreqUpper { rho: 1.0 / 1.25 },
    }
}

/// Saturating growth magnitude tanh(s) with the overflow-stable ln sinh
/// antiderivative of its reciprocal.
pub fn tanh_shape() -> RateFunction {
    RateFunction::new("tanh-s", ClassTag::P, |s: f64| s.tanh())
        .with_recip_antideriv(|s: f64| s + (-(-2.0 * s).exp()).ln_1p() - std::f64::consts::LN_2)
}

/// Stabilizing jump gain: cube below 1, cube root above, both halved.
pub fn psi_52() -> RateFunction {
    RateFunction::new("psi-52", ClassTag::Kinf, |s: f64| {
        if s <= 1.0 {
            s.powi(3) / 2.0
        } else {
            s.cbrt() / 2.0
        }
    })
    .with_breakpoints(&[1.0])
}

/// Time-varying flow rate tanh(t) with the overflow-stable ln cosh
/// antiderivative.
pub fn p_52() -> FlowRate {
    FlowRate::func("tanh-t", TailHint::Monotone, |t: f64| t.tanh()).with_antideriv(|t: f64| {
        t.abs() + (-2.0 * t.abs()).exp().ln_1p() - std::f64::consts::LN_2
    })
}

pub fn example_52() -> Preset {
    let system = ImpulsiveSystem::new(
        1,
        0,
        |t, x: &[f64], _u: &[f64]| vec![t.tanh() * x[0].tanh()],
        |_t, x: &[f64], _u: &[f64]| {
            let xi = x[0];
            if xi.abs() <= 1.0 {
                vec![-xi + xi.powi(3) / 2.0]
            } else {
                vec![-xi + xi.cbrt() / 2.0]
            }
        },
    );
    let candidate = LyapunovCandidate {
        v: Arc::new(|_t, x: &[f64]| x[0].abs()),
        phi1: RateFunction::identity(),
        phi2: RateFunction::identity(),
        // no inputs: the gate and the small-input jump cap are vacuous
        chi: RateFunction::identity(),
        pi: RateFunction::identity(),
        p: p_52(),
        shape: FlowShape::Growth(tanh_shape()),
        psi: psi_52(),
        h: Arc::new(|_t, x: &[f64]| x[0].abs()),
        h0: Arc::new(|_t, x: &[f64]| x[0].abs()),
        escape_declared_divergent: true,
    };
    Preset {
        name: "example-5.2",
        note: "time-varying destabilized scalar flow tamed by cube-law jumps; \
               flow-decay budget ln(1+e) − 1/2 ≈ 0.8133",
        system,
        candidate,
        theta: 0.8,
        class: ClassKind::FreqLower { rho: 1.0 / 0.8 },
    }
}
