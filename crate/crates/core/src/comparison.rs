//! Scalar comparison systems: exact flow solutions through the integral
//! transform of the rate shape, impulsive comparison trajectories, decay
//! envelopes built from window budgets, and ensemble bound checks.

use std::sync::Arc;

use crate::certificates::FlowRate;
use crate::error::{Error, Result};
use crate::quad::{bisect_increasing, integrate_split};
use crate::ratefns::{KLFunction, RateFunction};
use crate::sequences::{ImpulseSequence, UniformityWitness};

/// Transform values within this distance of the attainable infimum snap to 0.
pub const ABSORB_TOL: f64 = 1e-12;

/// State range probed by the transform; outside it the solution is treated
/// as absorbed (low end) or escaped (high end).
const R_LO: f64 = 1e-14;
const R_HI: f64 = 1e14;

const SEG_REL_TOL: f64 = 1e-11;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Decay,
    Growth,
}

/// Scalar comparison system  ẇ = ∓ p(t)·shape(w),  w(τ⁺) = ψ(w(τ⁻)).
/// `shape` is the positive rate magnitude in both regimes.
#[derive(Clone)]
pub struct ComparisonSpec {
    pub p: FlowRate,
    pub shape: RateFunction,
    pub psi: RateFunction,
    pub regime: Regime,
}

/// F(r) = ∫_1^r ds / shape(s), strictly increasing on (0, ∞).
pub struct FlowTransform {
    shape: RateFunction,
    closed: Option<Scalar>,
    closed_offset: f64,
    grid: Vec<f64>,
    cum: Vec<f64>,
    range_lo: f64,
    range_hi: f64,
}

impl FlowTransform {
    pub fn new(shape: &RateFunction) -> Result<Self> {
        for &s in &[1e-12, 1e-6, 1.0, 1e6, 1e12] {
            let v = shape.eval(s);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Precondition(format!(
                    "transform shape must be finite and positive on (0, inf); {}({s}) = {v}",
                    shape.name()
                )));
            }
        }
        let mut tf = if let Some(g) = shape.recip_antideriv() {
            let g: Scalar = g.clone();
            let offset = g(1.0);
            FlowTransform {
                shape: shape.clone(),
                closed: Some(g),
                closed_offset: offset,
                grid: Vec::new(),
                cum: Vec::new(),
                range_lo: f64::NEG_INFINITY,
                range_hi: f64::INFINITY,
            }
        } else {
            // log grid 10^(k/8) on [1e-12, 1e12]; the node at 1 anchors F = 0
            let grid: Vec<f64> = (-96..=96).map(|k| 10f64.powf(k as f64 / 8.0)).collect();
            let anchor = 96;
            let mut cum = vec![0.0; grid.len()];
            for i in anchor..grid.len() - 1 {
                cum[i + 1] = cum[i] + seg_integral(shape, grid[i], grid[i + 1])?;
            }
            for i in (0..anchor).rev() {
                cum[i] = cum[i + 1] - seg_integral(shape, grid[i], grid[i + 1])?;
            }
            FlowTransform {
                shape: shape.clone(),
                closed: None,
                closed_offset: 0.0,
                grid,
                cum,
                range_lo: f64::NEG_INFINITY,
                range_hi: f64::INFINITY,
            }
        };
        tf.range_lo = tf.forward(R_LO)?;
        tf.range_hi = tf.forward(R_HI)?;
        if !(tf.range_lo < tf.range_hi) {
            return Err(Error::Precondition(
                "transform failed to be increasing over the probed range".into(),
            ));
        }
        Ok(tf)
    }

    /// Attainable F values over the probed state range [1e-14, 1e14].
    pub fn range(&self) -> (f64, f64) {
        (self.range_lo, self.range_hi)
    }

    pub fn forward(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Precondition(format!(
                "transform argument must be in (0, inf), got {r}"
            )));
        }
        if let Some(g) = &self.closed {
            let v = g(r) - self.closed_offset;
            if !v.is_finite() {
                return Err(Error::NonFinite { t: r });
            }
            return Ok(v);
        }
        let i = self.grid.partition_point(|&g| g <= r);
        if i == 0 {
            Ok(self.cum[0] - seg_integral(&self.shape, r, self.grid[0])?)
        } else {
            Ok(self.cum[i - 1] + seg_integral(&self.shape, self.grid[i - 1], r)?)
        }
    }

    /// Monotone inverse; values at or below the attainable infimum map to 0.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::NonFinite { t: y });
        }
        if y <= self.range_lo + ABSORB_TOL {
            return Ok(0.0);
        }
        if y >= self.range_hi {
            return Err(Error::OutOfRange {
                name: "flow transform".into(),
                y,
                lo: self.range_lo,
                hi: self.range_hi,
            });
        }
        // bisect in log state space for uniform relative resolution
        let g = |u: f64| self.forward(u.exp()).unwrap_or(f64::NAN);
        let u = bisect_increasing(&g, R_LO.ln(), R_HI.ln(), y, 1e-13, 0.0, 200);
        let r = u.exp();
        let back = self.forward(r)?;
        let scale = y.abs().max(1.0);
        if (back - y).abs() > 1e-7 * scale {
            return Err(Error::Quadrature {
                a: self.range_lo,
                b: self.range_hi,
                reason: format!("transform inverse failed to converge at y = {y}"),
            });
        }
        Ok(r)
    }
}

// log substitution s = e^u keeps interval lengths O(1) across the state range
fn seg_integral(shape: &RateFunction, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let f = |u: f64| {
        let s = u.exp();
        s / shape.eval(s)
    };
    let cuts: Vec<f64> = shape
        .breakpoints()
        .iter()
        .copied()
        .filter(|&c| c > 0.0)
        .map(f64::ln)
        .collect();
    integrate_split(&f, a.ln(), b.ln(), &cuts, SEG_REL_TOL)
}

/// Exact flow solution between impulses: w(t) given w(t0) = w0.
pub fn flow_solution(
    spec: &ComparisonSpec,
    tf: &FlowTransform,
    t0: f64,
    w0: f64,
    t: f64,
) -> Result<f64> {
    if !(t >= t0) {
        return Err(Error::Precondition(format!(
            "flow_solution requires t >= t0, got t0 = {t0}, t = {t}"
        )));
    }
    if !(w0 >= 0.0) {
        return Err(Error::Precondition(format!("state must be nonnegative, got {w0}")));
    }
    if w0 == 0.0 || t == t0 {
        return Ok(if w0 == 0.0 { 0.0 } else { w0 });
    }
    let q = spec.p.integral(t0, t)?;
    match spec.regime {
        Regime::Decay => {
            let arg = tf.forward(w0)? - q;
            if arg <= tf.range_lo + ABSORB_TOL {
                Ok(0.0)
            } else {
                tf.inverse(arg)
            }
        }
        Regime::Growth => {
            let arg = tf.forward(w0)? + q;
            if arg >= tf.range_hi {
                Err(Error::FiniteEscape { lo: t0, hi: t })
            } else {
                tf.inverse(arg)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct JumpRecord {
    pub t: f64,
    pub pre: f64,
    pub post: f64,
}

/// Right-continuous impulsive comparison trajectory.
pub struct ComparisonTrajectory {
    pub t0: f64,
    pub z0: f64,
    pub horizon: f64,
    /// Segment starts: (time, post-jump value); first entry is (t0, z0).
    nodes: Vec<(f64, f64)>,
    pub jumps: Vec<JumpRecord>,
    gamma: ImpulseSequence,
    spec: ComparisonSpec,
    transform: Arc<FlowTransform>,
}

impl ComparisonTrajectory {
    pub fn gamma(&self) -> &ImpulseSequence {
        &self.gamma
    }

    pub fn transform(&self) -> &FlowTransform {
        &self.transform
    }

    /// Right-continuous evaluation on [t0, horizon].
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(self.t0 <= t && t <= self.horizon) {
            return Err(Error::HorizonExceeded { t, horizon: self.horizon });
        }
        let i = self.nodes.partition_point(|n| n.0 <= t) - 1;
        let (ts, zs) = self.nodes[i];
        flow_solution(&self.spec, &self.transform, ts, zs, t)
    }

    pub fn final_value(&self) -> Result<f64> {
        self.eval(self.horizon)
    }

    /// Sample points (t, z, impulse count on (t0, t]): every segment start,
    /// `per_segment` interior points per segment, the horizon, and the
    /// left-limit value at each jump (with the exclusive count).
    pub fn sample(&self, per_segment: usize) -> Result<Vec<(f64, f64, usize)>> {
        let mut out = Vec::new();
        for (i, &(ts, zs)) in self.nodes.iter().enumerate() {
            let te = if i + 1 < self.nodes.len() {
                self.nodes[i + 1].0
            } else {
                self.horizon
            };
            out.push((ts, zs, i));
            for j in 1..=per_segment {
                let t = ts + (te - ts) * j as f64 / (per_segment + 1) as f64;
                if t > ts && t < te {
                    out.push((t, flow_solution(&self.spec, &self.transform, ts, zs, t)?, i));
                }
            }
        }
        for (j, rec) in self.jumps.iter().enumerate() {
            out.push((rec.t, rec.pre, j));
        }
        let last = *self.nodes.last().expect("nonempty nodes");
        if last.0 < self.horizon {
            out.push((
                self.horizon,
                flow_solution(&self.spec, &self.transform, last.0, last.1, self.horizon)?,
                self.nodes.len() - 1,
            ));
        }
        Ok(out)
    }
}

/// Solve the impulsive comparison system over [t0, horizon].
pub fn solve_comparison(
    spec: &ComparisonSpec,
    tf: &Arc<FlowTransform>,
    gamma: &ImpulseSequence,
    t0: f64,
    z0: f64,
    horizon: f64,
) -> Result<ComparisonTrajectory> {
    if !(z0 >= 0.0) {
        return Err(Error::Precondition(format!("z0 must be nonnegative, got {z0}")));
    }
    if !(horizon >= t0) {
        return Err(Error::Precondition(format!(
            "horizon {horizon} precedes t0 = {t0}"
        )));
    }
    let mut nodes = vec![(t0, z0)];
    let mut jumps = Vec::new();
    for &tau in gamma.instants() {
        if tau <= t0 || tau > horizon {
            continue;
        }
        let &(ts, zs) = nodes.last().expect("nonempty nodes");
        let pre = flow_solution(spec, tf, ts, zs, tau)?;
        let post = spec.psi.eval(pre).max(0.0);
        if !post.is_finite() {
            return Err(Error::NonFinite { t: tau });
        }
        jumps.push(JumpRecord { t: tau, pre, post });
        nodes.push((tau, post));
    }
    Ok(ComparisonTrajectory {
        t0,
        z0,
        horizon,
        nodes,
        jumps,
        gamma: gamma.clone(),
        spec: spec.clone(),
        transform: Arc::clone(tf),
    })
}

/// Orbit of the jump majorant: [w0, ψ̄(w0), ψ̄²(w0), …], length k_max + 1.
pub fn jump_recursion(psi_bar: &RateFunction, w0: f64, k_max: usize) -> Vec<f64> {
    let mut orbit = Vec::with_capacity(k_max + 1);
    let mut w = w0;
    orbit.push(w);
    for _ in 0..k_max {
        w = psi_bar.eval(w).max(0.0);
        orbit.push(w);
    }
    orbit
}

/// Window constants shared by both envelope constructions.
fn window_constants(
    budget: f64,
    theta: f64,
    eps0: f64,
    witness: &UniformityWitness,
) -> Result<(u32, f64)> {
    if !(eps0 > 0.0) || !eps0.is_finite() {
        return Err(Error::Precondition(format!(
            "margin must yield eps0 > 0; got eps0 = {eps0} (budget {budget})"
        )));
    }
    let t_eps = witness.t_for(eps0);
    let m0 = if t_eps <= theta { 1 } else { (t_eps / theta).ceil() as u32 };
    if m0 as f64 > 1e7 {
        return Err(Error::Precondition(format!(
            "window multiplier m0 = {m0} is impractically large"
        )));
    }
    Ok((m0, m0 as f64 * theta))
}

/// Decay envelope from the jump-dominated budget margin N − M > 0.
pub struct Prop1Envelope {
    pub delta: f64,
    pub eps0: f64,
    pub m0: u32,
    pub t_window: f64,
    pub k0: u32,
    pub theta: f64,
    /// Per-window peak gain: ψ̄ iterated k0 times.
    pub eta: RateFunction,
    transform: Arc<FlowTransform>,
}

pub fn build_envelope_prop1(
    m_budget: f64,
    n_budget: f64,
    theta: f64,
    witness: &UniformityWitness,
    psi_bar: &RateFunction,
    transform: &Arc<FlowTransform>,
) -> Result<Prop1Envelope> {
    if !(theta > 0.0) || !(m_budget > 0.0) {
        return Err(Error::Precondition(format!(
            "envelope requires theta > 0 and M > 0; got theta = {theta}, M = {m_budget}"
        )));
    }
    let delta = n_budget - m_budget;
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!(
            "envelope requires N > M; margin was {delta}"
        )));
    }
    let eps0 = delta / (2.0 * theta * m_budget);
    let (m0, t_window) = window_constants(m_budget, theta, eps0, witness)?;
    let k0 = ((1.0 / theta + eps0) * t_window).floor() as u32;
    Ok(Prop1Envelope {
        delta,
        eps0,
        m0,
        t_window,
        k0,
        theta,
        eta: psi_bar.iterate(k0),
        transform: Arc::clone(transform),
    })
}

impl Prop1Envelope {
    /// Guaranteed drop of F(z) across each window of length t_window.
    pub fn descent_target(&self) -> f64 {
        self.m0 as f64 * self.delta / 2.0
    }

    /// Strong-form KL bound in u = (t − t0) + n_(t0, t]: each complete window
    /// contributes at most t_window + k0 to u and at least the descent target
    /// to F, with the in-window peak covered by η.
    pub fn strong_beta(&self) -> KLFunction {
        let tf = Arc::clone(&self.transform);
        let eta = self.eta.clone();
        let per_window = self.t_window + self.k0 as f64;
        let drop = self.descent_target();
        KLFunction::new("prop1-window-envelope", move |r, u| {
            if r <= 0.0 {
                return 0.0;
            }
            let windows = (u / per_window - 1.0).max(0.0);
            let fr = match tf.forward(r) {
                Ok(v) => v,
                Err(_) => return f64::NAN,
            };
            let arg = fr - windows * drop;
            let (lo, _) = tf.range();
            let base = if arg <= lo + ABSORB_TOL {
                0.0
            } else {
                tf.inverse(arg).unwrap_or(f64::NAN)
            };
            eta.eval(base).max(0.0)
        })
    }
}

/// Decay envelope from the flow-dominated budget margin M2 − N2 > 0.
/// The transform here is built from the positive flow magnitude.
pub struct Prop2Envelope {
    pub delta: f64,
    pub eps0: f64,
    pub m0: u32,
    pub t_window: f64,
    pub k0: u32,
    pub theta: f64,
    pub kappa: f64,
    pub nu: RateFunction,
    pub beta1: KLFunction,
    pub beta2: KLFunction,
    pub beta3: KLFunction,
}

pub fn build_envelope_prop2(
    m2_budget: f64,
    n2_budget: f64,
    theta: f64,
    witness: &UniformityWitness,
    transform: &Arc<FlowTransform>,
) -> Result<Prop2Envelope> {
    if !(theta > 0.0) || !(m2_budget > 0.0) {
        return Err(Error::Precondition(format!(
            "envelope requires theta > 0 and M2 > 0; got theta = {theta}, M2 = {m2_budget}"
        )));
    }
    let delta = m2_budget - n2_budget;
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!(
            "envelope requires M2 > N2; margin was {delta}"
        )));
    }
    let eps0 = delta / (2.0 * theta * m2_budget);
    if eps0 >= 1.0 / theta {
        return Err(Error::Precondition(format!(
            "margin eps0 = {eps0} exceeds the impulse frequency floor 1/theta"
        )));
    }
    let (m0, t_window) = window_constants(m2_budget, theta, eps0, witness)?;
    let k0 = ((1.0 / theta - eps0) * t_window).ceil() as u32;
    let kappa = (1.0 / theta - eps0) / 2.0;

    let lift = m0 as f64 * n2_budget.max(0.0);
    let tf = Arc::clone(transform);
    let nu = RateFunction::new("nu", crate::ratefns::ClassTag::Kinf, move |r| {
        if r <= 0.0 {
            return 0.0;
        }
        match tf.forward(r) {
            Ok(fr) => tf.inverse(fr + lift).unwrap_or(f64::INFINITY),
            Err(_) => f64::NAN,
        }
    });

    let tf = Arc::clone(transform);
    let half_drop = m0 as f64 * delta / 2.0;
    let beta1 = KLFunction::new("prop2-beta1", move |r, s| {
        if r <= 0.0 {
            return 0.0;
        }
        let fr = match tf.forward(r) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let arg = fr - half_drop * s;
        let (lo, _) = tf.range();
        if arg <= lo + ABSORB_TOL {
            0.0
        } else {
            tf.inverse(arg).unwrap_or(f64::NAN)
        }
    });

    let nu2 = nu.clone();
    let b1 = beta1.clone();
    let beta2 = KLFunction::new("prop2-beta2", move |r, s| nu2.eval(b1.eval(r, s)));

    let b2 = beta2.clone();
    let k0f = k0 as f64;
    let beta3 = KLFunction::new("prop2-beta3", move |r, s| {
        if s < k0f {
            (2.0 - s / k0f) * b2.eval(r, 0.0)
        } else {
            b2.eval(r, s / k0f - 1.0)
        }
    });

    Ok(Prop2Envelope {
        delta,
        eps0,
        m0,
        t_window,
        k0,
        theta,
        kappa,
        nu,
        beta1,
        beta2,
        beta3,
    })
}

impl Prop2Envelope {
    /// Sharp bound at a point: β₃ evaluated at n/2 + max{κ(t − t0) − κ·t_window, 0}.
    pub fn bound_at(&self, r: f64, elapsed: f64, n: usize) -> f64 {
        let s = n as f64 / 2.0 + (self.kappa * elapsed - self.kappa * self.t_window).max(0.0);
        self.beta3.eval(r, s)
    }

    /// Strong-form KL bound in u = (t − t0) + n, using the conservative split
    /// n/2 + κ(t − t0) ≥ min(1/2, κ)·u.
    pub fn strong_beta(&self) -> KLFunction {
        let b3 = self.beta3.clone();
        let c = self.kappa.min(0.5);
        let off = self.kappa * self.t_window;
        KLFunction::new("prop2-window-envelope", move |r, u| {
            b3.eval(r, (c * u - off).max(0.0))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    /// bound argument is elapsed time t − t0
    Weak,
    /// bound argument is t − t0 + n_(t0, t]
    Strong,
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub pass: bool,
    /// min over samples of bound − value (negative means violation)
    pub worst_margin: f64,
    pub worst_traj: usize,
    pub worst_t: f64,
    pub samples: usize,
}

const SAMPLES_PER_SEGMENT: usize = 3;

/// Check z(t) ≤ β(z0, ·) over an ensemble at segment starts, interior
/// samples, jump left limits, and the horizon.
pub fn guas_check(
    trajs: &[ComparisonTrajectory],
    beta: &KLFunction,
    mode: BoundMode,
    tol: f64,
) -> Result<BoundReport> {
    check_ensemble(trajs, |traj, t, n| {
        let u = match mode {
            BoundMode::Weak => t - traj.t0,
            BoundMode::Strong => t - traj.t0 + n as f64,
        };
        beta.eval(traj.z0, u)
    }, tol)
}

/// Check z(t) ≤ α(z0) over an ensemble (uniform-stability bound).
pub fn gus_check(
    trajs: &[ComparisonTrajectory],
    alpha: &RateFunction,
    tol: f64,
) -> Result<BoundReport> {
    check_ensemble(trajs, |traj, _, _| alpha.eval(traj.z0), tol)
}

fn check_ensemble(
    trajs: &[ComparisonTrajectory],
    bound: impl Fn(&ComparisonTrajectory, f64, usize) -> f64,
    tol: f64,
) -> Result<BoundReport> {
    if trajs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut report = BoundReport {
        pass: true,
        worst_margin: f64::INFINITY,
        worst_traj: 0,
        worst_t: trajs[0].t0,
        samples: 0,
    };
    for (i, traj) in trajs.iter().enumerate() {
        for (t, z, n) in traj.sample(SAMPLES_PER_SEGMENT)? {
            let b = bound(traj, t, n);
            if !b.is_finite() && b.is_nan() {
                return Err(Error::NonFinite { t });
            }
            let margin = b - z;
            report.samples += 1;
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_traj = i;
                report.worst_t = t;
            }
        }
    }
    report.pass = report.worst_margin >= -tol;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct DescentReport {
    pub pass: bool,
    pub windows: usize,
    /// min over windows of F(z_start) − F(z_end); infinite when absorbed
    pub worst_drop: f64,
}

/// Check that F(z) drops by at least `target` across each complete window of
/// length `t_window`; an absorbed state (z = 0) passes all later windows.
pub fn descent_check(
    traj: &ComparisonTrajectory,
    t_window: f64,
    target: f64,
    tol: f64,
) -> Result<DescentReport> {
    if !(t_window > 0.0) {
        return Err(Error::Precondition(format!(
            "t_window must be positive, got {t_window}"
        )));
    }
    let tf = &traj.transform;
    let mut report = DescentReport {
        pass: true,
        windows: 0,
        worst_drop: f64::INFINITY,
    };
    let mut ell = 0u32;
    loop {
        let ts = traj.t0 + ell as f64 * t_window;
        let te = ts + t_window;
        if te > traj.horizon * (1.0 + 1e-12) {
            break;
        }
        let zs = traj.eval(ts)?;
        let ze = traj.eval(te.min(traj.horizon))?;
        report.windows += 1;
        if zs <= 0.0 || ze <= 0.0 {
            break;
        }
        let drop = tf.forward(zs)? - tf.forward(ze)?;
        if drop < report.worst_drop {
            report.worst_drop = drop;
        }
        ell += 1;
    }
    report.pass = report.windows > 0 && report.worst_drop >= target - tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratefns::ClassTag;

    fn id_shape_closed() -> RateFunction {
        RateFunction::new("id", ClassTag::Kinf, |s| s).with_recip_antideriv(|s: f64| s.ln())
    }

    fn id_shape_table() -> RateFunction {
        RateFunction::new("id", ClassTag::Kinf, |s| s)
    }

    fn decay_spec(shape: RateFunction, psi: RateFunction) -> (ComparisonSpec, Arc<FlowTransform>) {
        let tf = Arc::new(FlowTransform::new(&shape).unwrap());
        (
            ComparisonSpec { p: FlowRate::constant(1.0), shape, psi, regime: Regime::Decay },
            tf,
        )
    }

    #[test]
    fn transform_closed_matches_table() {
        let closed = FlowTransform::new(&id_shape_closed()).unwrap();
        let table = FlowTransform::new(&id_shape_table()).unwrap();
        for &r in &[1e-10, 1e-3, 0.5, 1.0, 7.3, 1e4, 1e10] {
            let a = closed.forward(r).unwrap();
            let b = table.forward(r).unwrap();
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "F({r}): {a} vs {b}");
        }
        for &y in &[-5.0, -0.25, 0.0, 1.5, 12.0] {
            let a = closed.inverse(y).unwrap();
            let b = table.inverse(y).unwrap();
            assert!((a - b).abs() <= 1e-7 * a.max(1e-12), "Finv({y}): {a} vs {b}");
        }
    }

    #[test]
    fn decay_exponential_oracle() {
        // ẇ = −w from 1 over one unit: e⁻¹, on both transform paths
        for shape in [id_shape_closed(), id_shape_table()] {
            let (spec, tf) = decay_spec(shape, RateFunction::identity());
            let w = flow_solution(&spec, &tf, 0.0, 1.0, 1.0).unwrap();
            assert!((w - (-1f64).exp()).abs() < 1e-9, "w = {w}");
        }
    }

    #[test]
    fn zero_state_is_absorbing() {
        let (spec, tf) = decay_spec(id_shape_closed(), RateFunction::identity());
        assert_eq!(flow_solution(&spec, &tf, 0.0, 0.0, 5.0).unwrap(), 0.0);
        let gamma = ImpulseSequence::from_instants(vec![1.0, 2.0], 10.0).unwrap();
        let traj = solve_comparison(&spec, &tf, &gamma, 0.0, 0.0, 10.0).unwrap();
        assert_eq!(traj.eval(7.5).unwrap(), 0.0);
    }

    #[test]
    fn sqrt_shape_absorbs_in_finite_time() {
        // ẇ = −√w from 1 hits zero at t = 2 and stays there
        let shape = RateFunction::new("sqrt", ClassTag::Kinf, |s: f64| s.sqrt())
            .with_recip_antideriv(|s: f64| 2.0 * s.sqrt());
        let (spec, tf) = decay_spec(shape, RateFunction::identity());
        let w = flow_solution(&spec, &tf, 0.0, 1.0, 3.0).unwrap();
        assert_eq!(w, 0.0);
        let near = flow_solution(&spec, &tf, 0.0, 1.0, 1.9).unwrap();
        // closed form (1 − t/2)²
        assert!((near - 0.0025).abs() < 1e-9, "near = {near}");
    }

    #[test]
    fn growth_tanh_oracle() {
        // ẇ = tanh(w) from 1 over one unit: sinh w(1) = e·sinh 1
        let shape = RateFunction::new("tanh", ClassTag::Kinf, |s: f64| s.tanh())
            .with_recip_antideriv(|s: f64| {
                // ln sinh s, overflow-stable
                s + (-(-2.0 * s).exp()).ln_1p() - std::f64::consts::LN_2
            });
        let tf = Arc::new(FlowTransform::new(&shape).unwrap());
        let spec = ComparisonSpec {
            p: FlowRate::constant(1.0),
            shape,
            psi: RateFunction::identity(),
            regime: Regime::Growth,
        };
        let w = flow_solution(&spec, &tf, 0.0, 1.0, 1.0).unwrap();
        let expect = (std::f64::consts::E * 1f64.sinh()).asinh();
        assert!((w - expect).abs() < 1e-8, "w = {w}, expect {expect}");
        assert!((expect - 1.8782).abs() < 1e-4);
    }

    #[test]
    fn growth_tanh_matches_rk_integration() {
        use crate::simulator::{ImpulsiveSystem, InputSignal, Tolerances, integrate};
        use crate::sequences::ImpulseSequence;
        let sys = ImpulsiveSystem::new(
            1,
            0,
            |_t, x: &[f64], _u: &[f64]| vec![x[0].tanh()],
            |_t, x: &[f64], _u: &[f64]| vec![x[0]],
        );
        let gamma = ImpulseSequence::from_instants(vec![], 2.0).unwrap();
        let traj = integrate(
            &sys,
            &gamma,
            0.0,
            &[1.0],
            &InputSignal::zero(),
            2.0,
            &Tolerances::default(),
        )
        .unwrap();
        let expect = (std::f64::consts::E * 1f64.sinh()).asinh();
        let got = traj.eval(1.0).unwrap()[0];
        assert!((got - expect).abs() < 1e-6, "rk = {got}, closed = {expect}");
    }

    #[test]
    fn growth_quadratic_finite_escape() {
        // ẇ = w² from 1 escapes at t = 1
        let shape = RateFunction::new("sq", ClassTag::Kinf, |s| s * s)
            .with_recip_antideriv(|s| -1.0 / s);
        let tf = Arc::new(FlowTransform::new(&shape).unwrap());
        let spec = ComparisonSpec {
            p: FlowRate::constant(1.0),
            shape,
            psi: RateFunction::identity(),
            regime: Regime::Growth,
        };
        let ok = flow_solution(&spec, &tf, 0.0, 1.0, 0.5).unwrap();
        assert!((ok - 2.0).abs() < 1e-9);
        assert!(matches!(
            flow_solution(&spec, &tf, 0.0, 1.0, 2.0),
            Err(Error::FiniteEscape { .. })
        ));
    }

    #[test]
    fn impulsive_decay_oracle() {
        // ẇ = −w, halving jumps at 1..5: z(5) = e⁻⁵/32
        let psi = RateFunction::new("half", ClassTag::Kinf, |s| 0.5 * s);
        let (spec, tf) = decay_spec(id_shape_closed(), psi);
        let gamma = ImpulseSequence::from_instants(vec![1.0, 2.0, 3.0, 4.0, 5.0], 6.0).unwrap();
        let traj = solve_comparison(&spec, &tf, &gamma, 0.0, 1.0, 5.0).unwrap();
        let z = traj.final_value().unwrap();
        let expect = (-5f64).exp() / 32.0;
        assert!((z - expect).abs() < 1e-12 * expect.max(1.0), "z = {z}");
        assert_eq!(traj.jumps.len(), 5);
        assert!((traj.jumps[0].pre - (-1f64).exp()).abs() < 1e-12);
        assert!((traj.jumps[0].post - 0.5 * (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn no_impulse_matches_flow_solution() {
        let (spec, tf) = decay_spec(id_shape_table(), RateFunction::identity());
        let gamma = ImpulseSequence::from_instants(vec![], 10.0).unwrap();
        let traj = solve_comparison(&spec, &tf, &gamma, 1.0, 2.0, 10.0).unwrap();
        for &t in &[1.0, 2.5, 6.0, 10.0] {
            let a = traj.eval(t).unwrap();
            let b = flow_solution(&spec, &tf, 1.0, 2.0, t).unwrap();
            assert!((a - b).abs() <= 1e-9 * b.max(1e-12), "t = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn order_preserved_in_initial_state() {
        let psi = RateFunction::new("half", ClassTag::Kinf, |s| 0.5 * s);
        let (spec, tf) = decay_spec(id_shape_closed(), psi);
        let gamma = ImpulseSequence::from_instants(vec![0.7, 1.9, 3.1], 5.0).unwrap();
        let lo = solve_comparison(&spec, &tf, &gamma, 0.0, 0.5, 5.0).unwrap();
        let hi = solve_comparison(&spec, &tf, &gamma, 0.0, 2.0, 5.0).unwrap();
        for k in 0..=50 {
            let t = 0.1 * k as f64;
            assert!(lo.eval(t).unwrap() <= hi.eval(t).unwrap() + 1e-12);
        }
    }

    #[test]
    fn jump_recursion_geometric() {
        let psi = RateFunction::new("shrink", ClassTag::Kinf, |s| (2.0 / std::f64::consts::E) * s);
        let orbit = jump_recursion(&psi, 1.0, 6);
        assert_eq!(orbit.len(), 7);
        for (k, &v) in orbit.iter().enumerate() {
            let expect = (2.0 / std::f64::consts::E).powi(k as i32);
            assert!((v - expect).abs() < 1e-12, "k = {k}: {v}");
        }
    }

    #[test]
    fn jump_recursion_cube_root_map() {
        // ψ(s) = s³/2 for s ≤ 1, s^(1/3)/2 above; orbit from 4
        let psi = RateFunction::new("cube", ClassTag::Kinf, |s: f64| {
            if s <= 1.0 { s.powi(3) / 2.0 } else { s.cbrt() / 2.0 }
        });
        let orbit = jump_recursion(&psi, 4.0, 3);
        assert!((orbit[1] - 4f64.cbrt() / 2.0).abs() < 1e-12);
        assert!((orbit[1] - 0.7937).abs() < 1e-4);
        assert!((orbit[2] - 0.25).abs() < 1e-4);
        assert!((orbit[3] - 0.0078125).abs() < 1e-6);
    }

    #[test]
    fn prop1_constants_worked_example() {
        // M ≈ 1.1931, N = θ = 1.25, witness T(ε) = 2/ε → m0 = 84, T0 = 105, k0 = 86
        let witness = UniformityWitness::new(|eps| 2.0 / eps);
        let psi = RateFunction::new("half", ClassTag::Kinf, |s| 0.5 * s);
        let tf = Arc::new(FlowTransform::new(&id_shape_closed()).unwrap());
        let env = build_envelope_prop1(1.1931, 1.25, 1.25, &witness, &psi, &tf).unwrap();
        assert!((env.delta - 0.0569).abs() < 1e-4);
        assert!((env.eps0 - 0.01907).abs() < 1e-4);
        assert_eq!(env.m0, 84);
        assert!((env.t_window - 105.0).abs() < 1e-9);
        assert_eq!(env.k0, 86);
    }

    #[test]
    fn prop1_constants_trivial_example() {
        // M = 0.5, N = θ = 1, witness T(ε) = 1/ε → m0 = 2, T0 = 2, k0 = 3
        let witness = UniformityWitness::new(|eps| 1.0 / eps);
        let psi = RateFunction::new("half", ClassTag::Kinf, |s| 0.5 * s);
        let tf = Arc::new(FlowTransform::new(&id_shape_closed()).unwrap());
        let env = build_envelope_prop1(0.5, 1.0, 1.0, &witness, &psi, &tf).unwrap();
        assert_eq!((env.m0, env.k0), (2, 3));
        assert!((env.t_window - 2.0).abs() < 1e-12);
        assert!((env.descent_target() - 0.5).abs() < 1e-12);
        // η = ψ̄³
        assert!((env.eta.eval(8.0) - 1.0).abs() < 1e-12);
        // strong bound starts at η(r) and is nonincreasing in u
        let beta = env.strong_beta();
        assert!((beta.eval(8.0, 0.0) - 1.0).abs() < 1e-9);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let v = beta.eval(8.0, k as f64);
            assert!(v <= prev + 1e-12, "u = {k}: {v} > {prev}");
            prev = v;
        }
        assert!(beta.eval(8.0, 100.0) < beta.eval(8.0, 0.0) * 1e-3);
        assert_eq!(beta.eval(0.0, 3.0), 0.0);
    }

    #[test]
    fn prop1_rejects_nonpositive_margin() {
        let witness = UniformityWitness::new(|eps| 1.0 / eps);
        let psi = RateFunction::identity();
        let tf = Arc::new(FlowTransform::new(&id_shape_closed()).unwrap());
        assert!(build_envelope_prop1(1.0, 1.0, 1.0, &witness, &psi, &tf).is_err());
        assert!(build_envelope_prop1(1.2, 1.0, 1.0, &witness, &psi, &tf).is_err());
    }

    #[test]
    fn prop2_constants_trivial_example() {
        // M2 = 1, N2 = 0.5, θ = 1, witness T(ε) = 1/ε
        // δ = 0.5, ε0 = 0.25, m0 = 4, T0 = 4, k0 = 3, κ = 0.375
        let witness = UniformityWitness::new(|eps| 1.0 / eps);
        let tf = Arc::new(FlowTransform::new(&id_shape_closed()).unwrap());
        let env = build_envelope_prop2(1.0, 0.5, 1.0, &witness, &tf).unwrap();
        assert!((env.delta - 0.5).abs() < 1e-12);
        assert!((env.eps0 - 0.25).abs() < 1e-12);
        assert_eq!((env.m0, env.k0), (4, 3));
        assert!((env.t_window - 4.0).abs() < 1e-12);
        assert!((env.kappa - 0.375).abs() < 1e-12);
        // identity shape: F = ln, so ν(r) = r·e^{m0·N2} = r·e²
        let e2 = (2f64).exp();
        assert!((env.nu.eval(1.0) - e2).abs() < 1e-7);
        assert_eq!(env.nu.eval(0.0), 0.0);
        // β1(r, s) = r·e^{−m0·δ·s/2} = r·e^{−s}
        assert!((env.beta1.eval(1.0, 1.0) - (-1f64).exp()).abs() < 1e-7);
        // β2 = ν ∘ β1; β3(r, 0) = 2·β2(r, 0) = 2ν(r)
        assert!((env.beta2.eval(1.0, 1.0) - (1f64).exp()).abs() < 1e-6);
        assert!((env.beta3.eval(1.0, 0.0) - 2.0 * e2).abs() < 1e-6);
        // continuity across the branch point s = k0
        let left = env.beta3.eval(1.0, env.k0 as f64 - 1e-9);
        let right = env.beta3.eval(1.0, env.k0 as f64);
        assert!((left - right).abs() < 1e-6, "{left} vs {right}");
        // nonincreasing in s, vanishes at r = 0
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let v = env.beta3.eval(1.0, k as f64);
            assert!(v <= prev + 1e-9);
            prev = v;
        }
        assert_eq!(env.beta3.eval(0.0, 5.0), 0.0);
        // sharp form at the origin of the window scale equals β3(r, n/2)
        assert!((env.bound_at(1.0, 0.0, 4) - env.beta3.eval(1.0, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn guas_check_weak_and_strong() {
        // z(t) = e^{−(t−t0)} with identity jumps at 1, 2, 3
        let (spec, tf) = decay_spec(id_shape_closed(), RateFunction::identity());
        let gamma = ImpulseSequence::from_instants(vec![1.0, 2.0, 3.0], 4.0).unwrap();
        let traj = solve_comparison(&spec, &tf, &gamma, 0.0, 1.0, 4.0).unwrap();
        let trajs = [traj];
        let loose = KLFunction::new("loose", |r, u: f64| r * (-u / 2.0).exp());
        assert!(guas_check(&trajs, &loose, BoundMode::Weak, 1e-9).unwrap().pass);
        assert!(guas_check(&trajs, &loose, BoundMode::Strong, 1e-9).unwrap().pass);
        let tight = KLFunction::new("tight", |r, u: f64| r * (-2.0 * u).exp());
        let rep = guas_check(&trajs, &tight, BoundMode::Weak, 1e-9).unwrap();
        assert!(!rep.pass);
        assert!(rep.worst_margin < 0.0);
    }

    #[test]
    fn gus_check_uniform_bound() {
        // jumps double the state, so sup z = 2·z0 > z0 but ≤ 3·z0
        let psi = RateFunction::new("double", ClassTag::Kinf, |s| 2.0 * s);
        let (spec, tf) = decay_spec(id_shape_closed(), psi);
        let gamma = ImpulseSequence::from_instants(vec![0.5], 3.0).unwrap();
        let trajs = [solve_comparison(&spec, &tf, &gamma, 0.0, 1.0, 3.0).unwrap()];
        let alpha3 = RateFunction::new("x3", ClassTag::Kinf, |s| 3.0 * s);
        assert!(gus_check(&trajs, &alpha3, 1e-9).unwrap().pass);
        assert!(!gus_check(&trajs, &RateFunction::identity(), 1e-9).unwrap().pass);
    }

    #[test]
    fn descent_check_log_drop() {
        // ẇ = −w, no jumps: F = ln drops exactly 1 per unit window
        let (spec, tf) = decay_spec(id_shape_closed(), RateFunction::identity());
        let gamma = ImpulseSequence::from_instants(vec![], 6.0).unwrap();
        let traj = solve_comparison(&spec, &tf, &gamma, 0.0, 1.0, 6.0).unwrap();
        let rep = descent_check(&traj, 1.0, 0.9, 1e-9).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.windows, 6);
        assert!((rep.worst_drop - 1.0).abs() < 1e-7);
        assert!(!descent_check(&traj, 1.0, 1.1, 1e-9).unwrap().pass);
    }

    #[test]
    fn sample_counts_are_exclusive_at_jumps() {
        let psi = RateFunction::new("half", ClassTag::Kinf, |s| 0.5 * s);
        let (spec, tf) = decay_spec(id_shape_closed(), psi);
        let gamma = ImpulseSequence::from_instants(vec![1.0, 2.0], 3.0).unwrap();
        let traj = solve_comparison(&spec, &tf, &gamma, 0.0, 1.0, 3.0).unwrap();
        let samples = traj.sample(4).unwrap();
        // jump left limits carry the exclusive count
        let pre1 = samples
            .iter()
            .find(|(t, z, _)| *t == 1.0 && (*z - (-1f64).exp()).abs() < 1e-12)
            .unwrap();
        assert_eq!(pre1.2, 0);
        // segment start at the jump carries the inclusive count
        let post1 = samples
            .iter()
            .find(|(t, z, _)| *t == 1.0 && (*z - 0.5 * (-1f64).exp()).abs() < 1e-12)
            .unwrap();
        assert_eq!(post1.2, 1);
    }
}
