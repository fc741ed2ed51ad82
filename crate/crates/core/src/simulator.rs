//! Trajectory generation for the impulsive system: adaptive Runge–Kutta
//! integration between impulses with event-exact landing on each impulse
//! instant, jump application, and the sequence-aware input norm.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sequences::ImpulseSequence;

pub type VectorField = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type Measure = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ImpulsiveSystem {
    pub dim: usize,
    pub input_dim: usize,
    flow: VectorField,
    jump: VectorField,
    pub h: Measure,
    pub h0: Measure,
}

impl ImpulsiveSystem {
    pub fn new<F, G>(dim: usize, input_dim: usize, flow: F, jump: G) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let norm: Measure = Arc::new(|_t: f64, x: &[f64]| {
            x.iter().map(|v| v * v).sum::<f64>().sqrt()
        });
        ImpulsiveSystem {
            dim,
            input_dim,
            flow: Arc::new(flow),
            jump: Arc::new(jump),
            h: norm.clone(),
            h0: norm,
        }
    }

    pub fn with_measures(mut self, h: Measure, h0: Measure) -> Self {
        self.h = h;
        self.h0 = h0;
        self
    }

    pub fn flow(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let dx = (self.flow)(t, x, u);
        if dx.len() != self.dim || dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        Ok(dx)
    }

    pub fn jump(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let g = (self.jump)(t, x, u);
        if g.len() != self.dim || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        Ok(g)
    }
}

/// Pointwise-defined input signal; the value at an impulse instant is exact,
/// the essential bound between impulses is estimated by sampling.
#[derive(Clone)]
pub struct InputSignal {
    eval: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    pub breakpoints: Vec<f64>,
    pub dim: usize,
}

impl InputSignal {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        InputSignal {
            eval: Arc::new(f),
            breakpoints: Vec::new(),
            dim,
        }
    }

    pub fn zero() -> Self {
        InputSignal::new(0, |_| Vec::new())
    }

    pub fn with_breakpoints(mut self, pts: &[f64]) -> Self {
        self.breakpoints = pts.to_vec();
        self
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (self.eval)(t)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    /// state-norm threshold truncating the run as a finite-escape candidate
    pub blowup_guard: f64,
    /// cap on the step size; bounds the dense-output interpolation error
    pub max_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            abs: 1e-9,
            rel: 1e-8,
            blowup_guard: 1e9,
            max_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JumpRecord {
    pub t: f64,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    /// accepted integrator steps, (t, x), endpoints included
    pub points: Vec<(f64, Vec<f64>)>,
    /// ẋ at each accepted step (the integrator's last stage), aligned with
    /// `points`; empty for degenerate one-point segments
    pub derivs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t0: f64,
    /// end of the domain of definition: the horizon, or the truncation time
    pub t_end: f64,
    pub segments: Vec<Segment>,
    pub jumps: Vec<JumpRecord>,
    /// set when the blow-up guard truncated the run before the horizon
    pub truncated: bool,
}

impl Trajectory {
    /// Right-continuous evaluation by linear interpolation on the stored
    /// integrator grid of the enclosing segment.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if t < self.t0 || t > self.t_end {
            return Err(Error::OutOfRange {
                name: "t".into(),
                y: t,
                lo: self.t0,
                hi: self.t_end,
            });
        }
        // right-continuity: prefer the segment starting at t over the one
        // ending at t
        let seg = self
            .segments
            .iter()
            .find(|s| s.t_start <= t && t < s.t_end)
            .or_else(|| self.segments.last().filter(|s| t <= s.t_end))
            .ok_or_else(|| Error::Other(format!("no segment covers t = {t}")))?;
        let pts = &seg.points;
        let i = pts.partition_point(|(tp, _)| *tp <= t);
        if i == 0 {
            return Ok(pts[0].1.clone());
        }
        if i == pts.len() {
            return Ok(pts[pts.len() - 1].1.clone());
        }
        let (ta, xa) = &pts[i - 1];
        let (tb, xb) = &pts[i];
        let h = tb - ta;
        if h <= 0.0 {
            return Ok(xb.clone());
        }
        let w = (t - ta) / h;
        // cubic Hermite when stage derivatives are stored, linear otherwise
        if seg.derivs.len() == pts.len() {
            let da = &seg.derivs[i - 1];
            let db = &seg.derivs[i];
            let (w2, w3) = (w * w, w * w * w);
            let (h00, h10, h01, h11) = (
                2.0 * w3 - 3.0 * w2 + 1.0,
                w3 - 2.0 * w2 + w,
                -2.0 * w3 + 3.0 * w2,
                w3 - w2,
            );
            Ok((0..xa.len())
                .map(|j| h00 * xa[j] + h10 * h * da[j] + h01 * xb[j] + h11 * h * db[j])
                .collect())
        } else {
            Ok(xa.iter().zip(xb).map(|(a, b)| a + w * (b - a)).collect())
        }
    }

    pub fn final_state(&self) -> &[f64] {
        &self
            .segments
            .last()
            .expect("trajectory has at least one segment")
            .points
            .last()
            .expect("segment has at least one point")
            .1
    }

    /// CSV rows t, x[0..n), segment, is_jump; jump rows carry the post-jump
    /// state. Shortest-round-trip float formatting keeps output byte-stable.
    pub fn to_csv(&self) -> String {
        let dim = self.segments[0].points[0].1.len();
        let mut out = String::from("t");
        for i in 0..dim {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",segment,is_jump\n");
        for (si, seg) in self.segments.iter().enumerate() {
            for (t, x) in &seg.points {
                let is_jump = si > 0 && *t == seg.t_start && self.jumps.iter().any(|j| j.t == *t);
                out.push_str(&format!("{t}"));
                for v in x {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(&format!(",{si},{}\n", if is_jump { 1 } else { 0 }));
            }
        }
        out
    }
}

// Dormand–Prince 5(4) pair.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate the plain ODE from (t_a, x) to t_b, appending accepted steps.
/// The step is clamped to land exactly on t_b (and on declared input
/// breakpoints), never interpolated across it.
fn rk_segment(
    system: &ImpulsiveSystem,
    u: &InputSignal,
    t_a: f64,
    t_b: f64,
    x0: Vec<f64>,
    tol: &Tolerances,
    points: &mut Vec<(f64, Vec<f64>)>,
    derivs: &mut Vec<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut cuts: Vec<f64> = u
        .breakpoints
        .iter()
        .copied()
        .filter(|&c| c > t_a && c < t_b)
        .collect();
    cuts.push(t_b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut t = t_a;
    let mut x = x0;
    points.push((t, x.clone()));
    derivs.push(system.flow(t, &x, &u.eval(t))?);
    for target in cuts {
        let mut h = (target - t).min(tol.max_step).max(1e-10);
        while t < target {
            if h < 1e-13 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h });
            }
            let h_eff = h.min(target - t);
            let uval = u.eval(t);
            let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
            for stage in 0..7 {
                let ts = t + DP_C[stage] * h_eff;
                let mut xs = x.clone();
                for (j, kj) in k.iter().enumerate() {
                    let a = DP_A[stage][j];
                    if a != 0.0 {
                        for (xi, ki) in xs.iter_mut().zip(kj) {
                            *xi += h_eff * a * ki;
                        }
                    }
                }
                let us = if DP_C[stage] == 0.0 { uval.clone() } else { u.eval(ts) };
                k.push(system.flow(ts, &xs, &us)?);
            }
            let mut x5 = x.clone();
            let mut err = 0.0_f64;
            for i in 0..x.len() {
                let mut d5 = 0.0;
                let mut d4 = 0.0;
                for s in 0..7 {
                    d5 += DP_B5[s] * k[s][i];
                    d4 += DP_B4[s] * k[s][i];
                }
                x5[i] += h_eff * d5;
                let scale = tol.abs + tol.rel * x[i].abs().max(x5[i].abs());
                err = err.max((h_eff * (d5 - d4)).abs() / scale);
            }
            if err <= 1.0 {
                t += h_eff;
                x = x5;
                points.push((t, x.clone()));
                // stage 7 is f at the accepted endpoint (FSAL property)
                derivs.push(k[6].clone());
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > tol.blowup_guard {
                    return Err(Error::FiniteEscape { lo: t_a, hi: t });
                }
            }
            let factor = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = (h_eff * factor).max(1e-14).min(tol.max_step);
        }
    }
    Ok(x)
}

/// Solve the impulsive system from (t₀, x₀) to the horizon. Every impulse
/// instant in (t₀, horizon] lands exactly on a segment boundary; an instant
/// equal to t₀ triggers no jump. Blow-up truncates the trajectory with the
/// truncation time recorded rather than erroring.
pub fn integrate(
    system: &ImpulsiveSystem,
    gamma: &ImpulseSequence,
    t0: f64,
    x0: &[f64],
    u: &InputSignal,
    horizon: f64,
    tol: &Tolerances,
) -> Result<Trajectory> {
    if x0.len() != system.dim || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("x0 must be finite with the system dimension".into()));
    }
    if !(t0 >= 0.0 && t0 < horizon) {
        return Err(Error::Precondition(format!(
            "need 0 <= t0 < horizon, got t0 = {t0}, horizon = {horizon}"
        )));
    }
    if horizon > gamma.horizon() {
        return Err(Error::HorizonExceeded {
            t: horizon,
            horizon: gamma.horizon(),
        });
    }
    let events: Vec<f64> = gamma
        .instants()
        .iter()
        .copied()
        .filter(|&tk| tk > t0 && tk <= horizon)
        .collect();
    let mut segments = Vec::new();
    let mut jumps = Vec::new();
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut truncated = false;
    let mut boundaries = events.clone();
    if boundaries.last() != Some(&horizon) {
        boundaries.push(horizon);
    }
    for &t_next in &boundaries {
        let mut points = Vec::new();
        let mut derivs = Vec::new();
        match rk_segment(system, u, t, t_next, x.clone(), tol, &mut points, &mut derivs) {
            Ok(xe) => x = xe,
            Err(Error::FiniteEscape { .. }) => {
                let t_trunc = points.last().map(|(tp, _)| *tp).unwrap_or(t);
                segments.push(Segment {
                    t_start: t,
                    t_end: t_trunc,
                    points,
                    derivs,
                });
                truncated = true;
                return Ok(Trajectory {
                    t0,
                    t_end: t_trunc,
                    segments,
                    jumps,
                    truncated,
                });
            }
            Err(e) => return Err(e),
        }
        segments.push(Segment {
            t_start: t,
            t_end: t_next,
            points,
            derivs,
        });
        let is_event = events.binary_search_by(|e| e.total_cmp(&t_next)).is_ok();
        if is_event {
            let uval = u.eval(t_next);
            let g = system.jump(t_next, &x, &uval)?;
            let pre = x.clone();
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi += gi;
            }
            jumps.push(JumpRecord {
                t: t_next,
                pre,
                post: x.clone(),
            });
        }
        t = t_next;
    }
    // the post-jump state at an impulse coinciding with the horizon belongs
    // to the trajectory (right-continuity); record it as a one-point segment
    if jumps.last().is_some_and(|j| j.t == horizon) {
        segments.push(Segment {
            t_start: horizon,
            t_end: horizon,
            points: vec![(horizon, x.clone())],
            derivs: Vec::new(),
        });
    }
    Ok(Trajectory {
        t0,
        t_end: horizon,
        segments,
        jumps,
        truncated,
    })
}

/// The two-term input norm on (s, t]: max of an essential-sup sampling
/// estimate between impulses and the exact max of |u| over impulse instants
/// inside the interval.
pub fn input_norm(u: &InputSignal, gamma: &ImpulseSequence, s: f64, t: f64) -> Result<f64> {
    if !(s < t) {
        return Err(Error::Precondition("need s < t".into()));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let samples = (((t - s) * 1e4).ceil() as usize).clamp(10, 2_000_000);
    let mut ess = 0.0_f64;
    for i in 1..=samples {
        let ti = s + (t - s) * i as f64 / samples as f64;
        ess = ess.max(norm(&u.eval(ti)));
    }
    for &b in &u.breakpoints {
        if b > s && b <= t {
            ess = ess.max(norm(&u.eval(b)));
        }
    }
    let mut at_impulses = 0.0_f64;
    for &tk in gamma.instants() {
        if tk > s && tk <= t {
            at_impulses = at_impulses.max(norm(&u.eval(tk)));
        }
    }
    Ok(ess.max(at_impulses))
}

/// One run of an ensemble with the factor indices that produced it.
pub struct EnsembleRun {
    pub gamma_index: usize,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub input_index: usize,
    pub outcome: Result<Trajectory>,
}

/// Cartesian-product batch of integrate runs; per-run failures are recorded,
/// not propagated. Runs are generated in a fixed factor order so the batch
/// is deterministic given its inputs.
pub fn ensemble(
    system: &ImpulsiveSystem,
    gammas: &[ImpulseSequence],
    t0s: &[f64],
    x0s: &[Vec<f64>],
    inputs: &[InputSignal],
    horizon: f64,
    tol: &Tolerances,
) -> Vec<EnsembleRun> {
    let mut runs = Vec::new();
    for (gi, gamma) in gammas.iter().enumerate() {
        for &t0 in t0s {
            for x0 in x0s {
                for (ui, u) in inputs.iter().enumerate() {
                    runs.push(EnsembleRun {
                        gamma_index: gi,
                        t0,
                        x0: x0.clone(),
                        input_index: ui,
                        outcome: integrate(system, gamma, t0, x0, u, horizon, tol),
                    });
                }
            }
        }
    }
    runs
}
