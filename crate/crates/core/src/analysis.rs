//! Empirical stability verification over trajectory ensembles: decay
//! envelopes in weak/strong abscissae, uniform-stability and attractivity
//! estimation, and input-gain estimation with monotone regression.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ratefns::RateFunction;
use crate::sequences::ImpulseSequence;
use crate::simulator::{ImpulsiveSystem, Trajectory};

pub const DEFAULT_BINS: usize = 200;

/// Fraction of the horizon treated as the late-time window for gain reads.
pub const LATE_WINDOW_FRACTION: f64 = 0.2;

/// One trajectory plus the context the stability definitions need.
pub struct Run {
    pub trajectory: Trajectory,
    pub gamma: ImpulseSequence,
    /// ‖u‖ over the run, 0 for zero-input runs
    pub input_norm: f64,
}

impl Run {
    pub fn new(trajectory: Trajectory, gamma: ImpulseSequence) -> Self {
        Run { trajectory, gamma, input_norm: 0.0 }
    }

    pub fn with_input_norm(mut self, norm: f64) -> Self {
        self.input_norm = norm;
        self
    }

    fn initial_state(&self) -> (f64, &[f64]) {
        let seg = &self.trajectory.segments[0];
        (self.trajectory.t0, &seg.points[0].1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeMode {
    /// abscissa = t − t0
    Weak,
    /// abscissa = t − t0 + n_(t0, t]
    Strong,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeBin {
    pub abscissa: f64,
    pub sup: f64,
    pub samples: usize,
}

/// Per-initial-measure-bucket upper envelope: bin-wise suprema of the output
/// measure against the chosen abscissa.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeEstimate {
    pub mode: EnvelopeMode,
    /// supremum of h°(t0, x0) over the bucket
    pub r0: f64,
    pub bins: Vec<EnvelopeBin>,
}

impl EnvelopeEstimate {
    /// Supremum over all bins; the envelope's own uniform bound.
    pub fn sup(&self) -> f64 {
        self.bins.iter().map(|b| b.sup).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("abscissa,sup,samples\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{}\n", b.abscissa, b.sup, b.samples));
        }
        out
    }
}

/// Sign-test evidence that bin suprema trend downward.
#[derive(Clone, Debug, Serialize)]
pub struct DecayEvidence {
    pub decreases: usize,
    pub increases: usize,
    /// one-sided binomial p-value for "decreases are chance"
    pub p_value: f64,
    pub decaying: bool,
}

/// Raw material for an envelope: per run, the initial measure and the
/// sampled (abscissa, value) points.
pub type RunPoints = (f64, Vec<(f64, f64)>);

/// Sample a full-system run under the system's measures.
pub fn run_points(system: &ImpulsiveSystem, run: &Run, mode: EnvelopeMode) -> Result<RunPoints> {
    let (t0, x0) = run.initial_state();
    let r0 = (system.h0)(t0, x0);
    let mut pts = Vec::new();
    for seg in &run.trajectory.segments {
        // impulses land only on segment boundaries, so the jump count is
        // constant inside a segment and exclusive at its right endpoint
        let n_seg = run.gamma.count(t0, seg.t_start)?;
        for (t, x) in &seg.points {
            let a = match mode {
                EnvelopeMode::Weak => t - t0,
                EnvelopeMode::Strong => t - t0 + n_seg as f64,
            };
            pts.push((a, (system.h)(*t, x)));
        }
    }
    Ok((r0, pts))
}

fn bucket_key(r0: f64) -> u64 {
    // cluster initial measures that agree to ~9 digits into one bucket
    let scaled = if r0 == 0.0 { 0.0 } else { r0 / 10f64.powf(r0.abs().log10().floor() - 8.0) };
    scaled.round() as u64
}

/// Bin-wise suprema grouped by initial-measure bucket. Buckets are ordered
/// by r0; bins with no samples are dropped, so abscissae are strictly
/// increasing within each estimate.
pub fn envelope_from_points(
    runs: &[RunPoints],
    mode: EnvelopeMode,
    bins: usize,
) -> Result<Vec<EnvelopeEstimate>> {
    if runs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if bins == 0 {
        return Err(Error::Precondition("need at least one bin".into()));
    }
    let mut buckets: Vec<(u64, f64, Vec<&RunPoints>)> = Vec::new();
    for rp in runs {
        let key = bucket_key(rp.0);
        match buckets.iter_mut().find(|(k, _, _)| *k == key) {
            Some((_, sup, members)) => {
                *sup = sup.max(rp.0);
                members.push(rp);
            }
            None => buckets.push((key, rp.0, vec![rp])),
        }
    }
    buckets.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut out = Vec::new();
    for (_, r0, members) in buckets {
        let a_max = members
            .iter()
            .flat_map(|rp| rp.1.iter().map(|(a, _)| *a))
            .fold(0.0, f64::max);
        let width = if a_max > 0.0 { a_max / bins as f64 } else { 1.0 };
        let mut sups = vec![f64::NEG_INFINITY; bins];
        let mut counts = vec![0usize; bins];
        for rp in &members {
            for &(a, v) in &rp.1 {
                let i = ((a / width) as usize).min(bins - 1);
                sups[i] = sups[i].max(v);
                counts[i] += 1;
            }
        }
        let bins_out: Vec<EnvelopeBin> = (0..bins)
            .filter(|&i| counts[i] > 0)
            .map(|i| EnvelopeBin {
                abscissa: (i as f64 + 0.5) * width,
                sup: sups[i],
                samples: counts[i],
            })
            .collect();
        out.push(EnvelopeEstimate { mode, r0, bins: bins_out });
    }
    Ok(out)
}

/// Envelope of a full-system ensemble. When a gain curve is supplied, its
/// value at each run's input norm is subtracted (clamped at zero) before the
/// suprema, isolating the decay part of the bound.
pub fn build_envelope(
    system: &ImpulsiveSystem,
    runs: &[Run],
    mode: EnvelopeMode,
    bins: usize,
    gain: Option<&GainCurve>,
) -> Result<Vec<EnvelopeEstimate>> {
    let mut pts = Vec::with_capacity(runs.len());
    for run in runs {
        let (r0, mut p) = run_points(system, run, mode)?;
        if let Some(g) = gain {
            let offset = g.eval(run.input_norm);
            for (_, v) in &mut p {
                *v = (*v - offset).max(0.0);
            }
        }
        pts.push((r0, p));
    }
    envelope_from_points(&pts, mode, bins)
}

/// One-sided sign test on successive bin-sup differences; ties are skipped.
pub fn decay_evidence(estimate: &EnvelopeEstimate, significance: f64) -> DecayEvidence {
    let mut dec = 0usize;
    let mut inc = 0usize;
    for w in estimate.bins.windows(2) {
        if w[1].sup < w[0].sup {
            dec += 1;
        } else if w[1].sup > w[0].sup {
            inc += 1;
        }
    }
    let n = dec + inc;
    // P[Binomial(n, 1/2) >= dec]
    let p_value = if n == 0 { 1.0 } else { binom_tail(n, dec) };
    DecayEvidence { decreases: dec, increases: inc, p_value, decaying: p_value < significance }
}

fn binom_tail(n: usize, k: usize) -> f64 {
    // sum_{j>=k} C(n,j) / 2^n, evaluated in log space for large n
    let mut total = 0.0;
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_c = 0.0; // ln C(n, 0)
    for j in 0..=n {
        if j >= k {
            total += (ln_c + ln_half_n).exp();
        }
        if j < n {
            ln_c += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
        }
    }
    total.min(1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    /// min over samples of bound − value
    pub worst_margin: f64,
    pub worst_run: usize,
    pub worst_t: f64,
    pub samples: usize,
}

/// Pointwise check h(t, x(t)) ≤ α(h°(t0, x0)) over the ensemble.
pub fn check_gus(
    system: &ImpulsiveSystem,
    runs: &[Run],
    alpha: &RateFunction,
    tol: f64,
) -> Result<BoundCheck> {
    if runs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut check = BoundCheck {
        pass: true,
        worst_margin: f64::INFINITY,
        worst_run: 0,
        worst_t: 0.0,
        samples: 0,
    };
    for (i, run) in runs.iter().enumerate() {
        let (t0, x0) = run.initial_state();
        let bound = alpha.eval((system.h0)(t0, x0));
        for seg in &run.trajectory.segments {
            for (t, x) in &seg.points {
                let margin = bound - (system.h)(*t, x);
                check.samples += 1;
                if margin < check.worst_margin {
                    check.worst_margin = margin;
                    check.worst_run = i;
                    check.worst_t = *t;
                }
            }
        }
    }
    check.pass = check.worst_margin >= -tol;
    Ok(check)
}

#[derive(Clone, Debug, Serialize)]
pub struct AttractivityRow {
    pub eps: f64,
    pub r: f64,
    /// smallest sampled T with h ≤ ε on [t0 + T, horizon]; None when no run
    /// qualifies for this R
    pub t: Option<f64>,
    /// false when some qualifying run still exceeds ε at its final sample
    pub attained: bool,
    pub runs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttractivityTable {
    pub rows: Vec<AttractivityRow>,
}

impl AttractivityTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,r,t,attained,runs\n");
        for row in &self.rows {
            let t = row.t.map_or(String::from("nan"), |v| v.to_string());
            out.push_str(&format!("{},{},{t},{},{}\n", row.eps, row.r, row.attained, row.runs));
        }
        out
    }
}

/// Uniform-attractivity estimate: for every (ε, R) pair, the largest
/// last-excursion time over runs starting with h° ≤ R.
pub fn estimate_attractivity(
    system: &ImpulsiveSystem,
    runs: &[Run],
    eps_list: &[f64],
    r_list: &[f64],
) -> Result<AttractivityTable> {
    if runs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    // precompute per run: h°(t0, x0) and the sampled (t − t0, h) path
    let mut prepared = Vec::with_capacity(runs.len());
    for run in runs {
        let (t0, x0) = run.initial_state();
        let r0 = (system.h0)(t0, x0);
        let mut path = Vec::new();
        for seg in &run.trajectory.segments {
            for (t, x) in &seg.points {
                path.push((t - t0, (system.h)(*t, x)));
            }
        }
        prepared.push((r0, path));
    }
    let mut rows = Vec::new();
    for &r in r_list {
        for &eps in eps_list {
            let mut t_needed = 0.0f64;
            let mut attained = true;
            let mut count = 0usize;
            for (r0, path) in &prepared {
                if *r0 > r * (1.0 + 1e-12) {
                    continue;
                }
                count += 1;
                let last_excess = path
                    .iter()
                    .rev()
                    .find(|(_, h)| *h > eps)
                    .map(|(dt, _)| *dt);
                if let Some(dt) = last_excess {
                    if (dt - path.last().expect("nonempty path").0).abs() < 1e-12 {
                        attained = false;
                    }
                    // first sample strictly after the last excursion
                    let t_ok = path
                        .iter()
                        .find(|(d, _)| *d > dt)
                        .map_or(dt, |(d, _)| *d);
                    t_needed = t_needed.max(t_ok);
                }
            }
            rows.push(AttractivityRow {
                eps,
                r,
                t: if count > 0 { Some(t_needed) } else { None },
                attained: count > 0 && attained,
                runs: count,
            });
        }
    }
    Ok(AttractivityTable { rows })
}

/// Estimated input-to-state gain: raw late-time suprema per amplitude plus
/// a nondecreasing least-squares fit.
#[derive(Clone, Debug, Serialize)]
pub struct GainCurve {
    pub amplitudes: Vec<f64>,
    pub raw: Vec<f64>,
    pub fitted: Vec<f64>,
}

impl GainCurve {
    /// Piecewise-linear read of the fitted curve, clamped at the ends.
    pub fn eval(&self, a: f64) -> f64 {
        let n = self.amplitudes.len();
        if n == 0 {
            return 0.0;
        }
        if a <= self.amplitudes[0] {
            return self.fitted[0];
        }
        if a >= self.amplitudes[n - 1] {
            return self.fitted[n - 1];
        }
        let i = self.amplitudes.partition_point(|&x| x <= a) - 1;
        let (a0, a1) = (self.amplitudes[i], self.amplitudes[i + 1]);
        let w = (a - a0) / (a1 - a0);
        self.fitted[i] * (1.0 - w) + self.fitted[i + 1] * w
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("amplitude,raw,fitted\n");
        for i in 0..self.amplitudes.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.amplitudes[i], self.raw[i], self.fitted[i]
            ));
        }
        out
    }
}

/// Late-time sup of h per amplitude; truncated (blown-up) runs force the
/// gain to ∞ from that amplitude on. Amplitudes must be given ascending.
pub fn iss_gain(system: &ImpulsiveSystem, groups: &[(f64, Vec<Run>)]) -> Result<GainCurve> {
    if groups.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut amplitudes = Vec::with_capacity(groups.len());
    let mut raw = Vec::with_capacity(groups.len());
    let mut diverged = false;
    for (a, runs) in groups {
        if let Some(prev) = amplitudes.last() {
            if *a <= *prev {
                return Err(Error::Precondition("amplitudes must be strictly ascending".into()));
            }
        }
        amplitudes.push(*a);
        if runs.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        diverged |= runs.iter().any(|r| r.trajectory.truncated);
        if diverged {
            raw.push(f64::INFINITY);
            continue;
        }
        let mut sup = 0.0f64;
        for run in runs {
            let t0 = run.trajectory.t0;
            let cut = t0 + (1.0 - LATE_WINDOW_FRACTION) * (run.trajectory.t_end - t0);
            for seg in &run.trajectory.segments {
                for (t, x) in &seg.points {
                    if *t >= cut {
                        sup = sup.max((system.h)(*t, x));
                    }
                }
            }
        }
        raw.push(sup);
    }
    let fitted = isotonic_nondecreasing(&raw);
    Ok(GainCurve { amplitudes, raw, fitted })
}

/// Pool-adjacent-violators least-squares fit, nondecreasing.
fn isotonic_nondecreasing(y: &[f64]) -> Vec<f64> {
    // (mean, weight) blocks; infinities stay as their own blocks
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1.0));
        while blocks.len() >= 2 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            blocks.pop();
            if m1.is_infinite() || m2.is_infinite() {
                blocks.push((f64::INFINITY, w1 + w2));
            } else {
                blocks.push(((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2));
            }
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (m, w) in blocks {
        for _ in 0..(w as usize) {
            out.push(m);
        }
    }
    out
}
