//! Impulse-time sequences: constructors for the dwell-time classes and the
//! worked counterexamples, exact window counting, frequency scans,
//! Δ-perturbation and empirical class-membership checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Comparison slack absorbing f64 rounding in window arithmetic. Constructed
/// sequences sit exactly on class boundaries, so exact checks need it.
const COUNT_TOL: f64 = 1e-9;

/// A strictly increasing sequence of positive impulse instants, materialized
/// up to an explicit horizon. Queries beyond the horizon error rather than
/// extrapolate.
#[derive(Clone, Debug)]
pub struct ImpulseSequence {
    instants: Vec<f64>,
    horizon: f64,
}

impl ImpulseSequence {
    /// Build from explicit instants; enforces the Γ invariants.
    pub fn from_instants(instants: Vec<f64>, horizon: f64) -> Result<Self> {
        if horizon <= 0.0 || !horizon.is_finite() {
            return Err(Error::Precondition("horizon must be positive".into()));
        }
        let mut prev = 0.0;
        for (i, &t) in instants.iter().enumerate() {
            if !(t > prev) {
                return Err(Error::Precondition(format!(
                    "instants must be strictly increasing and positive (index {i}: {t} after {prev})"
                )));
            }
            prev = t;
        }
        if instants.last().is_some_and(|&t| t > horizon) {
            return Err(Error::Precondition(
                "instants extend beyond the declared horizon".into(),
            ));
        }
        Ok(ImpulseSequence { instants, horizon })
    }

    /// Materialize a lazy generator `k ↦ τ_k` (1-based) up to the horizon.
    pub fn from_generator<F>(gen: F, horizon: f64) -> Result<Self>
    where
        F: Fn(usize) -> f64,
    {
        let mut instants = Vec::new();
        let mut k = 1usize;
        loop {
            let t = gen(k);
            if t > horizon {
                break;
            }
            instants.push(t);
            k += 1;
            if k > 100_000_000 {
                return Err(Error::Precondition(
                    "sequence does not leave the horizon; finite limit point?".into(),
                ));
            }
        }
        Self::from_instants(instants, horizon)
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    /// #{k : τ_k <= x}
    fn count_le(&self, x: f64) -> usize {
        self.instants.partition_point(|&t| t <= x)
    }

    /// #{k : τ_k < x}
    fn count_lt(&self, x: f64) -> usize {
        self.instants.partition_point(|&t| t < x)
    }

    /// n^γ_(s,t]: impulses in the half-open interval (s, t].
    pub fn count(&self, s: f64, t: f64) -> Result<usize> {
        if !(0.0 <= s && s <= t) {
            return Err(Error::Precondition(format!(
                "count requires 0 <= s <= t, got s = {s}, t = {t}"
            )));
        }
        if t > self.horizon {
            return Err(Error::HorizonExceeded {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.count_le(t) - self.count_le(s))
    }

    /// Newline-delimited decimal serialization; round-trip exact (Rust's f64
    /// Display emits the shortest representation that parses back exactly).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.instants {
            out.push_str(&format!("{t}\n"));
        }
        out
    }

    pub fn from_text(text: &str, horizon: f64) -> Result<Self> {
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let t: f64 = line
                .parse()
                .map_err(|_| Error::Other(format!("line {}: bad instant '{line}'", i + 1)))?;
            v.push(t);
        }
        Self::from_instants(v, horizon)
    }
}

/// Descriptor of a sequence class, optionally with a uniformity witness
/// ε ↦ T(ε) backing uniform-subset claims.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassKind {
    Adt { n0: u32, tau: f64 },
    ReverseAdt { n0: u32, tau: f64 },
    FixedDwell { theta1: f64, theta2: f64 },
    FreqUpper { rho: f64 },
    FreqLower { rho: f64 },
    UniformLimit { rho: f64 },
}

impl ClassKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ClassKind::Adt { n0, tau } | ClassKind::ReverseAdt { n0, tau } => n0 >= 1 && tau > 0.0,
            ClassKind::FixedDwell { theta1, theta2 } => 0.0 < theta1 && theta1 <= theta2,
            ClassKind::FreqUpper { rho } | ClassKind::FreqLower { rho } | ClassKind::UniformLimit { rho } => {
                rho >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid class parameters: {self:?}")))
        }
    }

    /// The uniformity witness ε ↦ T(ε) carried by the class, where one is
    /// available by construction:
    /// ADT(n₀,τ) and reverse ADT give T(ε) = n₀/ε; fixed dwell inherits the
    /// chatter-bound-1 witness T(ε) = 1/ε.
    pub fn witness(&self) -> Option<UniformityWitness> {
        match *self {
            ClassKind::Adt { n0, .. } | ClassKind::ReverseAdt { n0, .. } => {
                Some(UniformityWitness::new(move |eps| n0 as f64 / eps))
            }
            ClassKind::FixedDwell { .. } => Some(UniformityWitness::new(|eps| 1.0 / eps)),
            _ => None,
        }
    }

    /// The frequency bound ρ this class certifies (upper for ADT/fixed-dwell,
    /// lower for reverse classes).
    pub fn rho(&self) -> Option<f64> {
        match *self {
            ClassKind::Adt { tau, .. } => Some(1.0 / tau),
            ClassKind::ReverseAdt { tau, .. } => Some(1.0 / tau),
            ClassKind::FixedDwell { theta1, .. } => Some(1.0 / theta1),
            ClassKind::FreqUpper { rho } | ClassKind::FreqLower { rho } | ClassKind::UniformLimit { rho } => {
                Some(rho)
            }
        }
    }
}

/// ε ↦ T(ε), positive and nonincreasing in ε.
#[derive(Clone)]
pub struct UniformityWitness(std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl UniformityWitness {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        UniformityWitness(std::sync::Arc::new(f))
    }

    pub fn t_for(&self, eps: f64) -> f64 {
        (self.0)(eps)
    }
}

impl std::fmt::Debug for UniformityWitness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "UniformityWitness(..)")
    }
}

/// Exact sup/inf impulse frequency over sliding windows of one length.
#[derive(Clone, Debug, serde::Serialize)]
pub struct FrequencyReport {
    pub window: f64,
    pub rho_sup: f64,
    pub rho_inf: f64,
    pub argmax_s: f64,
    pub argmin_s: f64,
    pub scan_horizon: f64,
}

/// Result of an exact ADT-bound check.
#[derive(Clone, Debug)]
pub struct AdtCheck {
    pub pass: bool,
    /// Violating window (s, t] with its count and the allowed bound.
    pub witness: Option<AdtWitness>,
}

#[derive(Clone, Debug)]
pub struct AdtWitness {
    pub s: f64,
    pub t: f64,
    pub count: usize,
    pub bound: f64,
}

// ---------------------------------------------------------------------------
// constructors

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Randomized sequence provably inside Sad(n₀, τ): each appended instant is
/// rejected against the running bound n^γ_(s,t] ≤ n₀ + (t−s)/τ over all
/// critical windows, with the exact feasibility threshold as fallback.
pub fn make_adt(n0: u32, tau: f64, seed: u64, horizon: f64) -> Result<ImpulseSequence> {
    if n0 < 1 || !(tau > 0.0) {
        return Err(Error::Precondition("make_adt requires n0 >= 1, tau > 0".into()));
    }
    let mut rng = rng_for(seed);
    let mut instants: Vec<f64> = Vec::new();
    // Appending the (k+1)-th instant at time c must keep, for every j,
    // (k+1) - j + 1 <= n0 + (c - τ_j)/τ, i.e. c >= τ_j - jτ + (k+2-n0)τ.
    // Track m = max_j (τ_j - jτ) to make the threshold O(1). The j = "s=0"
    // window (count k+1 <= n0 + c/τ) uses the sentinel τ_0 = 0, j = 0.
    let mut running_max = 0.0_f64; // over sentinel and appended instants
    loop {
        let k = instants.len();
        let prev = instants.last().copied().unwrap_or(0.0);
        let feasible_min = running_max + (k as f64 + 2.0 - n0 as f64) * tau;
        let mut placed = None;
        for _ in 0..64 {
            let gap = rng.gen_range(0.05 * tau..1.6 * tau);
            let c = prev + gap;
            if c >= feasible_min {
                placed = Some(c);
                break;
            }
        }
        let c = placed.unwrap_or_else(|| {
            // earliest admissible placement, nudged to stay strictly increasing
            feasible_min.max(prev + 1e-9 * tau) + rng.gen_range(0.0..0.05 * tau)
        });
        if c > horizon {
            break;
        }
        running_max = running_max.max(c - (k as f64 + 1.0) * tau);
        instants.push(c);
    }
    ImpulseSequence::from_instants(instants, horizon)
}

/// Gaps drawn uniformly from [θ₁, θ₂]; first instant in (0, θ₂].
pub fn make_fixed_dwell(theta1: f64, theta2: f64, seed: u64, horizon: f64) -> Result<ImpulseSequence> {
    if !(0.0 < theta1 && theta1 <= theta2) {
        return Err(Error::Precondition(
            "make_fixed_dwell requires 0 < theta1 <= theta2".into(),
        ));
    }
    let mut rng = rng_for(seed);
    let mut instants = Vec::new();
    let first = rng.gen_range(0.0..theta2);
    let mut t = if first == 0.0 { theta2 } else { first };
    while t <= horizon {
        instants.push(t);
        let gap = if theta1 == theta2 {
            theta1
        } else {
            rng.gen_range(theta1..=theta2)
        };
        t += gap;
    }
    ImpulseSequence::from_instants(instants, horizon)
}

/// The concatenated-blocks sequence: block ℓ = 1 is {1, 1.5, 2}; block ℓ ≥ 2
/// packs p_ℓ = 3·2^{ℓ−2} equally spaced instants into [2^ℓ − 1, 2^ℓ].
/// Its long-run frequency stays below 3/2 yet windows of any fixed length
/// eventually hold arbitrarily many impulses.
pub fn make_example1(horizon: f64) -> Result<ImpulseSequence> {
    if horizon < 2.0 {
        return Err(Error::Precondition("make_example1 requires horizon >= 2".into()));
    }
    let mut instants = vec![1.0, 1.5, 2.0];
    let mut l = 2u32;
    loop {
        let block_start = (2f64).powi(l as i32) - 1.0;
        if block_start > horizon {
            break;
        }
        let p = 3 * 2usize.pow(l - 2);
        for k in 0..p {
            let t = block_start + k as f64 / (p as f64 - 1.0);
            if t > horizon {
                break;
            }
            instants.push(t);
        }
        l += 1;
        if l > 60 {
            break;
        }
    }
    instants.retain(|&t| t <= horizon);
    ImpulseSequence::from_instants(instants, horizon)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Example2Direction {
    /// τ_k = k − Σ_{ℓ=2}^k 1/ℓ: gaps 1 − 1/k increasing toward 1.
    /// In Sup(1) but outside every Sad(n₀, 1).
    Slow,
    /// τ_k = k + Σ_{ℓ=2}^k 1/ℓ: gaps 1 + 1/k decreasing toward 1.
    /// In Sdn(1) but outside every Srad(n₀, 1).
    Fast,
}

pub fn make_example2(direction: Example2Direction, horizon: f64) -> Result<ImpulseSequence> {
    if horizon < 1.0 {
        return Err(Error::Precondition("make_example2 requires horizon >= 1".into()));
    }
    let mut instants = Vec::new();
    let mut partial = 0.0; // Σ_{ℓ=2}^k 1/ℓ
    let mut k = 1u64;
    loop {
        if k >= 2 {
            partial += 1.0 / k as f64;
        }
        let t = match direction {
            Example2Direction::Slow => k as f64 - partial,
            Example2Direction::Fast => k as f64 + partial,
        };
        if t > horizon {
            break;
        }
        instants.push(t);
        k += 1;
    }
    ImpulseSequence::from_instants(instants, horizon)
}

/// Block family τ^ℓ_k = 1 + (ℓ−1)n₀ + k/(ℓ−1+n₀), k = 0..n₀−1: lies in
/// Sad(n₀, 1) but the frequency-settling time grows with n₀.
pub fn make_example3(n0: u32, horizon: f64) -> Result<ImpulseSequence> {
    if n0 < 2 {
        return Err(Error::Precondition("make_example3 requires n0 >= 2".into()));
    }
    let mut instants = Vec::new();
    let mut l = 1u64;
    'outer: loop {
        let base = 1.0 + (l as f64 - 1.0) * n0 as f64;
        if base > horizon {
            break;
        }
        let denom = l as f64 - 1.0 + n0 as f64;
        for k in 0..n0 {
            let t = base + k as f64 / denom;
            if t > horizon {
                break 'outer;
            }
            instants.push(t);
        }
        l += 1;
    }
    ImpulseSequence::from_instants(instants, horizon)
}

/// Δ-perturbation: each τ*_k drawn from [τ_k − Δ, τ_k + Δ] clipped to stay
/// strictly increasing and positive, sequentially. |τ*_k − τ_k| ≤ Δ holds by
/// construction; Δ = 0 is the identity.
pub fn delta_perturb(gamma: &ImpulseSequence, delta: f64, seed: u64) -> Result<ImpulseSequence> {
    if delta < 0.0 {
        return Err(Error::Precondition("delta must be nonnegative".into()));
    }
    if delta == 0.0 {
        return Ok(gamma.clone());
    }
    let mut rng = rng_for(seed);
    const RETRIES: usize = 100;
    'attempt: for _ in 0..RETRIES {
        let mut out: Vec<f64> = Vec::with_capacity(gamma.len());
        for (i, &t) in gamma.instants().iter().enumerate() {
            let prev = out.last().copied().unwrap_or(0.0);
            let lo = (t - delta).max(prev).max(0.0);
            let hi = t + delta;
            if !(lo < hi) {
                continue 'attempt; // degenerate interval; resample the prefix
            }
            // sample in the open-below interval (lo, hi]
            let u: f64 = rng.gen_range(0.0..1.0);
            let star = hi - u * (hi - lo) * (1.0 - 1e-12);
            debug_assert!((star - t).abs() <= delta + 1e-12);
            debug_assert!(star > prev && star > 0.0);
            out.push(star);
            let _ = i;
        }
        // perturbed instants may exceed the original horizon by up to Δ
        return ImpulseSequence::from_instants(out, gamma.horizon() + delta);
    }
    Err(Error::PerturbInfeasible {
        index: 0,
        retries: RETRIES,
    })
}

// ---------------------------------------------------------------------------
// analysis

/// Exact check of n^γ_(s,t] ≤ n₀ + (t−s)/τ over every critical window within
/// the horizon. Critical windows have s just below an instant (or s = 0) and
/// t at an instant; the sup over continuous windows is attained there.
pub fn verify_adt(gamma: &ImpulseSequence, n0: u32, tau: f64) -> Result<AdtCheck> {
    if !(tau > 0.0) {
        return Err(Error::Precondition("tau must be positive".into()));
    }
    let pts = gamma.instants();
    let n = pts.len();
    // windows starting at s = 0 (count j+1..=k -> k+1 impulses)
    for k in 0..n {
        let count = k + 1;
        let bound = n0 as f64 + pts[k] / tau;
        if count as f64 > bound + COUNT_TOL {
            return Ok(AdtCheck {
                pass: false,
                witness: Some(AdtWitness {
                    s: 0.0,
                    t: pts[k],
                    count,
                    bound,
                }),
            });
        }
    }
    // windows pinching [τ_j, τ_k]: count k-j+1, length τ_k - τ_j
    for j in 0..n {
        for k in j..n {
            let count = k - j + 1;
            let bound = n0 as f64 + (pts[k] - pts[j]) / tau;
            if count as f64 > bound + COUNT_TOL {
                return Ok(AdtCheck {
                    pass: false,
                    witness: Some(AdtWitness {
                        s: pts[j],
                        t: pts[k],
                        count,
                        bound,
                    }),
                });
            }
        }
    }
    Ok(AdtCheck {
        pass: true,
        witness: None,
    })
}

/// Exact check of the reverse bound n^γ_(s,t] ≥ −n₀ + (t−s)/τ.
///
/// Critical emptiest windows open just after an instant and close just before
/// another (or run against 0 / the horizon).
pub fn verify_reverse_adt(gamma: &ImpulseSequence, n0: u32, tau: f64) -> Result<AdtCheck> {
    if !(tau > 0.0) {
        return Err(Error::Precondition("tau must be positive".into()));
    }
    // sentinel endpoints: s = 0 behaves like "just after an instant",
    // the horizon caps the right end
    let mut ends: Vec<f64> = Vec::with_capacity(gamma.len() + 2);
    ends.push(0.0);
    ends.extend_from_slice(gamma.instants());
    ends.push(gamma.horizon());
    let m = ends.len();
    for i in 0..m {
        for k in (i + 1)..m {
            // open window (ends[i], ends[k]) holds the strictly interior
            // instants: indices i+1..k-1 of the instants array offset by 1
            let interior = k - i - 1;
            let len = ends[k] - ends[i];
            let bound = -(n0 as f64) + len / tau;
            if (interior as f64) < bound - COUNT_TOL {
                return Ok(AdtCheck {
                    pass: false,
                    witness: Some(AdtWitness {
                        s: ends[i],
                        t: ends[k],
                        count: interior,
                        bound,
                    }),
                });
            }
        }
    }
    Ok(AdtCheck {
        pass: true,
        witness: None,
    })
}

/// Exact sup/inf of n^γ_(s,s+T]/T over s ∈ [0, horizon − T].
///
/// The window count as a function of s is piecewise constant with breakpoints
/// at τ_k and τ_k − T; evaluating at each breakpoint and its left limit
/// (half-open interval arithmetic, no floating ε) covers all values.
pub fn estimate_frequency(gamma: &ImpulseSequence, window: f64) -> Result<FrequencyReport> {
    let horizon = gamma.horizon();
    if !(window > 0.0 && window <= horizon) {
        return Err(Error::Precondition(format!(
            "window must satisfy 0 < T <= horizon, got T = {window}"
        )));
    }
    let s_max = horizon - window;
    let mut anchors: Vec<f64> = vec![0.0, s_max];
    for &t in gamma.instants() {
        if t <= s_max {
            anchors.push(t);
        }
        let shifted = t - window;
        if shifted >= 0.0 && shifted <= s_max {
            anchors.push(shifted);
        }
    }
    anchors.sort_by(f64::total_cmp);
    anchors.dedup();
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    let (mut arg_sup, mut arg_inf) = (0.0, 0.0);
    let mut consider = |s: f64, count: usize| {
        let freq = count as f64 / window;
        if freq > sup {
            sup = freq;
            arg_sup = s;
        }
        if freq < inf {
            inf = freq;
            arg_inf = s;
        }
    };
    for &s in &anchors {
        // window (s, s+T]
        consider(s, gamma.count_le(s + window) - gamma.count_le(s));
        // left limit: window (s-0+, s+T-0+] counts impulses in [s, s+T)
        if s > 0.0 {
            consider(s, gamma.count_lt(s + window) - gamma.count_lt(s));
        }
    }
    Ok(FrequencyReport {
        window,
        rho_sup: sup,
        rho_inf: inf,
        argmax_s: arg_sup,
        argmin_s: arg_inf,
        scan_horizon: horizon,
    })
}

/// Per-count-span tables enabling O(n) per-T frequency checks after one
/// O(n²) pass.
pub struct SpanTable {
    /// min_span[d] = min_j (τ_{j+d} − τ_j): tightest span holding d+1 impulses.
    min_span: Vec<f64>,
    /// max over augmented endpoints [0, τ_1, .., τ_n, horizon] of
    /// B[i+m] − B[i]: widest open span holding m−1 interior impulses.
    max_span: Vec<f64>,
}

impl SpanTable {
    pub fn build(gamma: &ImpulseSequence) -> SpanTable {
        let pts = gamma.instants();
        let n = pts.len();
        let mut min_span = vec![f64::INFINITY; n];
        for d in 0..n {
            let mut best = f64::INFINITY;
            for j in 0..n - d {
                let span = pts[j + d] - pts[j];
                if span < best {
                    best = span;
                }
            }
            min_span[d] = best;
        }
        let mut aug: Vec<f64> = Vec::with_capacity(n + 2);
        aug.push(0.0);
        aug.extend_from_slice(pts);
        aug.push(gamma.horizon());
        let m = aug.len();
        let mut max_span = vec![0.0; m];
        for d in 1..m {
            let mut best = 0.0_f64;
            for j in 0..m - d {
                let span = aug[j + d] - aug[j];
                if span > best {
                    best = span;
                }
            }
            max_span[d] = best;
        }
        SpanTable { min_span, max_span }
    }

    /// Does every window of length ≥ T satisfy count/length ≤ bound?
    pub fn upper_ok(&self, t_min: f64, bound: f64) -> bool {
        self.find_upper_violation(t_min, bound).is_none()
    }

    /// Returns (count, span) of a violating pinched window, if any.
    pub fn find_upper_violation(&self, t_min: f64, bound: f64) -> Option<(usize, f64)> {
        for (d, &span) in self.min_span.iter().enumerate() {
            if !span.is_finite() {
                continue;
            }
            let count = (d + 1) as f64;
            let eff = span.max(t_min);
            if count > bound * eff + COUNT_TOL {
                return Some((d + 1, eff));
            }
        }
        None
    }

    /// Does every window of length ≥ T satisfy count/length ≥ bound?
    /// (Windows truncated at the horizon are included via the sentinel.)
    pub fn lower_ok(&self, t_min: f64, bound: f64) -> bool {
        self.find_lower_violation(t_min, bound).is_none()
    }

    pub fn find_lower_violation(&self, t_min: f64, bound: f64) -> Option<(usize, f64)> {
        for (d, &span) in self.max_span.iter().enumerate().skip(1) {
            let interior = (d - 1) as f64;
            if span > t_min && interior < bound * span - COUNT_TOL {
                return Some((d - 1, span));
            }
            // span-limited-to-T window fully inside a wide gap
            if span > t_min && interior < bound * t_min - COUNT_TOL {
                return Some((d - 1, t_min));
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrequencyMode {
    Upper,
    Lower,
}

/// Smallest scanned window length T such that every window of length ≥ T
/// within the horizon respects ρ ± ε. Scans a geometric ladder (factor 1.25)
/// and refines by bisection between the last failing and first passing T.
pub fn find_t_for_epsilon(
    gamma: &ImpulseSequence,
    rho: f64,
    eps: f64,
    mode: FrequencyMode,
) -> Result<Option<f64>> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    let spans = SpanTable::build(gamma);
    let passes = |t: f64| match mode {
        FrequencyMode::Upper => spans.upper_ok(t, rho + eps),
        FrequencyMode::Lower => spans.lower_ok(t, rho - eps),
    };
    let t_cap = gamma.horizon() / 2.0;
    let mut t = 0.25_f64.min(t_cap);
    let mut last_fail: Option<f64> = None;
    let mut first_pass: Option<f64> = None;
    while t <= t_cap {
        if passes(t) {
            first_pass = Some(t);
            break;
        }
        last_fail = Some(t);
        t *= 1.25;
    }
    if first_pass.is_none() && t > t_cap && passes(t_cap) {
        // ladder overshot the cap; the cap itself may still pass
        last_fail = last_fail.filter(|&f| f < t_cap);
        first_pass = Some(t_cap);
    }
    let Some(hi) = first_pass else {
        return Ok(None);
    };
    let Some(mut lo) = last_fail else {
        return Ok(Some(hi)); // smallest scanned T already passes
    };
    let mut hi = hi;
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Lemma-style parameter derivation: a family uniformly frequency-bounded by
/// (ρ, ε ↦ T) lies in Sad(n₀, τ) with τ = 1/(ρ+ε) and n₀ = ⌈T/τ⌉.
pub fn derive_adt_params(rho: f64, t_window: f64, eps: f64) -> Result<(u32, f64)> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    let tau = 1.0 / (rho + eps);
    let n0 = (t_window / tau).ceil() as u32;
    Ok((n0.max(1), tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integers(horizon: f64) -> ImpulseSequence {
        ImpulseSequence::from_generator(|k| k as f64, horizon).unwrap()
    }

    #[test]
    fn count_integers() {
        let g = integers(100.0);
        assert_eq!(g.count(0.0, 3.5).unwrap(), 3);
        assert_eq!(g.count(1.0, 1.0).unwrap(), 0);
        assert_eq!(g.count(0.5, 2.0).unwrap(), 2); // (0.5, 2] holds 1, 2
    }

    #[test]
    fn count_beyond_horizon_errors() {
        let g = integers(10.0);
        assert!(matches!(
            g.count(0.0, 10.5),
            Err(Error::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn example2_slow_count_to_ten() {
        // τ_12 ≈ 9.897 <= 10 < τ_13 ≈ 10.820
        let g = make_example2(Example2Direction::Slow, 20.0).unwrap();
        assert_eq!(g.count(0.0, 10.0).unwrap(), 12);
        assert!((g.instants()[11] - 9.8968).abs() < 1e-3);
        assert!((g.instants()[12] - 10.8199).abs() < 1e-3);
        // first gap is 1 - 1/2
        assert!((g.instants()[1] - g.instants()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn example2_fast_gaps_decrease_toward_one() {
        let g = make_example2(Example2Direction::Fast, 50.0).unwrap();
        let pts = g.instants();
        for k in 1..pts.len() {
            let gap = pts[k] - pts[k - 1];
            let expect = 1.0 + 1.0 / (k as f64 + 1.0);
            assert!((gap - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn example1_block_two() {
        let g = make_example1(16.0).unwrap();
        let pts = g.instants();
        assert_eq!(&pts[..3], &[1.0, 1.5, 2.0]);
        // block ℓ=2: p₂ = 3 instants {3, 3.5, 4}
        assert_eq!(&pts[3..6], &[3.0, 3.5, 4.0]);
    }

    #[test]
    fn example1_longrun_frequency_below_three_halves() {
        let horizon = 128.0;
        let g = make_example1(horizon).unwrap();
        for t in [64.0, 96.0, 128.0] {
            let ratio = g.count(0.0, t).unwrap() as f64 / t;
            assert!(ratio <= 1.6, "ratio {ratio} at t = {t}");
        }
    }

    #[test]
    fn example3_first_block() {
        let g = make_example3(2, 10.0).unwrap();
        assert_eq!(&g.instants()[..2], &[1.0, 1.5]);
        // intra-block gap at block ℓ is 1/(ℓ-1+n0)
        let pts = g.instants();
        assert!((pts[3] - pts[2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn example3_in_sad() {
        for n0 in [2u32, 3] {
            let g = make_example3(n0, 200.0).unwrap();
            let chk = verify_adt(&g, n0, 1.0).unwrap();
            assert!(chk.pass, "example3 n0={n0} left Sad({n0},1): {:?}", chk.witness);
        }
    }

    #[test]
    fn adt_construction_verifies() {
        for seed in 0..20 {
            let g = make_adt(2, 1.25, seed, 200.0).unwrap();
            assert!(verify_adt(&g, 2, 1.25).unwrap().pass, "seed {seed}");
        }
        let g = make_adt(1, 1.0, 99, 300.0).unwrap();
        assert!(verify_adt(&g, 1, 1.0).unwrap().pass);
    }

    #[test]
    fn adt_chatter_bound_at_origin() {
        // n0=1, τ=10, horizon 100 → at most 11 instants
        let g = make_adt(1, 10.0, 3, 100.0).unwrap();
        assert!(g.len() <= 11, "{} instants", g.len());
    }

    #[test]
    fn integers_pass_adt_1_1() {
        assert!(verify_adt(&integers(200.0), 1, 1.0).unwrap().pass);
    }

    #[test]
    fn example2_slow_fails_adt_with_witness() {
        let g = make_example2(Example2Direction::Slow, 100.0).unwrap();
        let chk = verify_adt(&g, 1, 1.0).unwrap();
        assert!(!chk.pass);
        let w = chk.witness.unwrap();
        // contradiction pair: count exceeds n0 + length once Σ 1/ℓ ≥ 2,
        // which happens from k = 11 onward
        assert!(w.count as f64 > w.bound);
    }

    #[test]
    fn fixed_dwell_degenerate_is_arithmetic() {
        let g = make_fixed_dwell(1.0, 1.0, 5, 30.0).unwrap();
        let pts = g.instants();
        let c = pts[0];
        assert!(c > 0.0 && c <= 1.0);
        for (i, &t) in pts.iter().enumerate() {
            assert!((t - (c + i as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_dwell_instant_count() {
        let g = make_fixed_dwell(0.8, 0.8, 11, 100.0).unwrap();
        let expect = (100.0_f64 / 0.8).floor();
        assert!((g.len() as f64 - expect).abs() <= 1.0);
    }

    #[test]
    fn fixed_dwell_in_adt_and_reverse() {
        for seed in 0..20 {
            let g = make_fixed_dwell(1.0, 2.0, seed, 300.0).unwrap();
            assert!(verify_adt(&g, 1, 1.0).unwrap().pass, "seed {seed}");
            assert!(verify_reverse_adt(&g, 1, 2.0).unwrap().pass, "seed {seed}");
        }
    }

    #[test]
    fn frequency_integers_window_two() {
        let rep = estimate_frequency(&integers(100.0), 2.0).unwrap();
        assert_eq!(rep.rho_sup, 1.0);
        assert_eq!(rep.rho_inf, 1.0);
    }

    #[test]
    fn frequency_example1_window_one() {
        let g = make_example1(128.0).unwrap();
        let rep = estimate_frequency(&g, 1.0).unwrap();
        // block ℓ=7 packs p₇ = 96 instants into length 1
        assert!(rep.rho_sup >= 95.0, "rho_sup = {}", rep.rho_sup);
    }

    #[test]
    fn adt_frequency_lemma1i() {
        // window length n0/ε certifies frequency ≤ 1/τ + ε
        let g = make_adt(2, 1.25, 7, 500.0).unwrap();
        let eps = 0.1;
        let t = 2.0 / eps;
        let rep = estimate_frequency(&g, t).unwrap();
        assert!(rep.rho_sup <= 1.0 / 1.25 + eps + 1e-9);
    }

    #[test]
    fn find_t_integers() {
        let g = integers(200.0);
        let t = find_t_for_epsilon(&g, 1.0, 0.5, FrequencyMode::Upper)
            .unwrap()
            .unwrap();
        // a window of length just above 1 can hold 2 impulses, so the exact
        // threshold for frequency <= 1.5 is 4/3
        let expect = 4.0 / 3.0;
        assert!(t >= expect - 1e-9 && t <= expect * 1.002, "t = {t}");
    }

    #[test]
    fn find_t_adt_lemma_bound() {
        let g = make_adt(2, 1.0, 13, 400.0).unwrap();
        let t = find_t_for_epsilon(&g, 1.0, 0.5, FrequencyMode::Upper)
            .unwrap()
            .unwrap();
        assert!(t <= 4.0 * 1.002 + 1e-9, "t = {t}"); // T = n0/ε = 4 suffices
    }

    #[test]
    fn derive_adt_roundtrip() {
        let (n0, tau) = derive_adt_params(1.0, 4.0, 0.25).unwrap();
        assert_eq!(n0, 5);
        assert!((tau - 0.8).abs() < 1e-12);
        let (n0, tau) = derive_adt_params(0.0, 1.0, 1.0).unwrap();
        assert_eq!(n0, 1);
        assert!((tau - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_params_reverify() {
        // sequences built with ADT(2, 1.25) certify (ρ=0.8, T=n0/ε) and the
        // derived (n₀, τ) passes verify_adt again
        for seed in 0..20 {
            let g = make_adt(2, 1.25, seed, 300.0).unwrap();
            let eps = 0.2;
            let t = 2.0 / eps;
            let (n0, tau) = derive_adt_params(0.8, t, eps).unwrap();
            assert!(verify_adt(&g, n0, tau).unwrap().pass, "seed {seed}");
        }
    }

    #[test]
    fn perturb_identity_and_bounds() {
        let g = integers(50.0);
        let same = delta_perturb(&g, 0.0, 1).unwrap();
        assert_eq!(same.instants(), g.instants());
        let p = delta_perturb(&g, 0.25, 42).unwrap();
        assert_eq!(p.len(), g.len());
        for (a, b) in p.instants().iter().zip(g.instants()) {
            assert!((a - b).abs() <= 0.25 + 1e-12);
        }
        for w in p.instants().windows(2) {
            let gap = w[1] - w[0];
            assert!(gap > 0.0 && gap >= 0.5 - 1e-9 && gap <= 1.5 + 1e-9);
        }
    }

    #[test]
    fn perturbed_adt_keeps_frequency_bound() {
        // Lemma 1(v): Δ-perturbations stay in Sup(1/τ)
        let g = make_adt(2, 1.25, 17, 400.0).unwrap();
        let p = delta_perturb(&g, 0.3, 18).unwrap();
        let rep = estimate_frequency(&p, 60.0).unwrap();
        assert!(rep.rho_sup <= 1.0 / 1.25 + 0.2, "rho = {}", rep.rho_sup);
    }

    #[test]
    fn serialization_roundtrip_exact() {
        let g = make_adt(2, 1.25, 7, 100.0).unwrap();
        let text = g.to_text();
        let back = ImpulseSequence::from_text(&text, g.horizon()).unwrap();
        assert_eq!(back.instants(), g.instants());
    }

    #[test]
    fn rejects_nonincreasing() {
        assert!(ImpulseSequence::from_instants(vec![1.0, 1.0], 10.0).is_err());
        assert!(ImpulseSequence::from_instants(vec![0.0, 1.0], 10.0).is_err());
        assert!(ImpulseSequence::from_instants(vec![-0.5], 10.0).is_err());
    }
}
