//! Run configuration: a single TOML document with a versioned schema.
//! Unknown keys are hard errors — a silently ignored misspelling of a rate
//! definition would invalidate every certificate downstream.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use impulsive_core::certificates::{FlowRate, FlowShape, LyapunovCandidate, TailHint};
use impulsive_core::presets;
use impulsive_core::ratefns::{ClassTag, RateFunction};
use impulsive_core::sequences::{
    make_adt, make_example1, make_example2, make_example3, make_fixed_dwell, Example2Direction,
    ImpulseSequence,
};
use impulsive_core::simulator::{ImpulsiveSystem, InputSignal, Tolerances};

use crate::expr;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// master seed; TOML integers are signed 64-bit, so values above
    /// i64::MAX must be passed via the --seed flag instead
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifySpec>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).context("config parse failed")?;
        if cfg.schema != SCHEMA_VERSION {
            bail!(
                "unsupported schema version {} (this build reads version {SCHEMA_VERSION})",
                cfg.schema
            );
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("config serialization failed")
    }

    pub fn empty() -> RunConfig {
        RunConfig {
            schema: SCHEMA_VERSION,
            output_dir: None,
            seed: None,
            system: None,
            sequence: None,
            experiment: None,
            certify: None,
            classify: None,
        }
    }
}

// ---------------------------------------------------------------------------
// System

/// Either a named preset or a scalar system defined by expressions in
/// `t`, `x`, `u` (jump expressions give the state increment applied at an
/// impulse, matching the integrator's convention).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    /// state measure h(t, x); defaults to |x|
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    /// initial-data measure h°(t, x); defaults to |x|
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<String>,
}

fn compile_txu(src: &str, input_dim: usize) -> Result<Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>> {
    let e = expr::parse(src)?;
    let mut vars = Vec::new();
    e.variables(&mut vars);
    for v in &vars {
        match v.as_str() {
            "t" | "x" => {}
            "u" if input_dim >= 1 => {}
            other => bail!("map expression may use t, x{}: found '{other}'", if input_dim >= 1 { ", u" } else { "" }),
        }
    }
    Ok(Arc::new(move |t: f64, x: &[f64], u: &[f64]| {
        let val = e
            .eval(&|name| match name {
                "t" => Some(t),
                "x" => Some(x[0]),
                "u" => Some(if u.is_empty() { 0.0 } else { u[0] }),
                _ => None,
            })
            .expect("validated map expression");
        vec![val]
    }))
}

fn compile_tx(src: &str) -> Result<Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>> {
    let e = expr::parse(src)?;
    let mut vars = Vec::new();
    e.variables(&mut vars);
    for v in &vars {
        if v != "t" && v != "x" {
            bail!("measure expression may use only t and x, found '{v}'");
        }
    }
    Ok(Arc::new(move |t: f64, x: &[f64]| {
        e.eval(&|name| match name {
            "t" => Some(t),
            "x" => Some(x[0]),
            _ => None,
        })
        .expect("validated measure expression")
    }))
}

impl SystemSpec {
    pub fn preset_only(name: &str) -> SystemSpec {
        SystemSpec {
            preset: Some(name.to_string()),
            flow: None,
            jump: None,
            input_dim: None,
            h: None,
            h0: None,
        }
    }

    /// Resolve to a system plus, when the spec names a preset, the bundled
    /// preset record.
    pub fn resolve(&self) -> Result<(ImpulsiveSystem, Option<presets::Preset>)> {
        if let Some(name) = &self.preset {
            if self.flow.is_some() || self.jump.is_some() {
                bail!("system spec mixes a preset name with expression-defined maps");
            }
            let p = presets::by_name(name).ok_or_else(|| {
                anyhow!(
                    "unknown preset '{name}' (available: {})",
                    presets::preset_names().join(", ")
                )
            })?;
            return Ok((p.system.clone(), Some(p)));
        }
        let flow_src = self
            .flow
            .as_ref()
            .ok_or_else(|| anyhow!("system spec needs either a preset or a flow expression"))?;
        let jump_src = self.jump.as_ref().map(String::as_str).unwrap_or("0");
        let input_dim = self.input_dim.unwrap_or(0);
        if input_dim > 1 {
            bail!("expression-defined systems are scalar: input_dim must be 0 or 1");
        }
        let flow = compile_txu(flow_src, input_dim)?;
        let jump = compile_txu(jump_src, input_dim)?;
        let mut system = ImpulsiveSystem::new(
            1,
            input_dim,
            move |t, x, u| flow(t, x, u),
            move |t, x, u| jump(t, x, u),
        );
        if self.h.is_some() || self.h0.is_some() {
            let norm: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync> =
                Arc::new(|_t, x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt());
            let h = match &self.h {
                Some(src) => compile_tx(src)?,
                None => norm.clone(),
            };
            let h0 = match &self.h0 {
                Some(src) => compile_tx(src)?,
                None => norm,
            };
            system = system.with_measures(h, h0);
        }
        Ok((system, None))
    }
}

// ---------------------------------------------------------------------------
// Sequences

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    /// adt | fixed-dwell | explicit | example1 | example2-slow | example2-fast
    /// | example3
    pub kind: String,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
    /// one generated sequence per seed; defaults to [master seed]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instants: Option<Vec<f64>>,
}

impl SequenceSpec {
    fn need(&self, field: &str, v: Option<f64>) -> Result<f64> {
        v.ok_or_else(|| anyhow!("sequence kind '{}' requires field '{field}'", self.kind))
    }

    pub fn resolve(&self, master_seed: u64) -> Result<Vec<ImpulseSequence>> {
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![master_seed]);
        let one = |s: ImpulseSequence| vec![s];
        Ok(match self.kind.as_str() {
            "adt" => {
                let n0 = self.n0.ok_or_else(|| anyhow!("adt requires n0"))?;
                let tau = self.need("tau", self.tau)?;
                seeds
                    .iter()
                    .map(|&s| make_adt(n0, tau, s, self.horizon))
                    .collect::<impulsive_core::Result<Vec<_>>>()?
            }
            "fixed-dwell" => {
                let t1 = self.need("theta1", self.theta1)?;
                let t2 = self.need("theta2", self.theta2)?;
                seeds
                    .iter()
                    .map(|&s| make_fixed_dwell(t1, t2, s, self.horizon))
                    .collect::<impulsive_core::Result<Vec<_>>>()?
            }
            "explicit" => {
                let instants = self
                    .instants
                    .clone()
                    .ok_or_else(|| anyhow!("explicit sequence requires instants"))?;
                // clip to the declared horizon: later instants can never fire
                let clipped = instants.into_iter().filter(|&t| t <= self.horizon).collect();
                one(ImpulseSequence::from_instants(clipped, self.horizon)?)
            }
            "example1" => one(make_example1(self.horizon)?),
            "example2-slow" => one(make_example2(Example2Direction::Slow, self.horizon)?),
            "example2-fast" => one(make_example2(Example2Direction::Fast, self.horizon)?),
            "example3" => one(make_example3(
                self.n0.ok_or_else(|| anyhow!("example3 requires n0"))?,
                self.horizon,
            )?),
            other => bail!("unknown sequence kind '{other}'"),
        })
    }
}

// ---------------------------------------------------------------------------
// Experiment

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<Vec<f64>>,
    pub x0: Vec<Vec<f64>>,
    /// "zero" or a scalar expression in t
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub horizon: f64,
}

impl ExperimentSpec {
    pub fn t0s(&self) -> Vec<f64> {
        self.t0.clone().unwrap_or_else(|| vec![0.0])
    }

    pub fn input_signal(&self, input_dim: usize) -> Result<InputSignal> {
        match self.input.as_deref() {
            None | Some("zero") => Ok(if input_dim == 0 {
                InputSignal::zero()
            } else {
                InputSignal::new(input_dim, move |_t| vec![0.0; input_dim])
            }),
            Some(src) => {
                if input_dim != 1 {
                    bail!("expression inputs are scalar; this system has input dimension {input_dim}");
                }
                let e = expr::parse(src)?;
                let f = e.compile1("t")?;
                Ok(InputSignal::new(1, move |t| vec![f(t)]))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Rates and candidates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<PieceSpec>>,
    /// cstar | p | k | kinf | generic (defaults to generic)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub expr: String,
    /// piece applies for s <= upto; the last piece may omit it
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upto: Option<f64>,
}

fn parse_class(tag: Option<&str>) -> Result<ClassTag> {
    Ok(match tag.unwrap_or("generic") {
        "cstar" => ClassTag::Cstar,
        "p" => ClassTag::P,
        "k" => ClassTag::K,
        "kinf" => ClassTag::Kinf,
        "generic" => ClassTag::Generic,
        other => bail!("unknown rate class '{other}'"),
    })
}

impl RateSpec {
    pub fn resolve(&self) -> Result<RateFunction> {
        let given = [self.builtin.is_some(), self.expr.is_some(), self.pieces.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if given != 1 {
            bail!("rate spec needs exactly one of builtin / expr / pieces");
        }
        if let Some(name) = &self.builtin {
            if self.class.is_some() {
                bail!("builtin rates carry their own class tag");
            }
            return Ok(match name.as_str() {
                "identity" => RateFunction::identity(),
                "phi-5.1" => presets::phi_51(),
                "psi-5.1" => presets::psi_51(),
                "psi-5.2" => presets::psi_52(),
                "tanh" => presets::tanh_shape(),
                other => bail!("unknown builtin rate '{other}'"),
            });
        }
        let tag = parse_class(self.class.as_deref())?;
        if let Some(src) = &self.expr {
            let f = expr::parse(src)?.compile1("s")?;
            return Ok(RateFunction::new(src, tag, f));
        }
        let pieces = self.pieces.as_ref().unwrap();
        if pieces.is_empty() {
            bail!("piecewise rate needs at least one piece");
        }
        let mut compiled = Vec::new();
        let mut breaks = Vec::new();
        for (i, piece) in pieces.iter().enumerate() {
            let last = i == pieces.len() - 1;
            match piece.upto {
                Some(b) => {
                    if let Some(&prev) = breaks.last() {
                        if b <= prev {
                            bail!("piecewise breakpoints must increase");
                        }
                    }
                    breaks.push(b);
                }
                None if last => {}
                None => bail!("only the final piece may omit 'upto'"),
            }
            compiled.push(expr::parse(&piece.expr)?.compile1("s")?);
        }
        let bounds = breaks.clone();
        let name: Vec<String> = pieces.iter().map(|p| p.expr.clone()).collect();
        let f = move |s: f64| {
            let idx = bounds.partition_point(|&b| b < s);
            compiled[idx.min(compiled.len() - 1)](s)
        };
        Ok(RateFunction::new(&name.join(" | "), tag, f).with_breakpoints(&breaks))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    /// scalar expression in t
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    /// monotone | periodic | constant-after | unhinted (default)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    /// period for 'periodic', cutoff for 'constant-after'
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint_value: Option<f64>,
}

impl FlowRateSpec {
    pub fn resolve(&self) -> Result<FlowRate> {
        match (&self.constant, &self.expr) {
            (Some(c), None) => {
                if self.hint.is_some() || self.hint_value.is_some() {
                    bail!("constant flow rates take no tail hint");
                }
                Ok(FlowRate::constant(*c))
            }
            (None, Some(src)) => {
                let hint = match self.hint.as_deref().unwrap_or("unhinted") {
                    "monotone" => TailHint::Monotone,
                    "periodic" => TailHint::Periodic(
                        self.hint_value
                            .ok_or_else(|| anyhow!("periodic hint requires hint_value"))?,
                    ),
                    "constant-after" => TailHint::ConstantAfter(
                        self.hint_value
                            .ok_or_else(|| anyhow!("constant-after hint requires hint_value"))?,
                    ),
                    "unhinted" => TailHint::Unhinted,
                    other => bail!("unknown tail hint '{other}'"),
                };
                let f = expr::parse(src)?.compile1("t")?;
                Ok(FlowRate::func(src, hint, f))
            }
            _ => bail!("flow rate spec needs exactly one of constant / expr"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    /// scalar expression in t, x
    pub v: String,
    /// decay | growth
    pub regime: String,
    pub phi: RateSpec,
    pub psi: RateSpec,
    pub p: FlowRateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi1: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape_divergent: Option<bool>,
}

impl CandidateSpec {
    pub fn resolve(&self) -> Result<LyapunovCandidate> {
        let v = compile_tx(&self.v)?;
        let rate_or_id = |r: &Option<RateSpec>| -> Result<RateFunction> {
            match r {
                Some(spec) => spec.resolve(),
                None => Ok(RateFunction::identity()),
            }
        };
        let shape_rate = self.phi.resolve()?;
        let shape = match self.regime.as_str() {
            "decay" => FlowShape::Decay(shape_rate),
            "growth" => FlowShape::Growth(shape_rate),
            other => bail!("regime must be decay or growth, got '{other}'"),
        };
        Ok(LyapunovCandidate {
            v,
            phi1: rate_or_id(&self.phi1)?,
            phi2: rate_or_id(&self.phi2)?,
            chi: rate_or_id(&self.chi)?,
            pi: rate_or_id(&self.pi)?,
            p: self.p.resolve()?,
            shape,
            psi: self.psi.resolve()?,
            h: Arc::new(|_t, x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            h0: Arc::new(|_t, x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            escape_declared_divergent: self.escape_divergent.unwrap_or(false),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<CandidateSpec>,
    /// skip the sampled falsifier (custom candidates without a system)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_validation: Option<bool>,
}

// ---------------------------------------------------------------------------
// Classification requests

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdtRequest {
    pub n0: u32,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySpec {
    /// (n0, tau) pairs checked with the exact span scan
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adt: Option<Vec<AdtRequest>>,
    /// window lengths for frequency reports
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<f64>>,
    /// target rate for T(eps) estimation
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    /// upper (default) | lower
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

// ---------------------------------------------------------------------------
// Tolerance profiles

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToleranceProfile {
    Default,
    Tight,
}

impl ToleranceProfile {
    pub fn parse(s: &str) -> Result<ToleranceProfile> {
        match s {
            "default" => Ok(ToleranceProfile::Default),
            "tight" => Ok(ToleranceProfile::Tight),
            other => bail!("unknown tolerance profile '{other}' (expected default or tight)"),
        }
    }

    pub fn tolerances(self) -> Tolerances {
        match self {
            ToleranceProfile::Default => Tolerances::default(),
            ToleranceProfile::Tight => Tolerances {
                abs: 1e-12,
                rel: 1e-10,
                max_step: 0.05,
                ..Tolerances::default()
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ToleranceProfile::Default => "default",
            ToleranceProfile::Tight => "tight",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let text = "schema = 1\n[sequence]\nkind = \"adt\"\nhorizon = 10.0\nn0 = 2\ntau = 1.0\nbogus = 3\n";
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn rejects_wrong_schema() {
        assert!(RunConfig::parse("schema = 99\n").is_err());
    }

    #[test]
    fn piecewise_rate_evaluates_per_piece() {
        let spec = RateSpec {
            builtin: None,
            expr: None,
            pieces: Some(vec![
                PieceSpec {
                    expr: "s".into(),
                    upto: Some(1.0),
                },
                PieceSpec {
                    expr: "s * s".into(),
                    upto: None,
                },
            ]),
            class: Some("p".into()),
        };
        let r = spec.resolve().unwrap();
        assert_eq!(r.eval(0.5), 0.5);
        assert_eq!(r.eval(1.0), 1.0);
        assert_eq!(r.eval(2.0), 4.0);
        assert_eq!(r.breakpoints(), &[1.0]);
    }

    #[test]
    fn expression_system_runs() {
        let spec = SystemSpec {
            preset: None,
            flow: Some("-x + u".into()),
            jump: Some("-0.5 * x".into()),
            input_dim: Some(1),
            h: None,
            h0: None,
        };
        let (system, preset) = spec.resolve().unwrap();
        assert!(preset.is_none());
        assert_eq!(system.flow(0.0, &[2.0], &[1.0]).unwrap(), vec![-1.0]);
        assert_eq!(system.jump(0.0, &[2.0], &[0.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn sequence_kinds_resolve() {
        let base = SequenceSpec {
            kind: "adt".into(),
            horizon: 20.0,
            n0: Some(2),
            tau: Some(1.0),
            theta1: None,
            theta2: None,
            seeds: Some(vec![1, 2, 3]),
            instants: None,
        };
        assert_eq!(base.resolve(0).unwrap().len(), 3);

        let explicit = SequenceSpec {
            kind: "explicit".into(),
            horizon: 2.0,
            n0: None,
            tau: None,
            theta1: None,
            theta2: None,
            seeds: None,
            instants: Some(vec![1.0, 2.0, 3.0]),
        };
        let gammas = explicit.resolve(0).unwrap();
        assert_eq!(gammas[0].instants(), &[1.0, 2.0]);
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let text = r#"
schema = 1
output_dir = "runs"
seed = 42

[system]
preset = "example-5.1"

[sequence]
kind = "adt"
horizon = 50.0
n0 = 2
tau = 1.25
seeds = [0, 1]

[experiment]
t0 = [0.0, 5.0]
x0 = [[0.5], [-0.5]]
input = "zero"
horizon = 50.0

[certify]
preset = "example-5.1"
theta = [1.25]
"#;
        let a = RunConfig::parse(text).unwrap();
        let b = RunConfig::parse(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
