//! The certify / simulate / classify commands. Each returns the process
//! exit code: 0 success or conclusive, 1 runtime failure, 2 inconclusive,
//! 3 validation violation (`main` maps anyhow errors to 1).

use std::path::Path;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;

use impulsive_core::certificates::{
    theorem1_verdict, theorem2_verdict, validate_candidate, CandidateReport, FlowShape,
    LyapunovCandidate, SampleSpec, SearchSpec, StabilityVerdict,
};
use impulsive_core::presets::Preset;
use impulsive_core::sequences::{
    estimate_frequency, find_t_for_epsilon, verify_adt, FrequencyMode,
};
use impulsive_core::simulator::{ensemble, ImpulsiveSystem, InputSignal, Tolerances};

use crate::config::{CertifySpec, ClassifySpec, RunConfig, ToleranceProfile};
use crate::report::{
    preset_fingerprint, write_json, write_text, Manifest, ToleranceStamp,
};

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub out_dir: &'a Path,
    pub seed: u64,
    pub threads: usize,
    pub profile: ToleranceProfile,
}

impl Context<'_> {
    fn tolerances(&self) -> Tolerances {
        self.profile.tolerances()
    }

    fn manifest(&self, command: &str, preset: Option<&Preset>, horizon: Option<f64>, artifacts: Vec<String>) -> Manifest {
        Manifest {
            command: command.to_string(),
            schema: self.config.schema,
            seed: self.seed,
            threads: self.threads,
            tolerances: ToleranceStamp::new(self.profile.name(), &self.tolerances()),
            preset: preset.map(|p| p.name.to_string()),
            preset_fingerprint: preset.map(preset_fingerprint),
            horizon,
            artifacts,
        }
    }
}

// ---------------------------------------------------------------------------
// certify

/// Probe grid for the sampled falsifier, shaped to the system's input
/// dimension.
fn falsifier_grid(system: &ImpulsiveSystem) -> SampleSpec {
    if system.input_dim == 0 {
        let mut spec = SampleSpec::scalar(4.0, 2.0, 0.0, 9);
        spec.inputs = vec![vec![]];
        spec
    } else {
        SampleSpec::scalar(4.0, 2.0, 1.0, 9)
    }
}

#[derive(Serialize)]
struct CertifyReport<'a> {
    verdicts: &'a [StabilityVerdict],
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<&'a CandidateReport>,
}

pub fn cmd_certify(ctx: &Context) -> Result<i32> {
    let spec: &CertifySpec = ctx
        .config
        .certify
        .as_ref()
        .ok_or_else(|| anyhow!("certify requires a [certify] table or a preset argument"))?;
    if spec.theta.is_empty() {
        bail!("certify requires at least one theta");
    }

    // Candidate source: a preset bundle, or an expression-defined candidate.
    let (candidate, system, preset): (LyapunovCandidate, Option<ImpulsiveSystem>, Option<Preset>) =
        match (&spec.preset, &spec.candidate) {
            (Some(_), Some(_)) => bail!("certify takes a preset or a candidate table, not both"),
            (Some(name), None) => {
                let sys_spec = crate::config::SystemSpec::preset_only(name);
                let (system, preset) = sys_spec.resolve()?;
                let preset = preset.expect("preset spec resolves to a preset");
                (preset.candidate.clone(), Some(system), Some(preset))
            }
            (None, Some(cand)) => {
                let system = match &ctx.config.system {
                    Some(s) => Some(s.resolve()?.0),
                    None => None,
                };
                (cand.resolve()?, system, None)
            }
            (None, None) => bail!("certify needs certify.preset or certify.candidate"),
        };

    // Sampled falsification against the actual maps, where a system exists.
    let skip = spec.skip_validation.unwrap_or(false);
    let validation = match (&system, skip) {
        (Some(system), false) => Some(validate_candidate(
            &candidate,
            system,
            &falsifier_grid(system),
        )?),
        _ => None,
    };

    let search = SearchSpec::default();
    let mut verdicts = Vec::new();
    for &theta in &spec.theta {
        let verdict = match &candidate.shape {
            FlowShape::Decay(phi) => {
                theorem1_verdict(phi, &candidate.psi, &candidate.p, theta, &search)?
            }
            FlowShape::Growth(neg_phi) => theorem2_verdict(
                neg_phi,
                &candidate.psi,
                &candidate.p,
                theta,
                &search,
                candidate.escape_declared_divergent,
            )?,
        };
        verdicts.push(verdict);
    }

    let report = CertifyReport {
        verdicts: &verdicts,
        validation: validation.as_ref(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    let mut artifacts = vec!["certify.json".to_string()];
    write_json(ctx.out_dir, "certify.json", &report)?;
    artifacts.push("manifest.json".into());
    write_json(
        ctx.out_dir,
        "manifest.json",
        &ctx.manifest("certify", preset.as_ref(), None, artifacts),
    )?;

    if let Some(v) = &validation {
        if !v.clean() {
            eprintln!(
                "candidate validation failed on {} of {} samples; first witness: {:?}",
                v.violations.len(),
                v.samples,
                v.violations.first()
            );
            return Ok(3);
        }
    }
    if verdicts.iter().any(|v| !v.conclusive()) {
        return Ok(2);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct SimRunSummary {
    index: usize,
    gamma_index: usize,
    t0: f64,
    x0: Vec<f64>,
    outcome: String,
    truncated: bool,
    jumps: usize,
    final_measure: Option<f64>,
    trajectory_csv: Option<String>,
}

pub fn cmd_simulate(ctx: &Context) -> Result<i32> {
    let system_spec = ctx
        .config
        .system
        .as_ref()
        .ok_or_else(|| anyhow!("simulate requires a [system] table or a preset argument"))?;
    let seq_spec = ctx
        .config
        .sequence
        .as_ref()
        .ok_or_else(|| anyhow!("simulate requires a [sequence] table"))?;
    let exp = ctx
        .config
        .experiment
        .as_ref()
        .ok_or_else(|| anyhow!("simulate requires an [experiment] table"))?;

    let (system, preset) = system_spec.resolve()?;
    let gammas = seq_spec.resolve(ctx.seed)?;
    let input: InputSignal = exp.input_signal(system.input_dim)?;
    let tol = ctx.tolerances();
    for gamma in &gammas {
        if gamma.horizon() < exp.horizon {
            bail!(
                "sequence horizon {} is shorter than the experiment horizon {}",
                gamma.horizon(),
                exp.horizon
            );
        }
    }

    let runs = ensemble(
        &system,
        &gammas,
        &exp.t0s(),
        &exp.x0,
        std::slice::from_ref(&input),
        exp.horizon,
        &tol,
    );

    let mut artifacts = Vec::new();
    let mut summaries = Vec::new();
    let mut ok_count = 0usize;
    for (i, run) in runs.iter().enumerate() {
        let summary = match &run.outcome {
            Ok(traj) => {
                ok_count += 1;
                let csv_name = format!("run-{i:03}.csv");
                write_text(ctx.out_dir, &csv_name, &traj.to_csv())?;
                artifacts.push(csv_name.clone());
                // jump log: impulse time with pre/post states
                let mut jumps_csv = String::from("t,pre,post\n");
                for j in &traj.jumps {
                    jumps_csv.push_str(&format!("{},{},{}\n", j.t, j.pre[0], j.post[0]));
                }
                let jumps_name = format!("jumps-{i:03}.csv");
                write_text(ctx.out_dir, &jumps_name, &jumps_csv)?;
                artifacts.push(jumps_name);
                // plot data: the state measure h(t, x(t)) along the run
                let mut curve = String::from("t,h\n");
                for seg in &traj.segments {
                    for (t, x) in &seg.points {
                        curve.push_str(&format!("{},{}\n", t, (system.h)(*t, x)));
                    }
                }
                let curve_name = format!("measure-{i:03}.csv");
                write_text(ctx.out_dir, &curve_name, &curve)?;
                artifacts.push(curve_name);
                SimRunSummary {
                    index: i,
                    gamma_index: run.gamma_index,
                    t0: run.t0,
                    x0: run.x0.clone(),
                    outcome: "ok".into(),
                    truncated: traj.truncated,
                    jumps: traj.jumps.len(),
                    final_measure: Some((system.h)(traj.t_end, traj.final_state())),
                    trajectory_csv: Some(csv_name),
                }
            }
            Err(e) => SimRunSummary {
                index: i,
                gamma_index: run.gamma_index,
                t0: run.t0,
                x0: run.x0.clone(),
                outcome: format!("failed: {e}"),
                truncated: false,
                jumps: 0,
                final_measure: None,
                trajectory_csv: None,
            },
        };
        summaries.push(summary);
    }

    write_json(ctx.out_dir, "runs.json", &summaries)?;
    artifacts.push("runs.json".into());
    artifacts.push("manifest.json".into());
    write_json(
        ctx.out_dir,
        "manifest.json",
        &ctx.manifest("simulate", preset.as_ref(), Some(exp.horizon), artifacts),
    )?;
    println!(
        "simulate: {ok_count}/{} runs integrated; artifacts in {}",
        runs.len(),
        ctx.out_dir.display()
    );
    if ok_count == 0 && !runs.is_empty() {
        eprintln!("all runs failed");
        return Ok(1);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// classify

#[derive(Serialize)]
struct AdtOutcome {
    n0: u32,
    tau: f64,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<AdtWitnessOut>,
}

#[derive(Serialize)]
struct AdtWitnessOut {
    s: f64,
    t: f64,
    count: usize,
    bound: f64,
}

#[derive(Serialize)]
struct TEpsOutcome {
    rho: f64,
    eps: f64,
    mode: String,
    /// window length from which every window satisfies the bound; absent
    /// when no such length exists up to half the horizon
    t: Option<f64>,
}

#[derive(Serialize)]
struct SequenceClassification {
    sequence_index: usize,
    impulses: usize,
    horizon: f64,
    frequency: Vec<impulsive_core::sequences::FrequencyReport>,
    adt: Vec<AdtOutcome>,
    t_eps: Vec<TEpsOutcome>,
}

fn frequency_csv(reports: &[impulsive_core::sequences::FrequencyReport]) -> String {
    let mut out = String::from("T,rho_sup,rho_inf,argmax_s,argmin_s\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.window, r.rho_sup, r.rho_inf, r.argmax_s, r.argmin_s
        ));
    }
    out
}

pub fn cmd_classify(ctx: &Context) -> Result<i32> {
    let seq_spec = ctx
        .config
        .sequence
        .as_ref()
        .ok_or_else(|| anyhow!("classify requires a [sequence] table"))?;
    let req: ClassifySpec = ctx.config.classify.clone().unwrap_or(ClassifySpec {
        adt: None,
        windows: None,
        rho: None,
        epsilon: None,
        mode: None,
    });
    let gammas = seq_spec.resolve(ctx.seed)?;

    let mode = match req.mode.as_deref().unwrap_or("upper") {
        "upper" => FrequencyMode::Upper,
        "lower" => FrequencyMode::Lower,
        other => bail!("classify mode must be upper or lower, got '{other}'"),
    };
    let mode_name = if matches!(mode, FrequencyMode::Upper) { "upper" } else { "lower" };

    let mut artifacts = Vec::new();
    let mut results = Vec::new();
    for (gi, gamma) in gammas.iter().enumerate() {
        let windows = req.windows.clone().unwrap_or_else(|| {
            [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
                .into_iter()
                .filter(|w| *w <= gamma.horizon() / 2.0)
                .collect()
        });
        let mut freq = Vec::new();
        for &w in &windows {
            freq.push(estimate_frequency(gamma, w)?);
        }
        let csv_name = format!("frequency-{gi:03}.csv");
        write_text(ctx.out_dir, &csv_name, &frequency_csv(&freq))?;
        artifacts.push(csv_name);

        let mut adt = Vec::new();
        for r in req.adt.as_deref().unwrap_or(&[]) {
            let check = verify_adt(gamma, r.n0, r.tau)?;
            adt.push(AdtOutcome {
                n0: r.n0,
                tau: r.tau,
                pass: check.pass,
                witness: check.witness.map(|w| AdtWitnessOut {
                    s: w.s,
                    t: w.t,
                    count: w.count,
                    bound: w.bound,
                }),
            });
        }

        let mut t_eps = Vec::new();
        if let Some(rho) = req.rho {
            for &eps in req.epsilon.as_deref().unwrap_or(&[0.1]) {
                let t = find_t_for_epsilon(gamma, rho, eps, mode)?;
                t_eps.push(TEpsOutcome {
                    rho,
                    eps,
                    mode: mode_name.to_string(),
                    t,
                });
            }
        }

        results.push(SequenceClassification {
            sequence_index: gi,
            impulses: gamma.len(),
            horizon: gamma.horizon(),
            frequency: freq,
            adt,
            t_eps,
        });
    }

    println!("{}", serde_json::to_string_pretty(&results)?);
    write_json(ctx.out_dir, "classify.json", &results)?;
    artifacts.push("classify.json".into());
    artifacts.push("manifest.json".into());
    write_json(
        ctx.out_dir,
        "manifest.json",
        &ctx.manifest("classify", None, None, artifacts),
    )?;
    Ok(0)
}
