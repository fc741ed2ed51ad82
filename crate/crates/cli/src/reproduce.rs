//! `reproduce <name>`: end-to-end report bundles for the shipped presets and
//! the sequence-class property families. Each bundle writes a self-contained
//! report directory and exits nonzero naming the first failing criterion.

use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use serde::Serialize;

use impulsive_core::analysis::{build_envelope, decay_evidence, EnvelopeMode, Run};
use impulsive_core::certificates::{
    compute_m, compute_m2, theorem1_verdict, theorem2_verdict, SearchSpec, TheoremCase,
};
use impulsive_core::comparison::{solve_comparison, ComparisonSpec, FlowTransform, Regime};
use impulsive_core::presets;
use impulsive_core::sequences::{
    delta_perturb, derive_adt_params, estimate_frequency, find_t_for_epsilon, make_adt,
    make_example1, make_example2, make_example3, make_fixed_dwell, verify_adt, verify_reverse_adt,
    Example2Direction, FrequencyMode, ImpulseSequence, SpanTable,
};
use impulsive_core::simulator::{integrate, InputSignal, Tolerances, Trajectory};

use crate::commands::Context;
use crate::report::{write_json, write_text, preset_fingerprint};

#[derive(Serialize)]
struct Criterion {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct Summary {
    bundle: String,
    seed: u64,
    pass: bool,
    criteria: Vec<Criterion>,
    artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset_fingerprint: Option<String>,
}

struct Bundle {
    name: String,
    seed: u64,
    criteria: Vec<Criterion>,
    artifacts: Vec<String>,
    fingerprint: Option<String>,
}

impl Bundle {
    fn new(name: &str, seed: u64) -> Bundle {
        Bundle {
            name: name.to_string(),
            seed,
            criteria: Vec::new(),
            artifacts: Vec::new(),
            fingerprint: None,
        }
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.criteria.push(Criterion {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    fn finish(self, out_dir: &Path) -> Result<i32> {
        let pass = self.criteria.iter().all(|c| c.pass);
        let summary = Summary {
            bundle: self.name.clone(),
            seed: self.seed,
            pass,
            criteria: self.criteria,
            artifacts: self.artifacts,
            preset_fingerprint: self.fingerprint,
        };
        write_json(out_dir, "summary.json", &summary)?;
        for c in &summary.criteria {
            println!(
                "[{}] {}: {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        if let Some(first_fail) = summary.criteria.iter().find(|c| !c.pass) {
            eprintln!("reproduce {}: criterion '{}' failed", summary.bundle, first_fail.name);
            return Ok(1);
        }
        println!("reproduce {}: all {} criteria pass", summary.bundle, summary.criteria.len());
        Ok(0)
    }
}

pub fn cmd_reproduce(ctx: &Context, name: &str) -> Result<i32> {
    match name {
        "example-5.1" => example_51(ctx),
        "example-5.2" => example_52(ctx),
        "lemma1-suite" => lemma1_suite(ctx),
        "example-sequences" => example_sequences(ctx),
        other => {
            eprintln!(
                "unknown reproduce bundle '{other}' (expected example-5.1, example-5.2, lemma1-suite, example-sequences)"
            );
            Ok(1)
        }
    }
}

fn trajectory_runs(
    bundle: &mut Bundle,
    out_dir: &Path,
    system: &impulsive_core::simulator::ImpulsiveSystem,
    gammas: Vec<ImpulseSequence>,
    x0s: &[f64],
    input: &InputSignal,
    horizon: f64,
    tol: &Tolerances,
) -> Result<Vec<(ImpulseSequence, Trajectory)>> {
    let mut out = Vec::new();
    for (i, gamma) in gammas.into_iter().enumerate() {
        let x0 = x0s[i % x0s.len()];
        let traj = integrate(system, &gamma, 0.0, &[x0], input, horizon, tol)?;
        let csv = format!("run-{i:03}.csv");
        write_text(out_dir, &csv, &traj.to_csv())?;
        bundle.artifacts.push(csv);
        out.push((gamma, traj));
    }
    Ok(out)
}

fn min_abs_state(traj: &Trajectory) -> f64 {
    let mut m = f64::INFINITY;
    for seg in &traj.segments {
        for (_, x) in &seg.points {
            m = m.min(x[0].abs());
        }
    }
    m
}

// ---------------------------------------------------------------------------
// example-5.1: decay-regime preset, destabilizing jumps

fn example_51(ctx: &Context) -> Result<i32> {
    let mut bundle = Bundle::new("example-5.1", ctx.seed);
    let preset = presets::example_51();
    bundle.fingerprint = Some(preset_fingerprint(&preset));
    let search = SearchSpec::default();
    let phi = presets::phi_51();
    let psi = presets::psi_51();

    // frozen budget constant and its maximizer
    let m = compute_m(&phi, &psi, &search)?;
    bundle.check(
        "budget-M",
        (m.value - 1.1931).abs() <= 2e-3 && (0.45..=0.55).contains(&m.a_star),
        format!("M = {:.6} at a* = {:.4}", m.value, m.a_star),
    );

    // conclusive verdict at the default window length
    let verdict = theorem1_verdict(&phi, &psi, &preset.candidate.p, preset.theta, &search)?;
    write_json(ctx.out_dir, "verdict.json", &verdict)?;
    bundle.artifacts.push("verdict.json".into());
    bundle.check(
        "verdict-thm1a",
        verdict.theorem == TheoremCase::Case1a,
        format!("theorem case {:?} at theta = {}", verdict.theorem, preset.theta),
    );

    // trajectory ensemble under zero input with admissible impulse times
    let horizon = 60.0;
    let tol = ctx.profile.tolerances();
    let input = InputSignal::new(1, |_t| vec![0.0]);
    let x0s = [0.5, -0.5, 2.0, -2.0];
    let gammas: Vec<ImpulseSequence> = (0..8u64)
        .map(|i| make_adt(2, preset.theta, ctx.seed.wrapping_add(i), horizon))
        .collect::<impulsive_core::Result<Vec<_>>>()?;
    let runs = trajectory_runs(
        &mut bundle, ctx.out_dir, &preset.system, gammas, &x0s, &input, horizon, &tol,
    )?;

    // pointwise domination by the matched comparison trajectory
    let tf = Arc::new(FlowTransform::new(&phi)?);
    let spec = ComparisonSpec {
        p: preset.candidate.p.clone(),
        shape: phi.clone(),
        psi: psi.clone(),
        regime: Regime::Decay,
    };
    let mut worst_gap = f64::INFINITY;
    let mut dominated = true;
    let mut decayed = true;
    for (gamma, traj) in &runs {
        let x0 = traj.segments[0].points[0].1[0];
        let z = solve_comparison(&spec, &tf, gamma, 0.0, x0 * x0 / 2.0, horizon)?;
        for seg in &traj.segments {
            for (t, x) in &seg.points {
                let v = x[0] * x[0] / 2.0;
                let zt = z.eval(*t)?;
                let gap = zt + 1e-6 + 1e-3 * zt - v;
                worst_gap = worst_gap.min(gap);
                if gap < 0.0 {
                    dominated = false;
                }
            }
        }
        if min_abs_state(traj) > 1e-3 {
            decayed = false;
        }
    }
    bundle.check(
        "comparison-domination",
        dominated,
        format!("worst margin {worst_gap:.3e} over {} runs", runs.len()),
    );
    bundle.check(
        "ensemble-decay",
        decayed,
        format!("all {} runs reach |x| <= 1e-3 within horizon {horizon}", runs.len()),
    );

    // empirical strong-mode envelope with sign-test decay evidence
    let analysis_runs: Vec<Run> = runs
        .iter()
        .map(|(gamma, traj)| Run::new(traj.clone(), gamma.clone()))
        .collect();
    let envelopes = build_envelope(&preset.system, &analysis_runs, EnvelopeMode::Strong, 200, None)?;
    let mut all_decay = true;
    for (i, est) in envelopes.iter().enumerate() {
        let csv = format!("envelope-{i}.csv");
        write_text(ctx.out_dir, &csv, &est.to_csv())?;
        bundle.artifacts.push(csv);
        let ev = decay_evidence(est, 0.01);
        if !ev.decaying {
            all_decay = false;
        }
    }
    bundle.check(
        "envelope-decay-evidence",
        all_decay,
        format!("{} initial-measure buckets, sign test at p < 0.01", envelopes.len()),
    );

    bundle.finish(ctx.out_dir)
}

// ---------------------------------------------------------------------------
// example-5.2: growth-regime preset, stabilizing jumps

fn example_52(ctx: &Context) -> Result<i32> {
    let mut bundle = Bundle::new("example-5.2", ctx.seed);
    let preset = presets::example_52();
    bundle.fingerprint = Some(preset_fingerprint(&preset));
    let search = SearchSpec::default();
    let neg_phi = presets::tanh_shape();
    let psi = presets::psi_52();

    let reference = (1.0 + std::f64::consts::E).ln() - 0.5;
    let m2 = compute_m2(&neg_phi, &psi, &search)?;
    bundle.check(
        "budget-M2",
        (m2.value - reference).abs() <= 2e-3,
        format!("M2 = {:.6}, reference {reference:.6}", m2.value),
    );

    let verdict = theorem2_verdict(&neg_phi, &psi, &preset.candidate.p, preset.theta, &search, true)?;
    write_json(ctx.out_dir, "verdict.json", &verdict)?;
    bundle.artifacts.push("verdict.json".into());
    bundle.check(
        "verdict-thm2",
        verdict.theorem == TheoremCase::Case2,
        format!("theorem case {:?} at theta = {}", verdict.theorem, preset.theta),
    );

    // stabilizing impulses drive every run to zero
    let horizon = 60.0;
    let tol = ctx.profile.tolerances();
    let input = InputSignal::zero();
    let x0s = [0.5, -0.5, 2.0, -2.0];
    let gammas: Vec<ImpulseSequence> = (0..8u64)
        .map(|i| make_fixed_dwell(0.7, 0.8, ctx.seed.wrapping_add(i), horizon + 10.0))
        .collect::<impulsive_core::Result<Vec<_>>>()?;
    let runs = trajectory_runs(
        &mut bundle, ctx.out_dir, &preset.system, gammas, &x0s, &input, horizon, &tol,
    )?;
    let decayed = runs.iter().all(|(_, traj)| min_abs_state(traj) <= 1e-3);
    bundle.check(
        "dwell-decay",
        decayed,
        format!("all {} runs reach |x| <= 1e-3 within horizon {horizon}", runs.len()),
    );

    // with impulses removed the flow alone is destabilizing
    let empty = ImpulseSequence::from_instants(vec![], horizon)?;
    let traj = integrate(&preset.system, &empty, 0.0, &[0.5], &input, horizon, &tol)?;
    write_text(ctx.out_dir, "run-no-impulses.csv", &traj.to_csv())?;
    bundle.artifacts.push("run-no-impulses.csv".into());
    let mut nondecreasing = true;
    let mut peak = 0.0_f64;
    let mut prev = 0.0_f64;
    for seg in &traj.segments {
        for (_, x) in &seg.points {
            let a = x[0].abs();
            if a < prev - 1e-9 {
                nondecreasing = false;
            }
            prev = a;
            peak = peak.max(a);
        }
    }
    bundle.check(
        "flow-growth-witness",
        nondecreasing && peak >= 0.75,
        format!("|x| nondecreasing, peak {peak:.4} from |x0| = 0.5"),
    );

    bundle.finish(ctx.out_dir)
}

// ---------------------------------------------------------------------------
// lemma1-suite: sequence-class property families

fn lemma1_suite(ctx: &Context) -> Result<i32> {
    let mut bundle = Bundle::new("lemma1-suite", ctx.seed);
    let horizon = 300.0;
    let n_seeds = 20u64;
    let (n0, tau) = (2u32, 1.25);
    let rho = 1.0 / tau;

    let adt_seqs: Vec<ImpulseSequence> = (0..n_seeds)
        .map(|i| make_adt(n0, tau, ctx.seed.wrapping_add(i), horizon))
        .collect::<impulsive_core::Result<Vec<_>>>()?;
    let dwell_seqs: Vec<ImpulseSequence> = (0..n_seeds)
        .map(|i| make_fixed_dwell(0.5, 1.5, ctx.seed.wrapping_add(i), horizon))
        .collect::<impulsive_core::Result<Vec<_>>>()?;

    // (1) ADT sequences obey the frequency bound from window length n0/eps on
    let mut freq_ok = true;
    for g in &adt_seqs {
        let spans = SpanTable::build(g);
        for eps in [0.5, 0.1] {
            if !spans.upper_ok(n0 as f64 / eps, rho + eps) {
                freq_ok = false;
            }
        }
    }
    bundle.check(
        "adt-window-frequency",
        freq_ok,
        format!("{n_seeds} sequences, eps in {{0.5, 0.1}}, T = n0/eps"),
    );

    // (2) a positive minimum dwell time implies an ADT bound with n0 = 1
    let mut dwell_ok = true;
    for g in &dwell_seqs {
        if !verify_adt(g, 1, 0.5)?.pass {
            dwell_ok = false;
        }
    }
    bundle.check(
        "fixed-dwell-in-adt",
        dwell_ok,
        format!("{n_seeds} fixed-dwell(0.5, 1.5) sequences pass ADT(1, 0.5)"),
    );

    // (3) bounded perturbations keep the frequency bound with the enlarged
    // window constant T1 = (n0 + 2*delta/tau) / eps
    let delta = 0.3;
    let mut perturb_ok = true;
    for (i, g) in adt_seqs.iter().enumerate() {
        let moved = delta_perturb(g, delta, ctx.seed.wrapping_add(i as u64) ^ 0x5eed)?;
        let spans = SpanTable::build(&moved);
        for eps in [0.5, 0.1] {
            let t1 = (n0 as f64 + 2.0 * delta / tau) / eps;
            if !spans.upper_ok(t1, rho + eps) {
                perturb_ok = false;
            }
        }
    }
    bundle.check(
        "perturbation-stability",
        perturb_ok,
        format!("delta = {delta}, enlarged window constant"),
    );

    // (4) a dwell-time upper bound implies a reverse ADT bound
    let mut reverse_ok = true;
    for g in &dwell_seqs {
        if !verify_reverse_adt(g, 1, 1.5)?.pass {
            reverse_ok = false;
        }
    }
    bundle.check(
        "reverse-adt-lower",
        reverse_ok,
        format!("{n_seeds} fixed-dwell(0.5, 1.5) sequences pass reverse ADT(1, 1.5)"),
    );

    // (5) a frequency bound on long windows converts back into ADT params
    let eps = 0.1;
    let (dn0, dtau) = derive_adt_params(rho, n0 as f64 / eps, eps)?;
    let mut derived_ok = true;
    for g in &adt_seqs {
        if !verify_adt(g, dn0, dtau)?.pass {
            derived_ok = false;
        }
    }
    bundle.check(
        "frequency-to-adt",
        derived_ok,
        format!("derived params n0 = {dn0}, tau = {dtau:.4}"),
    );

    // pin the first sequence of each family as an artifact
    write_text(ctx.out_dir, "adt-000.txt", &adt_seqs[0].to_text())?;
    write_text(ctx.out_dir, "dwell-000.txt", &dwell_seqs[0].to_text())?;
    bundle.artifacts.push("adt-000.txt".into());
    bundle.artifacts.push("dwell-000.txt".into());

    bundle.finish(ctx.out_dir)
}

// ---------------------------------------------------------------------------
// example-sequences: separations between the sequence families

fn example_sequences(ctx: &Context) -> Result<i32> {
    let mut bundle = Bundle::new("example-sequences", ctx.seed);

    // near-unit-frequency sequence: eventually bounded, but outside every
    // ADT class up to n0 = 7 on this horizon
    let slow = make_example2(Example2Direction::Slow, 1e4)?;
    let eps = 0.1;
    let t = find_t_for_epsilon(&slow, 1.0, eps, FrequencyMode::Upper)?;
    let mut adt_fails = true;
    for n0 in 1..=7u32 {
        let check = verify_adt(&slow, n0, 1.0)?;
        if check.pass || check.witness.is_none() {
            adt_fails = false;
        }
    }
    bundle.check(
        "slow-separation",
        t.is_some() && adt_fails,
        format!("T(0.1) = {t:?}; ADT(n0, 1) fails with witness for n0 <= 7"),
    );

    // block-packed sequence: unit windows see 95 impulses while the
    // origin-anchored average stays small
    let packed = make_example1(128.0)?;
    let freq = estimate_frequency(&packed, 1.0)?;
    let mut csv = String::from("T,rho_sup,rho_inf,argmax_s,argmin_s\n");
    csv.push_str(&format!(
        "{},{},{},{},{}\n",
        freq.window, freq.rho_sup, freq.rho_inf, freq.argmax_s, freq.argmin_s
    ));
    write_text(ctx.out_dir, "packed-frequency.csv", &csv)?;
    bundle.artifacts.push("packed-frequency.csv".into());
    let mut avg_ok = true;
    let mut tt = 64.0;
    while tt <= 128.0 {
        if packed.count(0.0, tt)? as f64 / tt > 1.6 + 1e-12 {
            avg_ok = false;
        }
        tt += 0.25;
    }
    bundle.check(
        "packed-burst",
        freq.rho_sup >= 95.0 && avg_ok,
        format!("rho_sup(T=1) = {}, origin average <= 1.6 on [64, 128]", freq.rho_sup),
    );

    // burst families: the uniform window length grows with the burst size
    let mut last = 0.0;
    let mut monotone = true;
    let mut ts = Vec::new();
    for n0 in [2u32, 4, 8] {
        let gamma = make_example3(n0, 2000.0)?;
        match find_t_for_epsilon(&gamma, 1.0, 0.2, FrequencyMode::Upper)? {
            Some(t) if t > last => {
                last = t;
                ts.push((n0, t));
            }
            other => {
                monotone = false;
                ts.push((n0, other.unwrap_or(f64::NAN)));
            }
        }
    }
    bundle.check(
        "burst-window-growth",
        monotone,
        format!("T(0.2) by burst size: {ts:?}"),
    );
    write_json(ctx.out_dir, "burst-windows.json", &ts)?;
    bundle.artifacts.push("burst-windows.json".into());

    bundle.finish(ctx.out_dir)
}
