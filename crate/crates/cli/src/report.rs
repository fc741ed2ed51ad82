//! Report plumbing: output-directory resolution, a stable fingerprint for
//! code-pinned presets, and the run manifest stamped into every report
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use impulsive_core::presets::Preset;
use impulsive_core::simulator::Tolerances;

/// Environment variable overriding the configured output directory; the
/// `--out` flag overrides both.
pub const OUT_ENV: &str = "IMPULSIVE_OUT";

pub fn resolve_out_dir(flag: Option<&Path>, config_dir: Option<&str>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var(OUT_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from(config_dir.unwrap_or("out"))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_text(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).context("report serialization")?;
    write_text(dir, name, &text)
}

// ---------------------------------------------------------------------------
// Fingerprints

/// FNV-1a over a byte stream; stable across platforms and toolchains, unlike
/// the standard library's hasher.
#[derive(Clone, Copy)]
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Fnv {
        Fnv(0xcbf29ce484222325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn update_f64(&mut self, v: f64) {
        self.update(&v.to_bits().to_le_bytes());
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Fnv::new()
    }
}

/// Presets are code-defined, so reports pin them by hashing the frozen
/// constants they bundle: candidate rates and flow rate on a fixed probe
/// grid, plus the default window length and class parameters.
pub fn preset_fingerprint(preset: &Preset) -> String {
    let mut h = Fnv::new();
    h.update(preset.name.as_bytes());
    h.update_f64(preset.theta);
    if let Some(rho) = preset.class.rho() {
        h.update_f64(rho);
    }
    let probes = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
    for &s in &probes {
        h.update_f64(preset.candidate.phi1.eval(s));
        h.update_f64(preset.candidate.phi2.eval(s));
        h.update_f64(preset.candidate.chi.eval(s));
        h.update_f64(preset.candidate.pi.eval(s));
        h.update_f64(preset.candidate.psi.eval(s));
        h.update_f64(preset.candidate.shape.shape().eval(s));
        h.update_f64(preset.candidate.p.eval(s));
    }
    h.hex()
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Serialize)]
pub struct ToleranceStamp {
    pub profile: String,
    pub abs: f64,
    pub rel: f64,
    pub blowup_guard: f64,
    pub max_step: f64,
}

impl ToleranceStamp {
    pub fn new(profile: &str, tol: &Tolerances) -> ToleranceStamp {
        ToleranceStamp {
            profile: profile.to_string(),
            abs: tol.abs,
            rel: tol.rel,
            blowup_guard: tol.blowup_guard,
            max_step: tol.max_step,
        }
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub schema: u32,
    pub seed: u64,
    pub threads: usize,
    pub tolerances: ToleranceStamp,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset_fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub artifacts: Vec<String>,
}
