//! Run configuration shared by every pipeline stage.
//!
//! A [`RunConfig`] collects the numeric knobs (model, scheme, r, M₀, c,
//! t_M, ε, ψ, threshold, worker bound) plus the file paths a subcommand
//! needs. It serializes to a flat `key=value` file and back losslessly —
//! floats are written in shortest round-trip form — so any output artifact
//! can embed the exact configuration that produced it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::integrators::{ModelSpec, SchemeSpec, DEFAULT_EPSILON};

/// Evolution model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Heat,
    Wave,
    DampedWave,
}

impl ModelKind {
    /// Stable numeric code used in descriptor files.
    pub fn code(self) -> u32 {
        match self {
            ModelKind::Heat => 0,
            ModelKind::Wave => 1,
            ModelKind::DampedWave => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Heat => "heat",
            ModelKind::Wave => "wave",
            ModelKind::DampedWave => "dampedwave",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat" => Ok(ModelKind::Heat),
            "wave" => Ok(ModelKind::Wave),
            "dampedwave" => Ok(ModelKind::DampedWave),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected heat|wave|dampedwave)"
            ))),
        }
    }
}

/// Time-integration scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    ExplicitEuler,
    CrankNicolson,
    ImplicitEuler,
    Twizell,
}

impl SchemeKind {
    /// Stable numeric code used in descriptor files.
    pub fn code(self) -> u32 {
        match self {
            SchemeKind::ExplicitEuler => 0,
            SchemeKind::CrankNicolson => 1,
            SchemeKind::ImplicitEuler => 2,
            SchemeKind::Twizell => 3,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::ExplicitEuler => "explicit-euler",
            SchemeKind::CrankNicolson => "crank-nicolson",
            SchemeKind::ImplicitEuler => "implicit-euler",
            SchemeKind::Twizell => "twizell",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit-euler" => Ok(SchemeKind::ExplicitEuler),
            "crank-nicolson" => Ok(SchemeKind::CrankNicolson),
            "implicit-euler" => Ok(SchemeKind::ImplicitEuler),
            "twizell" => Ok(SchemeKind::Twizell),
            other => Err(Error::Config(format!(
                "unknown scheme '{other}' \
                 (expected implicit-euler|crank-nicolson|explicit-euler|twizell)"
            ))),
        }
    }
}

/// Full parameter set for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub scheme: SchemeKind,
    /// Number of retained eigenmodes.
    pub r: usize,
    /// Base step count M₀; the actual count is M = round(M₀ / c).
    pub m0: usize,
    /// Coarsening factor c.
    pub c: f64,
    /// Spectral time horizon parameter t_M.
    pub t_m: f64,
    /// Twizell perturbation ε (scheme parameter a = 2 − √2 − ε).
    pub epsilon: f64,
    /// Damping coefficient ψ (damped wave model only).
    pub psi: f64,
    /// Princeton-protocol hit threshold.
    pub threshold: f64,
    /// Worker bound for parallel sections; 0 means "number of cores".
    pub workers: usize,
    /// Input mesh (query shape).
    pub mesh: Option<PathBuf>,
    /// Second mesh (target shape) for match/evaluate runs.
    pub target_mesh: Option<PathBuf>,
    /// Spectrum cache file.
    pub cache: Option<PathBuf>,
    /// Primary output file of the subcommand.
    pub output: Option<PathBuf>,
    /// Ground-truth correspondence file (evaluate); absent means identity.
    pub truth: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Heat,
            scheme: SchemeKind::ImplicitEuler,
            r: 100,
            m0: 100,
            c: 1.0,
            t_m: 1.0,
            epsilon: DEFAULT_EPSILON,
            psi: 0.0,
            threshold: 0.25,
            workers: 0,
            mesh: None,
            target_mesh: None,
            cache: None,
            output: None,
            truth: None,
        }
    }
}

impl RunConfig {
    /// Check every numeric field against the preconditions of the modules
    /// that will consume it, before any compute starts.
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if self.m0 == 0 {
            return Err(Error::Config("m0 must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(self.t_m > 0.0 && self.t_m.is_finite()) {
            return Err(Error::Config(format!(
                "t_m must be positive, got {}",
                self.t_m
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return Err(Error::Config(format!(
                "psi must be non-negative, got {}",
                self.psi
            )));
        }
        if self.model == ModelKind::DampedWave && self.psi == 0.0 {
            return Err(Error::Config(
                "dampedwave model requires a positive --psi".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        // fail early if the Twizell parameter would be out of range
        if self.scheme == SchemeKind::Twizell {
            SchemeSpec::twizell(self.epsilon)?;
        }
        Ok(())
    }

    /// Instantiate the model this config selects.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        match self.model {
            ModelKind::Heat => Ok(ModelSpec::heat()),
            ModelKind::Wave => Ok(ModelSpec::wave()),
            ModelKind::DampedWave => ModelSpec::damped_wave(self.psi),
        }
    }

    /// Instantiate the scheme this config selects.
    pub fn scheme_spec(&self) -> Result<SchemeSpec> {
        match self.scheme {
            SchemeKind::ExplicitEuler => Ok(SchemeSpec::explicit_euler()),
            SchemeKind::CrankNicolson => Ok(SchemeSpec::crank_nicolson()),
            SchemeKind::ImplicitEuler => Ok(SchemeSpec::implicit_euler()),
            SchemeKind::Twizell => SchemeSpec::twizell(self.epsilon),
        }
    }

    /// Ordered key/value view; the file form and CSV headers both use it.
    pub fn as_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs = vec![
            ("model", self.model.to_string()),
            ("scheme", self.scheme.to_string()),
            ("r", self.r.to_string()),
            ("m0", self.m0.to_string()),
            ("c", self.c.to_string()),
            ("t_m", self.t_m.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("psi", self.psi.to_string()),
            ("threshold", self.threshold.to_string()),
            ("workers", self.workers.to_string()),
        ];
        let paths: [(&'static str, &Option<PathBuf>); 5] = [
            ("mesh", &self.mesh),
            ("target_mesh", &self.target_mesh),
            ("cache", &self.cache),
            ("output", &self.output),
            ("truth", &self.truth),
        ];
        for (key, value) in paths {
            if let Some(p) = value {
                pairs.push((key, p.display().to_string()));
            }
        }
        pairs
    }

    /// Render the flat `key=value` file form.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.as_pairs() {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string())
            .map_err(|e| Error::io(path, e))
    }

    /// Parse the flat file form; unknown keys, bad numbers, and duplicate
    /// keys are reported with their line number.
    pub fn from_file_string(text: &str) -> Result<Self> {
        Self::parse_str(text, Path::new("<config>"))
    }

    fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(origin, line_no, format!("expected key=value, got '{raw}'"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.contains(&key) {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("duplicate key '{key}'"),
                ));
            }
            let bad_num =
                |what: &str| Error::parse(origin, line_no, format!("invalid {what} value '{value}'"));
            match key {
                "model" => {
                    config.model = value
                        .parse()
                        .map_err(|e: Error| Error::parse(origin, line_no, e.to_string()))?
                }
                "scheme" => {
                    config.scheme = value
                        .parse()
                        .map_err(|e: Error| Error::parse(origin, line_no, e.to_string()))?
                }
                "r" => config.r = value.parse().map_err(|_| bad_num("integer"))?,
                "m0" => config.m0 = value.parse().map_err(|_| bad_num("integer"))?,
                "c" => config.c = value.parse().map_err(|_| bad_num("number"))?,
                "t_m" => config.t_m = value.parse().map_err(|_| bad_num("number"))?,
                "epsilon" => config.epsilon = value.parse().map_err(|_| bad_num("number"))?,
                "psi" => config.psi = value.parse().map_err(|_| bad_num("number"))?,
                "threshold" => config.threshold = value.parse().map_err(|_| bad_num("number"))?,
                "workers" => config.workers = value.parse().map_err(|_| bad_num("integer"))?,
                "mesh" => config.mesh = Some(PathBuf::from(value)),
                "target_mesh" => config.target_mesh = Some(PathBuf::from(value)),
                "cache" => config.cache = Some(PathBuf::from(value)),
                "output" => config.output = Some(PathBuf::from(value)),
                "truth" => config.truth = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::parse(
                        origin,
                        line_no,
                        format!("unknown key '{other}'"),
                    ))
                }
            }
            seen.push(key);
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }
}
