//! Experiment configuration: flat `key = value` lines grouped under
//! `[section]` headers, with `#` comments.
//!
//! ```text
//! seed = 7
//! [potential]
//! kind = gaussian
//! d = 1
//! [planner]
//! epsilon = 0.01
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use langevin_core::certificates::{CertifyOptions, ConstantSource, Probe};
use langevin_core::planner::{PlannerConstants, TargetMetric};
use langevin_core::potentials::{build_library_potential, Dataset, LibraryPotential};
use langevin_core::sampler::JumpForm;
use langevin_core::PotentialSpec64;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

const KEYS: &[&str] = &[
    "seed",
    "potential.kind",
    "potential.d",
    "potential.alpha",
    "potential.beta",
    "potential.separation",
    "potential.data",
    "certificate.source",
    "certificate.probe_radius",
    "certificate.samples",
    "certificate.lyapunov_c",
    "planner.epsilon",
    "planner.metric",
    "planner.alpha",
    "planner.c1",
    "planner.c2",
    "planner.c3",
    "planner.sigma2",
    "sampler.eta",
    "sampler.N",
    "sampler.n_chains",
    "sampler.substeps",
    "sampler.workers",
    "sampler.bins",
    "sampler.jump_form",
    "sampler.jump_c",
    "sampler.delta",
    "output.dir",
];

/// Top-level shorthands.
const ALIASES: &[(&str, &str)] = &[
    ("potential", "potential.kind"),
    ("d", "potential.d"),
    ("epsilon", "planner.epsilon"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Gaussian,
    CosineCanonical,
    GaussianMixture,
    BayesLogistic,
    StudentT,
    CorruptedRegression,
}

impl PotentialKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gaussian" => Self::Gaussian,
            "cosine_canonical" => Self::CosineCanonical,
            "gaussian_mixture" => Self::GaussianMixture,
            "bayes_logistic" => Self::BayesLogistic,
            "student_t" => Self::StudentT,
            "corrupted_regression" => Self::CorruptedRegression,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricChoice {
    Chi2,
    Renyi(f64),
    Translated(TargetMetric),
}

impl MetricChoice {
    pub fn name(&self) -> &'static str {
        match self {
            MetricChoice::Chi2 => "chi2",
            MetricChoice::Renyi(_) => "renyi",
            MetricChoice::Translated(TargetMetric::Kl) => "kl",
            MetricChoice::Translated(TargetMetric::Tv) => "tv",
            MetricChoice::Translated(TargetMetric::W2) => "w2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub epsilon: f64,
    pub metric: MetricChoice,
    pub constants: PlannerConstants<f64>,
    /// `None` means `0.5 / (1 + L)` once `L` is certified.
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub eta: Option<f64>,
    pub n_steps: Option<u64>,
    pub n_chains: usize,
    pub substeps: usize,
    pub workers: Option<usize>,
    pub bins: usize,
    pub jump_form: JumpForm<f64>,
    pub delta: f64,
}

impl SamplerConfig {
    /// Step size or horizon was set by hand, bypassing the planner.
    pub fn overridden(&self) -> bool {
        self.eta.is_some() || self.n_steps.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: PotentialKind,
    pub potential: PotentialSpec64,
    pub certify: CertifyOptions<f64>,
    pub planner: PlannerConfig,
    pub sampler: SamplerConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Effective key/value pairs after aliases and overrides.
    pub entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// SHA-256 of the effective entries, one sorted `key=value` line each.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(format!("{k}={v}\n"));
        }
        format!("{:x}", h.finalize())
    }

    /// Initial variance, defaulting to half the admissible bound.
    pub fn sigma2(&self, lipschitz: f64) -> f64 {
        self.planner.sigma2.unwrap_or(0.5 / (1.0 + lipschitz))
    }
}

fn canonical_key(raw: &str) -> String {
    ALIASES
        .iter()
        .find(|(a, _)| *a == raw)
        .map(|(_, k)| k.to_string())
        .unwrap_or_else(|| raw.to_string())
}

/// Parses the text into `(key, (value, line))`, with `line = 0` for overrides.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, (String, usize)>> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| LabError::Parse {
                line,
                key: content.to_string(),
                message: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| LabError::Parse {
            line,
            key: content.to_string(),
            message: "expected `key = value`".into(),
        })?;
        let k = k.trim();
        let full = if section.is_empty() {
            canonical_key(k)
        } else {
            format!("{section}.{k}")
        };
        if !KEYS.contains(&full.as_str()) {
            return Err(LabError::Parse {
                line,
                key: full,
                message: "unknown key".into(),
            });
        }
        if out.insert(full.clone(), (v.trim().to_string(), line)).is_some() {
            return Err(LabError::Parse {
                line,
                key: full,
                message: "duplicate key".into(),
            });
        }
    }
    Ok(out)
}

/// Applies `key=value` overrides on top of parsed entries.
pub fn apply_overrides(entries: &mut BTreeMap<String, (String, usize)>, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| LabError::Parse {
            line: 0,
            key: o.clone(),
            message: "override must be `key=value`".into(),
        })?;
        let key = canonical_key(k.trim());
        if !KEYS.contains(&key.as_str()) {
            return Err(LabError::Parse {
                line: 0,
                key,
                message: "unknown key".into(),
            });
        }
        entries.insert(key, (v.trim().to_string(), 0));
    }
    Ok(())
}

struct Reader<'a> {
    entries: &'a BTreeMap<String, (String, usize)>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn get<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| LabError::Parse {
                line,
                key: key.to_string(),
                message: format!("cannot parse `{v}`"),
            }),
        }
    }

    fn require<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        self.get(key)?
            .ok_or_else(|| LabError::Invalid(format!("missing required key `{key}`")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| LabError::Parse {
                    line,
                    key: key.to_string(),
                    message: format!("expected comma-separated numbers, got `{v}`"),
                }),
        }
    }
}

fn invalid(msg: impl Into<String>) -> LabError {
    LabError::Invalid(msg.into())
}

fn build_potential(r: &Reader, kind: PotentialKind, base_dir: &Path) -> Result<PotentialSpec64> {
    let dim = |r: &Reader| -> Result<usize> {
        let d: usize = r.require("potential.d")?;
        if d == 0 {
            return Err(invalid("potential.d must be at least 1"));
        }
        Ok(d)
    };
    let positive = |key: &str| -> Result<f64> {
        let v: f64 = r.require(key)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("{key} must be positive, got {v}")));
        }
        Ok(v)
    };
    let dataset = |r: &Reader| -> Result<Option<Dataset<f64>>> {
        let Some(p) = r.get::<String>("potential.data")? else {
            return Ok(None);
        };
        let path = base_dir.join(&p);
        if !path.is_file() {
            return Err(invalid(format!("dataset file {} does not exist", path.display())));
        }
        Ok(Some(Dataset::from_csv_path(&path)?))
    };
    let lib = match kind {
        PotentialKind::Gaussian => LibraryPotential::Gaussian { dim: dim(r)? },
        PotentialKind::CosineCanonical => LibraryPotential::CosineCanonical { dim: dim(r)? },
        PotentialKind::GaussianMixture => {
            let separation = r
                .list("potential.separation")?
                .ok_or_else(|| invalid("gaussian_mixture needs potential.separation"))?;
            if let Some(d) = r.get::<usize>("potential.d")? {
                if d != separation.len() {
                    return Err(invalid(format!(
                        "potential.d = {d} but separation has {} entries",
                        separation.len()
                    )));
                }
            }
            LibraryPotential::GaussianMixture { separation }
        }
        PotentialKind::BayesLogistic => {
            let data = dataset(r)?.ok_or_else(|| invalid("bayes_logistic needs potential.data"))?;
            if let Some(d) = r.get::<usize>("potential.d")? {
                if d != data.dim() {
                    return Err(invalid(format!("potential.d = {d} but the dataset has {} features", data.dim())));
                }
            }
            LibraryPotential::BayesLogistic {
                data,
                alpha: positive("potential.alpha")?,
            }
        }
        PotentialKind::StudentT => LibraryPotential::StudentTRidge {
            dim: dim(r)?,
            alpha: positive("potential.alpha")?,
        },
        PotentialKind::CorruptedRegression => {
            let data = dataset(r)?;
            let d = match &data {
                Some(ds) => ds.dim(),
                None => dim(r)?,
            };
            LibraryPotential::CorruptedRegression {
                dim: d,
                alpha: positive("potential.alpha")?,
                beta: positive("potential.beta")?,
                data,
            }
        }
    };
    Ok(build_library_potential(lib)?)
}

/// Validated configuration from parsed entries; relative paths resolve against `base_dir`.
pub fn from_entries(entries: BTreeMap<String, (String, usize)>, base_dir: &Path) -> Result<ExperimentConfig> {
    let r = Reader { entries: &entries };
    let kind_name: String = r.require("potential.kind")?;
    let kind = PotentialKind::parse(&kind_name).ok_or_else(|| LabError::Parse {
        line: r.raw("potential.kind").map_or(0, |(_, l)| l),
        key: "potential.kind".into(),
        message: format!("unknown potential `{kind_name}`"),
    })?;
    let potential = build_potential(&r, kind, base_dir)?;
    let seed: u64 = r.require("seed")?;

    let source = match r.get::<String>("certificate.source")?.as_deref() {
        None | Some("analytic") => ConstantSource::Analytic,
        Some("numeric") => ConstantSource::Numeric,
        Some(other) => return Err(invalid(format!("certificate.source must be analytic or numeric, got `{other}`"))),
    };
    let mut certify = CertifyOptions::<f64> {
        source,
        probe: Probe {
            seed,
            ..Probe::default()
        },
        ..CertifyOptions::default()
    };
    if let Some(radius) = r.get::<f64>("certificate.probe_radius")? {
        if !(radius > 0.0) {
            return Err(invalid("certificate.probe_radius must be positive"));
        }
        certify.probe.radius = radius;
    }
    if let Some(n) = r.get::<usize>("certificate.samples")? {
        certify.samples = n.max(1);
    }
    if let Some(c) = r.get::<f64>("certificate.lyapunov_c")? {
        if !(c >= 0.0) {
            return Err(invalid("certificate.lyapunov_c must be nonnegative"));
        }
        certify.lyapunov_c = c;
    }

    let epsilon: f64 = r.require("planner.epsilon")?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let metric = match r.get::<String>("planner.metric")?.as_deref() {
        None | Some("chi2") => MetricChoice::Chi2,
        Some("renyi") => {
            let a: f64 = r.require("planner.alpha")?;
            if !(a > 1.0) {
                return Err(invalid(format!("planner.alpha must exceed 1, got {a}")));
            }
            MetricChoice::Renyi(a)
        }
        Some("kl") => MetricChoice::Translated(TargetMetric::Kl),
        Some("tv") => MetricChoice::Translated(TargetMetric::Tv),
        Some("w2") => MetricChoice::Translated(TargetMetric::W2),
        Some(other) => return Err(invalid(format!("unknown planner.metric `{other}`"))),
    };
    let mut constants = PlannerConstants::default();
    for (key, slot) in [
        ("planner.c1", &mut constants.c1),
        ("planner.c2", &mut constants.c2),
        ("planner.c3", &mut constants.c3),
    ] {
        if let Some(v) = r.get::<f64>(key)? {
            if !(v > 0.0) {
                return Err(invalid(format!("{key} must be positive")));
            }
            *slot = v;
        }
    }
    let sigma2: Option<f64> = r.get("planner.sigma2")?;
    if let Some(s) = sigma2 {
        if !(s > 0.0) {
            return Err(invalid("sigma2 must be positive"));
        }
        if let Some(l) = potential.known().lipschitz.filter(|_| source == ConstantSource::Analytic) {
            if s >= 1.0 / (1.0 + l) {
                return Err(invalid(format!("sigma2 must be < 1/(1+L) (sigma2 = {s}, L = {l})")));
            }
        }
    }

    let eta: Option<f64> = r.get("sampler.eta")?;
    if let Some(e) = eta {
        if !(e > 0.0 && e.is_finite()) {
            return Err(invalid("sampler.eta must be positive"));
        }
    }
    let substeps = r.get::<usize>("sampler.substeps")?.unwrap_or(1);
    if substeps == 0 {
        return Err(invalid("sampler.substeps must be at least 1"));
    }
    let n_chains = r.get::<usize>("sampler.n_chains")?.unwrap_or(10_000);
    if n_chains == 0 {
        return Err(invalid("sampler.n_chains must be at least 1"));
    }
    let workers: Option<usize> = r.get("sampler.workers")?;
    if workers == Some(0) {
        return Err(invalid("sampler.workers must be at least 1"));
    }
    let jump_form = match r.get::<String>("sampler.jump_form")?.as_deref() {
        None | Some("explicit") => JumpForm::Explicit,
        Some("compact") => JumpForm::Compact {
            c: r.get("sampler.jump_c")?.unwrap_or(1.0),
        },
        Some(other) => return Err(invalid(format!("sampler.jump_form must be explicit or compact, got `{other}`"))),
    };
    let delta = r.get::<f64>("sampler.delta")?.unwrap_or(0.01);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("sampler.delta must lie in (0, 1)"));
    }
    let sampler = SamplerConfig {
        eta,
        n_steps: r.get("sampler.N")?,
        n_chains,
        substeps,
        workers,
        bins: r.get::<usize>("sampler.bins")?.unwrap_or(64).max(16),
        jump_form,
        delta,
    };
    let out_dir = base_dir.join(r.get::<String>("output.dir")?.unwrap_or_else(|| "out".into()));

    Ok(ExperimentConfig {
        kind,
        potential,
        certify,
        planner: PlannerConfig {
            epsilon,
            metric,
            constants,
            sigma2,
        },
        sampler,
        out_dir,
        seed,
        entries: entries.into_iter().map(|(k, (v, _))| (k, v)).collect(),
    })
}

/// Reads, applies overrides and validates.
pub fn load_config_with(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut entries = parse_entries(&text)?;
    apply_overrides(&mut entries, overrides)?;
    let base = path.parent().unwrap_or(Path::new("."));
    from_entries(entries, base)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    load_config_with(path, &[])
}
