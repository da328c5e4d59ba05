//! Experiment configuration: TOML with a closed key schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::de::{DeTable, DeValue};

use crate::CliError;

/// Every accepted dotted key. Tables are accepted when they prefix a key.
const KEYS: &[&str] = &[
    "experiment.kind",
    "experiment.seed",
    "experiment.out",
    "model.n",
    "model.j.kind",
    "model.j.beta0",
    "model.j.path",
    "model.j.norm",
    "model.h.kind",
    "model.h.value",
    "model.h.path",
    "tolerances.residual",
    "tolerances.slack",
    "tolerances.w2",
    "verify.instances",
    "verify.p_grid",
    "verify.max_d",
    "certify.coupling",
    "tails.d",
    "tails.coefficients",
    "tails.samples",
    "tails.thinning",
    "tails.burn_in",
    "tails.chains",
    "tails.grid",
    "tails.constant",
    "constants.n",
    "constants.r",
    "scan.parameter",
    "scan.values",
    "scan.search",
    "scan.restarts",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Verify,
    Certify,
    Tails,
    Constants,
    Scan,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Verify => "verify",
            Kind::Certify => "certify",
            Kind::Tails => "tails",
            Kind::Constants => "constants",
            Kind::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub kind: Kind,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JSpec {
    Zero,
    CurieWeiss { beta0: f64 },
    File { path: PathBuf },
    /// random symmetric couplings with `‖J‖₁→₁ = norm`, drawn from the master seed
    Random { norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    Zero,
    Const { value: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub j: JSpec,
    #[serde(default = "default_h")]
    pub h: HSpec,
}

fn default_h() -> HSpec {
    HSpec::Zero
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub residual: f64,
    pub slack: f64,
    pub w2: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-10,
            slack: 1e-12,
            w2: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub instances: usize,
    pub p_grid: Vec<f64>,
    pub max_d: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            p_grid: vec![2.0, 2.5, 3.0, 4.0, 8.0, 16.0, 32.0],
            max_d: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingChoice {
    #[default]
    Auto,
    Exact,
    Bound,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub coupling: CouplingChoice,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsConfig {
    #[serde(default = "default_d")]
    pub d: usize,
    /// tensor file; `a_I = 1` on all sets when absent
    pub coefficients: Option<PathBuf>,
    pub samples: u64,
    pub thinning: Option<u64>,
    pub burn_in: Option<u64>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// overrides the certificate-derived constant of the bound
    pub constant: Option<f64>,
}

fn default_d() -> usize {
    2
}

fn default_chains() -> usize {
    1
}

fn default_grid() -> usize {
    40
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub n: usize,
    pub r: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    /// Curie–Weiss inverse temperature
    Beta0,
    /// multiplies the configured `J`
    JScale,
    /// constant external field
    H,
}

impl ScanParameter {
    pub fn name(self) -> &'static str {
        match self {
            ScanParameter::Beta0 => "beta0",
            ScanParameter::JScale => "j_scale",
            ScanParameter::H => "h",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub parameter: ScanParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_search")]
    pub search: bool,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_search() -> bool {
    true
}

fn default_restarts() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    model: Option<ModelConfig>,
    #[serde(default)]
    tolerances: Tolerances,
    verify: Option<VerifyConfig>,
    certify: Option<CertifyConfig>,
    tails: Option<TailsConfig>,
    constants: Option<ConstantsConfig>,
    scan: Option<ScanConfig>,
}

/// Validated configuration. Relative paths are resolved against `base`.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub base: PathBuf,
    pub model: Option<ModelConfig>,
    pub tolerances: Tolerances,
    pub verify: VerifyConfig,
    pub certify: CertifyConfig,
    pub tails: Option<TailsConfig>,
    pub constants: Option<ConstantsConfig>,
    pub scan: Option<ScanConfig>,
}

impl ExperimentConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base.join(path)
    }

    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{} requires a [model] section", self.kind.name())))
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn known(path: &str) -> bool {
    KEYS.iter()
        .any(|k| *k == path || (k.starts_with(path) && k.as_bytes().get(path.len()) == Some(&b'.')))
}

fn walk(text: &str, table: &DeTable<'_>, prefix: &str) -> Result<(), CliError> {
    for (key, value) in table.iter() {
        let path = if prefix.is_empty() {
            key.get_ref().to_string()
        } else {
            format!("{prefix}.{}", key.get_ref())
        };
        if !known(&path) {
            // name the full dotted key of the first leaf below the unknown table
            let (mut path, mut span, mut value) = (path, key.span(), value);
            while let DeValue::Table(inner) = value.get_ref() {
                let Some((k, v)) = inner.iter().next() else { break };
                path = format!("{path}.{}", k.get_ref());
                span = k.span();
                value = v;
            }
            return Err(CliError::Config(format!(
                "line {}: unknown key `{path}`",
                line_of(text, span.start)
            )));
        }
        if let DeValue::Table(inner) = value.get_ref() {
            walk(text, inner, &path)?;
        }
    }
    Ok(())
}

/// Parses and validates a configuration held in memory; `seed` overrides `experiment.seed`.
pub fn parse_config_str(text: &str, base: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let doc = DeTable::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
    walk(text, doc.get_ref(), "")?;
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg = ExperimentConfig {
        kind: raw.experiment.kind,
        seed: seed.or(raw.experiment.seed),
        out: raw.experiment.out,
        base: base.to_path_buf(),
        model: raw.model,
        tolerances: raw.tolerances,
        verify: raw.verify.unwrap_or_default(),
        certify: raw.certify.unwrap_or_default(),
        tails: raw.tails,
        constants: raw.constants,
        scan: raw.scan,
    };
    validate(&cfg)?;
    Ok(cfg)
}

/// Reads, parses and validates the file at `path`.
pub fn parse_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base, seed).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let err = |m: String| Err(CliError::Config(m));
    if matches!(cfg.kind, Kind::Tails | Kind::Scan) && cfg.seed.is_none() {
        return err(format!("{} requires experiment.seed (or --seed)", cfg.kind.name()));
    }
    match cfg.kind {
        Kind::Verify | Kind::Certify => {
            cfg.model()?;
        }
        Kind::Tails => {
            cfg.model()?;
            let Some(t) = &cfg.tails else {
                return err("tails requires a [tails] section with `samples`".into());
            };
            if t.samples == 0 || t.chains == 0 || t.grid < 2 || t.d == 0 {
                return err("tails.samples and tails.chains must be positive, tails.grid at least 2".into());
            }
        }
        Kind::Constants => {
            if cfg.constants.is_none() {
                return err("constants requires a [constants] section with `n`".into());
            }
        }
        Kind::Scan => {
            cfg.model()?;
            let Some(s) = &cfg.scan else {
                return err("scan requires a [scan] section".into());
            };
            if s.values.is_empty() {
                return err("scan.values must not be empty".into());
            }
            if s.parameter == ScanParameter::Beta0 && !matches!(cfg.model()?.j, JSpec::CurieWeiss { .. }) {
                return err("scan.parameter = \"beta0\" needs model.j.kind = \"curie_weiss\"".into());
            }
        }
    }
    if let Some(m) = &cfg.model {
        if m.n == 0 {
            return err("model.n must be positive".into());
        }
        if matches!(m.j, JSpec::Random { .. }) && cfg.seed.is_none() {
            return err("model.j.kind = \"random\" needs experiment.seed".into());
        }
        for p in [
            if let JSpec::File { path } = &m.j { Some(path) } else { None },
            if let HSpec::File { path } = &m.h { Some(path) } else { None },
        ]
        .into_iter()
        .flatten()
        {
            if !cfg.resolve(p).is_file() {
                return err(format!("referenced file {} does not exist", cfg.resolve(p).display()));
            }
        }
    }
    if let Some(p) = cfg.tails.as_ref().and_then(|t| t.coefficients.as_ref()) {
        if !cfg.resolve(p).is_file() {
            return err(format!("referenced file {} does not exist", cfg.resolve(p).display()));
        }
    }
    Ok(())
}
