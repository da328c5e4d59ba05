use std::path::Path;

use conclab_core::IsingModel;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, HSpec, JSpec, ModelConfig};
use crate::CliError;

/// Whitespace-separated reals, one matrix row per non-empty line; `#` starts a comment.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    CliError::Config(format!("{}: line {}: bad number `{tok}`", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn coupling(cfg: &ExperimentConfig, m: &ModelConfig) -> Result<DMatrix<f64>, CliError> {
    let n = m.n;
    Ok(match &m.j {
        JSpec::Zero => DMatrix::zeros(n, n),
        JSpec::CurieWeiss { beta0 } => DMatrix::from_fn(n, n, |i, k| if i == k { 0.0 } else { beta0 / n as f64 }),
        JSpec::File { path } => {
            let path = cfg.resolve(path);
            let rows = read_matrix(&path)?;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Config(format!("{}: expected a {n}x{n} matrix", path.display())));
            }
            DMatrix::from_fn(n, n, |i, k| rows[i][k])
        }
        JSpec::Random { norm } => {
            // validated: random couplings need the master seed
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or_default());
            IsingModel::random(n, *norm, 0.0, &mut rng).j().clone()
        }
    })
}

fn field(cfg: &ExperimentConfig, m: &ModelConfig) -> Result<DVector<f64>, CliError> {
    let n = m.n;
    Ok(match &m.h {
        HSpec::Zero => DVector::zeros(n),
        HSpec::Const { value } => DVector::from_element(n, *value),
        HSpec::File { path } => {
            let path = cfg.resolve(path);
            let values: Vec<f64> = read_matrix(&path)?.into_iter().flatten().collect();
            if values.len() != n {
                return Err(CliError::Config(format!("{}: expected {n} field values", path.display())));
            }
            DVector::from_vec(values)
        }
    })
}

/// The configured model with `J` scaled by `j_scale` and `h` replaced by `h_override`.
pub fn build_with(
    cfg: &ExperimentConfig,
    j_scale: f64,
    h_override: Option<f64>,
) -> Result<IsingModel, CliError> {
    let m = cfg.model()?;
    let j = coupling(cfg, m)? * j_scale;
    let h = match h_override {
        Some(v) => DVector::from_element(m.n, v),
        None => field(cfg, m)?,
    };
    IsingModel::new(j, h).map_err(|e| CliError::core("model", e))
}

pub fn build(cfg: &ExperimentConfig) -> Result<IsingModel, CliError> {
    build_with(cfg, 1.0, None)
}
