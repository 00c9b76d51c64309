//! System files, knowns files and command-line vectors.

use std::path::{Path, PathBuf};

use greedy_lab::checks::Knowns;
use greedy_lab::constructions::build_example;
use greedy_lab::{CorpusSpec, ExampleSpec, IndexSet, MinimalSystem, NormSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Explicit system description. `duals` may be omitted for a square
/// system, in which case the coefficient functionals are computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub ambient_dim: usize,
    pub norm: NormSpec,
    pub basis: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duals: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl SystemSpec {
    pub fn build(self) -> Result<MinimalSystem, CliError> {
        if let Some(row) = self.basis.iter().find(|r| r.len() != self.ambient_dim) {
            return Err(CliError::Input(format!(
                "basis row of length {} in ambient dimension {}",
                row.len(),
                self.ambient_dim
            )));
        }
        let sys = match self.duals {
            Some(duals) => MinimalSystem::new(self.norm, self.basis, duals)?,
            None if self.basis.len() < self.ambient_dim => {
                return Err(CliError::Input(format!(
                    "duals are required for {} vectors in dimension {}",
                    self.basis.len(),
                    self.ambient_dim
                )))
            }
            None => MinimalSystem::from_square_basis(self.norm, self.basis)?,
        };
        Ok(match self.labels {
            Some(l) => sys.with_labels(l)?,
            None => sys,
        })
    }

    pub fn from_system(sys: &MinimalSystem) -> Self {
        SystemSpec {
            ambient_dim: sys.ambient_dim(),
            norm: sys.norm_spec().clone(),
            basis: sys.basis().to_vec(),
            duals: Some(sys.duals().to_vec()),
            labels: sys.labels().map(<[usize]>::to_vec),
        }
    }
}

/// A resolved system together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub system: MinimalSystem,
    pub example: Option<ExampleSpec>,
    pub origin: String,
}

impl LoadedSystem {
    pub fn from_example(spec: ExampleSpec, origin: String) -> Result<Self, CliError> {
        Ok(LoadedSystem {
            system: build_example(spec)?.system,
            example: Some(spec),
            origin,
        })
    }

    /// SHA-256 of the canonical serialization of the resolved system, so
    /// a family shortcut and its expanded file hash alike.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.system).expect("systems always serialize");
        hex::encode(Sha256::digest(bytes))
    }

    /// File contents that rebuild this system.
    pub fn file_value(&self) -> Value {
        match &self.example {
            Some(spec) => serde_json::to_value(spec),
            None => serde_json::to_value(SystemSpec::from_system(&self.system)),
        }
        .expect("system specs always serialize")
    }
}

/// Parses either a [`SystemSpec`] or a family shortcut
/// (`{"family": "L1Alpha", "alpha": 1, "N": 8}`).
pub fn parse_system(text: &str, origin: &str) -> Result<LoadedSystem, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Input(format!("{origin}: {e}")))?;
    if value.get("family").is_some() {
        let spec: ExampleSpec = serde_json::from_value(value).map_err(|e| CliError::Input(format!("{origin}: {e}")))?;
        return LoadedSystem::from_example(spec, origin.to_string());
    }
    let spec: SystemSpec = serde_json::from_value(value).map_err(|e| CliError::Input(format!("{origin}: {e}")))?;
    Ok(LoadedSystem {
        system: spec.build()?,
        example: None,
        origin: origin.to_string(),
    })
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_system(path: &Path) -> Result<LoadedSystem, CliError> {
    parse_system(&read_file(path)?, &path.display().to_string())
}

/// A comma-separated list of numbers, or `@path` naming a file holding
/// either such a list or a JSON array.
pub fn parse_vector(arg: &str) -> Result<Vec<f64>, CliError> {
    let owned;
    let text = match arg.strip_prefix('@') {
        Some(path) => {
            owned = read_file(&PathBuf::from(path))?;
            owned.trim()
        }
        None => arg.trim(),
    };
    if text.starts_with('[') {
        return serde_json::from_str(text).map_err(|e| CliError::Input(format!("vector {arg}: {e}")));
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("not a finite number: {t:?}")))
        })
        .collect()
}

/// 1-based positions, comma separated (an empty string is the empty set).
pub fn parse_positions(arg: &str, n: usize) -> Result<IndexSet, CliError> {
    let mut out = Vec::new();
    for t in arg.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let k: usize = t
            .parse()
            .map_err(|_| CliError::Input(format!("not a position: {t:?}")))?;
        if k == 0 || k > n {
            return Err(CliError::Input(format!("position {k} outside 1..={n}")));
        }
        out.push(k - 1);
    }
    Ok(IndexSet::new(out))
}

/// `key=value` pairs over the [`CorpusSpec`] fields; `taus` takes a
/// `;`-separated list. Unlisted fields keep their defaults.
pub fn parse_corpus(arg: &str) -> Result<CorpusSpec, CliError> {
    let mut spec = CorpusSpec::default();
    for pair in arg.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (key, val) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("corpus entry {pair:?} is not key=value")))?;
        let count = || {
            val.parse::<usize>()
                .map_err(|_| CliError::Input(format!("corpus {key}: not a count: {val:?}")))
        };
        match key.trim() {
            "gaussian" => spec.gaussian = count()?,
            "rademacher" => spec.rademacher = count()?,
            "blocks" => spec.blocks = count()?,
            "signs" => spec.signs = count()?,
            "patterns" => spec.patterns = count()?,
            "spikes" => spec.spikes = count()?,
            "delta" => {
                spec.delta = val
                    .parse()
                    .map_err(|_| CliError::Input(format!("corpus delta: {val:?}")))?
            }
            "taus" => {
                spec.taus = val
                    .split(';')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|_| CliError::Input(format!("corpus tau: {t:?}")))
                    })
                    .collect::<Result<_, _>>()?
            }
            other => return Err(CliError::Input(format!("unknown corpus family {other:?}"))),
        }
    }
    Ok(spec)
}

pub fn load_knowns(path: &Path) -> Result<Knowns, CliError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
