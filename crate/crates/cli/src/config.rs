//! Flat run configuration: TOML file, then `TILT_*` environment variables,
//! then `--set key=value` flags, later sources winning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,

    // corpus generation
    pub kind: Option<String>,
    pub length: Option<usize>,
    pub vocab_size: Option<usize>,
    pub zipf_exponent: Option<f64>,
    /// Corpus whose empirical unigram distribution drives token draws.
    pub unigram: Option<PathBuf>,
    pub p_open: Option<f64>,
    /// Dependency-length histogram file for flat parentheses.
    pub lengths: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub v_max: Option<usize>,
    pub lowercase: Option<bool>,
    pub shuffle_vocab: Option<bool>,

    // model
    pub embed_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub layers: Option<usize>,
    pub p_emb_drop: Option<f64>,
    pub p_weight_drop: Option<f64>,
    pub bptt_len: Option<usize>,
    pub tie_weights: Option<bool>,

    // training
    pub lr0: Option<f64>,
    pub plateau_patience: Option<usize>,
    pub lr_decay_factor: Option<f64>,
    pub max_reductions: Option<u32>,
    pub improvement_epsilon: Option<f64>,
    pub batch_size: Option<usize>,
    /// `0` disables clipping.
    pub grad_clip: Option<f64>,
    pub max_epochs: Option<usize>,
    pub shards: Option<usize>,
    pub exec: Option<String>,
    pub finetune_lr0: Option<f64>,
    pub finetune_max_epochs: Option<usize>,
    pub embedding_policy: Option<String>,

    // experiment grid
    pub experiment_id: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub l1_kinds: Option<Vec<String>>,
    pub l1_tokens: Option<usize>,
    pub l1_valid_fraction: Option<f64>,
    pub corpus_seed: Option<u64>,
    pub l2_train_tokens: Option<usize>,
    pub l2_valid_tokens: Option<usize>,
    pub l2_test_tokens: Option<usize>,
    pub l2_seed: Option<u64>,
    pub workers: Option<usize>,

    // files
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

/// Parses an override value as a TOML scalar or array, falling back to a
/// bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sources merged in order of increasing priority.
pub struct ConfigSources<'a> {
    pub file: Option<&'a Path>,
    pub env: Vec<(String, String)>,
    pub sets: &'a [String],
    /// Values from dedicated flags; highest priority.
    pub flags: Vec<(&'static str, Value)>,
}

#[derive(Debug, Clone)]
pub struct Effective {
    pub config: RunConfig,
    pub table: Table,
}

impl ConfigSources<'_> {
    pub fn resolve(self) -> Result<Effective, CliError> {
        let mut table = match self.file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for (k, v) in self.env {
            if let Some(key) = k.strip_prefix("TILT_") {
                table.insert(key.to_ascii_lowercase(), parse_value(&v));
            }
        }
        for s in self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {s:?}")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        for (k, v) in self.flags {
            table.insert(k.to_string(), v);
        }
        let config: RunConfig = Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        // re-serialize so the manifest shows normalized values
        let table = toml::Value::try_from(&config)
            .ok()
            .and_then(|v| v.as_table().cloned())
            .unwrap_or(table);
        Ok(Effective { config, table })
    }
}

pub fn env_overrides() -> Vec<(String, String)> {
    std::env::vars().filter(|(k, _)| k.starts_with("TILT_")).collect()
}

pub fn path_flag(key: &'static str, p: &Option<PathBuf>) -> Option<(&'static str, Value)> {
    p.as_ref().map(|p| (key, Value::String(p.display().to_string())))
}

/// `<out>.manifest.toml`: the command, effective configuration and extra
/// provenance entries.
pub fn write_manifest(out: &Path, command: &str, eff: &Effective, extra: &BTreeMap<String, Value>) -> anyhow::Result<PathBuf> {
    let mut t = Table::new();
    t.insert("command".into(), Value::String(command.into()));
    t.insert("tool_version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    t.insert("config".into(), Value::Table(eff.table.clone()));
    if !extra.is_empty() {
        t.insert("provenance".into(), Value::Table(extra.clone().into_iter().collect()));
    }
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.toml");
    let path = PathBuf::from(name);
    std::fs::write(&path, toml::to_string(&t)?)?;
    Ok(path)
}

impl RunConfig {
    pub fn require<T: Clone>(&self, v: &Option<T>, key: &str) -> Result<T, CliError> {
        v.clone().ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_file_env_set_flag() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.toml");
        std::fs::write(&f, "lr0 = 1.0\nbatch_size = 4\nlayers = 2\nseeds = [1, 2]\n").unwrap();
        let sets = vec!["batch_size=8".to_string(), "kind=nest".to_string()];
        let eff = ConfigSources {
            file: Some(&f),
            env: vec![("TILT_LR0".into(), "2.5".into()), ("TILT_LAYERS".into(), "3".into())],
            sets: &sets,
            flags: vec![("layers", Value::Integer(4))],
        }
        .resolve()
        .unwrap();
        let c = eff.config;
        assert_eq!(c.lr0, Some(2.5));
        assert_eq!(c.batch_size, Some(8));
        assert_eq!(c.layers, Some(4));
        assert_eq!(c.kind.as_deref(), Some("nest"));
        assert_eq!(c.seeds, Some(vec![1, 2]));
    }

    #[test]
    fn unknown_and_mistyped_keys_rejected() {
        let sets = vec!["nonsense=1".to_string()];
        let r = ConfigSources {
            file: None,
            env: vec![],
            sets: &sets,
            flags: vec![],
        }
        .resolve();
        assert!(matches!(r, Err(CliError::Config(m)) if m.contains("nonsense")));
        let sets = vec!["batch_size=many".to_string()];
        let r = ConfigSources {
            file: None,
            env: vec![],
            sets: &sets,
            flags: vec![],
        }
        .resolve();
        assert!(matches!(r, Err(CliError::Config(_))));
    }
}
