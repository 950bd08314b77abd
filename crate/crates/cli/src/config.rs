//! Pipeline configuration: file paths, per-stage parameters, and the
//! configuration hash stamped into every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tabrel_core::eval::SynthSpec;

use crate::{CliError, ErrorKind};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    pub corpus: PathBuf,
    pub edges: PathBuf,
    pub assoc: PathBuf,
    pub kb: PathBuf,
    pub types: PathBuf,
    pub gold: PathBuf,
    #[serde(default)]
    pub word_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub node_embeddings: Option<PathBuf>,
    pub workdir: PathBuf,
}

fn default_dim() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Seed for the hash-embedding fallback used when no files are given.
    #[serde(default)]
    pub hash_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: default_dim(),
            hash_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Take the first `k` table-bearing articles as sources.
    #[serde(default)]
    pub k: Option<usize>,
    /// Explicit source article ids; wins over `k`.
    #[serde(default)]
    pub list: Option<Vec<String>>,
}

fn default_num_trees() -> usize {
    100
}
fn default_train_fraction() -> f64 {
    0.6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfConfig {
    #[serde(default = "default_num_trees")]
    pub num_trees: usize,
    #[serde(default)]
    pub min_samples_split: Option<usize>,
    /// Fraction of sources whose pairs train the relevance forest.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            num_trees: default_num_trees(),
            min_samples_split: None,
            train_fraction: default_train_fraction(),
        }
    }
}

fn default_hidden() -> usize {
    100
}
fn default_epochs() -> usize {
    50
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    32
}
fn default_split() -> (f64, f64, f64) {
    (0.6, 0.1, 0.3)
}
fn default_mode() -> String {
    "type".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignConfig {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            mode: default_mode(),
            hidden_dim: default_hidden(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            split: default_split(),
        }
    }
}

fn default_criteria() -> Vec<String> {
    ["f1", "f2", "f4", "f5"].iter().map(|s| s.to_string()).collect()
}
fn default_tau() -> f64 {
    0.5
}
fn default_root() -> String {
    "root".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default = "default_root")]
    pub graph_root: String,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub sources: SourceSpec,
    #[serde(default = "default_criteria")]
    pub filter_criteria: Vec<String>,
    #[serde(default)]
    pub rf: RfConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub align: AlignConfig,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 leaves the library default. Affects wall time
    /// only, never outputs.
    #[serde(default)]
    pub workers: usize,
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workdir: Option<PathBuf>,
    pub tau: Option<f64>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<PipelineConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError {
            kind: ErrorKind::Usage,
            message: format!("cannot read config {}: {e}", path.display()),
        })?;
        let mut config: PipelineConfig = serde_json::from_str(&text).map_err(|e| CliError {
            kind: ErrorKind::Usage,
            message: format!("bad config {}: {e}", path.display()),
        })?;
        // Relative paths resolve against the config file's directory.
        if let Some(base) = path.parent() {
            config.paths = config.paths.resolved(base);
        }
        if let Some(w) = &overrides.workdir {
            config.paths.workdir = w.clone();
        }
        if let Some(t) = overrides.tau {
            config.tau = t;
        }
        if let Some(m) = &overrides.mode {
            config.align.mode = m.clone();
        }
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(w) = overrides.workers {
            config.workers = w;
        }
        if !(0.0..=1.0).contains(&config.tau) {
            return Err(CliError {
                kind: ErrorKind::Usage,
                message: format!("tau must be in [0,1], got {}", config.tau),
            });
        }
        Ok(config)
    }

    /// Hash of the effective configuration and tool version. Worker count
    /// and file locations are excluded: parallelism must not change outputs,
    /// and the hash identifies parameters, not where a workdir happens to
    /// live.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("paths");
            map.remove("workers");
        }
        let canonical = serde_json::to_string(&value).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(TOOL_VERSION.as_bytes());
        hasher.update(b"\0");
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn workfile(&self, name: &str) -> PathBuf {
        self.paths.workdir.join(name)
    }
}

impl Paths {
    fn resolved(&self, base: &Path) -> Paths {
        let fix = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        Paths {
            corpus: fix(&self.corpus),
            edges: fix(&self.edges),
            assoc: fix(&self.assoc),
            kb: fix(&self.kb),
            types: fix(&self.types),
            gold: fix(&self.gold),
            word_embeddings: self.word_embeddings.as_ref().map(&fix),
            node_embeddings: self.node_embeddings.as_ref().map(&fix),
            workdir: fix(&self.workdir),
        }
    }
}

/// Minimal config synthesizer for tests and the bundled fixture: all data
/// files live inside the workdir.
pub fn config_in_dir(dir: &Path) -> PipelineConfig {
    PipelineConfig {
        paths: Paths {
            corpus: dir.join("corpus.jsonl"),
            edges: dir.join("edges.tsv"),
            assoc: dir.join("assoc.tsv"),
            kb: dir.join("kb.tsv"),
            types: dir.join("types.tsv"),
            gold: dir.join("gold.tsv"),
            word_embeddings: None,
            node_embeddings: None,
            workdir: dir.to_path_buf(),
        },
        graph_root: default_root(),
        embedding: EmbeddingConfig::default(),
        sources: SourceSpec::default(),
        filter_criteria: default_criteria(),
        rf: RfConfig::default(),
        tau: default_tau(),
        align: AlignConfig::default(),
        synth: None,
        seed: 0,
        workers: 0,
    }
}

/// Deterministic source selection: explicit list, or the first `k`
/// table-bearing articles in corpus order (all of them by default).
pub fn resolve_sources(
    config: &PipelineConfig,
    corpus: &tabrel_core::corpus::Corpus,
) -> Vec<String> {
    if let Some(list) = &config.sources.list {
        return list.clone();
    }
    let all: Vec<String> = corpus.table_bearing().map(|a| a.id.clone()).collect();
    match config.sources.k {
        Some(k) => all.into_iter().take(k).collect(),
        None => all,
    }
}
