//! Task configuration: one TOML file plus `CGT_`-prefixed environment
//! overrides. The defaults reproduce the five-block weights task with
//! `red = 10` given away up front.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    load_catalog, load_dictionary, IngestError, PropositionCatalog, PropositionDictionary,
    StopWords,
};
use crate::prop::{AtomicProp, PropError, PropFormula, TaskDomain};

pub const ENV_PREFIX: &str = "CGT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Toml(String),
    #[error("bad value in ${var}: {message}")]
    BadEnv { var: String, message: String },
    #[error(transparent)]
    Prop(#[from] PropError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Blocks in canonical order.
    pub blocks: Vec<String>,
    /// Weight domain in grams.
    pub weights: Vec<u32>,
    /// Facts the group is told before the dialogue starts.
    pub seed_facts: Vec<String>,
    /// Whether accepted/derived relations count as facts in FBank.
    pub relational_facts: bool,
    /// Similarity floor for the retrieval extractor; -1 disables it.
    pub similarity_threshold: f64,
    pub stopword_path: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,
    pub dictionary_path: Option<PathBuf>,
    /// Cap on enumerated catalog formulas.
    pub catalog_cap: usize,
    /// Largest conjunction size when enumerating the catalog.
    pub max_conjuncts: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            blocks: ["red", "blue", "green", "purple", "yellow"]
                .map(String::from)
                .to_vec(),
            weights: vec![10, 20, 30, 40, 50],
            seed_facts: vec!["red = 10".to_string()],
            relational_facts: true,
            similarity_threshold: 0.2,
            stopword_path: None,
            catalog_path: None,
            dictionary_path: None,
            catalog_cap: 100_000,
            max_conjuncts: 1,
        }
    }
}

impl TaskConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Toml(e.to_string()))
    }

    /// Loads the file when given, otherwise the defaults, then applies
    /// `CGT_*` environment overrides.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => TaskConfig::load(p)?,
            None => TaskConfig::default(),
        };
        let env: BTreeMap<String, String> = std::env::vars()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        config.apply_overrides(&env)?;
        Ok(config)
    }

    /// Applies overrides from a `CGT_`-prefixed key/value map.
    pub fn apply_overrides(&mut self, vars: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        let bad = |var: &str, message: String| ConfigError::BadEnv {
            var: var.to_string(),
            message,
        };
        for (key, value) in vars {
            match key.as_str() {
                "CGT_BLOCKS" => {
                    self.blocks = value.split(',').map(|s| s.trim().to_string()).collect();
                }
                "CGT_WEIGHTS" => {
                    self.weights = value
                        .split(',')
                        .map(|s| s.trim().parse::<u32>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(key, e.to_string()))?;
                }
                "CGT_SEED_FACTS" => {
                    self.seed_facts = value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                }
                "CGT_RELATIONAL_FACTS" => {
                    self.relational_facts = value
                        .parse()
                        .map_err(|_| bad(key, format!("`{value}` is not a bool")))?;
                }
                "CGT_SIMILARITY_THRESHOLD" => {
                    self.similarity_threshold = value
                        .parse()
                        .map_err(|_| bad(key, format!("`{value}` is not a number")))?;
                }
                "CGT_STOPWORD_PATH" => self.stopword_path = Some(PathBuf::from(value)),
                "CGT_CATALOG_PATH" => self.catalog_path = Some(PathBuf::from(value)),
                "CGT_DICTIONARY_PATH" => self.dictionary_path = Some(PathBuf::from(value)),
                "CGT_CATALOG_CAP" => {
                    self.catalog_cap = value
                        .parse()
                        .map_err(|_| bad(key, format!("`{value}` is not a size")))?;
                }
                "CGT_MAX_CONJUNCTS" => {
                    self.max_conjuncts = value
                        .parse()
                        .map_err(|_| bad(key, format!("`{value}` is not a size")))?;
                }
                _ => {
                    return Err(bad(key, "unknown setting".to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<TaskDomain, ConfigError> {
        Ok(TaskDomain::new(&self.blocks, &self.weights)?)
    }

    /// Parses the configured seed facts into atoms, flattening conjunctions.
    pub fn seed_atoms(&self, domain: &TaskDomain) -> Result<Vec<AtomicProp>, ConfigError> {
        let mut atoms = Vec::new();
        for text in &self.seed_facts {
            let formula = PropFormula::parse(text, domain)?;
            atoms.extend(formula.atoms().iter().cloned());
        }
        Ok(atoms)
    }

    pub fn stopwords(&self) -> Result<StopWords, ConfigError> {
        match &self.stopword_path {
            None => Ok(StopWords::builtin()),
            Some(path) => {
                let file = fs::File::open(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(StopWords::from_reader(BufReader::new(file))?)
            }
        }
    }

    pub fn dictionary(
        &self,
        domain: &TaskDomain,
    ) -> Result<Option<PropositionDictionary>, ConfigError> {
        match &self.dictionary_path {
            None => Ok(None),
            Some(path) => {
                let file = fs::File::open(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(Some(load_dictionary(BufReader::new(file), domain)?))
            }
        }
    }

    pub fn catalog(&self, domain: &TaskDomain) -> Result<Option<PropositionCatalog>, ConfigError> {
        match &self.catalog_path {
            None => Ok(None),
            Some(path) => {
                let file = fs::File::open(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(Some(load_catalog(BufReader::new(file), domain)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_weights_task() {
        let config = TaskConfig::default();
        let domain = config.domain().unwrap();
        assert_eq!(domain.block_count(), 5);
        assert_eq!(domain.weight_count(), 5);
        assert!(config.relational_facts);
        let seeds = config.seed_atoms(&domain).unwrap();
        assert_eq!(seeds.len(), 1);
        assert_eq!(seeds[0].to_string(), "red = 10");
    }

    #[test]
    fn toml_round_trip() {
        let config = TaskConfig::default();
        let text = toml::to_string(&config).unwrap();
        let parsed: TaskConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.blocks, config.blocks);
        assert_eq!(parsed.seed_facts, config.seed_facts);
    }

    #[test]
    fn partial_toml_fills_defaults_and_rejects_unknown_keys() {
        let parsed: TaskConfig = toml::from_str("seed_facts = []\n").unwrap();
        assert!(parsed.seed_facts.is_empty());
        assert_eq!(parsed.blocks.len(), 5);
        assert!(toml::from_str::<TaskConfig>("blokcs = []\n").is_err());
    }

    #[test]
    fn env_overrides_apply() {
        let mut config = TaskConfig::default();
        let vars = BTreeMap::from([
            ("CGT_BLOCKS".to_string(), "x, y".to_string()),
            ("CGT_WEIGHTS".to_string(), "10,20,30".to_string()),
            ("CGT_SEED_FACTS".to_string(), "".to_string()),
            ("CGT_SIMILARITY_THRESHOLD".to_string(), "-1".to_string()),
        ]);
        config.apply_overrides(&vars).unwrap();
        assert_eq!(config.blocks, vec!["x", "y"]);
        assert_eq!(config.weights, vec![10, 20, 30]);
        assert!(config.seed_facts.is_empty());
        assert_eq!(config.similarity_threshold, -1.0);
        let err = config
            .apply_overrides(&BTreeMap::from([(
                "CGT_WEIGHTS".to_string(),
                "ten".to_string(),
            )]))
            .unwrap_err();
        assert!(matches!(err, ConfigError::BadEnv { .. }));
    }
}
