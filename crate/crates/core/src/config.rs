//! Declarative job configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub dataset: String,
    pub corpus: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub query_embs: Option<PathBuf>,
    pub doc_embs: Option<PathBuf>,
    pub ppl: Option<PathBuf>,
    pub runs: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Evaluation depth.
    pub k: usize,
    pub seed: u64,
    /// Pairs sampled for direction estimates.
    pub sample_size: usize,
    /// BM25 candidates per query when mining negatives.
    pub bm25_depth: usize,
    /// Additional datasets for cross-dataset geometry.
    pub extra_datasets: Vec<DatasetPaths>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub dataset: String,
    pub corpus: PathBuf,
    pub pairs: PathBuf,
    pub doc_embs: PathBuf,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            dataset: "default".into(),
            corpus: None,
            pairs: None,
            qrels: None,
            queries: None,
            query_embs: None,
            doc_embs: None,
            ppl: None,
            runs: None,
            out_dir: PathBuf::from("out"),
            k: 5,
            seed: 0,
            sample_size: 1000,
            bm25_depth: 10,
            extra_datasets: Vec::new(),
        }
    }
}

impl JobConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: JobConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Resolves a required path: it must be configured and exist.
pub fn require<'a>(path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("missing required path `{name}`")))?;
    check_exists(p, name)?;
    Ok(p)
}

pub fn check_exists(p: &Path, name: &str) -> Result<()> {
    if !p.exists() {
        return Err(Error::Config(format!(
            "`{name}` path does not exist: {}",
            p.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg: JobConfig = serde_json::from_str(r#"{"dataset":"nq","seed":3}"#).unwrap();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.sample_size, 1000);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<JobConfig>(r#"{"kk":3}"#).is_err());
    }

    #[test]
    fn zero_depth_rejected() {
        let cfg = JobConfig { k: 0, ..JobConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn missing_path_named() {
        let p = Some(PathBuf::from("/definitely/not/here.qrels"));
        let err = require(&p, "qrels").unwrap_err().to_string();
        assert!(err.contains("/definitely/not/here.qrels"), "{err}");
        assert!(require(&None, "qrels").unwrap_err().to_string().contains("qrels"));
    }
}
