//! Declarative run configuration: one TOML file, overridable from flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use serde::{Deserialize, Serialize};
use xabsa::augmentation::{PipelineConfig, PipelineInputs};
use xabsa::data_io::{derive_dev_split, load_corpus};
use xabsa::model::ToyConfig;
use xabsa::{Corpus, Task};

use crate::exit::{config_err, data_err, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub model: ToyConfig,
    pub data: DataConfig,
    /// Seeds for `matrix`; `run` and `sweep` use `pipeline.seed`.
    pub seeds: Option<Vec<u64>>,
}

/// Either explicit corpus paths, or a data directory laid out as
/// `<data_dir>/<domain>/{train,dev,test}.jsonl` plus source and target ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub data_dir: Option<PathBuf>,
    pub source: Option<String>,
    pub target: Option<String>,
    pub source_train: Option<PathBuf>,
    pub source_dev: Option<PathBuf>,
    /// Labeled or unlabeled; labels are dropped either way.
    pub target_unlabeled: Option<PathBuf>,
    pub target_test: Option<PathBuf>,
    /// Split 10% off the source train set when no dev file exists.
    pub derive_dev: bool,
    pub dev_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            source: None,
            target: None,
            source_train: None,
            source_dev: None,
            target_unlabeled: None,
            target_test: None,
            derive_dev: true,
            dev_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config_err)?;
        toml::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(config_err)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.pipeline.validate().map_err(|e| config_err(e.into()))?;
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(config_err(anyhow::anyhow!("seeds must not be empty")));
            }
        }
        Ok(())
    }

    /// Makes relative data paths absolute against `base`, so a manifest can be
    /// replayed from any working directory.
    pub fn absolutize(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [
            &mut d.data_dir,
            &mut d.source_train,
            &mut d.source_dev,
            &mut d.target_unlabeled,
            &mut d.target_test,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

fn domain_file(dir: &Path, domain: &str, split: &str) -> PathBuf {
    dir.join(domain).join(format!("{split}.jsonl"))
}

fn load(path: &Path, task: Task) -> Result<Corpus, Failure> {
    load_corpus(path, task).map_err(|e| data_err(e.into()))
}

impl DataConfig {
    /// Loads the pipeline inputs for `source -> target`, using explicit paths
    /// where given and the data directory layout otherwise.
    pub fn resolve(&self, task: Task, source: Option<&str>, target: Option<&str>) -> Result<PipelineInputs, Failure> {
        let source = source.or(self.source.as_deref());
        let target = target.or(self.target.as_deref());
        let from_dir = |domain: Option<&str>, split: &str| -> Option<PathBuf> {
            Some(domain_file(self.data_dir.as_deref()?, domain?, split))
        };
        let pick = |explicit: &Option<PathBuf>, domain: Option<&str>, split: &str| {
            explicit.clone().or_else(|| from_dir(domain, split))
        };
        let missing = |what: &str| config_err(anyhow::anyhow!("no {what} corpus: set data.{what} or data.data_dir with source and target"));

        let train_path = pick(&self.source_train, source, "train").ok_or_else(|| missing("source_train"))?;
        let unl_path = pick(&self.target_unlabeled, target, "train").ok_or_else(|| missing("target_unlabeled"))?;
        let dev_path = pick(&self.source_dev, source, "dev").filter(|p| p.exists());
        let test_path = pick(&self.target_test, target, "test");

        let mut source_train = load(&train_path, task)?;
        let source_dev = match dev_path {
            Some(p) => Some(load(&p, task)?),
            None if self.derive_dev && source_train.len() >= 10 => {
                let (train, dev) = derive_dev_split(&source_train, self.dev_seed).map_err(|e| data_err(e.into()))?;
                source_train = train;
                Some(dev)
            }
            None => None,
        };
        let target_unlabeled = load(&unl_path, task)?.to_unlabeled();
        let target_test = match test_path {
            Some(p) if p.exists() => Some(load(&p, task)?),
            Some(p) if self.target_test.is_some() => {
                return Err(data_err(anyhow::anyhow!("target test corpus {} not found", p.display())))
            }
            _ => None,
        };
        info!(
            "source {} train {} dev {}, target {} unlabeled {} test {}",
            source_train.domain,
            source_train.len(),
            source_dev.as_ref().map_or(0, Corpus::len),
            target_unlabeled.domain,
            target_unlabeled.len(),
            target_test.as_ref().map_or(0, Corpus::len),
        );
        Ok(PipelineInputs {
            source_train,
            source_dev,
            target_unlabeled,
            target_test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seeds = [1, 2]
            [pipeline]
            task = "ASTE"
            mode = "self_training"
            [pipeline.stage1]
            learning_rate = 0.01
            "#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline.task, Task::Aste);
        assert_eq!(cfg.pipeline.stage1.learning_rate, 0.01);
        assert_eq!(cfg.pipeline.stage1.batch_size, 16);
        assert_eq!(cfg.pipeline.stage2.learning_rate, 3e-4);
        assert!(cfg.data.derive_dev);
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let default = RunConfig::load(&dir.join("default.toml")).unwrap();
        assert_eq!(default, RunConfig::default());
        let smoke = RunConfig::load(&dir.join("smoke.toml")).unwrap();
        smoke.validate().unwrap();
        assert_eq!(smoke.seeds, Some(vec![1, 2, 3]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[pipeline]\nlearning_rat = 1").is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
