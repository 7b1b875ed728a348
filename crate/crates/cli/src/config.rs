//! Run configuration: a TOML file with explicit defaults for every field,
//! plus dotted-path `--set key=value` overrides.

use std::path::{Path, PathBuf};

use auscult::dsp::MelConfig;
use auscult::embed::TsneConfig;
use auscult::model::ModelConfig;
use auscult::optim::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Uniform,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Directory of paired `<name>.wav` / `<name>.txt` recordings.
    Icbhi,
    /// Directory with `manifest.csv` and one wav per row.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub path: PathBuf,
    /// Target duration of each record after cyclic padding, in seconds.
    pub pad_seconds: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DataKind::Synthetic,
            path: PathBuf::from("data/synth"),
            pad_seconds: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitModeKind {
    /// Recording-to-split assignments read from `split.file`.
    Official,
    /// Seeded subject-disjoint partition.
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitModeKind,
    /// Split list file (required in official mode).
    pub file: Option<PathBuf>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            mode: SplitModeKind::Official,
            file: None,
            train_fraction: 0.75,
            seed: 7,
        }
    }
}

/// Everything a run needs; every field has a default so `print-config`
/// documents the full surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub out_dir: PathBuf,
    pub sampler: SamplerKind,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub mel: MelConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub tsne: TsneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            epochs: 20,
            batch_size: 8,
            out_dir: PathBuf::from("out"),
            sampler: SamplerKind::Weighted,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            mel: MelConfig::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            tsne: TsneConfig::default(),
        }
    }
}

impl RunConfig {
    /// Loads a config file (or the defaults), then applies dotted-path
    /// overrides like `optimizer.rho=0.1`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut table: toml::Table = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table
            .try_into()
            .map_err(|e| CliError::Config(format!("config error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Structural validation shared by every subcommand.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CliError::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be positive".into()));
        }
        if self.data.pad_seconds <= 0.0 {
            return Err(CliError::Config("data.pad_seconds must be positive".into()));
        }
        self.mel.validate()?;
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.split.mode == SplitModeKind::Official && self.split.file.is_none() {
            return Err(CliError::Config(
                "split.mode = official requires split.file".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.split.train_fraction) {
            return Err(CliError::Config(format!(
                "split.train_fraction {} outside [0, 1]",
                self.split.train_fraction
            )));
        }
        Ok(())
    }

    /// Validation for commands that read the data source.
    pub fn validate_data_paths(&self) -> Result<()> {
        self.validate()?;
        if !self.data.path.exists() {
            return Err(CliError::Config(format!(
                "data path {} does not exist",
                self.data.path.display()
            )));
        }
        if let (SplitModeKind::Official, Some(file)) = (self.split.mode, &self.split.file) {
            if !file.exists() {
                return Err(CliError::Config(format!(
                    "split list {} does not exist",
                    file.display()
                )));
            }
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out_dir.join("cache")
    }
}

fn parse_toml_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {item:?}")))?;
    let mut current = table;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        if segment.is_empty() {
            return Err(CliError::Config(format!("empty path segment in {key:?}")));
        }
        if i + 1 == segments.len() {
            current.insert(segment.to_string(), parse_toml_scalar(raw));
        } else {
            let entry = current
                .entry(segment.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            current = entry.as_table_mut().ok_or_else(|| {
                CliError::Config(format!("{segment:?} in {key:?} is not a table"))
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
        // the documented hyperparameters are the defaults
        assert_eq!(config.optimizer.learning_rate, 1e-5);
        assert_eq!(config.optimizer.weight_decay, 1e-4);
        assert_eq!(config.optimizer.rho, 0.05);
        assert_eq!(config.epochs, 20);
        assert_eq!(config.batch_size, 8);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let config = RunConfig::load(
            None,
            &[
                "optimizer.rho=0.3".into(),
                "model.embed_dim=32".into(),
                "sampler=uniform".into(),
                "optimizer.sam=false".into(),
                "data.path=elsewhere".into(),
            ],
        )
        .unwrap();
        assert_eq!(config.optimizer.rho, 0.3);
        assert_eq!(config.model.embed_dim, 32);
        assert_eq!(config.sampler, SamplerKind::Uniform);
        assert!(!config.optimizer.sam);
        assert_eq!(config.data.path, PathBuf::from("elsewhere"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, &["optimizer.learning_rat=0.1".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::load(None, &["nonsense=1".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let config = RunConfig::load(None, &["epochs=0".into()]).unwrap();
        assert_eq!(config.validate().unwrap_err().exit_code(), 2);

        let config = RunConfig::load(None, &["optimizer.learning_rate=-1".into()]).unwrap();
        assert_eq!(config.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn official_mode_requires_a_file() {
        let config = RunConfig::default();
        assert!(config.validate().is_err());
        let with_file = RunConfig::load(None, &["split.file=somewhere.tsv".into()]).unwrap();
        assert!(with_file.validate().is_ok());
    }
}
