//! Experiment configuration files.
//!
//! TOML with sections `run`, `images`, `train`, `test`, `features`,
//! `ensemble`. Parsing is strict: unknown keys are errors, because a
//! silently ignored typo would corrupt an experiment. Parse errors carry
//! line and column.
//!
//! A minimal file names two sources and the assumed embedding:
//!
//! ```toml
//! [train]
//! source = "source-a"
//! algorithm = "lsbm"
//! rate = 0.4
//!
//! [test]
//! source = "source-a"
//! ```
//!
//! Everything else defaults to the desk-scale setup: 128x128 synthetic
//! images, 200 training covers, a 100/100 test split, and the standard
//! feature and ensemble settings. `test.algorithm` and `test.rate`
//! default to the training values; setting them differently models an
//! analyst whose assumed embedding is wrong.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::embed::{EmbedAlgorithm, EmbedConfig, EmbedError};
use crate::ensemble::EcConfig;
use crate::features::{FeatureConfig, ResidualKind, ScanDirection};
use crate::synth::SourceParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

/// Where a corpus comes from: a named synthetic preset or a directory of
/// PGM files.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Preset { name: String, params: SourceParams },
    Directory(PathBuf),
}

impl SourceSpec {
    /// Preset names win over paths; anything that is not a known preset
    /// is treated as a directory.
    pub fn resolve(text: &str) -> Self {
        match SourceParams::preset(text) {
            Some(params) => SourceSpec::Preset {
                name: text.to_ascii_lowercase(),
                params,
            },
            None => SourceSpec::Directory(PathBuf::from(text)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SourceSpec::Preset { name, .. } => name.clone(),
            SourceSpec::Directory(path) => path.display().to_string(),
        }
    }
}

/// A fully resolved and validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub width: u32,
    pub height: u32,
    pub train_source: SourceSpec,
    pub n_train_covers: usize,
    pub train_embed: EmbedConfig,
    pub test_source: SourceSpec,
    pub n_test_covers: usize,
    pub n_test_stegos: usize,
    pub test_embed: EmbedConfig,
    pub features: FeatureConfig,
    pub ensemble: EcConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    images: RawImages,
    train: RawTrain,
    test: RawTest,
    #[serde(default)]
    features: RawFeatures,
    #[serde(default)]
    ensemble: RawEnsemble,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default)]
    seed: u64,
    out: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImages {
    width: u32,
    height: u32,
}

impl Default for RawImages {
    fn default() -> Self {
        RawImages {
            width: 128,
            height: 128,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    source: String,
    #[serde(default = "default_train_covers")]
    covers: usize,
    algorithm: String,
    rate: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTest {
    source: String,
    #[serde(default = "default_test_covers")]
    covers: usize,
    #[serde(default = "default_test_stegos")]
    stegos: usize,
    algorithm: Option<String>,
    rate: Option<f64>,
}

fn default_train_covers() -> usize {
    200
}
fn default_test_covers() -> usize {
    100
}
fn default_test_stegos() -> usize {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatures {
    residuals: Vec<String>,
    quantizations: Vec<u8>,
    truncation: u8,
    order: u8,
    directions: Vec<String>,
    normalize: bool,
}

impl Default for RawFeatures {
    fn default() -> Self {
        let d = FeatureConfig::default();
        RawFeatures {
            residuals: d.kinds.iter().map(|k| k.name().to_string()).collect(),
            quantizations: d.quantizations,
            truncation: d.truncation,
            order: d.cooc_order,
            directions: d.directions.iter().map(|s| s.short().to_string()).collect(),
            normalize: d.normalize,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    learners: usize,
    subspace: Option<usize>,
    reg_eps: f64,
    bootstrap: bool,
    subspace_search: bool,
}

impl Default for RawEnsemble {
    fn default() -> Self {
        let d = EcConfig::default();
        RawEnsemble {
            learners: d.learners,
            subspace: None,
            reg_eps: d.reg_eps,
            bootstrap: d.bootstrap,
            subspace_search: d.subspace_search,
        }
    }
}

/// Parses and validates a config from TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw)
}

/// Reads and parses a config file; parse errors name the file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {}", path.display(), msg)),
        other => other,
    })
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    if raw.images.width < 16 || raw.images.height < 16 {
        return Err(ConfigError::Invalid(format!(
            "images {}x{} below the 16x16 minimum",
            raw.images.width, raw.images.height
        )));
    }
    if raw.train.covers < 2 {
        return Err(ConfigError::Invalid(
            "train.covers must be at least 2 (the pool is split into covers and stegos)".into(),
        ));
    }
    if raw.test.covers + raw.test.stegos == 0 {
        return Err(ConfigError::Invalid(
            "test set is empty: covers + stegos must be at least 1".into(),
        ));
    }

    let train_algorithm = parse_algorithm(&raw.train.algorithm)?;
    let train_embed = EmbedConfig::new(train_algorithm, raw.train.rate)?;
    let test_algorithm = match &raw.test.algorithm {
        Some(s) => parse_algorithm(s)?,
        None => train_algorithm,
    };
    let test_embed = EmbedConfig::new(test_algorithm, raw.test.rate.unwrap_or(raw.train.rate))?;

    let features = resolve_features(&raw.features)?;
    let dimension = features.dimension();

    let mut ensemble = EcConfig::for_dimension(dimension);
    ensemble.learners = raw.ensemble.learners;
    ensemble.reg_eps = raw.ensemble.reg_eps;
    ensemble.bootstrap = raw.ensemble.bootstrap;
    ensemble.subspace_search = raw.ensemble.subspace_search;
    if let Some(subspace) = raw.ensemble.subspace {
        if subspace == 0 || subspace > dimension {
            return Err(ConfigError::Invalid(format!(
                "ensemble.subspace {} outside 1..={} (feature dimension)",
                subspace, dimension
            )));
        }
        ensemble.subspace = subspace;
    }
    if raw.ensemble.learners == 0 || raw.ensemble.learners % 2 == 0 {
        return Err(ConfigError::Invalid(format!(
            "ensemble.learners must be odd and positive, got {}",
            raw.ensemble.learners
        )));
    }
    if !(raw.ensemble.reg_eps > 0.0) || !raw.ensemble.reg_eps.is_finite() {
        return Err(ConfigError::Invalid(format!(
            "ensemble.reg_eps must be positive and finite, got {}",
            raw.ensemble.reg_eps
        )));
    }

    Ok(ExperimentConfig {
        seed: raw.run.seed,
        out_dir: raw.run.out.map(PathBuf::from),
        width: raw.images.width,
        height: raw.images.height,
        train_source: SourceSpec::resolve(&raw.train.source),
        n_train_covers: raw.train.covers,
        train_embed,
        test_source: SourceSpec::resolve(&raw.test.source),
        n_test_covers: raw.test.covers,
        n_test_stegos: raw.test.stegos,
        test_embed,
        features,
        ensemble,
    })
}

fn parse_algorithm(text: &str) -> Result<EmbedAlgorithm, ConfigError> {
    EmbedAlgorithm::parse(text).map_err(|e| ConfigError::Invalid(e.to_string()))
}

fn resolve_features(raw: &RawFeatures) -> Result<FeatureConfig, ConfigError> {
    let kinds = raw
        .residuals
        .iter()
        .map(|s| ResidualKind::parse(s).map_err(|e| ConfigError::Invalid(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let directions = raw
        .directions
        .iter()
        .map(|s| ScanDirection::parse(s).map_err(|e| ConfigError::Invalid(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = FeatureConfig {
        kinds,
        quantizations: raw.quantizations.clone(),
        truncation: raw.truncation,
        cooc_order: raw.order,
        directions,
        normalize: raw.normalize,
    };
    cfg.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[train]
source = \"source-a\"
algorithm = \"lsbm\"
rate = 0.4

[test]
source = \"source-a\"
";

    #[test]
    fn minimal_config_gets_desk_scale_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!((cfg.width, cfg.height), (128, 128));
        assert_eq!(cfg.n_train_covers, 200);
        assert_eq!((cfg.n_test_covers, cfg.n_test_stegos), (100, 100));
        assert_eq!(cfg.train_embed, cfg.test_embed);
        assert_eq!(cfg.features.dimension(), 7500);
        assert_eq!(cfg.ensemble.learners, 51);
        assert_eq!(cfg.ensemble.subspace, 200);
        assert!(cfg.ensemble.bootstrap);
        assert!(!cfg.ensemble.subspace_search);
        assert!(cfg.out_dir.is_none());
        assert!(matches!(cfg.train_source, SourceSpec::Preset { .. }));
    }

    #[test]
    fn full_config_roundtrip() {
        let text = "\
[run]
seed = 7
out = \"runs/demo\"

[images]
width = 64
height = 48

[train]
source = \"source-a\"
covers = 40
algorithm = \"hill\"
rate = 0.3

[test]
source = \"source-b\"
covers = 10
stegos = 30
algorithm = \"lsbm\"
rate = 0.1

[features]
residuals = [\"first\", \"kb\"]
quantizations = [1]
truncation = 1
order = 3
directions = [\"horizontal\"]
normalize = false

[ensemble]
learners = 11
subspace = 27
reg_eps = 1e-5
bootstrap = false
subspace_search = false
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.out_dir.as_deref(), Some(Path::new("runs/demo")));
        assert_eq!((cfg.width, cfg.height), (64, 48));
        assert_eq!(cfg.n_train_covers, 40);
        assert_eq!(cfg.train_embed.algorithm, EmbedAlgorithm::Hill);
        assert_eq!(cfg.train_embed.rate, 0.3);
        assert_eq!(cfg.test_embed.algorithm, EmbedAlgorithm::Lsbm);
        assert_eq!(cfg.test_embed.rate, 0.1);
        assert_eq!(cfg.test_source.label(), "source-b");
        assert_eq!(cfg.features.dimension(), 2 * 1 * 1 * 27);
        assert_eq!(cfg.ensemble.subspace, 27);
        assert!(!cfg.ensemble.bootstrap);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = format!("{}\nratee = 0.4\n", MINIMAL);
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "no line info: {}", msg);
        assert!(msg.contains("ratee"), "typo not named: {}", msg);
    }

    #[test]
    fn unknown_section_is_rejected() {
        let text = format!("{}\n[extra]\nx = 1\n", MINIMAL);
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_config("[train\nsource = 1").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{}", err);
    }

    #[test]
    fn test_embed_defaults_to_train_embed() {
        let text = MINIMAL.replace("rate = 0.4", "rate = 0.25");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.test_embed.rate, 0.25);
        assert_eq!(cfg.test_embed.algorithm, EmbedAlgorithm::Lsbm);
    }

    #[test]
    fn preset_names_are_case_insensitive() {
        let text = MINIMAL.replace("source = \"source-a\"", "source = \"Source-A\"");
        let cfg = parse_config(&text).unwrap();
        match &cfg.train_source {
            SourceSpec::Preset { name, params } => {
                assert_eq!(name, "source-a");
                assert_eq!(*params, SourceParams::source_a());
            }
            other => panic!("expected preset, got {:?}", other),
        }
    }

    #[test]
    fn non_preset_source_is_a_directory() {
        let text = MINIMAL.replace("source = \"source-a\"", "source = \"./covers\"");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(
            cfg.train_source,
            SourceSpec::Directory(PathBuf::from("./covers"))
        );
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad_rate = MINIMAL.replace("rate = 0.4", "rate = 1.5");
        assert!(parse_config(&bad_rate).is_err());

        let bad_algo = MINIMAL.replace("\"lsbm\"", "\"wow\"");
        assert!(matches!(
            parse_config(&bad_algo),
            Err(ConfigError::Invalid(_))
        ));

        let tiny = format!("{}\n[images]\nwidth = 8\nheight = 128\n", MINIMAL);
        assert!(matches!(parse_config(&tiny), Err(ConfigError::Invalid(_))));

        let empty_test = format!("{}covers = 0\nstegos = 0\n", MINIMAL);
        assert!(matches!(
            parse_config(&empty_test),
            Err(ConfigError::Invalid(_))
        ));

        let even = format!("{}\n[ensemble]\nlearners = 10\nreg_eps = 1e-6\nbootstrap = true\nsubspace_search = false\n", MINIMAL);
        assert!(matches!(parse_config(&even), Err(ConfigError::Invalid(_))));

        let one_cover = MINIMAL.replace(
            "source = \"source-a\"\nalgorithm",
            "source = \"source-a\"\ncovers = 1\nalgorithm",
        );
        assert!(matches!(
            parse_config(&one_cover),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn oversized_subspace_is_rejected() {
        let text = format!(
            "{}\n[features]\nresiduals = [\"kb\"]\nquantizations = [1]\ntruncation = 1\norder = 3\ndirections = [\"h\"]\nnormalize = true\n\n[ensemble]\nlearners = 51\nsubspace = 100\nreg_eps = 1e-6\nbootstrap = true\nsubspace_search = false\n",
            MINIMAL
        );
        // dimension 1*1*1*27 = 27 < 100
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("subspace"));
    }

    #[test]
    fn default_subspace_shrinks_to_small_dimensions() {
        let text = format!(
            "{}\n[features]\nresiduals = [\"kb\"]\nquantizations = [1]\ntruncation = 1\norder = 3\ndirections = [\"h\"]\nnormalize = true\n",
            MINIMAL
        );
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.features.dimension(), 27);
        assert_eq!(cfg.ensemble.subspace, 27);
    }
}
