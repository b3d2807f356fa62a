//! File-level orchestration behind the CLI: corpus directories, model
//! directories, CSV reports, and the end-to-end experiment pipeline.
//!
//! Every output is a pure function of the inputs and the seed. Directory
//! listings are sorted, parallel stages collect in input order, and
//! floats are written with enough digits to reload exactly, so rerunning
//! a command writes byte-identical files. Two concurrent runs sharing an
//! output directory are not supported.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, SourceSpec};
use crate::detector::{
    analyze, build_test_pair, build_train_pair, summarize, train_detectors, ClassLabel,
    DetectError, DetectionReport, DetectorModels, ImageVerdict, REPORT_CSV_HEADER,
};
use crate::embed::{count_changes, embed, ChangeStats, EmbedAlgorithm, EmbedConfig, EmbedError};
use crate::ensemble::{load_model, save_model, EcConfig, EnsembleError};
use crate::features::{extract_features, write_features_csv, FeatureConfig, FeatureError};
use crate::image::{load_pgm, save_pgm, ImageError, ImageGray};
use crate::rng;
use crate::synth::{corpus_image_seed, generate_corpus, generate_cover, SourceParams, SynthError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    BadImage {
        file: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("no .pgm files in {0}")]
    EmptyDir(PathBuf),
    #[error("`{0}` has no counterpart in the other directory")]
    UnmatchedFiles(String),
    #[error("{file}: {source}")]
    FileStats {
        file: String,
        #[source]
        source: EmbedError,
    },
    #[error("{dir}: need {need} images, found {have}")]
    NotEnoughImages {
        dir: PathBuf,
        need: usize,
        have: usize,
    },
    #[error("{file}: {source}")]
    Model {
        file: PathBuf,
        #[source]
        source: EnsembleError,
    },
    #[error("{file}: {msg}")]
    BadMeta { file: PathBuf, msg: String },
    #[error("no output directory: set run.out in the config or pass --out")]
    MissingOut,
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Loads every `.pgm` file in a directory, sorted by filename.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<(String, ImageGray)>, HarnessError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") && path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    if names.is_empty() {
        return Err(HarnessError::EmptyDir(dir.to_path_buf()));
    }
    names.sort();
    names
        .into_par_iter()
        .map(|name| {
            let path = dir.join(&name);
            let img = load_pgm(&path).map_err(|source| HarnessError::BadImage {
                file: path.clone(),
                source,
            })?;
            Ok((name, img))
        })
        .collect()
}

/// Generates a numbered synthetic corpus plus a `manifest.csv` listing
/// each file's seed.
pub fn cmd_synth(
    params: &SourceParams,
    count: usize,
    width: u32,
    height: u32,
    seed: u64,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let images: Vec<ImageGray> = (0..count)
        .into_par_iter()
        .map(|i| generate_cover(params, width, height, corpus_image_seed(seed, i)))
        .collect::<Result<_, SynthError>>()?;
    let mut manifest = String::from("file,seed\n");
    for (i, img) in images.iter().enumerate() {
        let name = format!("cover_{i:06}.pgm");
        let path = out_dir.join(&name);
        save_pgm(img, &path).map_err(|source| HarnessError::BadImage {
            file: path,
            source,
        })?;
        manifest.push_str(&format!("{},{}\n", name, corpus_image_seed(seed, i)));
    }
    write_text(&out_dir.join("manifest.csv"), &manifest)
}

/// Embeds every image in a directory, preserving filenames. Per-image
/// seeds come from the filename, so adding or removing files never
/// changes the others' output.
pub fn cmd_embed(
    in_dir: &Path,
    cfg: &EmbedConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<usize, HarnessError> {
    let corpus = load_corpus_dir(in_dir)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let stegos: Vec<(String, ImageGray)> = corpus
        .into_par_iter()
        .map(|(name, img)| {
            let stego = embed(&img, cfg, rng::derive(seed, &name))?;
            Ok((name, stego))
        })
        .collect::<Result<_, EmbedError>>()?;
    let n = stegos.len();
    for (name, img) in stegos {
        let path = out_dir.join(&name);
        save_pgm(&img, &path).map_err(|source| HarnessError::BadImage {
            file: path,
            source,
        })?;
    }
    Ok(n)
}

pub const CHANGESTATS_CSV_HEADER: &str = "file,n_pm1,n_pm2,n_other";

/// Compares two directories image by image and reports modification
/// counts, with a `TOTAL` row at the end. File sets must match exactly.
pub fn cmd_changestats(dir_a: &Path, dir_b: &Path) -> Result<String, HarnessError> {
    let a = load_corpus_dir(dir_a)?;
    let b = load_corpus_dir(dir_b)?;
    for (name, _) in &a {
        if !b.iter().any(|(n, _)| n == name) {
            return Err(HarnessError::UnmatchedFiles(name.clone()));
        }
    }
    if let Some((name, _)) = b.iter().find(|(n, _)| !a.iter().any(|(m, _)| m == n)) {
        return Err(HarnessError::UnmatchedFiles(name.clone()));
    }
    let mut csv = String::from(CHANGESTATS_CSV_HEADER);
    csv.push('\n');
    let mut total = ChangeStats::default();
    for (name, img_a) in &a {
        let img_b = &b.iter().find(|(n, _)| n == name).unwrap().1;
        let stats = count_changes(img_a, img_b).map_err(|source| HarnessError::FileStats {
            file: name.clone(),
            source,
        })?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            name, stats.n_pm1, stats.n_pm2, stats.n_other
        ));
        total.add(&stats);
    }
    csv.push_str(&format!(
        "TOTAL,{},{},{}\n",
        total.n_pm1, total.n_pm2, total.n_other
    ));
    Ok(csv)
}

/// Extracts features from every image in a directory into a CSV, with an
/// optional constant label column.
pub fn cmd_features(
    in_dir: &Path,
    cfg: &FeatureConfig,
    label: Option<&str>,
    out_path: &Path,
) -> Result<usize, HarnessError> {
    let corpus = load_corpus_dir(in_dir)?;
    let rows = corpus
        .par_iter()
        .map(|(_, img)| extract_features(img, cfg))
        .collect::<Result<Vec<_>, FeatureError>>()?;
    let labels = label.map(|l| vec![l.to_string(); rows.len()]);
    let file = fs::File::create(out_path).map_err(io_err(out_path))?;
    let mut w = BufWriter::new(file);
    write_features_csv(&mut w, &rows, labels.as_deref())?;
    w.flush().map_err(io_err(out_path))?;
    Ok(rows.len())
}

const META_MAGIC: &str = "stegoscope-detector v1";
const MODEL_A_FILE: &str = "f_a.model";
const MODEL_B_FILE: &str = "f_b.model";
const META_FILE: &str = "detector.meta";

/// Writes the two classifiers and a metadata file recording the assumed
/// embedding and the feature settings.
pub fn save_models(models: &DetectorModels, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (file, model) in [(MODEL_A_FILE, &models.model_a), (MODEL_B_FILE, &models.model_b)] {
        let path = dir.join(file);
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(f);
        save_model(model, &mut w).map_err(|source| HarnessError::Model {
            file: path.clone(),
            source,
        })?;
        w.flush().map_err(io_err(&path))?;
    }
    let meta = format!(
        "{META_MAGIC}\nalgorithm {}\nrate {:.16e}\nfeatures {}\nend\n",
        models.embed_cfg.algorithm.name(),
        models.embed_cfg.rate,
        models.feature_cfg.fingerprint(),
    );
    write_text(&dir.join(META_FILE), &meta)
}

/// Loads a model directory written by [`save_models`], cross-checking
/// the metadata against the classifiers.
pub fn load_models(dir: &Path) -> Result<DetectorModels, HarnessError> {
    let meta_path = dir.join(META_FILE);
    let bad_meta = |msg: String| HarnessError::BadMeta {
        file: meta_path.clone(),
        msg,
    };
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let mut lines = text.lines();
    if lines.next() != Some(META_MAGIC) {
        return Err(bad_meta(format!("missing `{META_MAGIC}` header")));
    }
    let mut algorithm = None;
    let mut rate = None;
    let mut features = None;
    for line in &mut lines {
        if line == "end" {
            break;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad_meta(format!("malformed line `{line}`")))?;
        match key {
            "algorithm" => {
                algorithm = Some(
                    EmbedAlgorithm::parse(value).map_err(|e| bad_meta(e.to_string()))?,
                )
            }
            "rate" => {
                rate = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| bad_meta(format!("bad rate `{value}`")))?,
                )
            }
            "features" => {
                features = Some(
                    FeatureConfig::parse_fingerprint(value)
                        .map_err(|e| bad_meta(e.to_string()))?,
                )
            }
            other => return Err(bad_meta(format!("unknown key `{other}`"))),
        }
    }
    let algorithm = algorithm.ok_or_else(|| bad_meta("missing algorithm".into()))?;
    let rate = rate.ok_or_else(|| bad_meta("missing rate".into()))?;
    let feature_cfg = features.ok_or_else(|| bad_meta("missing features".into()))?;
    let embed_cfg = EmbedConfig::new(algorithm, rate)?;

    let load = |file: &str| -> Result<crate::ensemble::EnsembleModel, HarnessError> {
        let path = dir.join(file);
        let f = fs::File::open(&path).map_err(io_err(&path))?;
        load_model(std::io::BufReader::new(f)).map_err(|source| HarnessError::Model {
            file: path,
            source,
        })
    };
    let model_a = load(MODEL_A_FILE)?;
    let model_b = load(MODEL_B_FILE)?;
    for (model, label) in [(&model_a, "stego"), (&model_b, "double-stego")] {
        if model.positive_label != label {
            return Err(bad_meta(format!(
                "classifier positive label `{}` where `{}` was expected",
                model.positive_label, label
            )));
        }
        if model.feature_dim != feature_cfg.dimension() {
            return Err(bad_meta(format!(
                "classifier expects {} features, metadata describes {}",
                model.feature_dim,
                feature_cfg.dimension()
            )));
        }
    }
    Ok(DetectorModels {
        model_a,
        model_b,
        feature_cfg,
        embed_cfg,
    })
}

/// Trains the detector pair from a directory of cover images and saves
/// the model directory.
pub fn cmd_train(
    cover_dir: &Path,
    embed_cfg: &EmbedConfig,
    feature_cfg: &FeatureConfig,
    ec_cfg: &EcConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let covers: Vec<ImageGray> = load_corpus_dir(cover_dir)?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let pair = build_train_pair(covers, embed_cfg, rng::derive(seed, "train-pair"))?;
    let ec = EcConfig {
        seed: rng::derive(seed, "ensemble"),
        ..ec_cfg.clone()
    };
    let models = train_detectors(&pair, feature_cfg, &ec)?;
    save_models(&models, out_dir)
}

pub const VERDICT_CSV_HEADER: &str =
    "image,pred_a_of_a,pred_b_of_b,pred_b_of_a,pred_a_of_b,f1,f2,inconsistent";

fn verdicts_csv(names: &[String], verdicts: &[ImageVerdict]) -> String {
    let mut csv = String::from(VERDICT_CSV_HEADER);
    csv.push('\n');
    for (name, v) in names.iter().zip(verdicts) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            name,
            v.pred_a_of_a.name(),
            v.pred_b_of_b.name(),
            v.pred_b_of_a.name(),
            v.pred_a_of_b.name(),
            u8::from(v.f1),
            u8::from(v.f2),
            u8::from(v.inconsistent),
        ));
    }
    csv
}

/// Comment appended to a report computed from a single image.
pub const SINGLE_IMAGE_NOTE: &str = "# n=1: prediction informational only";

fn report_csv(report: &DetectionReport) -> String {
    let mut csv = format!("{}\n{}\n", REPORT_CSV_HEADER, report.csv_row());
    if report.n == 1 {
        csv.push_str(SINGLE_IMAGE_NOTE);
        csv.push('\n');
    }
    csv
}

/// Deployment mode: no labels, just predictions, flags and `Err_pred`.
/// Writes `verdicts.csv` and `report.csv` into `out_dir`.
pub fn cmd_detect(
    model_dir: &Path,
    image_dir: &Path,
    seed: u64,
    out_dir: &Path,
) -> Result<DetectionReport, HarnessError> {
    let models = load_models(model_dir)?;
    let corpus = load_corpus_dir(image_dir)?;
    let names: Vec<String> = corpus.iter().map(|(n, _)| n.clone()).collect();
    let images: Vec<ImageGray> = corpus.into_iter().map(|(_, img)| img).collect();
    let pair = build_test_pair(images, &models.embed_cfg, rng::derive(seed, "test-pair"))?;
    let verdicts = analyze(&models, &pair, &models.feature_cfg.clone())?;
    let report = summarize(&verdicts, None)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_text(&out_dir.join("verdicts.csv"), &verdicts_csv(&names, &verdicts))?;
    write_text(&out_dir.join("report.csv"), &report_csv(&report))?;
    Ok(report)
}

/// Everything a full experiment produces, before any file is written.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub models: DetectorModels,
    pub names: Vec<String>,
    pub labels: Vec<ClassLabel>,
    pub verdicts: Vec<ImageVerdict>,
    pub report: DetectionReport,
}

fn take_from_dir(dir: &Path, need: usize, seed: u64) -> Result<Vec<ImageGray>, HarnessError> {
    let mut images: Vec<ImageGray> = load_corpus_dir(dir)?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    if images.len() < need {
        return Err(HarnessError::NotEnoughImages {
            dir: dir.to_path_buf(),
            need,
            have: images.len(),
        });
    }
    let mut stream = rng::Stream::new(seed);
    stream.shuffle(&mut images);
    images.truncate(need);
    Ok(images)
}

/// Produces the train pool and the test pool. A directory used for both
/// sides is split disjointly; distinct sources draw independently.
fn experiment_corpora(
    cfg: &ExperimentConfig,
) -> Result<(Vec<ImageGray>, Vec<ImageGray>), HarnessError> {
    let n_test = cfg.n_test_covers + cfg.n_test_stegos;
    if let (SourceSpec::Directory(train_dir), SourceSpec::Directory(test_dir)) =
        (&cfg.train_source, &cfg.test_source)
    {
        if train_dir == test_dir {
            let need = cfg.n_train_covers + n_test;
            let mut pool = take_from_dir(train_dir, need, rng::derive(cfg.seed, "pool"))?;
            let test = pool.split_off(cfg.n_train_covers);
            return Ok((pool, test));
        }
    }
    let train = match &cfg.train_source {
        SourceSpec::Preset { params, .. } => generate_corpus(
            params,
            cfg.n_train_covers,
            cfg.width,
            cfg.height,
            rng::derive(cfg.seed, "train-corpus"),
        )?,
        SourceSpec::Directory(dir) => {
            take_from_dir(dir, cfg.n_train_covers, rng::derive(cfg.seed, "train-pool"))?
        }
    };
    let test = match &cfg.test_source {
        SourceSpec::Preset { params, .. } => generate_corpus(
            params,
            n_test,
            cfg.width,
            cfg.height,
            rng::derive(cfg.seed, "test-corpus"),
        )?,
        SourceSpec::Directory(dir) => {
            take_from_dir(dir, n_test, rng::derive(cfg.seed, "test-pool"))?
        }
    };
    Ok((train, test))
}

/// Runs the whole pipeline in memory: corpora, training pair, detector
/// training, labeled test set, analysis pair, verdicts, report.
///
/// The analysis `B`-set is always built with the training embedding; the
/// test stegos themselves use the test embedding, which may differ. Every
/// derived seed is a pure function of `cfg.seed` and a fixed role string,
/// so a rerun reproduces the output bit for bit.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let (train_covers, test_pool) = experiment_corpora(cfg)?;
    let train_pair = build_train_pair(
        train_covers,
        &cfg.train_embed,
        rng::derive(cfg.seed, "train-pair"),
    )?;
    let ec = EcConfig {
        seed: rng::derive(cfg.seed, "ensemble"),
        ..cfg.ensemble.clone()
    };
    let models = train_detectors(&train_pair, &cfg.features, &ec)?;

    let stego_key = rng::derive(cfg.seed, "test-stego");
    let mut names = Vec::with_capacity(test_pool.len());
    let mut labels = Vec::with_capacity(test_pool.len());
    let test_images: Vec<ImageGray> = test_pool
        .into_par_iter()
        .enumerate()
        .map(|(i, img)| {
            if i < cfg.n_test_covers {
                Ok(img)
            } else {
                embed(&img, &cfg.test_embed, rng::split(stego_key, i as u64))
            }
        })
        .collect::<Result<_, EmbedError>>()?;
    for i in 0..test_images.len() {
        if i < cfg.n_test_covers {
            names.push(format!("cover_{i:06}"));
            labels.push(ClassLabel::Cover);
        } else {
            names.push(format!("stego_{:06}", i - cfg.n_test_covers));
            labels.push(ClassLabel::Stego);
        }
    }

    let pair = build_test_pair(
        test_images,
        &cfg.train_embed,
        rng::derive(cfg.seed, "test-pair"),
    )?;
    let verdicts = analyze(&models, &pair, &cfg.features)?;
    let report = summarize(&verdicts, Some(&labels))?;
    Ok(ExperimentOutput {
        models,
        names,
        labels,
        verdicts,
        report,
    })
}

/// Runs an experiment config file and writes `report.csv`,
/// `verdicts.csv` and the `models/` directory under the output
/// directory. `out_override` beats the config's `run.out`.
pub fn cmd_experiment(
    config_path: &Path,
    out_override: Option<&Path>,
) -> Result<(PathBuf, DetectionReport), HarnessError> {
    let cfg = crate::config::load_config(config_path)?;
    let out_dir = match out_override {
        Some(p) => p.to_path_buf(),
        None => cfg.out_dir.clone().ok_or(HarnessError::MissingOut)?,
    };
    let output = run_experiment(&cfg)?;
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    save_models(&output.models, &out_dir.join("models"))?;
    write_text(&out_dir.join("report.csv"), &report_csv(&output.report))?;
    write_text(
        &out_dir.join("verdicts.csv"),
        &verdicts_csv(&output.names, &output.verdicts),
    )?;
    Ok((out_dir, output.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ResidualKind, ScanDirection};
    use tempfile::tempdir;

    fn small_features() -> FeatureConfig {
        FeatureConfig {
            kinds: vec![ResidualKind::FirstOrder, ResidualKind::Kb],
            quantizations: vec![1],
            truncation: 1,
            cooc_order: 3,
            directions: vec![ScanDirection::Horizontal, ScanDirection::Vertical],
            normalize: true,
        }
    }

    fn small_ec() -> EcConfig {
        EcConfig {
            learners: 7,
            subspace: 30,
            ..EcConfig::default()
        }
    }

    fn lsbm(rate: f64) -> EmbedConfig {
        EmbedConfig::new(EmbedAlgorithm::Lsbm, rate).unwrap()
    }

    fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<String> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|name| {
                let bytes = fs::read(dir.join(&name)).unwrap();
                (name, bytes)
            })
            .collect()
    }

    #[test]
    fn synth_writes_corpus_and_manifest_reproducibly() {
        let tmp = tempdir().unwrap();
        let out_a = tmp.path().join("a");
        let out_b = tmp.path().join("b");
        cmd_synth(&SourceParams::source_a(), 4, 24, 24, 11, &out_a).unwrap();
        cmd_synth(&SourceParams::source_a(), 4, 24, 24, 11, &out_b).unwrap();
        let a = dir_bytes(&out_a);
        assert_eq!(a.len(), 5); // 4 covers + manifest
        assert_eq!(a, dir_bytes(&out_b));
        let manifest = fs::read_to_string(out_a.join("manifest.csv")).unwrap();
        assert!(manifest.starts_with("file,seed\ncover_000000.pgm,"));
        assert_eq!(manifest.lines().count(), 5);
    }

    #[test]
    fn embed_preserves_names_and_rate_zero_copies() {
        let tmp = tempdir().unwrap();
        let covers = tmp.path().join("covers");
        cmd_synth(&SourceParams::source_a(), 3, 24, 24, 2, &covers).unwrap();
        let stegos = tmp.path().join("stegos");
        let n = cmd_embed(&covers, &lsbm(0.4), 7, &stegos).unwrap();
        assert_eq!(n, 3);
        let copies = tmp.path().join("copies");
        cmd_embed(&covers, &lsbm(0.0), 7, &copies).unwrap();
        for i in 0..3 {
            let name = format!("cover_{i:06}.pgm");
            assert!(stegos.join(&name).exists());
            assert_eq!(
                fs::read(covers.join(&name)).unwrap(),
                fs::read(copies.join(&name)).unwrap()
            );
            assert_ne!(
                fs::read(covers.join(&name)).unwrap(),
                fs::read(stegos.join(&name)).unwrap()
            );
        }
    }

    #[test]
    fn changestats_self_comparison_is_all_zero() {
        let tmp = tempdir().unwrap();
        let covers = tmp.path().join("covers");
        cmd_synth(&SourceParams::source_a(), 3, 24, 24, 3, &covers).unwrap();
        let csv = cmd_changestats(&covers, &covers).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CHANGESTATS_CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "TOTAL,0,0,0");
        for line in &lines[1..4] {
            assert!(line.ends_with(",0,0,0"));
        }
    }

    #[test]
    fn changestats_totals_are_column_sums_and_mismatch_errors() {
        let tmp = tempdir().unwrap();
        let covers = tmp.path().join("covers");
        cmd_synth(&SourceParams::source_a(), 3, 24, 24, 5, &covers).unwrap();
        let stegos = tmp.path().join("stegos");
        cmd_embed(&covers, &lsbm(0.4), 8, &stegos).unwrap();
        let csv = cmd_changestats(&covers, &stegos).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        let parse = |line: &str| -> Vec<usize> {
            line.split(',').skip(1).map(|v| v.parse().unwrap()).collect()
        };
        let mut sums = vec![0usize; 3];
        for line in &lines[1..lines.len() - 1] {
            for (s, v) in sums.iter_mut().zip(parse(line)) {
                *s += v;
            }
        }
        assert_eq!(parse(lines.last().unwrap()), sums);
        assert!(sums[0] > 0);
        assert_eq!(sums[1] + sums[2], 0); // single embedding never moves by 2

        fs::remove_file(stegos.join("cover_000002.pgm")).unwrap();
        assert!(matches!(
            cmd_changestats(&covers, &stegos),
            Err(HarnessError::UnmatchedFiles(_))
        ));
    }

    #[test]
    fn features_csv_roundtrips() {
        let tmp = tempdir().unwrap();
        let covers = tmp.path().join("covers");
        cmd_synth(&SourceParams::source_a(), 2, 24, 24, 6, &covers).unwrap();
        let out = tmp.path().join("features.csv");
        let n = cmd_features(&covers, &small_features(), Some("cover"), &out).unwrap();
        assert_eq!(n, 2);
        let file = fs::File::open(&out).unwrap();
        let (labels, rows) =
            crate::features::read_features_csv(std::io::BufReader::new(file)).unwrap();
        assert_eq!(labels.unwrap(), vec!["cover", "cover"]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), small_features().dimension());
    }

    #[test]
    fn train_detect_flow_writes_reports() {
        let tmp = tempdir().unwrap();
        let covers = tmp.path().join("covers");
        cmd_synth(&SourceParams::source_a(), 12, 32, 32, 21, &covers).unwrap();
        let model_dir = tmp.path().join("models");
        cmd_train(&covers, &lsbm(0.4), &small_features(), &small_ec(), 1, &model_dir).unwrap();

        let loaded = load_models(&model_dir).unwrap();
        assert_eq!(loaded.model_a.positive_label, "stego");
        assert_eq!(loaded.model_b.positive_label, "double-stego");
        assert_eq!(loaded.embed_cfg, lsbm(0.4));
        assert_eq!(loaded.feature_cfg, small_features());

        let suspects = tmp.path().join("suspects");
        cmd_synth(&SourceParams::source_a(), 5, 32, 32, 99, &suspects).unwrap();
        let out = tmp.path().join("out");
        let report = cmd_detect(&model_dir, &suspects, 3, &out).unwrap();
        assert_eq!(report.n, 5);
        assert!(report.labeled.is_none());
        assert_eq!(report.inc_c + report.inc_s, report.inc);

        let report_text = fs::read_to_string(out.join("report.csv")).unwrap();
        assert!(report_text.starts_with(REPORT_CSV_HEADER));
        assert!(!report_text.contains(SINGLE_IMAGE_NOTE));
        let verdict_text = fs::read_to_string(out.join("verdicts.csv")).unwrap();
        assert!(verdict_text.starts_with(VERDICT_CSV_HEADER));
        assert_eq!(verdict_text.lines().count(), 6);
        assert!(verdict_text.contains("cover_000003.pgm,"));
    }

    #[test]
    fn detect_single_image_is_flagged_informational() {
        let tmp = tempdir().unwrap();
        let covers = tmp.path().join("covers");
        cmd_synth(&SourceParams::source_a(), 12, 32, 32, 22, &covers).unwrap();
        let model_dir = tmp.path().join("models");
        cmd_train(&covers, &lsbm(0.4), &small_features(), &small_ec(), 1, &model_dir).unwrap();
        let one = tmp.path().join("one");
        cmd_synth(&SourceParams::source_a(), 1, 32, 32, 77, &one).unwrap();
        let out = tmp.path().join("out");
        cmd_detect(&model_dir, &one, 3, &out).unwrap();
        let report_text = fs::read_to_string(out.join("report.csv")).unwrap();
        assert!(report_text.trim_end().ends_with(SINGLE_IMAGE_NOTE));
    }

    #[test]
    fn model_meta_rejects_corruption() {
        let tmp = tempdir().unwrap();
        let covers = tmp.path().join("covers");
        cmd_synth(&SourceParams::source_a(), 8, 32, 32, 23, &covers).unwrap();
        let model_dir = tmp.path().join("models");
        cmd_train(&covers, &lsbm(0.3), &small_features(), &small_ec(), 1, &model_dir).unwrap();

        let meta_path = model_dir.join(META_FILE);
        let good = fs::read_to_string(&meta_path).unwrap();
        fs::write(&meta_path, good.replace("algorithm", "algorithmm")).unwrap();
        assert!(matches!(
            load_models(&model_dir),
            Err(HarnessError::BadMeta { .. })
        ));
        fs::write(&meta_path, &good).unwrap();
        assert!(load_models(&model_dir).is_ok());

        // swapped classifier files trip the label check
        let a = fs::read(model_dir.join(MODEL_A_FILE)).unwrap();
        let b = fs::read(model_dir.join(MODEL_B_FILE)).unwrap();
        fs::write(model_dir.join(MODEL_A_FILE), &b).unwrap();
        fs::write(model_dir.join(MODEL_B_FILE), &a).unwrap();
        assert!(matches!(
            load_models(&model_dir),
            Err(HarnessError::BadMeta { .. })
        ));
    }

    fn tiny_experiment_config(tmp_out: Option<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            seed: 5,
            out_dir: tmp_out,
            width: 32,
            height: 32,
            train_source: SourceSpec::resolve("source-a"),
            n_train_covers: 16,
            train_embed: lsbm(0.4),
            test_source: SourceSpec::resolve("source-a"),
            n_test_covers: 6,
            n_test_stegos: 6,
            test_embed: lsbm(0.4),
            features: small_features(),
            ensemble: small_ec(),
        }
    }

    #[test]
    fn experiment_invariants_hold_on_a_tiny_run() {
        let output = run_experiment(&tiny_experiment_config(None)).unwrap();
        let r = &output.report;
        assert_eq!(r.n, 12);
        assert_eq!(r.inc_c + r.inc_s, r.inc);
        assert!(r.inc <= r.n);
        assert!((0.0..=0.5).contains(&r.err_pred));
        let m = r.labeled.unwrap();
        assert_eq!(m.tp + m.tn + m.fp + m.fn_, 12);
        assert_eq!(output.names.len(), 12);
        assert_eq!(output.names[0], "cover_000000");
        assert_eq!(output.names[6], "stego_000000");
    }

    #[test]
    fn experiment_with_empty_stego_side_still_reports() {
        let cfg = ExperimentConfig {
            n_test_covers: 8,
            n_test_stegos: 0,
            ..tiny_experiment_config(None)
        };
        let output = run_experiment(&cfg).unwrap();
        let m = output.report.labeled.unwrap();
        assert_eq!(m.tp + m.fn_, 0);
        assert_eq!(m.tn + m.fp, 8);
        assert!((0.0..=0.5).contains(&output.report.err_pred));
    }

    #[test]
    fn experiment_files_are_byte_reproducible() {
        let tmp = tempdir().unwrap();
        let config_path = tmp.path().join("exp.toml");
        fs::write(
            &config_path,
            "[run]\nseed = 9\n\n[images]\nwidth = 32\nheight = 32\n\n[train]\nsource = \"source-a\"\ncovers = 12\nalgorithm = \"lsbm\"\nrate = 0.4\n\n[test]\nsource = \"source-a\"\ncovers = 5\nstegos = 5\n\n[features]\nresiduals = [\"first\", \"kb\"]\nquantizations = [1]\ntruncation = 1\norder = 3\ndirections = [\"h\", \"v\"]\nnormalize = true\n\n[ensemble]\nlearners = 7\nsubspace = 30\nreg_eps = 1e-6\nbootstrap = true\nsubspace_search = false\n",
        )
        .unwrap();
        let out_a = tmp.path().join("run_a");
        let out_b = tmp.path().join("run_b");
        let (_, report_a) = cmd_experiment(&config_path, Some(&out_a)).unwrap();
        let (_, report_b) = cmd_experiment(&config_path, Some(&out_b)).unwrap();
        assert_eq!(report_a, report_b);
        for file in ["report.csv", "verdicts.csv"] {
            assert_eq!(
                fs::read(out_a.join(file)).unwrap(),
                fs::read(out_b.join(file)).unwrap(),
                "{file} differs between reruns"
            );
        }
        for file in [MODEL_A_FILE, MODEL_B_FILE, META_FILE] {
            assert_eq!(
                fs::read(out_a.join("models").join(file)).unwrap(),
                fs::read(out_b.join("models").join(file)).unwrap(),
                "{file} differs between reruns"
            );
        }
        let report_text = fs::read_to_string(out_a.join("report.csv")).unwrap();
        assert_eq!(report_text.lines().next().unwrap(), REPORT_CSV_HEADER);
        assert_eq!(report_text.lines().count(), 2);
    }

    #[test]
    fn experiment_without_out_dir_errors() {
        let tmp = tempdir().unwrap();
        let config_path = tmp.path().join("exp.toml");
        fs::write(
            &config_path,
            "[train]\nsource = \"source-a\"\nalgorithm = \"lsbm\"\nrate = 0.4\n\n[test]\nsource = \"source-a\"\n",
        )
        .unwrap();
        assert!(matches!(
            cmd_experiment(&config_path, None),
            Err(HarnessError::MissingOut)
        ));
    }

    #[test]
    fn shared_directory_source_splits_disjointly() {
        let tmp = tempdir().unwrap();
        let pool = tmp.path().join("pool");
        cmd_synth(&SourceParams::source_a(), 30, 32, 32, 31, &pool).unwrap();
        let cfg = ExperimentConfig {
            train_source: SourceSpec::Directory(pool.clone()),
            test_source: SourceSpec::Directory(pool.clone()),
            n_train_covers: 16,
            n_test_covers: 6,
            n_test_stegos: 6,
            ..tiny_experiment_config(None)
        };
        let (train, test) = experiment_corpora(&cfg).unwrap();
        assert_eq!(train.len(), 16);
        assert_eq!(test.len(), 12);
        for t in &test {
            assert!(!train.contains(t), "train and test pools overlap");
        }
        let starved = ExperimentConfig {
            n_train_covers: 25,
            ..cfg
        };
        assert!(matches!(
            experiment_corpora(&starved),
            Err(HarnessError::NotEnoughImages { need: 37, .. })
        ));
    }

    #[test]
    fn missing_directory_is_a_named_error() {
        let tmp = tempdir().unwrap();
        let missing = tmp.path().join("nope");
        let err = load_corpus_dir(&missing).unwrap_err();
        assert!(err.to_string().contains("nope"));
        let empty = tmp.path().join("empty");
        fs::create_dir(&empty).unwrap();
        assert!(matches!(
            load_corpus_dir(&empty),
            Err(HarnessError::EmptyDir(_))
        ));
    }
}
