//! Random-subspace ensemble of Fisher linear discriminants.
//!
//! Each of the `L` base learners sees a random feature subset of size
//! `subspace` and (by default) a per-class bootstrap sample of the rows,
//! and fits a regularized Fisher discriminant: solve
//! `(S_W + ridge I) w = mu1 - mu0` on the pooled within-class scatter,
//! orient `w` so the class-1 training mean projects above the midpoint
//! threshold. Predictions are unweighted majority votes; `L` is kept odd
//! so a vote never ties.
//!
//! Models serialize to a versioned text format with 17 significant digits
//! per float, which reloads bit-identically.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureVector;
use crate::rng;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
    #[error("training needs both classes present")]
    SingleClass,
    #[error("non-finite feature value in row {row}")]
    NonFinite { row: usize },
    #[error("subspace {subspace} exceeds feature dimension {dim}")]
    SubspaceTooLarge { subspace: usize, dim: usize },
    #[error("feature vector has {got} entries, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("rows disagree in dimension: row {row} has {got}, expected {expected}")]
    RaggedRows {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("{got} labels for {rows} rows")]
    LabelCount { got: usize, rows: usize },
    #[error("scatter solve failed despite regularization")]
    Singular,
    #[error("model file: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ensemble training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EcConfig {
    /// Number of base learners; must be odd.
    pub learners: usize,
    /// Feature-subset size per learner.
    pub subspace: usize,
    /// Ridge scale: the diagonal loading is `reg_eps` times the mean
    /// diagonal of the pooled scatter (falling back to `reg_eps` itself
    /// when that mean is zero).
    pub reg_eps: f64,
    /// Resample rows per class (with replacement) for each learner.
    pub bootstrap: bool,
    /// Pick `subspace` from {100, 200, 400} by out-of-bag error first.
    pub subspace_search: bool,
    pub seed: u64,
}

impl Default for EcConfig {
    fn default() -> Self {
        EcConfig {
            learners: 51,
            subspace: 200,
            reg_eps: 1e-6,
            bootstrap: true,
            subspace_search: false,
            seed: 0,
        }
    }
}

impl EcConfig {
    /// Default configuration with the subspace clamped to dimension `d`.
    pub fn for_dimension(d: usize) -> Self {
        EcConfig {
            subspace: d.min(200),
            ..EcConfig::default()
        }
    }

    fn validate(&self, dim: usize) -> Result<(), EnsembleError> {
        if self.learners == 0 || self.learners % 2 == 0 {
            return Err(EnsembleError::InvalidConfig(format!(
                "learner count must be odd and positive, got {}",
                self.learners
            )));
        }
        if self.subspace == 0 {
            return Err(EnsembleError::InvalidConfig("subspace must be positive".into()));
        }
        if self.subspace > dim {
            return Err(EnsembleError::SubspaceTooLarge {
                subspace: self.subspace,
                dim,
            });
        }
        if !(self.reg_eps > 0.0) || !self.reg_eps.is_finite() {
            return Err(EnsembleError::InvalidConfig(format!(
                "reg_eps must be positive and finite, got {}",
                self.reg_eps
            )));
        }
        Ok(())
    }
}

/// One Fisher discriminant on a feature subset.
#[derive(Debug, Clone, PartialEq)]
pub struct FldLearner {
    /// Sorted feature indices of the subspace.
    pub indices: Vec<u32>,
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl FldLearner {
    #[inline]
    fn vote(&self, features: &[f64]) -> bool {
        let mut proj = 0.0;
        for (&idx, &w) in self.indices.iter().zip(&self.weights) {
            proj += w * features[idx as usize];
        }
        proj > self.threshold
    }
}

/// Trained voting ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    /// Name of the class encoded as `true` (for example `stego`).
    pub positive_label: String,
    pub feature_dim: usize,
    pub config: EcConfig,
    pub learners: Vec<FldLearner>,
}

/// Fits one regularized Fisher discriminant.
///
/// `reg_eps` scales the mean diagonal of the pooled within-class scatter
/// to form the ridge. Returns the oriented weight vector and the midpoint
/// threshold; class-1 training mean always projects above the threshold
/// (no flip when the projected means coincide).
pub fn train_fld(
    rows: &[Vec<f64>],
    labels: &[bool],
    reg_eps: f64,
) -> Result<(Vec<f64>, f64), EnsembleError> {
    if rows.is_empty() {
        return Err(EnsembleError::InvalidConfig("no training rows".into()));
    }
    if labels.len() != rows.len() {
        return Err(EnsembleError::LabelCount {
            got: labels.len(),
            rows: rows.len(),
        });
    }
    let d = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(EnsembleError::RaggedRows {
                row: i,
                got: r.len(),
                expected: d,
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFinite { row: i });
        }
    }
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = rows.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(EnsembleError::SingleClass);
    }

    let mut mu0 = DVector::<f64>::zeros(d);
    let mut mu1 = DVector::<f64>::zeros(d);
    for (r, &l) in rows.iter().zip(labels) {
        let v = DVector::from_column_slice(r);
        if l {
            mu1 += v;
        } else {
            mu0 += v;
        }
    }
    mu0 /= n0 as f64;
    mu1 /= n1 as f64;

    let mut centered0 = DMatrix::<f64>::zeros(n0, d);
    let mut centered1 = DMatrix::<f64>::zeros(n1, d);
    let (mut i0, mut i1) = (0, 0);
    for (r, &l) in rows.iter().zip(labels) {
        if l {
            for (j, &v) in r.iter().enumerate() {
                centered1[(i1, j)] = v - mu1[j];
            }
            i1 += 1;
        } else {
            for (j, &v) in r.iter().enumerate() {
                centered0[(i0, j)] = v - mu0[j];
            }
            i0 += 1;
        }
    }
    let mut scatter = centered0.tr_mul(&centered0) + centered1.tr_mul(&centered1);

    let mean_diag = scatter.diagonal().sum() / d as f64;
    let ridge = if mean_diag > 0.0 {
        reg_eps * mean_diag
    } else {
        reg_eps
    };
    for j in 0..d {
        scatter[(j, j)] += ridge;
    }

    let delta = &mu1 - &mu0;
    let w = match nalgebra::Cholesky::new(scatter.clone()) {
        Some(chol) => chol.solve(&delta),
        None => scatter.lu().solve(&delta).ok_or(EnsembleError::Singular)?,
    };

    let proj0 = w.dot(&mu0);
    let proj1 = w.dot(&mu1);
    let w = if proj1 < proj0 { -w } else { w };
    let threshold = 0.5 * (w.dot(&mu0) + w.dot(&mu1));
    Ok((w.iter().copied().collect(), threshold))
}

fn learner_seed(cfg_seed: u64, learner: usize) -> u64 {
    rng::split(rng::derive(cfg_seed, "learner"), learner as u64)
}

/// Draws the sorted feature subset for one learner.
fn draw_subspace(seed: u64, dim: usize, subspace: usize) -> Vec<u32> {
    let mut all: Vec<u32> = (0..dim as u32).collect();
    let mut stream = rng::Stream::new(rng::derive(seed, "subspace"));
    stream.partial_shuffle(&mut all, subspace);
    let mut picked = all[..subspace].to_vec();
    picked.sort_unstable();
    picked
}

/// Per-class bootstrap: `n_c` draws with replacement from each class, so
/// both classes are always represented. Returns row indices.
fn draw_bootstrap(seed: u64, labels: &[bool]) -> Vec<usize> {
    let class0: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let class1: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut stream = rng::Stream::new(rng::derive(seed, "bootstrap"));
    let mut rows = Vec::with_capacity(labels.len());
    for _ in 0..class0.len() {
        rows.push(class0[stream.next_below(class0.len() as u64) as usize]);
    }
    for _ in 0..class1.len() {
        rows.push(class1[stream.next_below(class1.len() as u64) as usize]);
    }
    rows
}

fn check_rows(x: &[FeatureVector], y: &[bool]) -> Result<usize, EnsembleError> {
    if x.is_empty() {
        return Err(EnsembleError::InvalidConfig("no training rows".into()));
    }
    if y.len() != x.len() {
        return Err(EnsembleError::LabelCount {
            got: y.len(),
            rows: x.len(),
        });
    }
    let dim = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(EnsembleError::RaggedRows {
                row: i,
                got: row.len(),
                expected: dim,
            });
        }
        if row.0.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFinite { row: i });
        }
    }
    let n1 = y.iter().filter(|&&l| l).count();
    if n1 == 0 || n1 == y.len() {
        return Err(EnsembleError::SingleClass);
    }
    Ok(dim)
}

fn train_one_learner(
    x: &[FeatureVector],
    y: &[bool],
    cfg: &EcConfig,
    dim: usize,
    learner: usize,
) -> Result<(FldLearner, Vec<usize>), EnsembleError> {
    let seed = learner_seed(cfg.seed, learner);
    let indices = draw_subspace(seed, dim, cfg.subspace);
    let row_ids: Vec<usize> = if cfg.bootstrap {
        draw_bootstrap(seed, y)
    } else {
        (0..x.len()).collect()
    };
    let rows: Vec<Vec<f64>> = row_ids
        .iter()
        .map(|&r| indices.iter().map(|&j| x[r].0[j as usize]).collect())
        .collect();
    let labels: Vec<bool> = row_ids.iter().map(|&r| y[r]).collect();
    let (weights, threshold) = train_fld(&rows, &labels, cfg.reg_eps)?;
    Ok((
        FldLearner {
            indices,
            weights,
            threshold,
        },
        row_ids,
    ))
}

/// Trains the ensemble. With `subspace_search` set, the subspace size is
/// first chosen from {100, 200, 400} by out-of-bag error.
pub fn train_ensemble(
    x: &[FeatureVector],
    y: &[bool],
    cfg: &EcConfig,
) -> Result<EnsembleModel, EnsembleError> {
    let dim = check_rows(x, y)?;
    let mut cfg = cfg.clone();
    if cfg.subspace_search {
        if !cfg.bootstrap {
            return Err(EnsembleError::InvalidConfig(
                "subspace search needs bootstrap sampling for out-of-bag error".into(),
            ));
        }
        cfg.validate(dim).or_else(|e| match e {
            // the searched subspace replaces an oversized default
            EnsembleError::SubspaceTooLarge { .. } => Ok(()),
            other => Err(other),
        })?;
        cfg.subspace = search_subspace(x, y, &cfg, dim)?;
    }
    cfg.validate(dim)?;

    let learners: Vec<FldLearner> = (0..cfg.learners)
        .into_par_iter()
        .map(|l| train_one_learner(x, y, &cfg, dim, l).map(|(learner, _)| learner))
        .collect::<Result<_, _>>()?;

    Ok(EnsembleModel {
        positive_label: String::new(),
        feature_dim: dim,
        config: cfg,
        learners,
    })
}

/// Out-of-bag error over the candidate grid; smallest candidate wins ties.
fn search_subspace(
    x: &[FeatureVector],
    y: &[bool],
    cfg: &EcConfig,
    dim: usize,
) -> Result<usize, EnsembleError> {
    let mut candidates: Vec<usize> = [100usize, 200, 400]
        .into_iter()
        .filter(|&c| c <= dim)
        .collect();
    if candidates.is_empty() {
        candidates.push(dim);
    }
    let mut best = (f64::INFINITY, candidates[0]);
    for &candidate in &candidates {
        let probe = EcConfig {
            subspace: candidate,
            subspace_search: false,
            seed: rng::derive(cfg.seed, "subspace-search"),
            ..cfg.clone()
        };
        let trained: Vec<(FldLearner, Vec<usize>)> = (0..probe.learners)
            .into_par_iter()
            .map(|l| train_one_learner(x, y, &probe, dim, l))
            .collect::<Result<_, _>>()?;
        let mut wrong = 0usize;
        let mut counted = 0usize;
        for (i, row) in x.iter().enumerate() {
            let mut votes = 0usize;
            let mut voters = 0usize;
            for (learner, in_bag) in &trained {
                if !in_bag.contains(&i) {
                    voters += 1;
                    if learner.vote(&row.0) {
                        votes += 1;
                    }
                }
            }
            if voters == 0 {
                continue;
            }
            counted += 1;
            let pred = 2 * votes > voters;
            if pred != y[i] {
                wrong += 1;
            }
        }
        let err = if counted == 0 {
            f64::INFINITY
        } else {
            wrong as f64 / counted as f64
        };
        if err < best.0 {
            best = (err, candidate);
        }
    }
    Ok(best.1)
}

/// Number of learners voting for the positive class.
pub fn predict_votes(model: &EnsembleModel, features: &[f64]) -> Result<usize, EnsembleError> {
    if features.len() != model.feature_dim {
        return Err(EnsembleError::DimensionMismatch {
            got: features.len(),
            expected: model.feature_dim,
        });
    }
    Ok(model.learners.iter().filter(|l| l.vote(features)).count())
}

/// Majority rule; with an odd learner count a tie cannot occur.
pub fn majority(votes: usize, learners: usize) -> bool {
    2 * votes > learners
}

/// Majority-vote prediction: `true` means the positive class.
pub fn predict(model: &EnsembleModel, features: &[f64]) -> Result<bool, EnsembleError> {
    Ok(majority(
        predict_votes(model, features)?,
        model.learners.len(),
    ))
}

const MODEL_MAGIC: &str = "stegoscope-ensemble v1";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a model to the versioned text format.
pub fn save_model<W: Write>(model: &EnsembleModel, mut w: W) -> Result<(), EnsembleError> {
    writeln!(w, "{MODEL_MAGIC}")?;
    writeln!(w, "positive_label {}", model.positive_label)?;
    writeln!(w, "feature_dim {}", model.feature_dim)?;
    writeln!(w, "learners {}", model.config.learners)?;
    writeln!(w, "subspace {}", model.config.subspace)?;
    writeln!(w, "reg_eps {}", fmt_f64(model.config.reg_eps))?;
    writeln!(w, "bootstrap {}", u8::from(model.config.bootstrap))?;
    writeln!(w, "subspace_search {}", u8::from(model.config.subspace_search))?;
    writeln!(w, "seed {}", model.config.seed)?;
    for (i, learner) in model.learners.iter().enumerate() {
        writeln!(w, "learner {i}")?;
        let idx: Vec<String> = learner.indices.iter().map(|v| v.to_string()).collect();
        writeln!(w, "indices {}", idx.join(" "))?;
        let ws: Vec<String> = learner.weights.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "weights {}", ws.join(" "))?;
        writeln!(w, "threshold {}", fmt_f64(learner.threshold))?;
    }
    writeln!(w, "end")?;
    Ok(())
}

fn parse_kv<'a>(line: &'a str, key: &str) -> Result<&'a str, EnsembleError> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| EnsembleError::Parse(format!("expected `{key} ...`, got `{line}`")))
}

/// Loads a model written by [`save_model`].
pub fn load_model<R: BufRead>(r: R) -> Result<EnsembleModel, EnsembleError> {
    let mut lines = r.lines();
    let mut next = || -> Result<String, EnsembleError> {
        lines
            .next()
            .ok_or_else(|| EnsembleError::Parse("unexpected end of model file".into()))?
            .map_err(EnsembleError::Io)
    };
    let magic = next()?;
    if magic != MODEL_MAGIC {
        return Err(EnsembleError::Parse(format!(
            "bad model header `{magic}` (expected `{MODEL_MAGIC}`)"
        )));
    }
    let positive_label = parse_kv(&next()?, "positive_label")?.to_string();
    let feature_dim: usize = parse_kv(&next()?, "feature_dim")?
        .parse()
        .map_err(|_| EnsembleError::Parse("bad feature_dim".into()))?;
    let learner_count: usize = parse_kv(&next()?, "learners")?
        .parse()
        .map_err(|_| EnsembleError::Parse("bad learners".into()))?;
    let subspace: usize = parse_kv(&next()?, "subspace")?
        .parse()
        .map_err(|_| EnsembleError::Parse("bad subspace".into()))?;
    let reg_eps: f64 = parse_kv(&next()?, "reg_eps")?
        .parse()
        .map_err(|_| EnsembleError::Parse("bad reg_eps".into()))?;
    let bootstrap = match parse_kv(&next()?, "bootstrap")? {
        "1" => true,
        "0" => false,
        other => return Err(EnsembleError::Parse(format!("bad bootstrap flag `{other}`"))),
    };
    let subspace_search = match parse_kv(&next()?, "subspace_search")? {
        "1" => true,
        "0" => false,
        other => {
            return Err(EnsembleError::Parse(format!(
                "bad subspace_search flag `{other}`"
            )))
        }
    };
    let seed: u64 = parse_kv(&next()?, "seed")?
        .parse()
        .map_err(|_| EnsembleError::Parse("bad seed".into()))?;

    let mut learners = Vec::with_capacity(learner_count);
    for i in 0..learner_count {
        let header = next()?;
        let idx_line = parse_kv(&header, "learner")?;
        if idx_line != i.to_string() {
            return Err(EnsembleError::Parse(format!(
                "learner {i} header out of order: `{header}`"
            )));
        }
        let indices: Vec<u32> = parse_kv(&next()?, "indices")?
            .split(' ')
            .map(|v| {
                v.parse::<u32>()
                    .map_err(|_| EnsembleError::Parse(format!("bad index `{v}`")))
            })
            .collect::<Result<_, _>>()?;
        let weights: Vec<f64> = parse_kv(&next()?, "weights")?
            .split(' ')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| EnsembleError::Parse(format!("bad weight `{v}`")))
            })
            .collect::<Result<_, _>>()?;
        let threshold: f64 = parse_kv(&next()?, "threshold")?
            .parse()
            .map_err(|_| EnsembleError::Parse("bad threshold".into()))?;
        if indices.len() != weights.len() {
            return Err(EnsembleError::Parse(format!(
                "learner {i}: {} indices vs {} weights",
                indices.len(),
                weights.len()
            )));
        }
        learners.push(FldLearner {
            indices,
            weights,
            threshold,
        });
    }
    if next()? != "end" {
        return Err(EnsembleError::Parse("missing end marker".into()));
    }
    Ok(EnsembleModel {
        positive_label,
        feature_dim,
        config: EcConfig {
            learners: learner_count,
            subspace,
            reg_eps,
            bootstrap,
            subspace_search,
            seed,
        },
        learners,
    })
}
