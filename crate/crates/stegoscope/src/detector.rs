//! Double-embedding consistency detection.
//!
//! The analyst can always embed. Given a set `A` of suspect images, build
//! `B` by embedding every member of `A` once more at the assumed rate.
//! Train two classifiers: `f_a` separates cover from stego on `A`-like
//! data, `f_b` separates single from double embedding on `B`-like data.
//! If `f_a` calls image `a` stego, then its re-embedded partner `b` must
//! look double-embedded to `f_b`; if `f_a` calls `a` cover, `b` must look
//! single-embedded. Cross-applying the classifiers gives a second check:
//! `f_b` should see every `a` as at most single-embedded and `f_a` should
//! see every `b` as embedded. Any disagreement is an inconsistency, and
//! at least one of the predictions involved must be wrong.
//!
//! Counting flagged images estimates accuracy without labels: each
//! inconsistency pairs one image with one betrayed error among the two
//! primary predictions, so `err_pred = INC / (2 n)`. The estimate is blind
//! to the case where every classifier is wrong in a compatible way, so it
//! is a lower bound on the true error rate in adversarial regimes, but it
//! tracks the error well when mistakes are independent, and it soars under
//! cover-source mismatch, which is exactly when a bare classifier lies.

use rayon::prelude::*;
use thiserror::Error;

use crate::embed::{embed, EmbedConfig, EmbedError};
use crate::ensemble::{predict, train_ensemble, EcConfig, EnsembleError, EnsembleModel};
use crate::features::{extract_features, FeatureConfig, FeatureError, FeatureVector};
use crate::image::ImageGray;
use crate::rng;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("dataset pair carries no labels, which this operation needs")]
    Unlabeled,
    #[error("training pair must be near-balanced: {covers} covers vs {stegos} stegos")]
    Unbalanced { covers: usize, stegos: usize },
    #[error("empty image set")]
    EmptyInput,
    #[error("{labels} labels for {images} images")]
    LabelCount { labels: usize, images: usize },
    #[error("feature settings mismatch: models built with `{models}`, asked for `{requested}`")]
    FingerprintMismatch { models: String, requested: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// True label of an image in the `A` set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassLabel {
    Cover,
    Stego,
}

/// Prediction of the cover/stego classifier `f_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredA {
    Cover,
    Stego,
}

impl PredA {
    pub fn name(&self) -> &'static str {
        match self {
            PredA::Cover => "cover",
            PredA::Stego => "stego",
        }
    }
}

/// Prediction of the single/double classifier `f_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredB {
    Stego,
    DoubleStego,
}

impl PredB {
    pub fn name(&self) -> &'static str {
        match self {
            PredB::Stego => "stego",
            PredB::DoubleStego => "double-stego",
        }
    }
}

/// Images `a[i]` with their once-more-embedded partners `b[i]`.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub a: Vec<ImageGray>,
    pub b: Vec<ImageGray>,
    /// Labels of the `a` images, when known.
    pub labels: Option<Vec<ClassLabel>>,
    /// Configuration used for the `a -> b` embedding.
    pub embed_cfg: EmbedConfig,
}

/// The two trained classifiers plus the settings they were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModels {
    pub model_a: EnsembleModel,
    pub model_b: EnsembleModel,
    pub feature_cfg: FeatureConfig,
    pub embed_cfg: EmbedConfig,
}

/// Per-image predictions and consistency flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageVerdict {
    pub pred_a_of_a: PredA,
    pub pred_b_of_b: PredB,
    pub pred_b_of_a: PredB,
    pub pred_a_of_b: PredA,
    pub f1: bool,
    pub f2: bool,
    pub inconsistent: bool,
}

impl ImageVerdict {
    pub fn new(
        pred_a_of_a: PredA,
        pred_b_of_b: PredB,
        pred_b_of_a: PredB,
        pred_a_of_b: PredA,
    ) -> Self {
        let f1 = filter_f1(pred_a_of_a, pred_b_of_b);
        let f2 = filter_f2(pred_b_of_a, pred_a_of_b);
        ImageVerdict {
            pred_a_of_a,
            pred_b_of_b,
            pred_b_of_a,
            pred_a_of_b,
            f1,
            f2,
            inconsistent: f1 || f2,
        }
    }
}

/// Filter 1: the prediction on `a` dictates what `b` must look like.
/// Stego implies double-embedded, cover implies single-embedded; anything
/// else is an inconsistency.
pub fn filter_f1(pred_a_of_a: PredA, pred_b_of_b: PredB) -> bool {
    match pred_a_of_a {
        PredA::Stego => pred_b_of_b != PredB::DoubleStego,
        PredA::Cover => pred_b_of_b != PredB::Stego,
    }
}

/// Filter 2: cross-application. `f_b` on an `A` image must not say
/// double-embedded, and `f_a` on a `B` image must say stego; either
/// violation is an inconsistency.
pub fn filter_f2(pred_b_of_a: PredB, pred_a_of_b: PredA) -> bool {
    pred_b_of_a != PredB::Stego || pred_a_of_b != PredA::Stego
}

/// Label-free detection summary; labeled metrics appear when the test
/// set's ground truth is known.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub n: usize,
    /// Images flagged by at least one filter.
    pub inc: usize,
    /// Flagged images that `f_a` called cover.
    pub inc_c: usize,
    /// Flagged images that `f_a` called stego.
    pub inc_s: usize,
    /// Predicted error rate `inc / (2 n)`.
    pub err_pred: f64,
    pub labeled: Option<LabeledMetrics>,
}

/// Confusion counts of `f_a` against ground truth; stego is the positive
/// class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledMetrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl LabeledMetrics {
    pub fn err(&self) -> f64 {
        let total = self.tp + self.tn + self.fp + self.fn_;
        (self.fp + self.fn_) as f64 / total as f64
    }
}

/// Builds the labeled training pair from a pile of covers: a seeded
/// shuffle splits them into halves, the first half stays cover, the
/// second half is embedded once; every `a[i]` is then embedded once more
/// into `b[i]`.
pub fn build_train_pair(
    covers: Vec<ImageGray>,
    cfg: &EmbedConfig,
    seed: u64,
) -> Result<DatasetPair, DetectError> {
    if covers.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    let mut covers = covers;
    let mut stream = rng::Stream::new(rng::derive(seed, "train-pair-shuffle"));
    stream.shuffle(&mut covers);
    let n_cover = covers.len() - covers.len() / 2;
    let stego_seed = rng::derive(seed, "train-pair-embed-a");
    let a: Vec<ImageGray> = covers
        .into_par_iter()
        .enumerate()
        .map(|(i, img)| {
            if i < n_cover {
                Ok(img)
            } else {
                embed(&img, cfg, rng::split(stego_seed, i as u64))
            }
        })
        .collect::<Result<_, EmbedError>>()?;
    let labels: Vec<ClassLabel> = (0..a.len())
        .map(|i| {
            if i < n_cover {
                ClassLabel::Cover
            } else {
                ClassLabel::Stego
            }
        })
        .collect();
    let pair = attach_b(a, Some(labels), cfg, rng::derive(seed, "train-pair-embed-b"))?;
    Ok(pair)
}

/// Builds the unlabeled analysis pair: `b[i]` is `a[i]` embedded once at
/// the assumed configuration.
pub fn build_test_pair(
    images: Vec<ImageGray>,
    cfg: &EmbedConfig,
    seed: u64,
) -> Result<DatasetPair, DetectError> {
    if images.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    attach_b(images, None, cfg, rng::derive(seed, "test-pair-embed-b"))
}

fn attach_b(
    a: Vec<ImageGray>,
    labels: Option<Vec<ClassLabel>>,
    cfg: &EmbedConfig,
    embed_key: u64,
) -> Result<DatasetPair, DetectError> {
    let b: Vec<ImageGray> = a
        .par_iter()
        .enumerate()
        .map(|(i, img)| embed(img, cfg, rng::split(embed_key, i as u64)))
        .collect::<Result<_, EmbedError>>()?;
    Ok(DatasetPair {
        a,
        b,
        labels,
        embed_cfg: cfg.clone(),
    })
}

fn extract_all(
    images: &[ImageGray],
    cfg: &FeatureConfig,
) -> Result<Vec<FeatureVector>, FeatureError> {
    images
        .par_iter()
        .map(|img| extract_features(img, cfg))
        .collect()
}

/// Trains `f_a` on the `A` images (cover vs stego) and `f_b` on the `B`
/// images (stego vs double-stego). The pair must be labeled and at most
/// one image away from balanced.
pub fn train_detectors(
    pair: &DatasetPair,
    feature_cfg: &FeatureConfig,
    ec_cfg: &EcConfig,
) -> Result<DetectorModels, DetectError> {
    let labels = pair.labels.as_ref().ok_or(DetectError::Unlabeled)?;
    if labels.len() != pair.a.len() {
        return Err(DetectError::LabelCount {
            labels: labels.len(),
            images: pair.a.len(),
        });
    }
    let stegos = labels.iter().filter(|&&l| l == ClassLabel::Stego).count();
    let covers = labels.len() - stegos;
    if covers.abs_diff(stegos) > 1 || covers == 0 || stegos == 0 {
        return Err(DetectError::Unbalanced { covers, stegos });
    }

    let features_a = extract_all(&pair.a, feature_cfg)?;
    let features_b = extract_all(&pair.b, feature_cfg)?;
    let y: Vec<bool> = labels.iter().map(|&l| l == ClassLabel::Stego).collect();

    let cfg_a = EcConfig {
        seed: rng::derive(ec_cfg.seed, "model-a"),
        ..ec_cfg.clone()
    };
    let cfg_b = EcConfig {
        seed: rng::derive(ec_cfg.seed, "model-b"),
        ..ec_cfg.clone()
    };
    let mut model_a = train_ensemble(&features_a, &y, &cfg_a)?;
    model_a.positive_label = "stego".into();
    // b[i] is double-embedded exactly when a[i] was stego
    let mut model_b = train_ensemble(&features_b, &y, &cfg_b)?;
    model_b.positive_label = "double-stego".into();

    Ok(DetectorModels {
        model_a,
        model_b,
        feature_cfg: feature_cfg.clone(),
        embed_cfg: pair.embed_cfg.clone(),
    })
}

/// Runs all four predictions per image and applies both filters.
///
/// Features are extracted once per image and shared by both classifiers.
/// The requested feature settings must match the ones the models were
/// trained with.
pub fn analyze(
    models: &DetectorModels,
    pair: &DatasetPair,
    feature_cfg: &FeatureConfig,
) -> Result<Vec<ImageVerdict>, DetectError> {
    let requested = feature_cfg.fingerprint();
    let trained = models.feature_cfg.fingerprint();
    if requested != trained {
        return Err(DetectError::FingerprintMismatch {
            models: trained,
            requested,
        });
    }
    let features_a = extract_all(&pair.a, feature_cfg)?;
    let features_b = extract_all(&pair.b, feature_cfg)?;
    let mut verdicts = Vec::with_capacity(pair.a.len());
    for (fa, fb) in features_a.iter().zip(&features_b) {
        let pred_a_of_a = to_pred_a(predict(&models.model_a, &fa.0)?);
        let pred_a_of_b = to_pred_a(predict(&models.model_a, &fb.0)?);
        let pred_b_of_a = to_pred_b(predict(&models.model_b, &fa.0)?);
        let pred_b_of_b = to_pred_b(predict(&models.model_b, &fb.0)?);
        verdicts.push(ImageVerdict::new(
            pred_a_of_a,
            pred_b_of_b,
            pred_b_of_a,
            pred_a_of_b,
        ));
    }
    Ok(verdicts)
}

fn to_pred_a(positive: bool) -> PredA {
    if positive {
        PredA::Stego
    } else {
        PredA::Cover
    }
}

fn to_pred_b(positive: bool) -> PredB {
    if positive {
        PredB::DoubleStego
    } else {
        PredB::Stego
    }
}

/// Aggregates verdicts into the detection report. Inconsistencies are
/// counted per image, not per fired filter; `err_pred = inc / (2 n)`
/// therefore never exceeds one half.
pub fn summarize(
    verdicts: &[ImageVerdict],
    labels: Option<&[ClassLabel]>,
) -> Result<DetectionReport, DetectError> {
    if verdicts.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    if let Some(ls) = labels {
        if ls.len() != verdicts.len() {
            return Err(DetectError::LabelCount {
                labels: ls.len(),
                images: verdicts.len(),
            });
        }
    }
    let n = verdicts.len();
    let mut inc = 0usize;
    let mut inc_c = 0usize;
    let mut inc_s = 0usize;
    for v in verdicts {
        if v.inconsistent {
            inc += 1;
            match v.pred_a_of_a {
                PredA::Cover => inc_c += 1,
                PredA::Stego => inc_s += 1,
            }
        }
    }
    let labeled = labels.map(|ls| {
        let mut m = LabeledMetrics {
            tp: 0,
            tn: 0,
            fp: 0,
            fn_: 0,
        };
        for (v, &l) in verdicts.iter().zip(ls) {
            match (l, v.pred_a_of_a) {
                (ClassLabel::Stego, PredA::Stego) => m.tp += 1,
                (ClassLabel::Cover, PredA::Cover) => m.tn += 1,
                (ClassLabel::Cover, PredA::Stego) => m.fp += 1,
                (ClassLabel::Stego, PredA::Cover) => m.fn_ += 1,
            }
        }
        m
    });
    Ok(DetectionReport {
        n,
        inc,
        inc_c,
        inc_s,
        err_pred: inc as f64 / (2.0 * n as f64),
        labeled,
    })
}

/// Header of the report CSV; the column set never changes, label-free
/// reports leave the confusion cells empty.
pub const REPORT_CSV_HEADER: &str = "n,TP,TN,FP,FN,Err,Err_pred,INC,INC_C,INC_S";

impl DetectionReport {
    /// The single CSV data row matching [`REPORT_CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        match &self.labeled {
            Some(m) => format!(
                "{},{},{},{},{},{:.4},{:.4},{},{},{}",
                self.n,
                m.tp,
                m.tn,
                m.fp,
                m.fn_,
                m.err(),
                self.err_pred,
                self.inc,
                self.inc_c,
                self.inc_s
            ),
            None => format!(
                "{},,,,,,{:.4},{},{},{}",
                self.n, self.err_pred, self.inc, self.inc_c, self.inc_s
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbedAlgorithm;
    use crate::ensemble::FldLearner;
    use crate::synth::{generate_corpus, SourceParams};

    #[test]
    fn f1_truth_table() {
        // prediction on a dictates the required prediction on b
        assert!(!filter_f1(PredA::Stego, PredB::DoubleStego));
        assert!(filter_f1(PredA::Stego, PredB::Stego));
        assert!(!filter_f1(PredA::Cover, PredB::Stego));
        assert!(filter_f1(PredA::Cover, PredB::DoubleStego));
    }

    #[test]
    fn f2_truth_table() {
        assert!(!filter_f2(PredB::Stego, PredA::Stego));
        assert!(filter_f2(PredB::Stego, PredA::Cover));
        assert!(filter_f2(PredB::DoubleStego, PredA::Stego));
        assert!(filter_f2(PredB::DoubleStego, PredA::Cover));
    }

    #[test]
    fn aligned_wrong_predictions_escape_both_filters() {
        // a stego image can be called cover everywhere: all four
        // predictions wrong, no filter fires, the blind spot by design
        let v = ImageVerdict::new(PredA::Cover, PredB::Stego, PredB::Stego, PredA::Stego);
        assert!(!v.f1);
        assert!(!v.f2);
        assert!(!v.inconsistent);
    }

    #[test]
    fn per_image_counting_not_per_filter() {
        // both filters fire on the same image: still one inconsistency
        let v = ImageVerdict::new(
            PredA::Stego,
            PredB::Stego,
            PredB::DoubleStego,
            PredA::Cover,
        );
        assert!(v.f1 && v.f2);
        let report = summarize(&[v], None).unwrap();
        assert_eq!(report.inc, 1);
        assert_eq!(report.inc_s, 1);
        assert_eq!(report.err_pred, 0.5);
    }

    fn consistent_verdict(pred_a: PredA) -> ImageVerdict {
        let b_of_b = match pred_a {
            PredA::Stego => PredB::DoubleStego,
            PredA::Cover => PredB::Stego,
        };
        ImageVerdict::new(pred_a, b_of_b, PredB::Stego, PredA::Stego)
    }

    fn inconsistent_verdict(pred_a: PredA) -> ImageVerdict {
        // force a flag through filter 2 regardless of pred_a
        let b_of_b = match pred_a {
            PredA::Stego => PredB::DoubleStego,
            PredA::Cover => PredB::Stego,
        };
        ImageVerdict::new(pred_a, b_of_b, PredB::DoubleStego, PredA::Stego)
    }

    #[test]
    fn summarize_matches_hand_computed_metrics() {
        // 1000 images, 500 stego + 500 cover; f_a confusion 398/358/142/102;
        // 482 inconsistent, split 197 cover-called / 285 stego-called
        let mut verdicts = Vec::new();
        let mut labels = Vec::new();
        let mut push = |pred: PredA, label: ClassLabel, inc: bool, count: usize| {
            for _ in 0..count {
                verdicts.push(if inc {
                    inconsistent_verdict(pred)
                } else {
                    consistent_verdict(pred)
                });
                labels.push(label);
            }
        };
        // stego-called images: 285 of the flagged ones
        push(PredA::Stego, ClassLabel::Stego, true, 200); // part of TP
        push(PredA::Stego, ClassLabel::Stego, false, 198); // TP total 398
        push(PredA::Stego, ClassLabel::Cover, true, 85); // part of FP
        push(PredA::Stego, ClassLabel::Cover, false, 57); // FP total 142
        // cover-called images: 197 flagged
        push(PredA::Cover, ClassLabel::Cover, true, 120); // part of TN
        push(PredA::Cover, ClassLabel::Cover, false, 238); // TN total 358
        push(PredA::Cover, ClassLabel::Stego, true, 77); // part of FN
        push(PredA::Cover, ClassLabel::Stego, false, 25); // FN total 102

        let report = summarize(&verdicts, Some(&labels)).unwrap();
        assert_eq!(report.n, 1000);
        assert_eq!(report.inc, 482);
        assert_eq!(report.inc_c, 197);
        assert_eq!(report.inc_s, 285);
        assert_eq!(report.inc_c + report.inc_s, report.inc);
        let m = report.labeled.unwrap();
        assert_eq!((m.tp, m.tn, m.fp, m.fn_), (398, 358, 142, 102));
        assert_eq!(m.err(), 0.2440);
        assert_eq!(report.err_pred, 482.0 / 2000.0);
        assert_eq!(format!("{:.4}", m.err()), "0.2440");
        assert_eq!(format!("{:.4}", report.err_pred), "0.2410");
    }

    #[test]
    fn err_pred_bounds() {
        let all_bad: Vec<ImageVerdict> = (0..10)
            .map(|i| {
                inconsistent_verdict(if i % 2 == 0 { PredA::Cover } else { PredA::Stego })
            })
            .collect();
        let report = summarize(&all_bad, None).unwrap();
        assert_eq!(report.err_pred, 0.5);
        assert_eq!(report.inc, 10);
        let all_good: Vec<ImageVerdict> = (0..10).map(|_| consistent_verdict(PredA::Cover)).collect();
        let report = summarize(&all_good, None).unwrap();
        assert_eq!(report.err_pred, 0.0);
    }

    #[test]
    fn csv_rows_keep_schema() {
        let verdicts = vec![consistent_verdict(PredA::Stego), inconsistent_verdict(PredA::Cover)];
        let labels = vec![ClassLabel::Stego, ClassLabel::Cover];
        let labeled = summarize(&verdicts, Some(&labels)).unwrap();
        assert_eq!(labeled.csv_row(), "2,1,1,0,0,0.0000,0.2500,1,1,0");
        let unlabeled = summarize(&verdicts, None).unwrap();
        assert_eq!(unlabeled.csv_row(), "2,,,,,,0.2500,1,1,0");
        assert_eq!(
            REPORT_CSV_HEADER.split(',').count(),
            labeled.csv_row().split(',').count()
        );
        assert_eq!(
            REPORT_CSV_HEADER.split(',').count(),
            unlabeled.csv_row().split(',').count()
        );
    }

    fn lsbm_cfg(rate: f64) -> EmbedConfig {
        EmbedConfig::new(EmbedAlgorithm::Lsbm, rate).unwrap()
    }

    #[test]
    fn train_pair_is_balanced_and_deterministic() {
        let covers = generate_corpus(&SourceParams::source_a(), 10, 32, 32, 1).unwrap();
        let pair = build_train_pair(covers.clone(), &lsbm_cfg(0.4), 5).unwrap();
        assert_eq!(pair.a.len(), 10);
        assert_eq!(pair.b.len(), 10);
        let labels = pair.labels.as_ref().unwrap();
        let stegos = labels.iter().filter(|&&l| l == ClassLabel::Stego).count();
        assert_eq!(stegos, 5);
        let again = build_train_pair(covers, &lsbm_cfg(0.4), 5).unwrap();
        assert_eq!(pair.a, again.a);
        assert_eq!(pair.b, again.b);
    }

    #[test]
    fn pair_builders_reject_empty_input() {
        assert!(matches!(
            build_train_pair(Vec::new(), &lsbm_cfg(0.4), 1),
            Err(DetectError::EmptyInput)
        ));
        assert!(matches!(
            build_test_pair(Vec::new(), &lsbm_cfg(0.4), 1),
            Err(DetectError::EmptyInput)
        ));
    }

    #[test]
    fn test_pair_re_embeds_each_image() {
        let covers = generate_corpus(&SourceParams::source_a(), 4, 32, 32, 3).unwrap();
        let pair = build_test_pair(covers, &lsbm_cfg(0.4), 9).unwrap();
        assert!(pair.labels.is_none());
        for (a, b) in pair.a.iter().zip(&pair.b) {
            let stats = crate::embed::count_changes(a, b).unwrap();
            assert!(stats.n_pm1 > 0);
            assert_eq!(stats.n_pm2 + stats.n_other, 0);
        }
    }

    #[test]
    fn train_detectors_demands_labels_and_balance() {
        let covers = generate_corpus(&SourceParams::source_a(), 6, 32, 32, 4).unwrap();
        let mut pair = build_train_pair(covers, &lsbm_cfg(0.4), 5).unwrap();
        let feat = FeatureConfig::default();
        let ec = EcConfig {
            learners: 3,
            subspace: 20,
            ..EcConfig::default()
        };
        let unlabeled = DatasetPair {
            labels: None,
            ..pair.clone()
        };
        assert!(matches!(
            train_detectors(&unlabeled, &feat, &ec),
            Err(DetectError::Unlabeled)
        ));
        pair.labels = Some(vec![ClassLabel::Cover; 6]);
        assert!(matches!(
            train_detectors(&pair, &feat, &ec),
            Err(DetectError::Unbalanced { .. })
        ));
    }

    /// A one-learner model that always votes the positive class.
    fn constant_positive_model(dim: usize, label: &str) -> EnsembleModel {
        EnsembleModel {
            positive_label: label.into(),
            feature_dim: dim,
            config: EcConfig {
                learners: 1,
                subspace: 1,
                ..EcConfig::default()
            },
            learners: vec![FldLearner {
                indices: vec![0],
                weights: vec![0.0],
                threshold: -1.0,
            }],
        }
    }

    #[test]
    fn constant_models_flag_everything_via_f2_only() {
        let covers = generate_corpus(&SourceParams::source_a(), 4, 32, 32, 8).unwrap();
        let pair = build_test_pair(covers, &lsbm_cfg(0.2), 2).unwrap();
        let feat = FeatureConfig::default();
        let dim = feat.dimension();
        let models = DetectorModels {
            model_a: constant_positive_model(dim, "stego"),
            model_b: constant_positive_model(dim, "double-stego"),
            feature_cfg: feat.clone(),
            embed_cfg: lsbm_cfg(0.2),
        };
        let verdicts = analyze(&models, &pair, &feat).unwrap();
        for v in &verdicts {
            // f_a always says stego, f_b always says double: filter 1 is
            // satisfied, filter 2 fires on the a-side prediction
            assert_eq!(v.pred_a_of_a, PredA::Stego);
            assert_eq!(v.pred_b_of_b, PredB::DoubleStego);
            assert!(!v.f1);
            assert!(v.f2);
            assert!(v.inconsistent);
        }
        let report = summarize(&verdicts, None).unwrap();
        assert_eq!(report.inc, 4);
        assert_eq!(report.err_pred, 0.5);
    }

    #[test]
    fn analyze_rejects_fingerprint_mismatch() {
        let covers = generate_corpus(&SourceParams::source_a(), 2, 32, 32, 8).unwrap();
        let pair = build_test_pair(covers, &lsbm_cfg(0.2), 2).unwrap();
        let feat = FeatureConfig::default();
        let models = DetectorModels {
            model_a: constant_positive_model(feat.dimension(), "stego"),
            model_b: constant_positive_model(feat.dimension(), "double-stego"),
            feature_cfg: feat,
            embed_cfg: lsbm_cfg(0.2),
        };
        let mut other = FeatureConfig::default();
        other.truncation = 1;
        assert!(matches!(
            analyze(&models, &pair, &other),
            Err(DetectError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn summarize_validates_input() {
        assert!(matches!(
            summarize(&[], None),
            Err(DetectError::EmptyInput)
        ));
        let v = vec![consistent_verdict(PredA::Cover)];
        let wrong = vec![ClassLabel::Cover, ClassLabel::Stego];
        assert!(matches!(
            summarize(&v, Some(&wrong)),
            Err(DetectError::LabelCount { .. })
        ));
    }
}
