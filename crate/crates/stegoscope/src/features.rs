//! Quantized residual co-occurrence features.
//!
//! A reduced rich-model feature set: high-pass residuals are computed on
//! valid interior positions (no padding), quantized and truncated, and
//! scanned with a sliding window whose joint histogram is the feature
//! block. Blocks are laid out kind-major, then quantization step, then
//! scan direction, each block normalized to unit mass. With the default
//! configuration (three residual kinds, steps 1 and 2, both directions,
//! truncation 2, order 4) the vector has `3 * 2 * 2 * 5^4 = 7500` entries.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::image::ImageGray;

/// Smallest image side accepted by [`extract_features`].
pub const MIN_DIM: u32 = 16;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("image {width}x{height} below feature minimum {min}x{min}")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error("image {width}x{height} too small for {kind:?} residual")]
    TooSmallForResidual {
        kind: ResidualKind,
        width: u32,
        height: u32,
    },
    #[error("residual plane {width}x{height} shorter than window {order} along {direction:?}")]
    TooSmallForScan {
        width: usize,
        height: usize,
        order: u8,
        direction: ScanDirection,
    },
    #[error("residual value {value} outside truncation range +-{t}")]
    ResidualOutOfRange { value: i8, t: u8 },
    #[error("feature csv: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Residual filter kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    /// Horizontal first difference `X(y, x+1) - X(y, x)`.
    FirstOrder,
    /// Horizontal second difference `X(y, x-1) - 2 X(y, x) + X(y, x+1)`.
    SecondOrder,
    /// 3x3 high-pass kernel from [`crate::image::kb_kernel`].
    Kb,
}

impl ResidualKind {
    pub fn parse(name: &str) -> Result<Self, FeatureError> {
        match name {
            "first" => Ok(ResidualKind::FirstOrder),
            "second" => Ok(ResidualKind::SecondOrder),
            "kb" => Ok(ResidualKind::Kb),
            other => Err(FeatureError::InvalidConfig(format!(
                "unknown residual kind `{other}` (expected first, second or kb)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ResidualKind::FirstOrder => "first",
            ResidualKind::SecondOrder => "second",
            ResidualKind::Kb => "kb",
        }
    }
}

/// Direction the co-occurrence window slides in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanDirection {
    Horizontal,
    Vertical,
}

impl ScanDirection {
    pub fn parse(name: &str) -> Result<Self, FeatureError> {
        match name {
            "horizontal" | "h" => Ok(ScanDirection::Horizontal),
            "vertical" | "v" => Ok(ScanDirection::Vertical),
            other => Err(FeatureError::InvalidConfig(format!(
                "unknown scan direction `{other}` (expected horizontal or vertical)"
            ))),
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            ScanDirection::Horizontal => "h",
            ScanDirection::Vertical => "v",
        }
    }
}

/// Feature extraction settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub kinds: Vec<ResidualKind>,
    /// Quantization steps; each must be 1 or 2.
    pub quantizations: Vec<u8>,
    /// Truncation threshold `T`; residuals clamp to `[-T, T]`.
    pub truncation: u8,
    /// Window length of the co-occurrence scan; 3 or 4.
    pub cooc_order: u8,
    pub directions: Vec<ScanDirection>,
    /// Normalize each histogram block to unit mass.
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            kinds: vec![
                ResidualKind::FirstOrder,
                ResidualKind::SecondOrder,
                ResidualKind::Kb,
            ],
            quantizations: vec![1, 2],
            truncation: 2,
            cooc_order: 4,
            directions: vec![ScanDirection::Horizontal, ScanDirection::Vertical],
            normalize: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.kinds.is_empty() {
            return Err(FeatureError::InvalidConfig("no residual kinds".into()));
        }
        if self.quantizations.is_empty() {
            return Err(FeatureError::InvalidConfig("no quantization steps".into()));
        }
        for &q in &self.quantizations {
            if q != 1 && q != 2 {
                return Err(FeatureError::InvalidConfig(format!(
                    "quantization step must be 1 or 2, got {q}"
                )));
            }
        }
        if self.truncation == 0 {
            return Err(FeatureError::InvalidConfig(
                "truncation must be at least 1".into(),
            ));
        }
        if self.cooc_order != 3 && self.cooc_order != 4 {
            return Err(FeatureError::InvalidConfig(format!(
                "co-occurrence order must be 3 or 4, got {}",
                self.cooc_order
            )));
        }
        if self.directions.is_empty() {
            return Err(FeatureError::InvalidConfig("no scan directions".into()));
        }
        Ok(())
    }

    /// Histogram bins per block: `(2T + 1) ^ order`.
    pub fn bins_per_block(&self) -> usize {
        let radix = 2 * self.truncation as usize + 1;
        radix.pow(u32::from(self.cooc_order))
    }

    /// Total feature dimension.
    pub fn dimension(&self) -> usize {
        self.kinds.len() * self.quantizations.len() * self.directions.len() * self.bins_per_block()
    }

    /// Canonical one-line description; models store it so mismatched
    /// feature settings are caught at load time. Parseable by
    /// [`FeatureConfig::parse_fingerprint`].
    pub fn fingerprint(&self) -> String {
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.name()).collect();
        let qs: Vec<String> = self.quantizations.iter().map(|q| q.to_string()).collect();
        let dirs: Vec<&str> = self.directions.iter().map(|d| d.short()).collect();
        format!(
            "kinds={};q={};dirs={};t={};order={};norm={}",
            kinds.join(","),
            qs.join(","),
            dirs.join(","),
            self.truncation,
            self.cooc_order,
            u8::from(self.normalize),
        )
    }

    pub fn parse_fingerprint(s: &str) -> Result<Self, FeatureError> {
        let mut kinds = None;
        let mut qs = None;
        let mut dirs = None;
        let mut t = None;
        let mut order = None;
        let mut norm = None;
        for part in s.split(';') {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                FeatureError::InvalidConfig(format!("bad fingerprint field `{part}`"))
            })?;
            match key {
                "kinds" => {
                    kinds = Some(
                        value
                            .split(',')
                            .map(ResidualKind::parse)
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "q" => {
                    qs = Some(
                        value
                            .split(',')
                            .map(|v| {
                                v.parse::<u8>().map_err(|_| {
                                    FeatureError::InvalidConfig(format!(
                                        "bad quantization `{v}` in fingerprint"
                                    ))
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "dirs" => {
                    dirs = Some(
                        value
                            .split(',')
                            .map(ScanDirection::parse)
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "t" => {
                    t = Some(value.parse::<u8>().map_err(|_| {
                        FeatureError::InvalidConfig(format!("bad truncation `{value}`"))
                    })?)
                }
                "order" => {
                    order = Some(value.parse::<u8>().map_err(|_| {
                        FeatureError::InvalidConfig(format!("bad order `{value}`"))
                    })?)
                }
                "norm" => {
                    norm = Some(match value {
                        "1" => true,
                        "0" => false,
                        _ => {
                            return Err(FeatureError::InvalidConfig(format!(
                                "bad norm flag `{value}`"
                            )))
                        }
                    })
                }
                _ => {
                    return Err(FeatureError::InvalidConfig(format!(
                        "unknown fingerprint key `{key}`"
                    )))
                }
            }
        }
        let cfg = FeatureConfig {
            kinds: kinds
                .ok_or_else(|| FeatureError::InvalidConfig("fingerprint missing kinds".into()))?,
            quantizations: qs
                .ok_or_else(|| FeatureError::InvalidConfig("fingerprint missing q".into()))?,
            truncation: t
                .ok_or_else(|| FeatureError::InvalidConfig("fingerprint missing t".into()))?,
            cooc_order: order
                .ok_or_else(|| FeatureError::InvalidConfig("fingerprint missing order".into()))?,
            directions: dirs
                .ok_or_else(|| FeatureError::InvalidConfig("fingerprint missing dirs".into()))?,
            normalize: norm
                .ok_or_else(|| FeatureError::InvalidConfig("fingerprint missing norm".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Quantized, truncated residual plane; entries lie in `[-T, T]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualPlane {
    pub width: usize,
    pub height: usize,
    pub values: Vec<i8>,
}

impl ResidualPlane {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i8 {
        self.values[y * self.width + x]
    }
}

/// One image's feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[inline]
fn quantize(raw: i32, q: u8, t: u8) -> i8 {
    let scaled = (f64::from(raw) / f64::from(q)).round();
    scaled.clamp(-f64::from(t), f64::from(t)) as i8
}

/// Computes the residual of `kind` on valid interior positions, quantized
/// by `q` and truncated to `[-T, T]`. Rounding is half away from zero.
pub fn compute_residual(
    img: &ImageGray,
    kind: ResidualKind,
    q: u8,
    t: u8,
) -> Result<ResidualPlane, FeatureError> {
    if q != 1 && q != 2 {
        return Err(FeatureError::InvalidConfig(format!(
            "quantization step must be 1 or 2, got {q}"
        )));
    }
    if t == 0 {
        return Err(FeatureError::InvalidConfig(
            "truncation must be at least 1".into(),
        ));
    }
    let w = img.width() as usize;
    let h = img.height() as usize;
    let too_small = match kind {
        ResidualKind::FirstOrder => w < 2,
        ResidualKind::SecondOrder => w < 3,
        ResidualKind::Kb => w < 3 || h < 3,
    };
    if too_small {
        return Err(FeatureError::TooSmallForResidual {
            kind,
            width: img.width(),
            height: img.height(),
        });
    }
    let px = |x: usize, y: usize| -> i32 { i32::from(img.get(x as u32, y as u32)) };
    let (rw, rh, raw): (usize, usize, Vec<i32>) = match kind {
        ResidualKind::FirstOrder => {
            let rw = w - 1;
            let mut raw = Vec::with_capacity(rw * h);
            for y in 0..h {
                for x in 0..rw {
                    raw.push(px(x + 1, y) - px(x, y));
                }
            }
            (rw, h, raw)
        }
        ResidualKind::SecondOrder => {
            let rw = w - 2;
            let mut raw = Vec::with_capacity(rw * h);
            for y in 0..h {
                for x in 1..w - 1 {
                    raw.push(px(x - 1, y) - 2 * px(x, y) + px(x + 1, y));
                }
            }
            (rw, h, raw)
        }
        ResidualKind::Kb => {
            let rw = w - 2;
            let rh = h - 2;
            let mut raw = Vec::with_capacity(rw * rh);
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = -px(x - 1, y - 1) + 2 * px(x, y - 1) - px(x + 1, y - 1)
                        + 2 * px(x - 1, y) - 4 * px(x, y) + 2 * px(x + 1, y)
                        - px(x - 1, y + 1) + 2 * px(x, y + 1) - px(x + 1, y + 1);
                    raw.push(v);
                }
            }
            (rw, rh, raw)
        }
    };
    Ok(ResidualPlane {
        width: rw,
        height: rh,
        values: raw.into_iter().map(|r| quantize(r, q, t)).collect(),
    })
}

/// Joint histogram of length-`order` windows slid along `direction`.
///
/// Bin index is the mixed-radix encoding with radix `2T + 1`: the first
/// window element is the most significant digit, each digit offset by
/// `+T`. Counts are raw (not normalized).
pub fn cooccurrence(
    plane: &ResidualPlane,
    direction: ScanDirection,
    order: u8,
    t: u8,
) -> Result<Vec<f64>, FeatureError> {
    if order != 3 && order != 4 {
        return Err(FeatureError::InvalidConfig(format!(
            "co-occurrence order must be 3 or 4, got {order}"
        )));
    }
    if t == 0 {
        return Err(FeatureError::InvalidConfig(
            "truncation must be at least 1".into(),
        ));
    }
    let span = order as usize;
    let fits = match direction {
        ScanDirection::Horizontal => plane.width >= span,
        ScanDirection::Vertical => plane.height >= span,
    };
    if !fits {
        return Err(FeatureError::TooSmallForScan {
            width: plane.width,
            height: plane.height,
            order,
            direction,
        });
    }
    let radix = 2 * usize::from(t) + 1;
    let mut hist = vec![0.0f64; radix.pow(u32::from(order))];
    let digit = |v: i8| -> Result<usize, FeatureError> {
        if v < -(t as i8) || v > t as i8 {
            return Err(FeatureError::ResidualOutOfRange { value: v, t });
        }
        Ok((i32::from(v) + i32::from(t)) as usize)
    };
    match direction {
        ScanDirection::Horizontal => {
            for y in 0..plane.height {
                for x in 0..=plane.width - span {
                    let mut idx = 0usize;
                    for k in 0..span {
                        idx = idx * radix + digit(plane.get(x + k, y))?;
                    }
                    hist[idx] += 1.0;
                }
            }
        }
        ScanDirection::Vertical => {
            for x in 0..plane.width {
                for y in 0..=plane.height - span {
                    let mut idx = 0usize;
                    for k in 0..span {
                        idx = idx * radix + digit(plane.get(x, y + k))?;
                    }
                    hist[idx] += 1.0;
                }
            }
        }
    }
    Ok(hist)
}

/// Extracts the full feature vector: one histogram block per
/// (kind, quantization, direction) triple, in that nesting order.
pub fn extract_features(img: &ImageGray, cfg: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    cfg.validate()?;
    if img.width() < MIN_DIM || img.height() < MIN_DIM {
        return Err(FeatureError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_DIM,
        });
    }
    let mut out = Vec::with_capacity(cfg.dimension());
    for &kind in &cfg.kinds {
        for &q in &cfg.quantizations {
            let plane = compute_residual(img, kind, q, cfg.truncation)?;
            for &direction in &cfg.directions {
                let mut hist = cooccurrence(&plane, direction, cfg.cooc_order, cfg.truncation)?;
                if cfg.normalize {
                    let mass: f64 = hist.iter().sum();
                    if mass > 0.0 {
                        for v in &mut hist {
                            *v /= mass;
                        }
                    }
                }
                out.extend_from_slice(&hist);
            }
        }
    }
    Ok(FeatureVector(out))
}

/// Writes feature rows as CSV: header `label,f0,f1,...` when labels are
/// given, `f0,f1,...` otherwise. Floats use the shortest round-trip form.
pub fn write_features_csv<W: Write>(
    mut w: W,
    rows: &[FeatureVector],
    labels: Option<&[String]>,
) -> Result<(), FeatureError> {
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    if let Some(ls) = labels {
        if ls.len() != rows.len() {
            return Err(FeatureError::Csv(format!(
                "{} labels for {} rows",
                ls.len(),
                rows.len()
            )));
        }
        if let Some(bad) = ls.iter().find(|l| l.contains(',') || l.contains('\n')) {
            return Err(FeatureError::Csv(format!("label `{bad}` contains a separator")));
        }
    }
    let mut header = String::new();
    if labels.is_some() {
        header.push_str("label");
    }
    for i in 0..dim {
        if !header.is_empty() {
            header.push(',');
        }
        header.push_str(&format!("f{i}"));
    }
    writeln!(w, "{header}")?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(FeatureError::Csv(format!(
                "row {i} has {} values, expected {dim}",
                row.len()
            )));
        }
        let mut line = String::new();
        if let Some(ls) = labels {
            line.push_str(&ls[i]);
        }
        for v in &row.0 {
            if !line.is_empty() {
                line.push(',');
            }
            line.push_str(&format!("{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a feature CSV written by [`write_features_csv`].
pub fn read_features_csv<R: BufRead>(
    r: R,
) -> Result<(Option<Vec<String>>, Vec<FeatureVector>), FeatureError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| FeatureError::Csv("empty feature file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    let labeled = cols.first() == Some(&"label");
    let dim = cols.len() - usize::from(labeled);
    let mut labels = if labeled { Some(Vec::new()) } else { None };
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        if let Some(ls) = labels.as_mut() {
            ls.push(
                fields
                    .next()
                    .ok_or_else(|| FeatureError::Csv(format!("line {}: empty", lineno + 2)))?
                    .to_string(),
            );
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    FeatureError::Csv(format!("line {}: bad float `{f}`", lineno + 2))
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != dim {
            return Err(FeatureError::Csv(format!(
                "line {}: {} values, expected {dim}",
                lineno + 2,
                values.len()
            )));
        }
        rows.push(FeatureVector(values));
    }
    Ok((labels, rows))
}
