//! LSB-matching embedding simulators.
//!
//! Two embedders share one contract: every change is exactly plus or minus
//! one gray level, saturated pixels change inward, and all randomness is a
//! pure function of the seed.
//!
//! * [`embed_lsbm`] flips a uniformly selected fraction of pixels, the
//!   classic non-adaptive LSB matching simulator.
//! * [`embed_adaptive`] follows a cost map: a payload-limited sender turns
//!   per-pixel costs into change probabilities via the usual Gibbs form
//!   `p_i = exp(-lambda c_i) / (1 + 2 exp(-lambda c_i))`, with `lambda`
//!   calibrated by bisection so the ternary entropy of the probabilities
//!   matches the requested payload. [`hill_cost`] supplies the cost map:
//!   high-pass filter, inverted low-pass smoothing, second smoothing pass.
//!
//! [`count_changes`] tallies the difference histogram between two images;
//! a single simulated embedding never moves a pixel by more than one
//! level, so the `n_pm2` bucket of a cover/stego pair is a quick
//! plausibility check on any embedder.

use thiserror::Error;

use crate::image::{convolve2d, kb_kernel, ImageError, ImageGray, RealPlane};
use crate::rng;

/// Floor applied to the smoothed high-pass magnitude before inversion.
pub const DENOMINATOR_FLOOR: f64 = 1e-10;
/// Floor applied to final costs; keeps them strictly positive.
pub const COST_FLOOR: f64 = 1e-10;
/// Nominal upper end of the bisection bracket, for costs scaled by their
/// mean. Grows by [`MAX_BRACKET_EXPANSIONS`] factors of ten when the
/// payload needs it.
pub const LAMBDA_MAX: f64 = 1e6;
/// Bisection iteration cap.
pub const MAX_BISECTION_STEPS: u32 = 200;
/// Tenfold widenings of the bracket allowed before giving up.
pub const MAX_BRACKET_EXPANSIONS: u32 = 24;
/// Relative payload tolerance used by [`embed_adaptive`].
pub const PAYLOAD_TOL: f64 = 1e-3;
/// Smallest image side accepted by [`hill_cost`] (second smoothing window).
pub const MIN_HILL_DIM: u32 = 15;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("unknown embedding algorithm `{0}` (expected lsbm or hill)")]
    UnknownAlgorithm(String),
    #[error("image {width}x{height} below cost-map minimum {min}x{min}")]
    TooSmallForCosts { width: u32, height: u32, min: u32 },
    #[error("payload {payload} bits exceeds capacity {capacity} bits")]
    PayloadAboveCapacity { payload: f64, capacity: f64 },
    #[error("calibration failed to converge: realized {realized} bits for target {target}")]
    NonConvergence { realized: f64, target: f64 },
    #[error("cost map {cw}x{ch} does not match image {iw}x{ih}")]
    CostDimensionMismatch {
        cw: usize,
        ch: usize,
        iw: u32,
        ih: u32,
    },
    #[error("images {aw}x{ah} and {bw}x{bh} differ in size")]
    ImageDimensionMismatch {
        aw: u32,
        ah: u32,
        bw: u32,
        bh: u32,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Embedding algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedAlgorithm {
    Lsbm,
    Hill,
}

impl EmbedAlgorithm {
    pub fn parse(name: &str) -> Result<Self, EmbedError> {
        match name {
            "lsbm" => Ok(EmbedAlgorithm::Lsbm),
            "hill" => Ok(EmbedAlgorithm::Hill),
            other => Err(EmbedError::UnknownAlgorithm(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EmbedAlgorithm::Lsbm => "lsbm",
            EmbedAlgorithm::Hill => "hill",
        }
    }
}

/// Algorithm plus rate in bits per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub algorithm: EmbedAlgorithm,
    pub rate: f64,
}

impl EmbedConfig {
    pub fn new(algorithm: EmbedAlgorithm, rate: f64) -> Result<Self, EmbedError> {
        if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
            return Err(EmbedError::InvalidRate(rate));
        }
        Ok(EmbedConfig { algorithm, rate })
    }
}

/// Per-pixel embedding costs. Finite entries are at least [`COST_FLOOR`];
/// `+inf` marks a wet pixel that must never change.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    plane: RealPlane,
}

impl CostMap {
    /// Wraps raw costs, applying the cost floor to finite entries.
    pub fn new(mut plane: RealPlane) -> Self {
        for v in plane.values_mut() {
            if v.is_finite() {
                *v = v.max(COST_FLOOR);
            } else {
                *v = f64::INFINITY;
            }
        }
        CostMap { plane }
    }

    pub fn plane(&self) -> &RealPlane {
        &self.plane
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    /// Number of pixels allowed to change.
    pub fn n_dry(&self) -> usize {
        self.plane.values().iter().filter(|v| v.is_finite()).count()
    }

    /// Capacity in bits: `n_dry * log2(3)`, each changeable pixel carrying
    /// one ternary symbol at most.
    pub fn capacity_bits(&self) -> f64 {
        self.n_dry() as f64 * 3f64.log2()
    }
}

/// Per-pixel change probabilities; each entry is the probability of `+1`
/// and of `-1` separately, so values never exceed 1/3.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeProbMap {
    plane: RealPlane,
}

impl ChangeProbMap {
    pub fn plane(&self) -> &RealPlane {
        &self.plane
    }

    /// Expected number of changed pixels, `sum 2 p_i`.
    pub fn expected_changes(&self) -> f64 {
        2.0 * self.plane.values().iter().sum::<f64>()
    }

    /// Realized payload in bits: sum of ternary entropies.
    pub fn entropy_bits(&self) -> f64 {
        self.plane.values().iter().map(|&p| ternary_entropy(p)).sum()
    }
}

/// Difference histogram between two equal-sized images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChangeStats {
    /// Pixels moved by exactly one level.
    pub n_pm1: u64,
    /// Pixels moved by exactly two levels.
    pub n_pm2: u64,
    /// Pixels moved by three or more levels.
    pub n_other: u64,
    /// Total pixels compared.
    pub n_total: u64,
}

impl ChangeStats {
    pub fn add(&mut self, other: &ChangeStats) {
        self.n_pm1 += other.n_pm1;
        self.n_pm2 += other.n_pm2;
        self.n_other += other.n_other;
        self.n_total += other.n_total;
    }
}

/// Entropy in bits of the ternary change distribution `{p, p, 1 - 2p}`.
pub fn ternary_entropy(p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let q = 1.0 - 2.0 * p;
    let mut h = -2.0 * p * p.log2();
    if q > 0.0 {
        h -= q * q.log2();
    }
    h
}

/// Moves a pixel by one level in the direction `up`, bouncing off the
/// range ends: 0 always moves up, 255 always moves down.
#[inline]
fn step_pixel(p: u8, up: bool) -> u8 {
    if p == 0 {
        1
    } else if p == 255 {
        254
    } else if up {
        p + 1
    } else {
        p - 1
    }
}

/// Non-adaptive LSB matching at `rate` bits per pixel.
///
/// Selects `round(rate * n_pixels)` distinct pixels by a seeded partial
/// shuffle, then matches each selected pixel's LSB to a fresh message bit:
/// no change when they already agree, otherwise a move of one level with
/// equal probability for each direction. Message bits and directions are
/// counter-based draws keyed by pixel index, so they are independent of
/// visit order.
pub fn embed_lsbm(img: &ImageGray, rate: f64, seed: u64) -> ImageGray {
    assert!(
        (0.0..=1.0).contains(&rate) && rate.is_finite(),
        "rate {rate} outside [0, 1]"
    );
    let mut out = img.clone();
    let n = img.n_pixels();
    let k = ((rate * n as f64).round() as usize).min(n);
    if k == 0 {
        return out;
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut select = rng::Stream::new(rng::derive(seed, "lsbm-select"));
    select.partial_shuffle(&mut order, k);
    let draw_key = rng::derive(seed, "lsbm-draw");
    let pixels = out.pixels_mut();
    for &idx in &order[..k] {
        let w = rng::word(draw_key, u64::from(idx));
        let bit = (w & 1) as u8;
        let p = pixels[idx as usize];
        if p & 1 != bit {
            pixels[idx as usize] = step_pixel(p, (w >> 1) & 1 == 1);
        }
    }
    out
}

/// Smoothed-inverse-high-pass cost map.
///
/// Pipeline on the pixel plane `X`: `c = L2 * (1 / max(L1 * |H * X|, eps))`
/// where `H` is the 3x3 high-pass kernel from [`kb_kernel`], `L1` a 3x3 and
/// `L2` a 15x15 averaging filter, all with mirrored borders. Smooth regions
/// get large costs, textured regions small ones.
pub fn hill_cost(img: &ImageGray) -> Result<CostMap, EmbedError> {
    if img.width() < MIN_HILL_DIM || img.height() < MIN_HILL_DIM {
        return Err(EmbedError::TooSmallForCosts {
            width: img.width(),
            height: img.height(),
            min: MIN_HILL_DIM,
        });
    }
    let plane = img.to_plane();
    let mut highpass = convolve2d(&plane, &kb_kernel())?;
    for v in highpass.values_mut() {
        *v = v.abs();
    }
    let l1 = RealPlane::constant(3, 3, 1.0 / 9.0);
    let mut smoothed = convolve2d(&highpass, &l1)?;
    for v in smoothed.values_mut() {
        *v = 1.0 / v.max(DENOMINATOR_FLOOR);
    }
    let l2 = RealPlane::constant(15, 15, 1.0 / 225.0);
    let cost = convolve2d(&smoothed, &l2)?;
    Ok(CostMap::new(cost))
}

/// Finds `lambda` such that the ternary entropy of the induced change
/// probabilities matches `payload_bits` within relative tolerance `tol`.
///
/// Costs are scaled by their mean finite value before the search, so the
/// bracket `[0, LAMBDA_MAX]` is meaningful across cost magnitudes; the
/// returned `lambda` refers to those scaled costs. Mean scaling can still
/// leave the solution above `LAMBDA_MAX` when a few floored flat-region
/// costs dwarf everything else (they drag the mean up by orders of
/// magnitude), so the bracket grows tenfold, a bounded number of times,
/// until its top end undershoots the payload. Wet (infinite-cost) pixels
/// always get probability zero. A zero payload returns the `LAMBDA_MAX`
/// sentinel with all probabilities zero; a payload equal to capacity
/// returns `lambda = 0` with all dry probabilities at 1/3.
pub fn calibrate_lambda(
    costs: &CostMap,
    payload_bits: f64,
    tol: f64,
) -> Result<(f64, ChangeProbMap), EmbedError> {
    assert!(payload_bits >= 0.0, "payload must be nonnegative");
    assert!(tol > 0.0, "tolerance must be positive");
    let capacity = costs.capacity_bits();
    if payload_bits > capacity {
        return Err(EmbedError::PayloadAboveCapacity {
            payload: payload_bits,
            capacity,
        });
    }

    let zero_probs = |lambda: f64, probs: RealPlane| -> (f64, ChangeProbMap) {
        (lambda, ChangeProbMap { plane: probs })
    };

    if payload_bits == 0.0 {
        let probs = RealPlane::constant(costs.width(), costs.height(), 0.0);
        return Ok(zero_probs(LAMBDA_MAX, probs));
    }

    let n_dry = costs.n_dry();
    let mean_cost = costs
        .plane
        .values()
        .iter()
        .filter(|v| v.is_finite())
        .sum::<f64>()
        / n_dry as f64;
    let scaled: Vec<f64> = costs
        .plane
        .values()
        .iter()
        .map(|&c| if c.is_finite() { c / mean_cost } else { c })
        .collect();

    let probs_for = |lambda: f64| -> RealPlane {
        let values: Vec<f64> = scaled
            .iter()
            .map(|&c| {
                if !c.is_finite() {
                    0.0
                } else {
                    let e = (-lambda * c).exp();
                    e / (1.0 + 2.0 * e)
                }
            })
            .collect();
        RealPlane::new(costs.width(), costs.height(), values)
    };
    let entropy_of = |probs: &RealPlane| -> f64 {
        probs.values().iter().map(|&p| ternary_entropy(p)).sum()
    };

    let lo_band = payload_bits * (1.0 - tol);
    let hi_band = payload_bits * (1.0 + tol);

    // At lambda = 0 every dry pixel sits at 1/3 and entropy equals
    // capacity; a payload at or near capacity is served exactly there.
    if capacity <= hi_band {
        return Ok(zero_probs(0.0, probs_for(0.0)));
    }

    let mut lo = 0.0f64;
    let mut hi = LAMBDA_MAX;
    let mut expansions = 0;
    while entropy_of(&probs_for(hi)) > hi_band {
        if expansions == MAX_BRACKET_EXPANSIONS {
            let probs = probs_for(hi);
            return Err(EmbedError::NonConvergence {
                realized: entropy_of(&probs),
                target: payload_bits,
            });
        }
        lo = hi;
        hi *= 10.0;
        expansions += 1;
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let probs = probs_for(mid);
        let realized = entropy_of(&probs);
        if realized >= lo_band && realized <= hi_band {
            return Ok(zero_probs(mid, probs));
        }
        if realized > payload_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let probs = probs_for(0.5 * (lo + hi));
    Err(EmbedError::NonConvergence {
        realized: entropy_of(&probs),
        target: payload_bits,
    })
}

/// Cost-adaptive LSB matching at `rate` bits per pixel.
///
/// Calibrates the sender to a payload of `rate * n_pixels` bits, then draws
/// each pixel's move independently: `+1` with probability `p_i`, `-1` with
/// probability `p_i`, otherwise unchanged. Draws are keyed by pixel index;
/// saturated pixels move inward.
pub fn embed_adaptive(
    img: &ImageGray,
    costs: &CostMap,
    rate: f64,
    seed: u64,
) -> Result<ImageGray, EmbedError> {
    if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
        return Err(EmbedError::InvalidRate(rate));
    }
    if costs.width() != img.width() as usize || costs.height() != img.height() as usize {
        return Err(EmbedError::CostDimensionMismatch {
            cw: costs.width(),
            ch: costs.height(),
            iw: img.width(),
            ih: img.height(),
        });
    }
    let mut out = img.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    let payload = rate * img.n_pixels() as f64;
    let (_, probs) = calibrate_lambda(costs, payload, PAYLOAD_TOL)?;
    let draw_key = rng::derive(seed, "adaptive-draw");
    let pixels = out.pixels_mut();
    for (i, (&p, px)) in probs.plane().values().iter().zip(pixels.iter_mut()).enumerate() {
        let u = rng::unit_f64(rng::word(draw_key, i as u64));
        if u < p {
            *px = step_pixel(*px, true);
        } else if u < 2.0 * p {
            *px = step_pixel(*px, false);
        }
    }
    Ok(out)
}

/// Runs the configured embedder. Rate zero is a no-op for both algorithms.
pub fn embed(img: &ImageGray, cfg: &EmbedConfig, seed: u64) -> Result<ImageGray, EmbedError> {
    if !(0.0..=1.0).contains(&cfg.rate) || !cfg.rate.is_finite() {
        return Err(EmbedError::InvalidRate(cfg.rate));
    }
    if cfg.rate == 0.0 {
        return Ok(img.clone());
    }
    match cfg.algorithm {
        EmbedAlgorithm::Lsbm => Ok(embed_lsbm(img, cfg.rate, seed)),
        EmbedAlgorithm::Hill => {
            let costs = hill_cost(img)?;
            embed_adaptive(img, &costs, cfg.rate, seed)
        }
    }
}

/// Difference histogram of two images of equal size.
pub fn count_changes(a: &ImageGray, b: &ImageGray) -> Result<ChangeStats, EmbedError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(EmbedError::ImageDimensionMismatch {
            aw: a.width(),
            ah: a.height(),
            bw: b.width(),
            bh: b.height(),
        });
    }
    let mut stats = ChangeStats {
        n_total: a.n_pixels() as u64,
        ..ChangeStats::default()
    };
    for (&pa, &pb) in a.pixels().iter().zip(b.pixels()) {
        match (i16::from(pa) - i16::from(pb)).unsigned_abs() {
            0 => {}
            1 => stats.n_pm1 += 1,
            2 => stats.n_pm2 += 1,
            _ => stats.n_other += 1,
        }
    }
    Ok(stats)
}
