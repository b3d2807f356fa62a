//! Seeded synthetic grayscale covers.
//!
//! Experiments need image sources with controllable statistics and no
//! external downloads. A cover is built in four deterministic steps:
//! value-noise texture (bilinear interpolation over a coarse random
//! lattice), additive white Gaussian noise, box smoothing, then an affine
//! contrast map around a base level before clamping to 8 bits. Two presets
//! with deliberately different residual statistics stand in for two camera
//! sources, which is what cover-source-mismatch experiments need.
//!
//! Per-image seeds come from [`rng::split`], lattice and noise draws from
//! counter-based [`rng::word`] streams, so corpora are bit-identical for a
//! given seed no matter how generation is scheduled.

use thiserror::Error;

use crate::image::ImageGray;
use crate::rng;

/// Smallest accepted cover side; residual features need real interior.
pub const MIN_DIM: u32 = 16;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid source parameter: {0}")]
    InvalidParams(String),
    #[error("cover dimensions {width}x{height} below minimum {min}x{min}")]
    TooSmall { width: u32, height: u32, min: u32 },
}

/// Knobs of the synthetic source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    /// Lattice spacing of the value-noise texture, in pixels.
    pub texture_scale: f64,
    /// Standard deviation of the additive Gaussian noise, in gray levels.
    pub noise_sigma: f64,
    /// Box-blur radius; window side is `2r + 1`. Zero disables smoothing.
    pub smooth_radius: u32,
    /// Dynamic-range compression factor in `(0, 1]`.
    pub contrast: f64,
    /// Gray level the contrast map pivots around.
    pub base_level: u8,
}

impl SourceParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.texture_scale > 0.0) || !self.texture_scale.is_finite() {
            return Err(SynthError::InvalidParams(format!(
                "texture_scale must be positive, got {}",
                self.texture_scale
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(SynthError::InvalidParams(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(SynthError::InvalidParams(format!(
                "contrast must lie in (0, 1], got {}",
                self.contrast
            )));
        }
        Ok(())
    }

    /// Fine texture with moderate unsmoothed sensor-style noise.
    pub fn source_a() -> Self {
        SourceParams {
            texture_scale: 8.0,
            noise_sigma: 2.0,
            smooth_radius: 0,
            contrast: 0.85,
            base_level: 128,
        }
    }

    /// Coarse flat texture with strong unsmoothed noise.
    pub fn source_b() -> Self {
        SourceParams {
            texture_scale: 32.0,
            noise_sigma: 14.0,
            smooth_radius: 0,
            contrast: 0.7,
            base_level: 112,
        }
    }

    /// Looks up a named preset (`"source-a"` or `"source-b"`, any case).
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "source-a" => Some(Self::source_a()),
            "source-b" => Some(Self::source_b()),
            _ => None,
        }
    }

    pub const PRESET_NAMES: [&'static str; 2] = ["source-a", "source-b"];
}

#[inline]
fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Value of the texture lattice at integer cell `(i, j)`, in `[0, 1)`.
#[inline]
fn lattice_value(key: u64, i: u64, j: u64) -> f64 {
    rng::unit_f64(rng::word(key, (j << 32) | (i & 0xffff_ffff)))
}

/// Generates one synthetic cover. Deterministic in all arguments.
pub fn generate_cover(
    params: &SourceParams,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<ImageGray, SynthError> {
    params.validate()?;
    if width < MIN_DIM || height < MIN_DIM {
        return Err(SynthError::TooSmall {
            width,
            height,
            min: MIN_DIM,
        });
    }
    let w = width as usize;
    let h = height as usize;
    let tex_key = rng::derive(seed, "texture");
    let noise_key = rng::derive(seed, "noise");

    // Texture plus noise, in gray levels.
    let mut plane = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let gx = x as f64 / params.texture_scale;
            let gy = y as f64 / params.texture_scale;
            let i0 = gx.floor() as u64;
            let j0 = gy.floor() as u64;
            let fx = gx - gx.floor();
            let fy = gy - gy.floor();
            let v00 = lattice_value(tex_key, i0, j0);
            let v10 = lattice_value(tex_key, i0 + 1, j0);
            let v01 = lattice_value(tex_key, i0, j0 + 1);
            let v11 = lattice_value(tex_key, i0 + 1, j0 + 1);
            let top = v00 + (v10 - v00) * fx;
            let bottom = v01 + (v11 - v01) * fx;
            let t = top + (bottom - top) * fy;
            let idx = y * w + x;
            plane[idx] = t * 255.0 + params.noise_sigma * rng::normal(noise_key, idx as u64);
        }
    }

    // Separable box blur with mirrored edges.
    if params.smooth_radius > 0 {
        let r = params.smooth_radius as isize;
        let norm = 1.0 / (2 * r + 1) as f64;
        let mut tmp = vec![0.0f64; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for d in -r..=r {
                    acc += plane[y * w + mirror_index(x as isize + d, w)];
                }
                tmp[y * w + x] = acc * norm;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for d in -r..=r {
                    acc += tmp[mirror_index(y as isize + d, h) * w + x];
                }
                plane[y * w + x] = acc * norm;
            }
        }
    }

    let base = f64::from(params.base_level);
    let pixels: Vec<u8> = plane
        .iter()
        .map(|&v| {
            let mapped = base + params.contrast * (v - 128.0);
            mapped.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(ImageGray::new(width, height, pixels).expect("dimensions validated above"))
}

/// Generates `count` covers; image `i` uses the seed `rng::split(seed, i)`.
pub fn generate_corpus(
    params: &SourceParams,
    count: usize,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<Vec<ImageGray>, SynthError> {
    (0..count)
        .map(|i| generate_cover(params, width, height, rng::split(seed, i as u64)))
        .collect()
}

/// Seed used for image `i` of a corpus; exposed so manifests can record it.
pub fn corpus_image_seed(seed: u64, index: usize) -> u64 {
    rng::split(seed, index as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel_variance(img: &ImageGray) -> f64 {
        let n = img.n_pixels() as f64;
        let mean = img.pixels().iter().map(|&p| f64::from(p)).sum::<f64>() / n;
        img.pixels()
            .iter()
            .map(|&p| (f64::from(p) - mean).powi(2))
            .sum::<f64>()
            / n
    }

    /// Mean squared horizontal first difference, straight off the pixels.
    fn residual_energy(img: &ImageGray) -> f64 {
        let mut acc = 0.0;
        let mut count = 0u64;
        for y in 0..img.height() {
            for x in 0..img.width() - 1 {
                let d = f64::from(img.get(x + 1, y)) - f64::from(img.get(x, y));
                acc += d * d;
                count += 1;
            }
        }
        acc / count as f64
    }

    fn mean_abs_residual(img: &ImageGray) -> f64 {
        let mut acc = 0.0;
        let mut count = 0u64;
        for y in 0..img.height() {
            for x in 0..img.width() - 1 {
                acc += (f64::from(img.get(x + 1, y)) - f64::from(img.get(x, y))).abs();
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn generation_is_deterministic() {
        let p = SourceParams::source_a();
        let a = generate_cover(&p, 32, 24, 99).unwrap();
        let b = generate_cover(&p, 32, 24, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_cover(&p, 32, 24, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_tiny_dimensions() {
        let p = SourceParams::source_a();
        assert!(matches!(
            generate_cover(&p, 15, 64, 1),
            Err(SynthError::TooSmall { .. })
        ));
        assert!(matches!(
            generate_cover(&p, 64, 8, 1),
            Err(SynthError::TooSmall { .. })
        ));
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = SourceParams::source_a();
        p.texture_scale = 0.0;
        assert!(p.validate().is_err());
        let mut p = SourceParams::source_a();
        p.noise_sigma = -1.0;
        assert!(p.validate().is_err());
        let mut p = SourceParams::source_a();
        p.contrast = 1.5;
        assert!(p.validate().is_err());
        let mut p = SourceParams::source_a();
        p.contrast = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn corpus_of_one_matches_split_seed() {
        let p = SourceParams::source_b();
        let corpus = generate_corpus(&p, 1, 20, 20, 7).unwrap();
        let single = generate_cover(&p, 20, 20, rng::split(7, 0)).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus[0], single);
        assert_eq!(corpus_image_seed(7, 0), rng::split(7, 0));
    }

    #[test]
    fn smoothing_and_low_noise_reduce_variance() {
        let calm = SourceParams {
            texture_scale: 24.0,
            noise_sigma: 0.0,
            smooth_radius: 2,
            contrast: 1.0,
            base_level: 128,
        };
        let noisy = SourceParams {
            texture_scale: 24.0,
            noise_sigma: 12.0,
            smooth_radius: 0,
            contrast: 1.0,
            base_level: 128,
        };
        let n = 20;
        let calm_var: f64 = generate_corpus(&calm, n, 64, 64, 5)
            .unwrap()
            .iter()
            .map(residual_energy)
            .sum::<f64>()
            / n as f64;
        let noisy_var: f64 = generate_corpus(&noisy, n, 64, 64, 5)
            .unwrap()
            .iter()
            .map(residual_energy)
            .sum::<f64>()
            / n as f64;
        assert!(
            calm_var < noisy_var,
            "calm {calm_var} should be below noisy {noisy_var}"
        );
        // pixel variance is driven by texture amplitude in both, but noise
        // should still dominate the comparison at sigma 12
        let calm_px: f64 = generate_corpus(&calm, n, 64, 64, 6)
            .unwrap()
            .iter()
            .map(pixel_variance)
            .sum::<f64>();
        assert!(calm_px > 0.0);
    }

    #[test]
    fn texture_scale_ratio_shows_in_residual_energy() {
        let fine = SourceParams {
            texture_scale: 6.0,
            noise_sigma: 0.0,
            smooth_radius: 0,
            contrast: 1.0,
            base_level: 128,
        };
        let coarse = SourceParams {
            texture_scale: 24.0,
            ..fine.clone()
        };
        let n = 50;
        let fine_energy: f64 = generate_corpus(&fine, n, 64, 64, 11)
            .unwrap()
            .iter()
            .map(residual_energy)
            .sum::<f64>()
            / n as f64;
        let coarse_energy: f64 = generate_corpus(&coarse, n, 64, 64, 12)
            .unwrap()
            .iter()
            .map(residual_energy)
            .sum::<f64>()
            / n as f64;
        assert!(
            fine_energy >= 2.0 * coarse_energy,
            "4x scale change should at least halve residual energy: fine {fine_energy}, coarse {coarse_energy}"
        );
    }

    #[test]
    fn presets_are_separable_by_residual_statistics() {
        let n = 50;
        let mut stats_a: Vec<f64> = generate_corpus(&SourceParams::source_a(), n, 64, 64, 21)
            .unwrap()
            .iter()
            .map(mean_abs_residual)
            .collect();
        let mut stats_b: Vec<f64> = generate_corpus(&SourceParams::source_b(), n, 64, 64, 22)
            .unwrap()
            .iter()
            .map(mean_abs_residual)
            .collect();
        stats_a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        stats_b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (q1a, q3a) = (stats_a[n / 4], stats_a[3 * n / 4]);
        let (q1b, q3b) = (stats_b[n / 4], stats_b[3 * n / 4]);
        let separated = q3a < q1b || q3b < q1a;
        assert!(
            separated,
            "preset IQRs overlap: a [{q1a}, {q3a}], b [{q1b}, {q3b}]"
        );
    }

    #[test]
    fn preset_lookup() {
        assert!(SourceParams::preset("source-a").is_some());
        assert!(SourceParams::preset("source-b").is_some());
        assert!(SourceParams::preset("source-c").is_none());
    }
}
