use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::warping::ImageRaster;

/// Canonical feature order; a config with `channels = F` keeps the first `F`.
pub const FEATURE_NAMES: [&str; 11] = [
    "red", "green", "blue", "grad_x", "grad_y", "std_red", "std_green", "std_blue", "mean_red",
    "mean_green", "mean_blue",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureExtractorConfig {
    pub channels: usize,
    /// Odd side length of the square window for local statistics.
    pub window: usize,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        FeatureExtractorConfig {
            channels: 8,
            window: 5,
        }
    }
}

impl FeatureExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 3 || self.channels > FEATURE_NAMES.len() {
            return Err(Error::InvalidParameter(format!(
                "feature channels must be in 3..={}, got {}",
                FEATURE_NAMES.len(),
                self.channels
            )));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "feature window must be odd and positive, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Handcrafted per-pixel features of an RGB raster, channel order as in
/// [`FEATURE_NAMES`]:
/// colors; absolute central differences of the luminance (mean of the three
/// colors) along columns and rows; window standard deviation and mean per
/// color. Borders replicate edge pixels for gradients and shrink the window
/// for statistics.
pub fn extract_features<T: Real>(
    image: &ImageRaster<T>,
    config: &FeatureExtractorConfig,
) -> Result<ImageRaster<T>> {
    config.validate()?;
    if image.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "feature extraction needs 3 color channels, got {}",
            image.channels
        )));
    }
    let (h, w) = (image.height, image.width);
    let f = config.channels;
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let lum: Vec<T> = image
        .data
        .chunks_exact(3)
        .map(|p| (p[0] + p[1] + p[2]) * third)
        .collect();
    let radius = config.window / 2;
    let mut out = ImageRaster::new(h, w, f);
    for r in 0..h {
        for c in 0..w {
            let px = image.pixel(r, c);
            let mut feats = [T::zero(); 11];
            feats[..3].copy_from_slice(px);
            if f > 3 {
                let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
                feats[3] = ((lum[r * w + cr] - lum[r * w + cl]) * half).abs();
            }
            if f > 4 {
                let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
                feats[4] = ((lum[rd * w + c] - lum[ru * w + c]) * half).abs();
            }
            if f > 5 {
                // deviations from the center pixel keep constant patches exact
                let (r0, r1) = (r.saturating_sub(radius), (r + radius).min(h - 1));
                let (c0, c1) = (c.saturating_sub(radius), (c + radius).min(w - 1));
                let n = T::from_usize_lossy((r1 - r0 + 1) * (c1 - c0 + 1));
                let mut s1 = [T::zero(); 3];
                let mut s2 = [T::zero(); 3];
                for rr in r0..=r1 {
                    for cc in c0..=c1 {
                        let q = image.pixel(rr, cc);
                        for k in 0..3 {
                            let d = q[k] - px[k];
                            s1[k] = s1[k] + d;
                            s2[k] = s2[k] + d * d;
                        }
                    }
                }
                for k in 0..3 {
                    let m = s1[k] / n;
                    feats[5 + k] = (s2[k] / n - m * m).max(T::zero()).sqrt();
                    feats[8 + k] = px[k] + m;
                }
            }
            out.pixel_mut(r, c).copy_from_slice(&feats[..f]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image() {
        let img = ImageRaster::filled(6, 7, &[0.3, 0.6, 0.9]);
        let cfg = FeatureExtractorConfig {
            channels: 11,
            window: 3,
        };
        let f = extract_features(&img, &cfg).unwrap();
        for p in f.data.chunks(11) {
            assert_eq!(&p[..3], &[0.3, 0.6, 0.9]);
            assert!(p[3..8].iter().all(|&v| v == 0.0));
            assert_eq!(&p[8..], &[0.3, 0.6, 0.9]);
        }
    }

    #[test]
    fn step_edge_gradient_support() {
        let mut img = ImageRaster::new(5, 10, 3);
        for r in 0..5 {
            for c in 6..10 {
                img.pixel_mut(r, c).copy_from_slice(&[1.0, 1.0, 1.0]);
            }
        }
        let f = extract_features(&img, &FeatureExtractorConfig::default()).unwrap();
        for r in 0..5 {
            for c in 0..10 {
                let gx = f.get(r, c, 3);
                assert_eq!(gx != 0.0, c == 5 || c == 6, "col {c}");
                assert_eq!(f.get(r, c, 4), 0.0);
            }
        }
    }

    #[test]
    fn config_validation() {
        let img = ImageRaster::filled(2, 2, &[0.0; 3]);
        for cfg in [
            FeatureExtractorConfig { channels: 2, window: 3 },
            FeatureExtractorConfig { channels: 12, window: 3 },
            FeatureExtractorConfig { channels: 8, window: 4 },
        ] {
            assert!(extract_features(&img, &cfg).is_err());
        }
        let gray = ImageRaster::filled(2, 2, &[0.0]);
        assert!(extract_features(&gray, &FeatureExtractorConfig::default()).is_err());
    }
}
