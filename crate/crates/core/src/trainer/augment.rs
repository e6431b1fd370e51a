//! Training-time image augmentation: random resized crop, flips and
//! rotation, all with bilinear resampling and zero fill.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enable_hflip: bool,
    pub enable_vflip: bool,
    /// Rotation is drawn uniformly from `±rotation_max_deg`.
    pub rotation_max_deg: f64,
    /// Cropping is skipped entirely when `crop_scale_min >= 1`.
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
    pub crop_aspect_min: f64,
    pub crop_aspect_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enable_hflip: true,
            enable_vflip: true,
            rotation_max_deg: 30.0,
            crop_scale_min: 0.7,
            crop_scale_max: 1.0,
            crop_aspect_min: 0.75,
            crop_aspect_max: 1.33,
        }
    }
}

impl AugmentConfig {
    /// No augmentation at all.
    pub fn none() -> Self {
        Self {
            enable_hflip: false,
            enable_vflip: false,
            rotation_max_deg: 0.0,
            crop_scale_min: 1.0,
            crop_scale_max: 1.0,
            crop_aspect_min: 1.0,
            crop_aspect_max: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.enable_hflip && !self.enable_vflip && self.rotation_max_deg == 0.0 && self.crop_scale_min >= 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("augmentation: {m}")));
        if !(0.0..=30.0).contains(&self.rotation_max_deg) {
            return bad("rotation_max_deg must be in [0, 30]");
        }
        if !(self.crop_scale_min > 0.0 && self.crop_scale_min <= self.crop_scale_max && self.crop_scale_max <= 1.0) {
            return bad("need 0 < crop_scale_min <= crop_scale_max <= 1");
        }
        if !(self.crop_aspect_min > 0.0 && self.crop_aspect_min <= self.crop_aspect_max) {
            return bad("need 0 < crop_aspect_min <= crop_aspect_max");
        }
        Ok(())
    }
}

/// Applies crop, flips and rotation (in that order) to a `(c, h, w)` image.
pub fn augment_image<R: Rng + ?Sized>(img: &Tensor, cfg: &AugmentConfig, rng: &mut R) -> Tensor {
    let mut out = img.clone();
    if cfg.crop_scale_min < 1.0 {
        out = random_resized_crop(&out, cfg, rng);
    }
    if cfg.enable_hflip && rng.random_bool(0.5) {
        out = flip(&out, false);
    }
    if cfg.enable_vflip && rng.random_bool(0.5) {
        out = flip(&out, true);
    }
    if cfg.rotation_max_deg > 0.0 {
        let deg = rng.random_range(-cfg.rotation_max_deg..=cfg.rotation_max_deg);
        out = rotate(&out, deg.to_radians());
    }
    out
}

fn dims(t: &Tensor) -> (usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2])
}

/// Bilinear sample of one channel plane; positions outside read as zero.
fn bilinear(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            plane[yy as usize * w + xx as usize]
        }
    };
    at(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + at(y0, x0 + 1.0) * (1.0 - fy) * fx
        + at(y0 + 1.0, x0) * fy * (1.0 - fx)
        + at(y0 + 1.0, x0 + 1.0) * fy * fx
}

fn resample(img: &Tensor, src: impl Fn(usize, usize) -> (f64, f64)) -> Tensor {
    let (c, h, w) = dims(img);
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let plane = &img.data()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = src(y, x);
                data.push(bilinear(plane, h, w, sy, sx));
            }
        }
    }
    Tensor::from_parts(img.shape().to_vec(), data)
}

fn flip(img: &Tensor, vertical: bool) -> Tensor {
    let (_, h, w) = dims(img);
    resample(img, |y, x| {
        if vertical {
            ((h - 1 - y) as f64, x as f64)
        } else {
            (y as f64, (w - 1 - x) as f64)
        }
    })
}

fn rotate(img: &Tensor, radians: f64) -> Tensor {
    let (_, h, w) = dims(img);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = radians.sin_cos();
    resample(img, |y, x| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        // Inverse rotation maps each output pixel back to its source.
        (cy + cos * dy - sin * dx, cx + sin * dy + cos * dx)
    })
}

/// Crops a random region of `scale` × area and `aspect` (w/h) ratio, then
/// resizes it back to the full image size. Falls back to the whole image
/// when ten draws fail to fit.
fn random_resized_crop<R: Rng + ?Sized>(img: &Tensor, cfg: &AugmentConfig, rng: &mut R) -> Tensor {
    let (_, h, w) = dims(img);
    let area = (h * w) as f64;
    let (log_lo, log_hi) = (cfg.crop_aspect_min.ln(), cfg.crop_aspect_max.ln());
    let mut region = (0usize, 0usize, h, w);
    for _ in 0..10 {
        let target = area * rng.random_range(cfg.crop_scale_min..=cfg.crop_scale_max);
        let aspect = rng.random_range(log_lo..=log_hi).exp();
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw > 0 && ch > 0 && cw <= w && ch <= h {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            region = (top, left, ch, cw);
            break;
        }
    }
    let (top, left, ch, cw) = region;
    let (sy, sx) = (ch as f64 / h as f64, cw as f64 / w as f64);
    resample(img, |y, x| {
        (
            top as f64 + (y as f64 + 0.5) * sy - 0.5,
            left as f64 + (x as f64 + 0.5) * sx - 0.5,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ramp() -> Tensor {
        Tensor::new(vec![1, 4, 5], (0..20).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn flips_and_zero_rotation_are_exact() {
        let img = ramp();
        let h = flip(&img, false);
        assert_eq!(&h.data()[..5], &[4.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(flip(&h, false), img);
        assert_eq!(flip(&flip(&img, true), true), img);
        assert_eq!(rotate(&img, 0.0), img);
    }

    #[test]
    fn half_turn_of_square_is_double_flip() {
        let img = Tensor::new(vec![1, 3, 3], (0..9).map(|v| v as f64).collect()).unwrap();
        let r = rotate(&img, std::f64::consts::PI);
        let f = flip(&flip(&img, true), false);
        for (a, b) in r.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn full_scale_square_crop_is_identity() {
        let img = Tensor::new(vec![2, 4, 4], (0..32).map(|v| (v as f64).sqrt()).collect()).unwrap();
        let cfg = AugmentConfig {
            crop_scale_min: 0.99,
            crop_scale_max: 1.0,
            crop_aspect_min: 1.0,
            crop_aspect_max: 1.0,
            ..AugmentConfig::none()
        };
        let out = random_resized_crop(&img, &cfg, &mut rng::stream(1, &[]));
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_config_changes_nothing() {
        let img = ramp();
        let out = augment_image(&img, &AugmentConfig::none(), &mut rng::stream(5, &[]));
        assert_eq!(out, img);
        assert!(AugmentConfig::none().is_identity());
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig {
            rotation_max_deg: 45.0,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
