use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::tensor::Tensor;

/// Train-time image augmentation: pad then randomly crop back to size, and
/// optionally flip left/right with probability 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub random_crop: bool,
    pub pad: usize,
    pub hflip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            random_crop: false,
            pad: 4,
            hflip: false,
        }
    }
}

impl AugmentConfig {
    pub fn enabled(&self) -> bool {
        (self.random_crop && self.pad > 0) || self.hflip
    }
}

/// Crops the `pad`-padded `[C, H, W]` image at `offset = (row, col)` (each in
/// `0..=2 * pad`) and optionally mirrors it. Padding takes the value `fill`.
pub fn augment_image(image: &Tensor, pad: usize, offset: (usize, usize), flip: bool, fill: f64) -> Result<Tensor> {
    let [c, h, w] = *image.shape() else {
        return Err(Error::Shape(format!("augmentation needs [C, H, W], got {:?}", image.shape())));
    };
    let src = image.data();
    let mut out = vec![fill; src.len()];
    for ch in 0..c {
        for r in 0..h {
            let sr = (r + offset.0) as isize - pad as isize;
            if sr < 0 || sr >= h as isize {
                continue;
            }
            for col in 0..w {
                let sc = (col + offset.1) as isize - pad as isize;
                if sc < 0 || sc >= w as isize {
                    continue;
                }
                let dst_col = if flip { w - 1 - col } else { col };
                out[(ch * h + r) * w + dst_col] = src[(ch * h + sr as usize) * w + sc as usize];
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out)
}

/// Augments each example of a `[N, C, H, W]` batch independently.
pub fn augment(batch: &Tensor, cfg: &AugmentConfig, fill: f64, rng: &mut Rng) -> Result<Tensor> {
    if !cfg.enabled() {
        return Ok(batch.clone());
    }
    let shape = batch.shape();
    if shape.len() != 4 {
        return Err(Error::Shape(format!("augmentation needs image batches, got {shape:?}")));
    }
    let sample = shape[1..].to_vec();
    let mut data = Vec::with_capacity(batch.len());
    for i in 0..batch.rows() {
        let img = Tensor::new(sample.clone(), batch.row(i).to_vec())?;
        let (pad, offset) = if cfg.random_crop {
            (cfg.pad, (rng.random_range(0..=2 * cfg.pad), rng.random_range(0..=2 * cfg.pad)))
        } else {
            (0, (0, 0))
        };
        let flip = cfg.hflip && rng.random_bool(0.5);
        data.extend_from_slice(augment_image(&img, pad, offset, flip, fill)?.data());
    }
    Tensor::new(shape.to_vec(), data)
}
