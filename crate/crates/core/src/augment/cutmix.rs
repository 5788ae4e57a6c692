use serde::{Deserialize, Serialize};

use super::RandomSource;
use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, ImageTensor, Raster, Shape};

/// How the rectangle side lengths are derived from `sqrt(1 - lambda)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutScaling {
    /// Side lengths `W·sqrt(1-λ)` and `H·sqrt(1-λ)`.
    #[default]
    Scaled,
    /// Side lengths `sqrt(1-λ)` pixels, unscaled. Never wider than one pixel.
    Literal,
}

/// Half-open pixel rectangle `[x1, x2) × [y1, y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutRect {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

impl CutRect {
    pub fn area(&self) -> usize {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x1..self.x2).contains(&x) && (self.y1..self.y2).contains(&y)
    }
}

/// Random draws of one CutMix call and the rectangle they produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutMixRecord {
    /// `permutation[i]` is the batch index pasted into sample `i`.
    pub permutation: Vec<usize>,
    pub lambda: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub rect: CutRect,
}

/// Rectangle for a `width × height` sample given the three draws.
///
/// The left/top edges are clipped at 0 and the right/bottom edges at the
/// image size, then all four are rounded half away from zero.
pub fn cutmix_rect(
    width: usize,
    height: usize,
    lambda: f64,
    center_x: f64,
    center_y: f64,
    scaling: CutScaling,
) -> CutRect {
    let ratio = (1.0 - lambda).sqrt();
    let (cut_w, cut_h) = match scaling {
        CutScaling::Scaled => (width as f64 * ratio, height as f64 * ratio),
        CutScaling::Literal => (ratio, ratio),
    };
    let (w, h) = (width as f64, height as f64);
    CutRect {
        x1: (center_x - cut_w / 2.0).max(0.0).round() as usize,
        x2: (center_x + cut_w / 2.0).min(w).round() as usize,
        y1: (center_y - cut_h / 2.0).max(0.0).round() as usize,
        y2: (center_y + cut_h / 2.0).min(h).round() as usize,
    }
}

fn paste<R: Raster>(dst: &R, src: &R, rect: CutRect) -> R {
    let s = dst.shape();
    let mut data = dst.as_slice().to_vec();
    let from = src.as_slice();
    if rect.x2 > rect.x1 {
        for c in 0..s.channels {
            for y in rect.y1..rect.y2 {
                let row = s.index(c, y, 0);
                data[row + rect.x1..row + rect.x2]
                    .copy_from_slice(&from[row + rect.x1..row + rect.x2]);
            }
        }
    }
    R::from_trusted(s, data)
}

/// CutMix for segmentation.
///
/// The batch is paired with a shuffled copy of itself, then one rectangle is
/// drawn for the whole batch and both image and mask pixels inside it are
/// taken from the shuffled partner. Draw order: the Fisher–Yates permutation,
/// then `lambda`, then the centre x and y (each `uniform() · size`).
pub fn cutmix(
    batch: &[(ImageTensor, BinaryMask)],
    rng: &mut RandomSource,
    scaling: CutScaling,
) -> Result<(Vec<(ImageTensor, BinaryMask)>, CutMixRecord)> {
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall(batch.len()));
    }
    let (img0, mask0) = (&batch[0].0.shape(), &batch[0].1.shape());
    if !img0.same_extent(mask0) {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(mask0.channels, img0.height, img0.width),
            actual: *mask0,
        });
    }
    for (img, mask) in &batch[1..] {
        for (expected, actual) in [(*img0, img.shape()), (*mask0, mask.shape())] {
            if expected != actual {
                return Err(Error::ShapeMismatch { expected, actual });
            }
        }
    }

    let permutation = rng.permutation(batch.len());
    let lambda = rng.uniform();
    let center_x = rng.uniform() * img0.width as f64;
    let center_y = rng.uniform() * img0.height as f64;
    let rect = cutmix_rect(img0.width, img0.height, lambda, center_x, center_y, scaling);

    let mixed = batch
        .iter()
        .zip(&permutation)
        .map(|((img, mask), &j)| {
            let (src_img, src_mask) = &batch[j];
            (paste(img, src_img, rect), paste(mask, src_mask, rect))
        })
        .collect();
    Ok((
        mixed,
        CutMixRecord {
            permutation,
            lambda,
            center_x,
            center_y,
            rect,
        },
    ))
}
