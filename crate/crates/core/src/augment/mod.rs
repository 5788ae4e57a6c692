//! Seeded augmentation: padding, cropping, flips, cutout, pointwise
//! photometric transforms and CutMix for segmentation.
//!
//! Geometric transforms are generic over [`Raster`] so that an image and its
//! mask always go through the same code path with the same parameters.

mod cutmix;
mod random;
mod schedule;

pub use cutmix::{cutmix, cutmix_rect, CutMixRecord, CutRect, CutScaling};
pub use random::RandomSource;
pub use schedule::{CropPolicy, Stage, StageSchedule};

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSet};
use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, ImageTensor, Raster, Shape};

pub const DEFAULT_CROP_SIZE: usize = 512;
pub const DEFAULT_PAD_MULTIPLE: usize = 128;

/// Spatial size before padding, needed to undo it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalSize {
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub offset_x: usize,
    pub offset_y: usize,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Zero-pads bottom and right so both sides become multiples of `multiple`.
pub fn pad_to_multiple<R: Raster>(x: &R, multiple: usize) -> Result<(R, OriginalSize)> {
    if multiple == 0 {
        return Err(Error::param("multiple", "must be at least 1"));
    }
    let s = x.shape();
    pad_to_size(
        x,
        s.height.div_ceil(multiple) * multiple,
        s.width.div_ceil(multiple) * multiple,
    )
}

/// Zero-pads bottom and right up to at least `height × width`; larger sides
/// are left alone.
pub fn pad_to_size<R: Raster>(x: &R, height: usize, width: usize) -> Result<(R, OriginalSize)> {
    let s = x.shape();
    let original = OriginalSize {
        height: s.height,
        width: s.width,
    };
    let padded = Shape::new(s.channels, s.height.max(height), s.width.max(width));
    if padded == s {
        return Ok((x.clone(), original));
    }
    let mut data = vec![R::Elem::default(); padded.len()];
    let src = x.as_slice();
    for c in 0..s.channels {
        for y in 0..s.height {
            let from = s.index(c, y, 0);
            let to = padded.index(c, y, 0);
            data[to..to + s.width].copy_from_slice(&src[from..from + s.width]);
        }
    }
    Ok((R::from_trusted(padded, data), original))
}

/// Inverse of [`pad_to_multiple`]: keeps the top-left `original` window.
pub fn unpad<R: Raster>(x: &R, original: OriginalSize) -> Result<R> {
    let s = x.shape();
    if original.height > s.height
        || original.width > s.width
        || original.height == 0
        || original.width == 0
    {
        return Err(Error::param(
            "original_size",
            format!(
                "{}x{} does not fit inside {}x{}",
                original.height, original.width, s.height, s.width
            ),
        ));
    }
    Ok(window(x, 0, 0, original.width, original.height))
}

fn window<R: Raster>(x: &R, ox: usize, oy: usize, w: usize, h: usize) -> R {
    let s = x.shape();
    let out = Shape::new(s.channels, h, w);
    let src = x.as_slice();
    let mut data = Vec::with_capacity(out.len());
    for c in 0..s.channels {
        for y in oy..oy + h {
            let from = s.index(c, y, ox);
            data.extend_from_slice(&src[from..from + w]);
        }
    }
    R::from_trusted(out, data)
}

/// Cuts the square window described by `spec`.
pub fn crop<R: Raster>(x: &R, spec: CropSpec) -> Result<R> {
    let s = x.shape();
    if spec.size == 0 || spec.offset_x + spec.size > s.width || spec.offset_y + spec.size > s.height
    {
        return Err(Error::CropLargerThanImage {
            size: spec.size,
            width: s.width,
            height: s.height,
        });
    }
    Ok(window(
        x,
        spec.offset_x,
        spec.offset_y,
        spec.size,
        spec.size,
    ))
}

fn check_pair(img: &ImageTensor, mask: &BinaryMask, size: usize) -> Result<Shape> {
    let (si, sm) = (img.shape(), mask.shape());
    if !si.same_extent(&sm) {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(sm.channels, si.height, si.width),
            actual: sm,
        });
    }
    if size == 0 || size > si.width || size > si.height {
        return Err(Error::CropLargerThanImage {
            size,
            width: si.width,
            height: si.height,
        });
    }
    Ok(si)
}

/// Crops a window that contains at least one positive mask pixel.
///
/// Draws a positive pixel uniformly (over pixels positive in any class),
/// then the x and y offsets uniformly among windows that contain it. The
/// windows are therefore not uniform over all feasible windows.
pub fn crop_nonempty(
    img: &ImageTensor,
    mask: &BinaryMask,
    size: usize,
    rng: &mut RandomSource,
) -> Result<(ImageTensor, BinaryMask, CropSpec)> {
    let s = check_pair(img, mask, size)?;
    let classes = mask.num_classes();
    let positives: Vec<(usize, usize)> = (0..s.height)
        .flat_map(|y| (0..s.width).map(move |x| (y, x)))
        .filter(|&(y, x)| (0..classes).any(|c| mask.get(c, y, x)))
        .collect();
    if positives.is_empty() {
        return Err(Error::NoPositivePixels);
    }
    let (py, px) = positives[rng.below(positives.len())];
    let offset_x = rng.between((px + 1).saturating_sub(size), px.min(s.width - size));
    let offset_y = rng.between((py + 1).saturating_sub(size), py.min(s.height - size));
    let spec = CropSpec {
        offset_x,
        offset_y,
        size,
    };
    Ok((crop(img, spec)?, crop(mask, spec)?, spec))
}

/// Crops a uniformly random window; the x offset is drawn before y.
pub fn crop_random(
    img: &ImageTensor,
    mask: &BinaryMask,
    size: usize,
    rng: &mut RandomSource,
) -> Result<(ImageTensor, BinaryMask, CropSpec)> {
    let s = check_pair(img, mask, size)?;
    let offset_x = rng.below(s.width - size + 1);
    let offset_y = rng.below(s.height - size + 1);
    let spec = CropSpec {
        offset_x,
        offset_y,
        size,
    };
    Ok((crop(img, spec)?, crop(mask, spec)?, spec))
}

/// Crop according to a stage policy. `NonEmpty` falls back to a random crop
/// when the mask has no positive pixel.
pub fn crop_with_policy(
    img: &ImageTensor,
    mask: &BinaryMask,
    size: usize,
    policy: CropPolicy,
    rng: &mut RandomSource,
) -> Result<(ImageTensor, BinaryMask, CropSpec)> {
    match policy {
        CropPolicy::Random => crop_random(img, mask, size, rng),
        CropPolicy::NonEmpty => match crop_nonempty(img, mask, size, rng) {
            Err(Error::NoPositivePixels) => crop_random(img, mask, size, rng),
            other => other,
        },
    }
}

pub fn flip<R: Raster>(x: &R, axis: Axis) -> R {
    let s = x.shape();
    let src = x.as_slice();
    let mut data = Vec::with_capacity(s.len());
    for c in 0..s.channels {
        for y in 0..s.height {
            let sy = match axis {
                Axis::Horizontal => y,
                Axis::Vertical => s.height - 1 - y,
            };
            let row = &src[s.index(c, sy, 0)..s.index(c, sy, 0) + s.width];
            match axis {
                Axis::Horizontal => data.extend(row.iter().rev()),
                Axis::Vertical => data.extend_from_slice(row),
            }
        }
    }
    R::from_trusted(s, data)
}

/// Mirrors boxes inside an image of the given size.
pub fn flip_detections(set: &DetectionSet, width: f64, height: f64, axis: Axis) -> DetectionSet {
    let boxes = set
        .boxes
        .iter()
        .map(|b| match axis {
            Axis::Horizontal => Detection {
                x1: width - b.x2,
                x2: width - b.x1,
                ..*b
            },
            Axis::Vertical => Detection {
                y1: height - b.y2,
                y2: height - b.y1,
                ..*b
            },
        })
        .collect();
    DetectionSet::new(set.image_id.clone(), boxes)
}

/// Zeroes `num_holes` square holes of side `hole_size` in every channel.
///
/// Each hole is centred on a uniformly drawn pixel (x, then y) and spans
/// `[c - size/2, c - size/2 + size)`, clipped to the image. The mask is not
/// an argument: targets are left untouched.
pub fn cutout(
    img: &ImageTensor,
    rng: &mut RandomSource,
    num_holes: usize,
    hole_size: usize,
) -> ImageTensor {
    let s = img.shape();
    let mut data = img.as_slice().to_vec();
    for _ in 0..num_holes {
        let cx = rng.below(s.width) as i64;
        let cy = rng.below(s.height) as i64;
        let half = (hole_size / 2) as i64;
        let clip = |lo: i64, n: usize| lo.clamp(0, n as i64) as usize;
        let (x1, x2) = (
            clip(cx - half, s.width),
            clip(cx - half + hole_size as i64, s.width),
        );
        let (y1, y2) = (
            clip(cy - half, s.height),
            clip(cy - half + hole_size as i64, s.height),
        );
        for c in 0..s.channels {
            for y in y1..y2 {
                let row = s.index(c, y, 0);
                data[row + x1..row + x2].fill(0.0);
            }
        }
    }
    ImageTensor::from_trusted(s, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "value")]
pub enum Photometric {
    Gamma(f64),
    Brightness(f64),
    Contrast(f64),
}

/// Pointwise intensity transform; results are clamped to [0, 1].
pub fn photometric(img: &ImageTensor, op: Photometric) -> Result<ImageTensor> {
    let f: Box<dyn Fn(f64) -> f64> = match op {
        Photometric::Gamma(g) if g > 0.0 && g.is_finite() => Box::new(move |p| p.powf(g)),
        Photometric::Gamma(g) => {
            return Err(Error::param("gamma", format!("{g} must be positive")))
        }
        Photometric::Brightness(b) if b.is_finite() => Box::new(move |p| p + b),
        Photometric::Contrast(c) if c.is_finite() => Box::new(move |p| (p - 0.5) * c + 0.5),
        other => {
            return Err(Error::param(
                "photometric",
                format!("{other:?} is not finite"),
            ))
        }
    };
    let data = img
        .as_slice()
        .iter()
        .map(|&v| f(v as f64).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(ImageTensor::from_trusted(img.shape(), data))
}
