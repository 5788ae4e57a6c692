//! Dense class-major raster types.
//!
//! All three tensor types store `channels × height × width` values in
//! class-major, row-major order: the value for plane `c`, row `y`, column `x`
//! lives at `(c * height + y) * width + x`. Probabilities and image
//! intensities are stored as `f32` (the on-disk precision) and widened to
//! `f64` for every comparison and reduction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    /// Same spatial extent, channel count ignored.
    pub const fn same_extent(&self, other: &Shape) -> bool {
        self.height == other.height && self.width == other.width
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::EmptyShape(*self));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Shared accessors for the raster types, used by the geometric transforms
/// which only move values around and never change them.
pub trait Raster: Clone + Sized {
    type Elem: Copy + Default + PartialEq + fmt::Debug;

    fn shape(&self) -> Shape;
    fn as_slice(&self) -> &[Self::Elem];

    /// Rebuilds a raster from values already known to satisfy the element
    /// invariant (they were taken from an existing raster, or are `Default`).
    fn from_trusted(shape: Shape, data: Vec<Self::Elem>) -> Self;

    fn get(&self, c: usize, y: usize, x: usize) -> Self::Elem {
        self.as_slice()[self.shape().index(c, y, x)]
    }

    fn plane(&self, c: usize) -> &[Self::Elem] {
        let n = self.shape().plane_len();
        &self.as_slice()[c * n..(c + 1) * n]
    }
}

fn check_len(shape: Shape, len: usize) -> Result<()> {
    shape.validate()?;
    if shape.len() != len {
        return Err(Error::DataLength {
            shape,
            expected: shape.len(),
            actual: len,
        });
    }
    Ok(())
}

fn check_unit_interval(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::ValueOutOfRange {
            index,
            value: data[index] as f64,
        }),
        None => Ok(()),
    }
}

macro_rules! float_raster {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            shape: Shape,
            data: Vec<f32>,
        }

        impl $name {
            pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
                check_len(shape, data.len())?;
                check_unit_interval(&data)?;
                Ok(Self { shape, data })
            }

            pub fn filled(shape: Shape, value: f32) -> Result<Self> {
                Self::new(shape, vec![value; shape.len()])
            }

            pub fn zeros(shape: Shape) -> Result<Self> {
                Self::filled(shape, 0.0)
            }

            /// Values widened to `f64`, in storage order.
            pub fn to_f64(&self) -> Vec<f64> {
                self.data.iter().map(|&v| v as f64).collect()
            }

            pub fn into_vec(self) -> Vec<f32> {
                self.data
            }
        }

        impl Raster for $name {
            type Elem = f32;

            fn shape(&self) -> Shape {
                self.shape
            }

            fn as_slice(&self) -> &[f32] {
                &self.data
            }

            fn from_trusted(shape: Shape, data: Vec<f32>) -> Self {
                debug_assert_eq!(shape.len(), data.len());
                Self { shape, data }
            }
        }
    };
}

float_raster!(
    /// Image intensities in [0, 1]; one channel for gray, three for RGB.
    ImageTensor
);

float_raster!(
    /// Per-class probabilities in [0, 1]. Classes are independent labels, so
    /// there is no constraint across planes.
    ProbMap
);

impl ProbMap {
    pub fn num_classes(&self) -> usize {
        self.shape.channels
    }

    /// Reinterprets the map as an image with one channel per class.
    pub fn into_image(self) -> ImageTensor {
        ImageTensor::from_trusted(self.shape, self.data)
    }
}

impl ImageTensor {
    pub fn into_prob_map(self) -> ProbMap {
        ProbMap::from_trusted(self.shape, self.data)
    }
}

/// Per-class boolean mask: ground truth or a thresholded prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Shape,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: Shape, data: Vec<bool>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self { shape, data })
    }

    pub fn empty(shape: Shape) -> Result<Self> {
        Self::new(shape, vec![false; shape.len()])
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        shape.validate()?;
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Ok(Self { shape, data })
    }

    pub fn num_classes(&self) -> usize {
        self.shape.channels
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, value: bool) {
        let i = self.shape.index(c, y, x);
        self.data[i] = value;
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    /// Mask cast back to {0, 1} probabilities.
    pub fn to_prob_map(&self) -> ProbMap {
        let data = self
            .data
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        ProbMap::from_trusted(self.shape, data)
    }

    /// True when every pixel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.shape == other.shape && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn into_vec(self) -> Vec<bool> {
        self.data
    }
}

impl Raster for BinaryMask {
    type Elem = bool;

    fn shape(&self) -> Shape {
        self.shape
    }

    fn as_slice(&self) -> &[bool] {
        &self.data
    }

    fn from_trusted(shape: Shape, data: Vec<bool>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Self { shape, data }
    }
}

/// Thresholds every pixel with a strict `>`.
pub fn binarize(p: &ProbMap, threshold: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::param(
            "threshold",
            format!("{threshold} is outside [0, 1]"),
        ));
    }
    let data = p.as_slice().iter().map(|&v| v as f64 > threshold).collect();
    Ok(BinaryMask::from_trusted(p.shape(), data))
}

/// Number of true pixels in plane `class_id`.
pub fn positive_area(m: &BinaryMask, class_id: usize) -> Result<u64> {
    let num_classes = m.num_classes();
    if class_id >= num_classes {
        return Err(Error::ClassOutOfRange {
            class_id,
            num_classes,
        });
    }
    Ok(m.plane(class_id).iter().filter(|&&b| b).count() as u64)
}
