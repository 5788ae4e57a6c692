//! Axis-aligned detection boxes.
//!
//! Coordinates use a top-left origin with x to the right and y downward.
//! Boxes are continuous regions `[x1, x2) × [y1, y2)`; areas are plain
//! products of side lengths with no `+1` pixel convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_id: u32,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_id: u32, x1: f64, y1: f64, x2: f64, y2: f64, confidence: f64) -> Result<Self> {
        let d = Self {
            class_id,
            x1,
            y1,
            x2,
            y2,
            confidence,
        };
        d.validate("")?;
        Ok(d)
    }

    /// Checks the box invariants, naming `image_id` in the error.
    pub fn validate(&self, image_id: &str) -> Result<()> {
        let reason = if [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .any(|v| !v.is_finite())
        {
            Some("non-finite coordinate".to_string())
        } else if self.x2 <= self.x1 {
            Some(format!("x2 ({}) <= x1 ({})", self.x2, self.x1))
        } else if self.y2 <= self.y1 {
            Some(format!("y2 ({}) <= y1 ({})", self.y2, self.y1))
        } else if !(0.0..=1.0).contains(&self.confidence) {
            Some(format!("confidence {} outside [0, 1]", self.confidence))
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidBox {
                image_id: image_id.to_string(),
                reason,
            }),
            None => Ok(()),
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }
}

/// All boxes predicted for (or annotated on) one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub image_id: String,
    pub boxes: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(image_id: impl Into<String>, boxes: Vec<Detection>) -> Self {
        Self {
            image_id: image_id.into(),
            boxes,
        }
    }

    pub fn empty(image_id: impl Into<String>) -> Self {
        Self::new(image_id, Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        self.boxes
            .iter()
            .try_for_each(|b| b.validate(&self.image_id))
    }
}

/// Intersection over union of two boxes; 0 for disjoint boxes.
pub fn box_iou(a: &Detection, b: &Detection) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
