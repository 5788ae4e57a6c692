//! Segmentation losses on soft predictions with analytic gradients.
//!
//! Predictions are flat `f64` slices in the same class-major order as the
//! target mask, so callers can perturb them freely (a [`ProbMap`] stores
//! `f32`). Gradients are with respect to the probabilities.
//!
//! [`ProbMap`]: crate::tensor::ProbMap

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, Raster};

/// Additive smoothing in soft dice and soft jaccard.
pub const DICE_SMOOTH: f64 = 1.0;
/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside BCE.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

fn check(p: &[f64], t: &BinaryMask) -> Result<()> {
    if p.len() != t.shape().len() {
        return Err(Error::DataLength {
            shape: t.shape(),
            expected: t.shape().len(),
            actual: p.len(),
        });
    }
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::ValueOutOfRange {
            index,
            value: p[index],
        }),
        None => Ok(()),
    }
}

#[inline]
fn target(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Mean binary cross-entropy over every pixel of every class.
pub fn bce_loss(p: &[f64], t: &BinaryMask, with_grad: bool) -> Result<LossValue> {
    check(p, t)?;
    let n = p.len() as f64;
    let mut sum = 0.0;
    let mut grad = with_grad.then(|| Vec::with_capacity(p.len()));
    for (&pi, &ti) in p.iter().zip(t.as_slice()) {
        let q = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let y = target(ti);
        sum -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        if let Some(g) = grad.as_mut() {
            let clamped = q != pi;
            g.push(if clamped {
                0.0
            } else {
                (q - y) / (q * (1.0 - q) * n)
            });
        }
    }
    Ok(LossValue {
        value: sum / n,
        gradient: grad,
    })
}

/// Per-class sums `Σp·t`, `Σp` and `Σt`.
fn plane_sums(p: &[f64], t: &BinaryMask) -> Vec<(f64, f64, f64)> {
    let n = t.shape().plane_len();
    (0..t.num_classes())
        .map(|c| {
            let (ps, ts) = (&p[c * n..(c + 1) * n], t.plane(c));
            ps.iter()
                .zip(ts)
                .fold((0.0, 0.0, 0.0), |(i, sp, st), (&pv, &tv)| {
                    let y = target(tv);
                    (i + pv * y, sp + pv, st + y)
                })
        })
        .collect()
}

/// `1 - mean_c (2Σpt + ε) / (Σp + Σt + ε)`.
pub fn soft_dice_loss(p: &[f64], t: &BinaryMask, with_grad: bool) -> Result<LossValue> {
    check(p, t)?;
    let sums = plane_sums(p, t);
    let classes = sums.len() as f64;
    let eps = DICE_SMOOTH;
    let value = 1.0
        - sums
            .iter()
            .map(|&(i, sp, st)| (2.0 * i + eps) / (sp + st + eps))
            .sum::<f64>()
            / classes;
    let gradient = with_grad.then(|| {
        let n = t.shape().plane_len();
        let mut g = Vec::with_capacity(p.len());
        for (c, &(i, sp, st)) in sums.iter().enumerate() {
            let denom = sp + st + eps;
            for &tv in t.plane(c) {
                let d = (2.0 * target(tv) * denom - (2.0 * i + eps)) / (denom * denom);
                g.push(-d / classes);
            }
            debug_assert_eq!(g.len(), (c + 1) * n);
        }
        g
    });
    Ok(LossValue { value, gradient })
}

/// `1 - mean_c (Σpt + ε) / (Σp + Σt - Σpt + ε)`.
pub fn soft_jaccard_loss(p: &[f64], t: &BinaryMask, with_grad: bool) -> Result<LossValue> {
    check(p, t)?;
    let sums = plane_sums(p, t);
    let classes = sums.len() as f64;
    let eps = DICE_SMOOTH;
    let value = 1.0
        - sums
            .iter()
            .map(|&(i, sp, st)| (i + eps) / (sp + st - i + eps))
            .sum::<f64>()
            / classes;
    let gradient = with_grad.then(|| {
        let mut g = Vec::with_capacity(p.len());
        for (c, &(i, sp, st)) in sums.iter().enumerate() {
            let union = sp + st - i + eps;
            for &tv in t.plane(c) {
                let y = target(tv);
                let d = (y * union - (i + eps) * (1.0 - y)) / (union * union);
                g.push(-d / classes);
            }
        }
        g
    });
    Ok(LossValue { value, gradient })
}

/// Term weights of a combined loss. Parsed from names like `BCE+DICE`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bce: f64,
    pub dice: f64,
    pub jaccard: f64,
}

impl LossWeights {
    pub const BCE: Self = Self {
        bce: 1.0,
        dice: 0.0,
        jaccard: 0.0,
    };
    pub const DICE: Self = Self {
        bce: 0.0,
        dice: 1.0,
        jaccard: 0.0,
    };
    pub const JACCARD: Self = Self {
        bce: 0.0,
        dice: 0.0,
        jaccard: 1.0,
    };
}

impl FromStr for LossWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut w = LossWeights {
            bce: 0.0,
            dice: 0.0,
            jaccard: 0.0,
        };
        for term in s.split('+') {
            let slot = match term.trim().to_ascii_uppercase().as_str() {
                "BCE" => &mut w.bce,
                "DICE" => &mut w.dice,
                "JACCARD" | "IOU" => &mut w.jaccard,
                other => return Err(Error::param("loss", format!("unknown loss term `{other}`"))),
            };
            *slot += 1.0;
        }
        Ok(w)
    }
}

impl fmt::Display for LossWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = [
            ("BCE", self.bce),
            ("DICE", self.dice),
            ("JACCARD", self.jaccard),
        ]
        .iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|(n, w)| {
            if *w == 1.0 {
                n.to_string()
            } else {
                format!("{w}*{n}")
            }
        })
        .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

type LossFn = fn(&[f64], &BinaryMask, bool) -> Result<LossValue>;

/// Weighted sum of the BCE, soft dice and soft jaccard terms.
pub fn combined_loss(
    p: &[f64],
    t: &BinaryMask,
    weights: &LossWeights,
    with_grad: bool,
) -> Result<LossValue> {
    check(p, t)?;
    let mut value = 0.0;
    let mut gradient = with_grad.then(|| vec![0.0; p.len()]);
    let terms: [(f64, LossFn); 3] = [
        (weights.bce, bce_loss),
        (weights.dice, soft_dice_loss),
        (weights.jaccard, soft_jaccard_loss),
    ];
    for (w, loss) in terms {
        if w == 0.0 {
            continue;
        }
        let part = loss(p, t, with_grad)?;
        value += w * part.value;
        if let (Some(acc), Some(g)) = (gradient.as_mut(), part.gradient) {
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
        }
    }
    Ok(LossValue { value, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dice;
    use crate::tensor::Shape;

    fn mask(bits: &[u8], shape: Shape) -> BinaryMask {
        BinaryMask::new(shape, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn bce_perfect_and_uniform() {
        let s = Shape::new(1, 2, 2);
        let t = mask(&[1, 0, 0, 1], s);
        let p = [1.0, 0.0, 0.0, 1.0];
        let v = bce_loss(&p, &t, true).unwrap();
        assert!((v.value - -(1.0 - BCE_CLAMP).ln()).abs() < 1e-15);
        assert!(v.value < 1e-6);
        assert!(v.gradient.unwrap().iter().all(|&g| g == 0.0));

        let half = [0.5; 4];
        assert!((bce_loss(&half, &t, false).unwrap().value - std::f64::consts::LN_2).abs() < 1e-15);
        let other = mask(&[0, 0, 0, 0], s);
        assert!(
            (bce_loss(&half, &other, false).unwrap().value - std::f64::consts::LN_2).abs() < 1e-15
        );
    }

    #[test]
    fn soft_dice_cases() {
        let s = Shape::new(2, 2, 2);
        let t = mask(&[1, 1, 0, 0, 0, 1, 1, 1], s);
        let p: Vec<f64> = t.as_slice().iter().map(|&b| target(b)).collect();
        let v = soft_dice_loss(&p, &t, false).unwrap().value;
        assert!(v.abs() < 1e-12);

        let empty = mask(&[0; 8], s);
        assert_eq!(soft_dice_loss(&[0.0; 8], &empty, false).unwrap().value, 0.0);
        assert_eq!(
            soft_jaccard_loss(&[0.0; 8], &empty, false).unwrap().value,
            0.0
        );
    }

    #[test]
    fn soft_dice_on_hard_predictions_tracks_dice() {
        let s = Shape::new(1, 4, 4);
        let t = mask(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], s);
        let pred = mask(&[1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0], s);
        let p: Vec<f64> = pred.as_slice().iter().map(|&b| target(b)).collect();
        let soft = soft_dice_loss(&p, &t, false).unwrap().value;
        let hard = 1.0 - dice(&pred, &t).unwrap().mean;
        // 2·3/(5+6) vs (2·3+1)/(5+6+1)
        assert!((soft - hard).abs() < 1.0 / 11.0);
        assert!((soft - (1.0 - 7.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn combined_is_weighted_sum() {
        let s = Shape::new(1, 2, 3);
        let t = mask(&[1, 0, 1, 0, 0, 1], s);
        let p = [0.7, 0.2, 0.4, 0.1, 0.9, 0.6];
        let w: LossWeights = "BCE+DICE".parse().unwrap();
        let c = combined_loss(&p, &t, &w, true).unwrap();
        let b = bce_loss(&p, &t, true).unwrap();
        let d = soft_dice_loss(&p, &t, true).unwrap();
        assert!((c.value - (b.value + d.value)).abs() < 1e-15);
        for ((cg, bg), dg) in c
            .gradient
            .unwrap()
            .iter()
            .zip(b.gradient.unwrap())
            .zip(d.gradient.unwrap())
        {
            assert!((cg - (bg + dg)).abs() < 1e-15);
        }

        let single = combined_loss(&p, &t, &LossWeights::JACCARD, false).unwrap();
        assert_eq!(
            single.value,
            soft_jaccard_loss(&p, &t, false).unwrap().value
        );

        let zero = LossWeights {
            bce: 0.0,
            dice: 0.0,
            jaccard: 0.0,
        };
        let z = combined_loss(&p, &t, &zero, true).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.gradient.unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_names_parse() {
        let w: LossWeights = "BCE+DICE+JACCARD".parse().unwrap();
        assert_eq!(
            w,
            LossWeights {
                bce: 1.0,
                dice: 1.0,
                jaccard: 1.0
            }
        );
        assert_eq!(w.to_string(), "BCE+DICE+JACCARD");
        assert_eq!("dice".parse::<LossWeights>().unwrap(), LossWeights::DICE);
        assert!("focal".parse::<LossWeights>().is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let t = mask(&[1, 0], Shape::new(1, 1, 2));
        assert!(bce_loss(&[0.5], &t, false).is_err());
        assert!(soft_dice_loss(&[0.5, 1.5], &t, false).is_err());
    }
}
