//! DET statistics, equal error rate and hard decisions.
//!
//! All computations work on *oriented* scores (see
//! [`Orientation`](crate::protocol::Orientation)): a trial is decided positive
//! iff its oriented score is `>=` the threshold.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{ClassLabel, EvaluationSet, Orientation};

/// False-positive / false-negative counts at every distinct oriented score,
/// plus a trailing `+inf` sentinel where every trial is decided negative.
#[derive(Clone, Debug, PartialEq)]
pub struct DetCurve {
    thresholds: Vec<f64>,
    false_pos: Vec<u64>,
    false_neg: Vec<u64>,
    n_pos: u64,
    n_neg: u64,
}

impl DetCurve {
    /// Builds the curve from `(oriented score, is positive)` pairs with one
    /// sort and one sweep.
    /// `positive_class` only labels the error when a class is absent.
    pub fn from_oriented(mut pairs: Vec<(f64, bool)>, positive_class: ClassLabel) -> Result<Self> {
        let n_pos = pairs.iter().filter(|p| p.1).count() as u64;
        let n_neg = pairs.len() as u64 - n_pos;
        if n_pos == 0 {
            return Err(Error::DegenerateSet(positive_class));
        }
        if n_neg == 0 {
            return Err(Error::DegenerateSet(positive_class.other()));
        }
        if pairs.iter().any(|p| !p.0.is_finite()) {
            return Err(Error::NonFiniteInput("compute_det"));
        }
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut thresholds = Vec::new();
        let mut false_pos = Vec::new();
        let mut false_neg = Vec::new();
        let (mut below_pos, mut below_neg) = (0u64, 0u64);
        let mut i = 0;
        while i < pairs.len() {
            let v = pairs[i].0;
            thresholds.push(v);
            false_pos.push(n_neg - below_neg);
            false_neg.push(below_pos);
            // -0.0 and 0.0 compare equal and share a threshold.
            while i < pairs.len() && pairs[i].0 == v {
                if pairs[i].1 {
                    below_pos += 1;
                } else {
                    below_neg += 1;
                }
                i += 1;
            }
        }
        thresholds.push(f64::INFINITY);
        false_pos.push(0);
        false_neg.push(n_pos);

        Ok(DetCurve {
            thresholds,
            false_pos,
            false_neg,
            n_pos,
            n_neg,
        })
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Ascending oriented thresholds; the last entry is `+inf`.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn false_positives(&self) -> &[u64] {
        &self.false_pos
    }

    pub fn false_negatives(&self) -> &[u64] {
        &self.false_neg
    }

    pub fn n_pos(&self) -> u64 {
        self.n_pos
    }

    pub fn n_neg(&self) -> u64 {
        self.n_neg
    }

    pub fn fpr(&self, i: usize) -> f64 {
        self.false_pos[i] as f64 / self.n_neg as f64
    }

    pub fn fnr(&self, i: usize) -> f64 {
        self.false_neg[i] as f64 / self.n_pos as f64
    }

    /// Index of the curve point whose decisions equal thresholding at `t`.
    fn point_for(&self, t: f64) -> usize {
        self.thresholds.partition_point(|&x| x < t)
    }
}

pub fn compute_det(set: &EvaluationSet) -> Result<DetCurve> {
    DetCurve::from_oriented(set.oriented().collect(), set.positive_class())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub eer: f64,
    /// Oriented threshold at the crossing.
    pub threshold: f64,
    /// `|FPR - FNR|` realised when `threshold` is applied to the curve's data.
    pub crossing_gap: f64,
}

/// Equal error rate by linear interpolation between the two sweep points
/// that bracket the FPR/FNR crossing. The first (smallest-threshold) crossing
/// wins.
pub fn compute_eer(curve: &DetCurve) -> EerPoint {
    let diff = |i: usize| curve.fpr(i) - curve.fnr(i);
    // diff(0) = 1 and diff(last) = -1, so a crossing always exists.
    let i = (0..curve.len())
        .find(|&i| diff(i) <= 0.0)
        .expect("sentinel guarantees a crossing");

    let (eer, threshold) = if diff(i) == 0.0 {
        (curve.fpr(i), curve.thresholds[i])
    } else {
        let (d0, d1) = (diff(i - 1), diff(i));
        let a = d0 / (d0 - d1);
        let eer = curve.fpr(i - 1) + a * (curve.fpr(i) - curve.fpr(i - 1));
        let (t0, t1) = (curve.thresholds[i - 1], curve.thresholds[i]);
        let threshold = if t1.is_finite() {
            t0 + a * (t1 - t0)
        } else {
            t0.next_up()
        };
        (eer, threshold)
    };

    let at = curve.point_for(threshold);
    EerPoint {
        eer,
        threshold,
        crossing_gap: (curve.fpr(at) - curve.fnr(at)).abs(),
    }
}

/// Area under TPR-vs-FPR by the trapezoid rule, evaluated exactly over the
/// integer counts.
pub fn compute_auc(curve: &DetCurve) -> f64 {
    let tp = |i: usize| (curve.n_pos - curve.false_neg[i]) as u128;
    let twice_area: u128 = (1..curve.len())
        .map(|i| {
            let width = (curve.false_pos[i - 1] - curve.false_pos[i]) as u128;
            width * (tp(i - 1) + tp(i))
        })
        .sum();
    twice_area as f64 / (2.0 * curve.n_pos as f64 * curve.n_neg as f64)
}

/// DET curve as `threshold,fpr,fnr` CSV (oriented thresholds).
pub fn render_det_csv(curve: &DetCurve) -> String {
    let mut out = String::from("threshold,fpr,fnr\n");
    for i in 0..curve.len() {
        let _ = writeln!(out, "{},{},{}", curve.thresholds[i], curve.fpr(i), curve.fnr(i));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Dev,
    Eval,
    Custom,
}

/// A fixed decision threshold plus where it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Oriented threshold: decide positive iff oriented score `>=` this.
    pub threshold: f64,
    /// EER of the derivation set; `None` for custom thresholds.
    pub eer_at_derivation: Option<f64>,
    pub crossing_gap: Option<f64>,
    pub source_split: SplitTag,
    pub orientation: Orientation,
}

impl OperatingPoint {
    /// Derives the EER operating point on `set`.
    pub fn at_eer(set: &EvaluationSet, source_split: SplitTag) -> Result<Self> {
        let point = compute_eer(&compute_det(set)?);
        Ok(OperatingPoint {
            threshold: point.threshold,
            eer_at_derivation: Some(point.eer),
            crossing_gap: Some(point.crossing_gap),
            source_split,
            orientation: set.orientation(),
        })
    }

    pub fn custom(threshold: f64, orientation: Orientation) -> Self {
        OperatingPoint {
            threshold,
            eer_at_derivation: None,
            crossing_gap: None,
            source_split: SplitTag::Custom,
            orientation,
        }
    }

    /// The threshold expressed on the raw score scale.
    pub fn raw_threshold(&self) -> f64 {
        self.orientation.orient(self.threshold)
    }
}

/// Per-trial hard decisions (`true` = positive), aligned with a set's order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionVector(Vec<bool>);

impl DecisionVector {
    pub fn new(decisions: Vec<bool>) -> Self {
        DecisionVector(decisions)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn apply_threshold(set: &EvaluationSet, op: &OperatingPoint) -> Result<DecisionVector> {
    if op.orientation != set.orientation() {
        return Err(Error::PolarityMismatch);
    }
    Ok(DecisionVector(
        set.oriented().map(|(s, _)| s >= op.threshold).collect(),
    ))
}
