//! Group confusion matrices and the five group-fairness metrics.
//!
//! Two structurally independent routes produce the same [`FairnessRow`]s:
//! [`evaluate_fairness`] builds a [`ConfusionCounts`] per group and derives
//! every metric from it, while [`cross_check`] estimates each metric directly
//! as a conditional frequency over the trials, never forming a confusion
//! matrix. [`evaluate_checked`] runs both and fails loudly if they disagree.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{EvaluationSet, GroupLabel};
use crate::scoring::{apply_threshold, DecisionVector, OperatingPoint};
use crate::stats::{build_significance, ProportionSample, SignificanceConfig, TestResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(set: &EvaluationSet, decisions: &DecisionVector) -> Result<ConfusionCounts> {
    if set.len() != decisions.len() {
        return Err(Error::LengthMismatch {
            left: set.len(),
            right: decisions.len(),
        });
    }
    let mut cc = ConfusionCounts::default();
    for ((_, actual), &predicted) in set.oriented().zip(decisions.as_slice()) {
        match (actual, predicted) {
            (true, true) => cc.tp += 1,
            (false, true) => cc.fp += 1,
            (false, false) => cc.tn += 1,
            (true, false) => cc.fn_ += 1,
        }
    }
    Ok(cc)
}

/// Non-negative rational with an exact equality test.
#[derive(Clone, Copy, Debug, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Option<Self> {
        (den != 0).then_some(Ratio { num, den })
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.num * other.den == other.num * self.den
    }
}

/// One metric evaluated for one group. `value` is `None` exactly when the
/// metric's denominator is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: Option<f64>,
    pub exact: Option<Ratio>,
    /// Proportion compared by the significance test, if the metric has one.
    pub proportion: Option<ProportionSample>,
}

impl MetricValue {
    pub fn undefined() -> Self {
        MetricValue::default()
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }

    fn proportion(k: u64, n: u64) -> Self {
        match ProportionSample::new(k, n) {
            Ok(sample) => MetricValue {
                value: Some(k as f64 / n as f64),
                exact: Ratio::new(k as u128, n as u128),
                proportion: Some(sample),
            },
            Err(_) => MetricValue::undefined(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "SP")]
    StatisticalParity,
    #[serde(rename = "EOP")]
    EqualOpportunity,
    #[serde(rename = "EO")]
    EqualityOfOdds,
    #[serde(rename = "PP")]
    PredictiveParity,
    #[serde(rename = "TE")]
    TreatmentEquality,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::StatisticalParity,
        Metric::EqualOpportunity,
        Metric::EqualityOfOdds,
        Metric::PredictiveParity,
        Metric::TreatmentEquality,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Metric::StatisticalParity => "SP",
            Metric::EqualOpportunity => "EOP",
            Metric::EqualityOfOdds => "EO",
            Metric::PredictiveParity => "PP",
            Metric::TreatmentEquality => "TE",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::StatisticalParity => "statistical parity",
            Metric::EqualOpportunity => "equal opportunity",
            Metric::EqualityOfOdds => "equality of odds",
            Metric::PredictiveParity => "predictive parity",
            Metric::TreatmentEquality => "treatment equality",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EoVariant {
    /// FPR of the group.
    #[default]
    FprOnly,
    /// `(TPR + FPR) / 2`.
    TprFprMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeVariant {
    /// `FP / FN`.
    #[default]
    CountRatio,
    /// `FPR / FNR`.
    RateRatio,
}

macro_rules! kebab_from_str {
    ($ty:ty { $($text:literal => $variant:expr),+ $(,)? }) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($variant),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", stringify!($ty), " {:?}"), s))),
                }
            }
        }
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(v if v == $variant => $text,)+
                    _ => unreachable!(),
                }
            }
        }
    };
}

kebab_from_str!(EoVariant { "fpr-only" => EoVariant::FprOnly, "tpr-fpr-mean" => EoVariant::TprFprMean });
kebab_from_str!(TeVariant { "count-ratio" => TeVariant::CountRatio, "rate-ratio" => TeVariant::RateRatio });

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricVariants {
    pub eo: EoVariant,
    pub te: TeVariant,
}

/// Share of the group decided positive.
pub fn statistical_parity(cc: &ConfusionCounts) -> MetricValue {
    MetricValue::proportion(cc.tp + cc.fp, cc.total())
}

/// True-positive rate.
pub fn equal_opportunity(cc: &ConfusionCounts) -> MetricValue {
    MetricValue::proportion(cc.tp, cc.tp + cc.fn_)
}

pub fn equality_of_odds(cc: &ConfusionCounts, variant: EoVariant) -> MetricValue {
    match variant {
        EoVariant::FprOnly => MetricValue::proportion(cc.fp, cc.fp + cc.tn),
        EoVariant::TprFprMean => {
            let (pos, neg) = (cc.tp + cc.fn_, cc.fp + cc.tn);
            if pos == 0 || neg == 0 {
                return MetricValue::undefined();
            }
            let tpr = cc.tp as f64 / pos as f64;
            let fpr = cc.fp as f64 / neg as f64;
            let (tp, fp, pos, neg) = (cc.tp as u128, cc.fp as u128, pos as u128, neg as u128);
            MetricValue {
                value: Some((tpr + fpr) / 2.0),
                exact: Ratio::new(tp * neg + fp * pos, 2 * pos * neg),
                proportion: None,
            }
        }
    }
}

/// Precision of positive decisions.
pub fn predictive_parity(cc: &ConfusionCounts) -> MetricValue {
    MetricValue::proportion(cc.tp, cc.tp + cc.fp)
}

/// The count-ratio form is tested through `fp / (fp + fn)`, which is
/// order-isomorphic to `fp / fn`. The rate-ratio form has no test.
pub fn treatment_equality(cc: &ConfusionCounts, variant: TeVariant) -> MetricValue {
    match variant {
        TeVariant::CountRatio => {
            if cc.fn_ == 0 {
                return MetricValue::undefined();
            }
            MetricValue {
                value: Some(cc.fp as f64 / cc.fn_ as f64),
                exact: Ratio::new(cc.fp as u128, cc.fn_ as u128),
                proportion: ProportionSample::new(cc.fp, cc.fp + cc.fn_).ok(),
            }
        }
        TeVariant::RateRatio => {
            let (neg, pos) = (cc.fp + cc.tn, cc.fn_ + cc.tp);
            if cc.fn_ == 0 || neg == 0 {
                return MetricValue::undefined();
            }
            let fpr = cc.fp as f64 / neg as f64;
            let fnr = cc.fn_ as f64 / pos as f64;
            MetricValue {
                value: Some(fpr / fnr),
                exact: Ratio::new(
                    cc.fp as u128 * pos as u128,
                    neg as u128 * cc.fn_ as u128,
                ),
                proportion: None,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetricValue {
    pub group: GroupLabel,
    pub value: MetricValue,
}

/// One metric compared between two groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessRow {
    pub metric: Metric,
    pub first: GroupMetricValue,
    pub second: GroupMetricValue,
    /// `first - second` at full precision; `None` if either side is undefined.
    pub diff: Option<f64>,
    pub test: Option<TestResult>,
    pub p_raw: Option<f64>,
    pub p_holm: Option<f64>,
    pub significant: bool,
}

impl FairnessRow {
    pub fn new(metric: Metric, first: GroupMetricValue, second: GroupMetricValue) -> Self {
        let diff = match (first.value.value, second.value.value) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        FairnessRow {
            metric,
            first,
            second,
            diff,
            test: None,
            p_raw: None,
            p_holm: None,
            significant: false,
        }
    }

    /// The same comparison with the groups swapped (significance cleared).
    pub fn swapped(&self) -> Self {
        FairnessRow::new(self.metric, self.second.clone(), self.first.clone())
    }
}

fn metric_values(cc: &ConfusionCounts, variants: MetricVariants) -> [MetricValue; 5] {
    [
        statistical_parity(cc),
        equal_opportunity(cc),
        equality_of_odds(cc, variants.eo),
        predictive_parity(cc),
        treatment_equality(cc, variants.te),
    ]
}

fn rows_from_values(
    pair: (&GroupLabel, &GroupLabel),
    first: [MetricValue; 5],
    second: [MetricValue; 5],
) -> Vec<FairnessRow> {
    Metric::ALL
        .iter()
        .zip(first.into_iter().zip(second))
        .map(|(&metric, (a, b))| {
            FairnessRow::new(
                metric,
                GroupMetricValue {
                    group: pair.0.clone(),
                    value: a,
                },
                GroupMetricValue {
                    group: pair.1.clone(),
                    value: b,
                },
            )
        })
        .collect()
}

fn check_groups(set: &EvaluationSet, pair: (&GroupLabel, &GroupLabel)) -> Result<()> {
    for g in [pair.0, pair.1] {
        if !set.trials().iter().any(|t| &t.trial.group == g) {
            return Err(Error::MissingGroup(g.clone()));
        }
    }
    Ok(())
}

/// Per-group confusion counts at a shared operating point.
pub fn group_confusion(
    set: &EvaluationSet,
    op: &OperatingPoint,
    group: &GroupLabel,
) -> Result<ConfusionCounts> {
    let decisions = apply_threshold(set, op)?;
    let mut cc = ConfusionCounts::default();
    for (t, &predicted) in set.trials().iter().zip(decisions.as_slice()) {
        if &t.trial.group != group {
            continue;
        }
        match (op.orientation.is_positive(t.trial.label), predicted) {
            (true, true) => cc.tp += 1,
            (false, true) => cc.fp += 1,
            (false, false) => cc.tn += 1,
            (true, false) => cc.fn_ += 1,
        }
    }
    Ok(cc)
}

/// Metric rows (SP, EOP, EO, PP, TE) without significance.
pub fn fairness_rows(
    set: &EvaluationSet,
    op: &OperatingPoint,
    pair: (&GroupLabel, &GroupLabel),
    variants: MetricVariants,
) -> Result<Vec<FairnessRow>> {
    check_groups(set, pair)?;
    let a = group_confusion(set, op, pair.0)?;
    let b = group_confusion(set, op, pair.1)?;
    Ok(rows_from_values(
        pair,
        metric_values(&a, variants),
        metric_values(&b, variants),
    ))
}

pub fn evaluate_fairness(
    set: &EvaluationSet,
    op: &OperatingPoint,
    pair: (&GroupLabel, &GroupLabel),
    variants: MetricVariants,
    significance: SignificanceConfig,
) -> Result<Vec<FairnessRow>> {
    build_significance(fairness_rows(set, op, pair, variants)?, significance)
}

/// Conditional-frequency estimator: `P(event | condition, G = g)` as
/// `(hits, base)`.
struct Frequencies {
    /// `(actually positive, decided positive)` per trial of the group.
    outcomes: Vec<(bool, bool)>,
}

impl Frequencies {
    fn new(set: &EvaluationSet, op: &OperatingPoint, group: &GroupLabel) -> Result<Self> {
        if op.orientation != set.orientation() {
            return Err(Error::PolarityMismatch);
        }
        let o = set.orientation();
        let outcomes = set
            .trials()
            .iter()
            .filter(|t| &t.trial.group == group)
            .map(|t| (o.is_positive(t.trial.label), o.orient(t.score) >= op.threshold))
            .collect();
        Ok(Frequencies { outcomes })
    }

    fn count(&self, pred: impl Fn(bool, bool) -> bool) -> u64 {
        self.outcomes.iter().filter(|&&(y, yhat)| pred(y, yhat)).count() as u64
    }

    fn conditional(
        &self,
        event: impl Fn(bool, bool) -> bool,
        condition: impl Fn(bool, bool) -> bool,
    ) -> (u64, u64) {
        let base = self.count(&condition);
        let hits = self.count(|y, yhat| condition(y, yhat) && event(y, yhat));
        (hits, base)
    }

    fn estimate(&self, event: impl Fn(bool, bool) -> bool, condition: impl Fn(bool, bool) -> bool) -> MetricValue {
        let (hits, base) = self.conditional(event, condition);
        if base == 0 {
            return MetricValue::undefined();
        }
        MetricValue {
            value: Some(hits as f64 / base as f64),
            exact: Ratio::new(hits as u128, base as u128),
            proportion: ProportionSample::new(hits, base).ok(),
        }
    }

    fn values(&self, variants: MetricVariants) -> [MetricValue; 5] {
        let decided_pos = |_: bool, yhat: bool| yhat;
        let always = |_: bool, _: bool| true;
        let actual_pos = |y: bool, _: bool| y;
        let actual_neg = |y: bool, _: bool| !y;

        let sp = self.estimate(decided_pos, always);
        let eop = self.estimate(decided_pos, actual_pos);
        let fpr = self.estimate(decided_pos, actual_neg);
        let eo = match variants.eo {
            EoVariant::FprOnly => fpr,
            EoVariant::TprFprMean => match (eop.exact, fpr.exact) {
                (Some(t), Some(f)) => MetricValue {
                    value: Some((eop.value.unwrap() + fpr.value.unwrap()) / 2.0),
                    exact: Ratio::new(t.num * f.den + f.num * t.den, 2 * t.den * f.den),
                    proportion: None,
                },
                _ => MetricValue::undefined(),
            },
        };
        let pp = self.estimate(actual_pos, decided_pos);

        let te = match variants.te {
            TeVariant::CountRatio => {
                let false_alarms = self.count(|y, yhat| yhat && !y);
                let misses = self.count(|y, yhat| !yhat && y);
                if misses == 0 {
                    MetricValue::undefined()
                } else {
                    // P(decided positive | decision is wrong) = fp / (fp + fn).
                    let error_split = self.estimate(decided_pos, |y, yhat| y != yhat);
                    MetricValue {
                        value: Some(false_alarms as f64 / misses as f64),
                        exact: Ratio::new(false_alarms as u128, misses as u128),
                        proportion: error_split.proportion,
                    }
                }
            }
            TeVariant::RateRatio => {
                let fnr = self.estimate(|_, yhat| !yhat, actual_pos);
                match (fpr.exact, fnr.exact) {
                    (Some(f), Some(m)) if m.num > 0 => MetricValue {
                        value: Some(fpr.value.unwrap() / fnr.value.unwrap()),
                        exact: Ratio::new(f.num * m.den, f.den * m.num),
                        proportion: None,
                    },
                    _ => MetricValue::undefined(),
                }
            }
        };
        [sp, eop, eo, pp, te]
    }
}

/// Second route to the same rows as [`evaluate_fairness`], built from
/// per-trial conditional frequencies.
pub fn cross_check(
    set: &EvaluationSet,
    op: &OperatingPoint,
    pair: (&GroupLabel, &GroupLabel),
    variants: MetricVariants,
    significance: SignificanceConfig,
) -> Result<Vec<FairnessRow>> {
    check_groups(set, pair)?;
    let a = Frequencies::new(set, op, pair.0)?.values(variants);
    let b = Frequencies::new(set, op, pair.1)?.values(variants);
    build_significance(rows_from_values(pair, a, b), significance)
}

const FLOAT_TOL: f64 = 1e-12;

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= FLOAT_TOL,
        _ => false,
    }
}

fn same_value(a: &MetricValue, b: &MetricValue) -> bool {
    a.exact == b.exact && a.proportion == b.proportion && close(a.value, b.value)
}

/// Compares two row lists; exact for the rational parts, `1e-12` for floats.
pub fn compare_rows(primary: &[FairnessRow], secondary: &[FairnessRow]) -> Result<()> {
    for (p, s) in primary.iter().zip(secondary) {
        let mismatch = |group: &GroupLabel| Error::CrossCheckMismatch {
            metric: p.metric,
            group: group.clone(),
        };
        if p.metric != s.metric || !same_value(&p.first.value, &s.first.value) {
            return Err(mismatch(&p.first.group));
        }
        if !same_value(&p.second.value, &s.second.value) {
            return Err(mismatch(&p.second.group));
        }
        if !close(p.diff, s.diff)
            || !close(p.p_raw, s.p_raw)
            || !close(p.p_holm, s.p_holm)
            || p.significant != s.significant
        {
            return Err(mismatch(&p.first.group));
        }
    }
    if primary.len() != secondary.len() {
        let first = primary.first().or(secondary.first());
        return Err(Error::CrossCheckMismatch {
            metric: first.map_or(Metric::StatisticalParity, |r| r.metric),
            group: first.map_or_else(GroupLabel::female, |r| r.first.group.clone()),
        });
    }
    Ok(())
}

/// Runs both routes and returns the primary rows if they agree.
pub fn evaluate_checked(
    set: &EvaluationSet,
    op: &OperatingPoint,
    pair: (&GroupLabel, &GroupLabel),
    variants: MetricVariants,
    significance: SignificanceConfig,
) -> Result<Vec<FairnessRow>> {
    let primary = evaluate_fairness(set, op, pair, variants, significance)?;
    let secondary = cross_check(set, op, pair, variants, significance)?;
    compare_rows(&primary, &secondary)?;
    Ok(primary)
}
