//! Deterministic synthetic protocols and scores, with analytic oracles.
//!
//! Each `(group, class)` cell draws `count` scores from `N(mean, stddev^2)`.
//! The generator is fixed so outputs are reproducible byte-for-byte:
//!
//! * PRNG: xoshiro256++, one stream per cell, seeded through SplitMix64
//!   (`Xoshiro256PlusPlus::seed_from_u64`) with
//!   `seed ^ ((cell_index + 1) * 0x9E3779B97F4A7C15)` (wrapping).
//! * Uniforms: `u1 = ((x >> 11) + 1) * 2^-53` in `(0, 1]`,
//!   `u2 = (x >> 11) * 2^-53` in `[0, 1)`.
//! * Normal transform: Box–Muller, `r = sqrt(-2 ln u1)`, emitting
//!   `r cos(2 pi u2)` then `r sin(2 pi u2)`, evaluated with the portable
//!   `libm` routines.
//! * Score text: C `%.9g` formatting (see [`format_sig9`]).
//!
//! Trials are emitted cell by cell in configuration order. Utterance ids are
//! `{id_prefix}{n:08}` with `n` counting from 0 across all cells.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt::Write;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    ClassLabel, EvaluationSet, GroupLabel, Orientation, ScoreRecord, ScoredTrial, TrialRecord,
};
use crate::stats::normal_cdf;

pub const DEFAULT_CAP: u64 = 10_000_000;
pub const BRUTE_FORCE_LIMIT: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupClassModel {
    pub group: GroupLabel,
    pub class: ClassLabel,
    pub count: u64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub models: Vec<GroupClassModel>,
    pub seed: u64,
    pub id_prefix: String,
    pub cap: u64,
}

impl SimConfig {
    /// Groups F and M, each with `count` bonafide trials at `N(separation, 1)`
    /// and `count` spoof trials at `N(0, 1)`. Matches the higher-bonafide
    /// score polarity.
    pub fn symmetric(count: u64, separation: f64, seed: u64) -> Self {
        let mut models = Vec::new();
        for group in [GroupLabel::female(), GroupLabel::male()] {
            for (class, mean) in [(ClassLabel::Bonafide, separation), (ClassLabel::Spoof, 0.0)] {
                models.push(GroupClassModel {
                    group: group.clone(),
                    class,
                    count,
                    mean,
                    stddev: 1.0,
                });
            }
        }
        SimConfig {
            models,
            seed,
            id_prefix: "U".into(),
            cap: DEFAULT_CAP,
        }
    }

    /// Moves the mean of one cell by `delta`.
    pub fn shift_mean(mut self, group: &GroupLabel, class: ClassLabel, delta: f64) -> Self {
        for m in &mut self.models {
            if &m.group == group && m.class == class {
                m.mean += delta;
            }
        }
        self
    }

    pub fn with_prefix(mut self, prefix: &str) -> Self {
        self.id_prefix = prefix.to_string();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut cells = HashSet::new();
        for m in &self.models {
            if !(m.stddev > 0.0 && m.stddev.is_finite()) || !m.mean.is_finite() {
                return Err(Error::Config(format!(
                    "cell {}/{}: mean must be finite and stddev positive",
                    m.group, m.class
                )));
            }
            if m.count > self.cap {
                return Err(Error::CapExceeded {
                    count: m.count,
                    cap: self.cap,
                });
            }
            if !cells.insert((&m.group, m.class)) {
                return Err(Error::Config(format!("duplicate cell {}/{}", m.group, m.class)));
            }
        }
        for class in [ClassLabel::Bonafide, ClassLabel::Spoof] {
            if !self.models.iter().any(|m| m.class == class) {
                return Err(Error::Config(format!("no {class} model configured")));
            }
        }
        if self.id_prefix.chars().any(char::is_whitespace) {
            return Err(Error::Config("id prefix contains whitespace".into()));
        }
        Ok(())
    }
}

/// Box–Muller normal stream over xoshiro256++.
struct GaussianStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl GaussianStream {
    fn for_cell(seed: u64, cell_index: usize) -> Self {
        let mixed = seed ^ (cell_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        GaussianStream {
            rng: Xoshiro256PlusPlus::seed_from_u64(mixed),
            spare: None,
        }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }
}

/// Formats like C's `%.9g`: 9 significant digits, trailing zeros removed,
/// exponent form when the decimal exponent is below -4 or at least 9.
pub fn format_sig9(x: f64) -> String {
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{x:.*}", (8 - exp) as usize))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub trial: TrialRecord,
    pub score: f64,
}

/// Raw draws for every cell, in output order.
pub fn sample(config: &SimConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    let total: u64 = config.models.iter().map(|m| m.count).sum();
    let mut out = Vec::with_capacity(total as usize);
    let mut n = 0u64;
    for (cell, model) in config.models.iter().enumerate() {
        let mut stream = GaussianStream::for_cell(config.seed, cell);
        for i in 0..model.count {
            out.push(Sample {
                trial: TrialRecord {
                    utt_id: format!("{}{n:08}", config.id_prefix),
                    speaker_id: format!("SPK_{}_{:03}", model.group, i % 100),
                    group: model.group.clone(),
                    label: model.class,
                },
                score: model.mean + model.stddev * stream.next(),
            });
            n += 1;
        }
    }
    Ok(out)
}

/// In-memory evaluation set from the raw (unrounded) draws.
pub fn generate_set(config: &SimConfig, orientation: Orientation) -> Result<EvaluationSet> {
    let trials = sample(config)?
        .into_iter()
        .map(|s| ScoredTrial {
            trial: s.trial,
            score: s.score,
        })
        .collect();
    EvaluationSet::from_scored(trials, orientation)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellManifest {
    pub group: GroupLabel,
    pub class: ClassLabel,
    pub count: u64,
    pub mean: f64,
    pub stddev: f64,
    /// Sum of the scores as written (after 9-digit rounding).
    pub score_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub id_prefix: String,
    pub cells: Vec<CellManifest>,
}

impl Manifest {
    pub fn total(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn score_sum(&self) -> f64 {
        self.cells.iter().map(|c| c.score_sum).sum()
    }

    /// `key = value` lines; floats in shortest round-trip form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "id_prefix = {}", self.id_prefix);
        let _ = writeln!(out, "cells = {}", self.cells.len());
        let _ = writeln!(out, "total = {}", self.total());
        for (i, c) in self.cells.iter().enumerate() {
            let _ = writeln!(out, "cell.{i}.group = {}", c.group);
            let _ = writeln!(out, "cell.{i}.class = {}", c.class);
            let _ = writeln!(out, "cell.{i}.count = {}", c.count);
            let _ = writeln!(out, "cell.{i}.mean = {:?}", c.mean);
            let _ = writeln!(out, "cell.{i}.stddev = {:?}", c.stddev);
            let _ = writeln!(out, "cell.{i}.score_sum = {:?}", c.score_sum);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("manifest: {msg}"));
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("not a key = value line: {line:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| bad(format!("missing key {k}")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("manifest: bad value for {k}: {v:?}")))
        }
        let n_cells: usize = num("cells", get("cells")?)?;
        let mut cells = Vec::with_capacity(n_cells);
        for i in 0..n_cells {
            let key = |f: &str| format!("cell.{i}.{f}");
            cells.push(CellManifest {
                group: GroupLabel::new(get(&key("group"))?)?,
                class: get(&key("class"))?.parse()?,
                count: num(&key("count"), get(&key("count"))?)?,
                mean: num(&key("mean"), get(&key("mean"))?)?,
                stddev: num(&key("stddev"), get(&key("stddev"))?)?,
                score_sum: num(&key("score_sum"), get(&key("score_sum"))?)?,
            });
        }
        Ok(Manifest {
            seed: num("seed", get("seed")?)?,
            id_prefix: get("id_prefix")?.clone(),
            cells,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// Protocol text in the default layout (`speaker utt gender label`).
    pub protocol: String,
    /// `utt score` lines.
    pub scores: String,
    pub manifest: Manifest,
}

pub fn generate(config: &SimConfig) -> Result<Generated> {
    let samples = sample(config)?;
    let mut protocol = String::with_capacity(samples.len() * 32);
    let mut scores = String::with_capacity(samples.len() * 24);
    let mut cells: Vec<CellManifest> = config
        .models
        .iter()
        .map(|m| CellManifest {
            group: m.group.clone(),
            class: m.class,
            count: m.count,
            mean: m.mean,
            stddev: m.stddev,
            score_sum: 0.0,
        })
        .collect();

    let mut cell = 0;
    let mut left_in_cell = config.models.first().map_or(0, |m| m.count);
    for s in &samples {
        while left_in_cell == 0 {
            cell += 1;
            left_in_cell = config.models[cell].count;
        }
        left_in_cell -= 1;

        let text = format_sig9(s.score);
        cells[cell].score_sum += text.parse::<f64>().expect("formatted float");
        let t = &s.trial;
        let _ = writeln!(protocol, "{} {} {} {}", t.speaker_id, t.utt_id, t.group, t.label);
        let _ = writeln!(scores, "{} {text}", t.utt_id);
    }

    Ok(Generated {
        protocol,
        scores,
        manifest: Manifest {
            seed: config.seed,
            id_prefix: config.id_prefix.clone(),
            cells,
        },
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellExpectation {
    pub group: GroupLabel,
    pub class: ClassLabel,
    pub count: u64,
    /// `P(oriented score >= threshold)` for one trial of the cell.
    pub p_decide_positive: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub expected: ExpectedCounts,
}

fn exceedance(model: &GroupClassModel, orientation: Orientation, threshold: f64) -> f64 {
    let mean = orientation.orient(model.mean);
    normal_cdf((mean - threshold) / model.stddev)
}

/// Exact Gaussian decision rates per cell at an oriented threshold.
pub fn expected_rates(
    config: &SimConfig,
    orientation: Orientation,
    threshold: f64,
) -> Vec<CellExpectation> {
    config
        .models
        .iter()
        .map(|m| {
            let p = exceedance(m, orientation, threshold);
            let n = m.count as f64;
            let positive = orientation.is_positive(m.class);
            let expected = if positive {
                ExpectedCounts {
                    tp: n * p,
                    fn_: n * (1.0 - p),
                    ..ExpectedCounts::default()
                }
            } else {
                ExpectedCounts {
                    fp: n * p,
                    tn: n * (1.0 - p),
                    ..ExpectedCounts::default()
                }
            };
            CellExpectation {
                group: m.group.clone(),
                class: m.class,
                count: m.count,
                p_decide_positive: p,
                fpr: (!positive).then_some(p),
                fnr: positive.then_some(1.0 - p),
                expected,
            }
        })
        .collect()
}

/// Population EER and oriented threshold of the Gaussian mixture formed by
/// the cells of `group` (all cells when `None`), found by bisection.
pub fn analytic_eer(
    config: &SimConfig,
    orientation: Orientation,
    group: Option<&GroupLabel>,
) -> Result<(f64, f64)> {
    let cells: Vec<&GroupClassModel> = config
        .models
        .iter()
        .filter(|m| group.is_none_or(|g| &m.group == g) && m.count > 0)
        .collect();
    let weight = |positive: bool| -> u64 {
        cells
            .iter()
            .filter(|m| orientation.is_positive(m.class) == positive)
            .map(|m| m.count)
            .sum()
    };
    let (n_pos, n_neg) = (weight(true), weight(false));
    if n_pos == 0 {
        return Err(Error::DegenerateSet(orientation.positive_class));
    }
    if n_neg == 0 {
        return Err(Error::DegenerateSet(orientation.positive_class.other()));
    }
    let rate = |t: f64, positive: bool, n: u64| -> f64 {
        cells
            .iter()
            .filter(|m| orientation.is_positive(m.class) == positive)
            .map(|m| m.count as f64 * exceedance(m, orientation, t))
            .sum::<f64>()
            / n as f64
    };
    // FPR(t) - FNR(t) is decreasing in t.
    let gap = |t: f64| rate(t, false, n_neg) - (1.0 - rate(t, true, n_pos));
    let spread = cells.iter().map(|m| m.stddev).fold(0.0, f64::max) * 40.0;
    let means = cells.iter().map(|m| orientation.orient(m.mean));
    let (mut lo, mut hi) = (
        means.clone().fold(f64::INFINITY, f64::min) - spread,
        means.fold(f64::NEG_INFINITY, f64::max) + spread,
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok((rate(t, false, n_neg), t))
}

/// Exact per-group metric rationals from a naive per-trial tally, as
/// `(numerator, denominator)`; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BruteForceMetrics {
    pub sp: Option<(u128, u128)>,
    pub eop: Option<(u128, u128)>,
    pub eo_fpr: Option<(u128, u128)>,
    pub eo_mean: Option<(u128, u128)>,
    pub pp: Option<(u128, u128)>,
    pub te_count: Option<(u128, u128)>,
    pub te_rate: Option<(u128, u128)>,
}

/// Independent tally of every fairness metric per group. Joins, decides and
/// counts on its own.
pub fn brute_force_fairness(
    trials: &[TrialRecord],
    scores: &[ScoreRecord],
    threshold: f64,
    orientation: Orientation,
) -> Result<BTreeMap<GroupLabel, BruteForceMetrics>> {
    if trials.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n: trials.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let by_id: HashMap<&str, f64> = scores.iter().map(|s| (s.utt_id.as_str(), s.score)).collect();

    // [positive decided positive, negative decided positive, negative decided
    //  negative, positive decided negative] per group.
    let mut tallies: BTreeMap<GroupLabel, [u128; 4]> = BTreeMap::new();
    for t in trials {
        let raw = *by_id
            .get(t.utt_id.as_str())
            .ok_or_else(|| Error::MissingScore(vec![t.utt_id.clone()]))?;
        let oriented = if orientation.sign() > 0.0 { raw } else { -raw };
        let decided_positive = oriented >= threshold;
        let actually_positive = t.label == orientation.positive_class;
        let slot = match (actually_positive, decided_positive) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        };
        tallies.entry(t.group.clone()).or_default()[slot] += 1;
    }

    let frac = |num: u128, den: u128| (den > 0).then_some((num, den));
    Ok(tallies
        .into_iter()
        .map(|(g, [tp, fp, tn, fneg])| {
            let m = BruteForceMetrics {
                sp: frac(tp + fp, tp + fp + tn + fneg),
                eop: frac(tp, tp + fneg),
                eo_fpr: frac(fp, fp + tn),
                eo_mean: if tp + fneg > 0 && fp + tn > 0 {
                    frac(tp * (fp + tn) + fp * (tp + fneg), 2 * (tp + fneg) * (fp + tn))
                } else {
                    None
                },
                pp: frac(tp, tp + fp),
                te_count: frac(fp, fneg),
                te_rate: if fneg > 0 && fp + tn > 0 {
                    frac(fp * (tp + fneg), (fp + tn) * fneg)
                } else {
                    None
                },
            };
            (g, m)
        })
        .collect())
}
