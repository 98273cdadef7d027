//! Two-proportion z-tests and Holm–Bonferroni correction.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{FairnessRow, GroupMetricValue, Metric};

/// `k` successes out of `n` trials, `0 <= k <= n`, `n >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProportionSample {
    successes: u64,
    trials: u64,
}

impl ProportionSample {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::InvalidSample { successes, trials });
        }
        Ok(ProportionSample { successes, trials })
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn proportion(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Two-sided tail probability `2 * (1 - Phi(|z|))`, without cancellation.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / SQRT_2)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    #[default]
    PooledZ,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub z: f64,
    pub p_two_sided: f64,
    pub method: TestMethod,
    /// Pooled variance was zero (both samples all-success or all-failure);
    /// reported as `z = 0`, `p = 1`.
    pub degenerate: bool,
}

/// Pooled two-proportion z-test of `H0: p_a = p_b`, two-sided.
pub fn two_proportion_z(a: ProportionSample, b: ProportionSample) -> TestResult {
    let (na, nb) = (a.trials as f64, b.trials as f64);
    let pooled = (a.successes + b.successes) as f64 / (a.trials + b.trials) as f64;
    let variance = pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb);
    if variance == 0.0 {
        return TestResult {
            z: 0.0,
            p_two_sided: 1.0,
            method: TestMethod::PooledZ,
            degenerate: true,
        };
    }
    let z = (a.proportion() - b.proportion()) / variance.sqrt();
    TestResult {
        z,
        p_two_sided: two_sided_p(z),
        method: TestMethod::PooledZ,
        degenerate: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolmOutcome {
    /// Adjusted p-values in input order.
    pub p_adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Holm step-down adjustment. Rejects where the adjusted p is strictly below
/// `alpha`. Equal p-values are ranked by input position.
pub fn holm_correct(p_raw: &[f64], alpha: f64) -> Result<HolmOutcome> {
    check_alpha(alpha)?;
    if let Some(&bad) = p_raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidP(bad));
    }

    let m = p_raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_raw[i].total_cmp(&p_raw[j]).then(i.cmp(&j)));

    let mut p_adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        let scaled = (p_raw[i] * (m - rank) as f64).min(1.0);
        running = running.max(scaled);
        p_adjusted[i] = running;
    }
    let reject = p_adjusted.iter().map(|&p| p < alpha).collect();
    Ok(HolmOutcome { p_adjusted, reject })
}

/// How rows are grouped into Holm families.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolmFamily {
    /// Every tested row of a report forms one family.
    #[default]
    PerRun,
    /// One family per metric, across systems.
    PerMetric,
}

impl HolmFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            HolmFamily::PerRun => "per-run",
            HolmFamily::PerMetric => "per-metric",
        }
    }
}

impl std::str::FromStr for HolmFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-run" => Ok(HolmFamily::PerRun),
            "per-metric" => Ok(HolmFamily::PerMetric),
            _ => Err(Error::Config(format!("unknown Holm family {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub family: HolmFamily,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            alpha: 0.05,
            family: HolmFamily::PerRun,
        }
    }
}

/// The pair of proportions a metric's z-test compares, or `None` when the
/// metric has no proportion form or either group value is undefined.
pub fn metric_to_samples(
    a: &GroupMetricValue,
    b: &GroupMetricValue,
) -> Option<(ProportionSample, ProportionSample)> {
    match (&a.value, &b.value) {
        (va, vb) if va.is_defined() && vb.is_defined() => Some((va.proportion?, vb.proportion?)),
        _ => None,
    }
}

/// Runs the z-test on every testable row and applies Holm within each family.
/// Rows without a test keep `p_raw = p_holm = None` and are not counted in
/// any family.
pub fn build_significance(
    mut rows: Vec<FairnessRow>,
    config: SignificanceConfig,
) -> Result<Vec<FairnessRow>> {
    check_alpha(config.alpha)?;
    let mut families: BTreeMap<Option<Metric>, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter_mut().enumerate() {
        row.test = metric_to_samples(&row.first, &row.second).map(|(a, b)| two_proportion_z(a, b));
        row.p_raw = row.test.map(|t| t.p_two_sided);
        row.p_holm = None;
        row.significant = false;
        if row.p_raw.is_some() {
            let key = match config.family {
                HolmFamily::PerRun => None,
                HolmFamily::PerMetric => Some(row.metric),
            };
            families.entry(key).or_default().push(i);
        }
    }

    for members in families.values() {
        let p: Vec<f64> = members.iter().map(|&i| rows[i].p_raw.unwrap()).collect();
        let outcome = holm_correct(&p, config.alpha)?;
        for (k, &i) in members.iter().enumerate() {
            rows[i].p_holm = Some(outcome.p_adjusted[k]);
            rows[i].significant = outcome.reject[k];
        }
    }
    Ok(rows)
}
