//! End-to-end evaluation runs and report rendering.

mod config;
mod render;

use serde::{Deserialize, Serialize};

pub use config::{render_toml, ReportFormat, RunConfig, SystemSpec};
pub use render::{
    display_tables, format_p, format_value, render, render_csv, render_json, render_markdown,
    DisplayTable, JsonReport,
};

use crate::error::{Error, Result};
use crate::fairness::{evaluate_checked, EoVariant, FairnessRow, Metric, TeVariant};
use crate::protocol::{
    join_trials, read_protocol, read_scores, ClassLabel, ColumnLayout, EvaluationSet, GroupLabel,
    JoinOptions, Joined, Polarity, SetSummary,
};
use crate::scoring::{compute_eer, DetCurve, EerPoint, OperatingPoint, SplitTag};
use crate::stats::{build_significance, HolmFamily};

pub const TOOLKIT: &str = "fairscore";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run settings echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub toolkit: String,
    pub version: String,
    pub positive_class: ClassLabel,
    pub polarity: Polarity,
    pub groups: [GroupLabel; 2],
    pub eo_variant: EoVariant,
    pub te_variant: TeVariant,
    pub alpha: f64,
    pub holm_family: HolmFamily,
    pub layout: ColumnLayout,
    pub systems: Vec<SystemSpec>,
    /// Never rendered inside tables.
    pub timestamp: Option<String>,
}

impl Provenance {
    pub fn from_config(config: &RunConfig) -> Self {
        Provenance {
            toolkit: TOOLKIT.into(),
            version: VERSION.into(),
            positive_class: config.orientation.positive_class,
            polarity: config.orientation.polarity,
            groups: [config.groups.0.clone(), config.groups.1.clone()],
            eo_variant: config.variants.eo,
            te_variant: config.variants.te,
            alpha: config.significance.alpha,
            holm_family: config.significance.family,
            layout: config.layout.clone(),
            systems: config.systems.clone(),
            timestamp: None,
        }
    }
}

/// EER on the evaluation split for the two compared groups and all trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerRow {
    pub first: EerPoint,
    pub second: EerPoint,
    pub all: EerPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub name: String,
    pub operating_point: OperatingPoint,
    pub dev: SetSummary,
    pub eval: SetSummary,
    /// Score ids without a trial, accepted under `allow_orphans`.
    pub dev_orphans: usize,
    pub eval_orphans: usize,
    pub eer: EerRow,
    /// One row per metric, in [`Metric::ALL`] order.
    pub rows: Vec<FairnessRow>,
}

impl SystemReport {
    pub fn row(&self, metric: Metric) -> Option<&FairnessRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub systems: Vec<SystemReport>,
}

impl ReportBundle {
    /// `(system, row)` pairs for one metric table.
    pub fn table(&self, metric: Metric) -> Vec<(&str, &FairnessRow)> {
        self.systems
            .iter()
            .filter_map(|s| s.row(metric).map(|r| (s.name.as_str(), r)))
            .collect()
    }

    /// Recomputes significance over the whole run (Holm family per run or per
    /// metric across systems).
    pub fn apply_significance(&mut self, significance: crate::stats::SignificanceConfig) -> Result<()> {
        let rows: Vec<FairnessRow> = self.systems.iter().flat_map(|s| s.rows.clone()).collect();
        let mut rows = build_significance(rows, significance)?.into_iter();
        for s in &mut self.systems {
            for r in &mut s.rows {
                *r = rows.next().expect("same row count");
            }
        }
        Ok(())
    }
}

fn load_split(
    config: &RunConfig,
    protocol: &std::path::Path,
    scores: &std::path::Path,
) -> Result<Joined> {
    let trials = read_protocol(&config.resolve(protocol), &config.layout)?;
    let scores = read_scores(&config.resolve(scores))?;
    join_trials(
        trials,
        scores,
        config.orientation,
        JoinOptions {
            allow_orphans: config.allow_orphans,
        },
    )
}

fn eer_of(set: &EvaluationSet, group: Option<&GroupLabel>) -> Result<EerPoint> {
    let o = set.orientation();
    let pairs = set
        .trials()
        .iter()
        .filter(|t| group.is_none_or(|g| &t.trial.group == g))
        .map(|t| (o.orient(t.score), o.is_positive(t.trial.label)))
        .collect();
    let curve = DetCurve::from_oriented(pairs, o.positive_class)
        .map_err(|e| match (e, group) {
            (Error::DegenerateSet(c), Some(g)) => {
                Error::Config(format!("group {g} has no {c} trials in the eval split"))
            }
            (e, _) => e,
        })?;
    Ok(compute_eer(&curve))
}

/// Evaluates one system: dev-derived operating point, eval EERs and fairness
/// rows. Significance here covers this system only.
pub fn evaluate_system(config: &RunConfig, spec: &SystemSpec) -> Result<SystemReport> {
    let dev = load_split(config, &spec.dev_protocol, &spec.dev_scores)?;
    let operating_point = OperatingPoint::at_eer(&dev.set, SplitTag::Dev)?;
    let dev_summary = dev.set.summary();
    drop(dev.set);

    let eval = load_split(config, &spec.eval_protocol, &spec.eval_scores)?;
    let (g1, g2) = (&config.groups.0, &config.groups.1);
    let eer = EerRow {
        first: eer_of(&eval.set, Some(g1))?,
        second: eer_of(&eval.set, Some(g2))?,
        all: eer_of(&eval.set, None)?,
    };
    let rows = evaluate_checked(
        &eval.set,
        &operating_point,
        (g1, g2),
        config.variants,
        config.significance,
    )?;
    Ok(SystemReport {
        name: spec.name.clone(),
        operating_point,
        dev: dev_summary,
        eval: eval.set.summary(),
        dev_orphans: dev.orphans.len(),
        eval_orphans: eval.orphans.len(),
        eer,
        rows,
    })
}

/// Runs every configured system and applies Holm across the run.
pub fn run(config: &RunConfig) -> Result<ReportBundle> {
    config.validate()?;
    let systems = config
        .systems
        .iter()
        .map(|spec| evaluate_system(config, spec).map_err(|e| e.in_system(&spec.name)))
        .collect::<Result<Vec<_>>>()?;
    let mut bundle = ReportBundle {
        provenance: Provenance::from_config(config),
        systems,
    };
    bundle.apply_significance(config.significance)?;
    Ok(bundle)
}
