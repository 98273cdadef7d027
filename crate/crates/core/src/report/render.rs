use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Provenance, ReportBundle, ReportFormat, SystemReport};
use crate::fairness::{FairnessRow, Metric};
use crate::scoring::EerPoint;

const P_FLOOR: f64 = 1e-16;

fn decimals(metric: Metric) -> usize {
    match metric {
        Metric::TreatmentEquality => 4,
        _ => 3,
    }
}

/// Fixed-decimal display; `n/a` when undefined. Never prints `-0.000`.
pub fn format_value(x: Option<f64>, decimals: usize) -> String {
    match x {
        None => "n/a".into(),
        Some(v) => {
            let s = format!("{v:.decimals$}");
            match s.strip_prefix('-') {
                Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
                _ => s,
            }
        }
    }
}

pub fn format_p(p: Option<f64>) -> String {
    match p {
        None => "n/a".into(),
        Some(p) if p < P_FLOOR => "<1e-16".into(),
        Some(p) if p >= 1e-3 => format!("{p:.4}"),
        Some(p) => format!("{p:.2e}"),
    }
}

fn full(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// One table as display strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayTable {
    pub id: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn table_id(metric: Metric) -> String {
    let n = Metric::ALL.iter().position(|&m| m == metric).unwrap() + 1;
    format!("table{n}_{}", metric.code().to_ascii_lowercase())
}

fn group_headers(p: &Provenance) -> [String; 2] {
    [p.groups[0].display_name().into(), p.groups[1].display_name().into()]
}

fn fairness_display(bundle: &ReportBundle, metric: Metric) -> DisplayTable {
    let p = &bundle.provenance;
    let [a, b] = group_headers(p);
    let d = decimals(metric);
    let rows = bundle
        .table(metric)
        .into_iter()
        .map(|(name, r)| {
            let mut pv = format_p(r.p_holm);
            if r.significant {
                pv.push_str(" *");
            }
            vec![
                name.to_string(),
                format_value(r.first.value.value, d),
                format_value(r.second.value.value, d),
                format_value(r.diff, d),
                pv,
            ]
        })
        .collect();
    DisplayTable {
        id: table_id(metric),
        title: format!(
            "Fairness assessment based on the {} metric ({}).",
            metric.name(),
            metric.code()
        ),
        columns: vec![
            "Model".into(),
            a.clone(),
            b.clone(),
            format!("Diff ({}-{})", p.groups[0], p.groups[1]),
            "p-value (Holm)".into(),
        ],
        rows,
    }
}

fn pct(e: &EerPoint) -> String {
    format_value(Some(e.eer * 100.0), 2)
}

fn eer_display(bundle: &ReportBundle) -> DisplayTable {
    let [a, b] = group_headers(&bundle.provenance);
    DisplayTable {
        id: "table6_eer".into(),
        title: "Performance in terms of EER (%).".into(),
        columns: vec!["Model".into(), a, b, "All".into()],
        rows: bundle
            .systems
            .iter()
            .map(|s| vec![s.name.clone(), pct(&s.eer.first), pct(&s.eer.second), pct(&s.eer.all)])
            .collect(),
    }
}

/// The six report tables: five metric tables then the EER table.
pub fn display_tables(bundle: &ReportBundle) -> Vec<DisplayTable> {
    let mut tables: Vec<DisplayTable> =
        Metric::ALL.iter().map(|&m| fairness_display(bundle, m)).collect();
    tables.push(eer_display(bundle));
    tables
}

fn md_table(out: &mut String, t: &DisplayTable) {
    let _ = writeln!(out, "| {} |", t.columns.join(" | "));
    let align: Vec<&str> = (0..t.columns.len())
        .map(|i| if i == 0 { "---" } else { "---:" })
        .collect();
    let _ = writeln!(out, "|{}|", align.join("|"));
    for row in &t.rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
}

fn operating_points(out: &mut String, systems: &[SystemReport]) {
    let _ = writeln!(out, "| Model | Threshold (raw score) | Dev EER (%) | Dev trials | Eval trials |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|");
    for s in systems {
        let op = &s.operating_point;
        let _ = writeln!(
            out,
            "| {} | {:?} | {} | {} | {} |",
            s.name,
            op.raw_threshold(),
            format_value(op.eer_at_derivation.map(|e| e * 100.0), 2),
            s.dev.n_total,
            s.eval.n_total,
        );
    }
}

pub fn render_markdown(bundle: &ReportBundle) -> String {
    let p = &bundle.provenance;
    let mut out = String::new();
    let _ = writeln!(out, "# Fairness report\n");
    let _ = writeln!(out, "- Toolkit: {} {}", p.toolkit, p.version);
    let _ = writeln!(out, "- Positive class (Y=1): **{}**", p.positive_class);
    let _ = writeln!(out, "- Score polarity: **{}**", p.polarity);
    let _ = writeln!(
        out,
        "- Groups: {} ({}) vs {} ({}), Diff = {} - {}",
        p.groups[0],
        p.groups[0].display_name(),
        p.groups[1],
        p.groups[1].display_name(),
        p.groups[0],
        p.groups[1]
    );
    let _ = writeln!(
        out,
        "- Threshold: EER point of each system's dev split, applied to every eval subset"
    );
    let _ = writeln!(
        out,
        "- EO variant: {}; TE variant: {}",
        p.eo_variant.as_str(),
        p.te_variant.as_str()
    );
    let _ = writeln!(
        out,
        "- Significance: pooled two-proportion z-test, Holm family {}, alpha = {}; `*` marks rejected rows",
        p.holm_family.as_str(),
        p.alpha
    );
    if let Some(ts) = &p.timestamp {
        let _ = writeln!(out, "- Generated: {ts}");
    }
    let _ = writeln!(out, "\n## Operating points\n");
    operating_points(&mut out, &bundle.systems);
    for (i, t) in display_tables(bundle).iter().enumerate() {
        let _ = writeln!(out, "\n## Table {}. {}\n", i + 1, t.title);
        md_table(&mut out, t);
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fairness_csv(bundle: &ReportBundle, metric: Metric) -> String {
    let [a, b] = group_headers(&bundle.provenance).map(|h| h.to_ascii_lowercase());
    let mut out = format!("model,{a},{b},diff,z,p_raw,p_holm,significant\n");
    for (name, r) in bundle.table(metric) {
        let FairnessRow { first, second, diff, test, p_raw, p_holm, significant, .. } = r;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(name),
            full(first.value.value),
            full(second.value.value),
            full(*diff),
            full(test.map(|t| t.z)),
            full(*p_raw),
            full(*p_holm),
            significant
        );
    }
    out
}

fn eer_csv(bundle: &ReportBundle) -> String {
    let [a, b] = group_headers(&bundle.provenance).map(|h| h.to_ascii_lowercase());
    let mut out = format!("model,{a}_eer,{b}_eer,all_eer\n");
    for s in &bundle.systems {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?}",
            csv_field(&s.name),
            s.eer.first.eer,
            s.eer.second.eer,
            s.eer.all.eer
        );
    }
    out
}

/// One CSV per table with full-precision values. EERs are fractions.
pub fn render_csv(bundle: &ReportBundle) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = Metric::ALL
        .iter()
        .map(|&m| (format!("{}.csv", table_id(m)), fairness_csv(bundle, m)))
        .collect();
    files.push(("table6_eer.csv".into(), eer_csv(bundle)));
    files
}

/// Layout of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub provenance: Provenance,
    pub systems: Vec<SystemReport>,
    pub display: Vec<DisplayTable>,
}

impl JsonReport {
    pub fn into_bundle(self) -> ReportBundle {
        ReportBundle {
            provenance: self.provenance,
            systems: self.systems,
        }
    }
}

pub fn render_json(bundle: &ReportBundle) -> String {
    let doc = JsonReport {
        provenance: bundle.provenance.clone(),
        systems: bundle.systems.clone(),
        display: display_tables(bundle),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// `(file name, contents)` for one format.
pub fn render(bundle: &ReportBundle, format: ReportFormat) -> Vec<(String, Vec<u8>)> {
    match format {
        ReportFormat::Markdown => vec![("report.md".into(), render_markdown(bundle).into_bytes())],
        ReportFormat::Csv => render_csv(bundle)
            .into_iter()
            .map(|(n, s)| (n, s.into_bytes()))
            .collect(),
        ReportFormat::Json => vec![("report.json".into(), render_json(bundle).into_bytes())],
    }
}
