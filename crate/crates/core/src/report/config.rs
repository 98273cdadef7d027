//! Run configuration, read from a TOML file.
//!
//! ```toml
//! polarity = "higher-bonafide"     # or "higher-spoof"
//! positive_class = "spoof"         # or "bonafide"
//! groups = ["F", "M"]
//! eo_variant = "fpr-only"          # or "tpr-fpr-mean"
//! te_variant = "count-ratio"       # or "rate-ratio"
//! alpha = 0.05
//! holm_family = "per-run"          # or "per-metric"
//! formats = ["markdown", "csv", "json"]
//! out_dir = "report"
//! allow_orphans = false
//!
//! [layout]
//! speaker = 0
//! utt = 1
//! gender = 2
//! label = 3
//! delimiter = "whitespace"         # or a single character
//! columns = 4                      # optional exact column count
//! bonafide_tokens = ["bonafide"]
//! spoof_tokens = ["spoof"]
//!
//! [[system]]
//! name = "CQT"
//! dev_protocol = "dev.txt"
//! dev_scores = "cqt.dev.txt"
//! eval_protocol = "eval.txt"
//! eval_scores = "cqt.eval.txt"
//! ```
//!
//! Every top-level key and the whole `[layout]` table are optional.
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::MetricVariants;
use crate::protocol::{ClassLabel, ColumnLayout, Delimiter, GroupLabel, Orientation};
use crate::stats::SignificanceConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "markdown",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

/// File paths of one system, as written in the config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    pub dev_protocol: PathBuf,
    pub dev_scores: PathBuf,
    pub eval_protocol: PathBuf,
    pub eval_scores: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub systems: Vec<SystemSpec>,
    /// Directory that relative system paths are resolved against.
    pub base_dir: PathBuf,
    pub layout: ColumnLayout,
    pub orientation: Orientation,
    pub groups: (GroupLabel, GroupLabel),
    pub variants: MetricVariants,
    pub significance: SignificanceConfig,
    pub formats: Vec<ReportFormat>,
    /// As written; see [`RunConfig::output_dir`].
    pub out_dir: Option<PathBuf>,
    pub allow_orphans: bool,
}

impl RunConfig {
    pub fn new(systems: Vec<SystemSpec>, base_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            systems,
            base_dir: base_dir.into(),
            layout: ColumnLayout::default(),
            orientation: Orientation::default(),
            groups: (GroupLabel::female(), GroupLabel::male()),
            variants: MetricVariants::default(),
            significance: SignificanceConfig::default(),
            formats: ReportFormat::ALL.to_vec(),
            out_dir: None,
            allow_orphans: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::from_toml_str(&text, &base)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut config = RunConfig::new(file.system, base_dir);
        if let Some(p) = file.polarity {
            config.orientation.polarity = p.parse()?;
        }
        if let Some(c) = file.positive_class {
            config.orientation.positive_class = c.parse()?;
        }
        if let Some([a, b]) = file.groups {
            config.groups = (GroupLabel::new(&a)?, GroupLabel::new(&b)?);
        }
        if let Some(v) = file.eo_variant {
            config.variants.eo = v.parse()?;
        }
        if let Some(v) = file.te_variant {
            config.variants.te = v.parse()?;
        }
        if let Some(a) = file.alpha {
            config.significance.alpha = a;
        }
        if let Some(f) = file.holm_family {
            config.significance.family = f.parse()?;
        }
        if let Some(formats) = file.formats {
            config.formats = formats.iter().map(|f| f.parse()).collect::<Result<_>>()?;
        }
        config.out_dir = file.out_dir;
        config.allow_orphans = file.allow_orphans.unwrap_or(false);
        if let Some(layout) = file.layout {
            config.layout = layout.into_layout()?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    /// Configured output directory, resolved like the system paths.
    pub fn output_dir(&self) -> Option<PathBuf> {
        self.out_dir.as_deref().map(|d| self.resolve(d))
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::Config("at least one [[system]] is required".into()));
        }
        let alpha = self.significance.alpha;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {alpha}")));
        }
        if self.groups.0 == self.groups.1 {
            return Err(Error::Config("the two compared groups must differ".into()));
        }
        if self.formats.is_empty() {
            return Err(Error::Config("no output format selected".into()));
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.systems {
            if s.name.trim().is_empty() {
                return Err(Error::Config("system name must not be empty".into()));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate system name {:?}", s.name)));
            }
            if s.dev_scores == s.eval_scores || s.dev_protocol == s.eval_protocol {
                return Err(Error::Config(format!(
                    "system {:?}: dev and eval must use different files",
                    s.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    polarity: Option<String>,
    positive_class: Option<String>,
    groups: Option<[String; 2]>,
    eo_variant: Option<String>,
    te_variant: Option<String>,
    alpha: Option<f64>,
    holm_family: Option<String>,
    formats: Option<Vec<String>>,
    out_dir: Option<PathBuf>,
    allow_orphans: Option<bool>,
    layout: Option<LayoutSection>,
    #[serde(default)]
    system: Vec<SystemSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutSection {
    speaker: Option<usize>,
    utt: Option<usize>,
    gender: Option<usize>,
    label: Option<usize>,
    delimiter: Option<String>,
    columns: Option<usize>,
    bonafide_tokens: Option<Vec<String>>,
    spoof_tokens: Option<Vec<String>>,
}

impl LayoutSection {
    fn into_layout(self) -> Result<ColumnLayout> {
        let d = ColumnLayout::default();
        let delimiter = match self.delimiter.as_deref() {
            None | Some("whitespace") => Delimiter::Whitespace,
            Some(s) => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Delimiter::Char(c),
                    _ => {
                        return Err(Error::Config(format!(
                            "delimiter must be \"whitespace\" or one character, got {s:?}"
                        )))
                    }
                }
            }
        };
        let tokens = |given: Option<Vec<String>>, default: &str, class: ClassLabel| {
            given
                .unwrap_or_else(|| vec![default.to_string()])
                .into_iter()
                .map(move |t| (t, class))
        };
        let label_tokens: Vec<(String, ClassLabel)> =
            tokens(self.bonafide_tokens, "bonafide", ClassLabel::Bonafide)
                .chain(tokens(self.spoof_tokens, "spoof", ClassLabel::Spoof))
                .collect();
        let layout = ColumnLayout {
            speaker: self.speaker.unwrap_or(d.speaker),
            utt: self.utt.unwrap_or(d.utt),
            gender: self.gender.unwrap_or(d.gender),
            label: self.label.unwrap_or(d.label),
            delimiter,
            columns: self.columns,
            label_tokens,
        };
        let idx = [layout.speaker, layout.utt, layout.gender, layout.label];
        if (1..4).any(|i| idx[..i].contains(&idx[i])) {
            return Err(Error::Config("layout columns must be distinct".into()));
        }
        if let Some(n) = layout.columns {
            if idx.iter().any(|&i| i >= n) {
                return Err(Error::Config(format!("layout column index beyond {n} columns")));
            }
        }
        Ok(layout)
    }
}

/// Renders a config file that [`RunConfig::from_toml_str`] reads back to an
/// equal config, given the same base directory.
pub fn render_toml(config: &RunConfig) -> String {
    use std::fmt::Write;
    let q = |s: &str| toml::Value::String(s.to_string()).to_string();
    let mut out = String::new();
    let o = config.orientation;
    let _ = writeln!(out, "polarity = {}", q(o.polarity.as_str()));
    let _ = writeln!(out, "positive_class = {}", q(o.positive_class.as_str()));
    let _ = writeln!(
        out,
        "groups = [{}, {}]",
        q(config.groups.0.as_str()),
        q(config.groups.1.as_str())
    );
    let _ = writeln!(out, "eo_variant = {}", q(config.variants.eo.as_str()));
    let _ = writeln!(out, "te_variant = {}", q(config.variants.te.as_str()));
    let _ = writeln!(out, "alpha = {:?}", config.significance.alpha);
    let _ = writeln!(out, "holm_family = {}", q(config.significance.family.as_str()));
    let formats: Vec<String> = config.formats.iter().map(|f| q(f.as_str())).collect();
    let _ = writeln!(out, "formats = [{}]", formats.join(", "));
    if let Some(dir) = &config.out_dir {
        let _ = writeln!(out, "out_dir = {}", q(&dir.to_string_lossy()));
    }
    let _ = writeln!(out, "allow_orphans = {}", config.allow_orphans);

    let l = &config.layout;
    let _ = writeln!(out, "\n[layout]");
    let _ = writeln!(out, "speaker = {}\nutt = {}\ngender = {}\nlabel = {}", l.speaker, l.utt, l.gender, l.label);
    let delimiter = match l.delimiter {
        Delimiter::Whitespace => "whitespace".to_string(),
        Delimiter::Char(c) => c.to_string(),
    };
    let _ = writeln!(out, "delimiter = {}", q(&delimiter));
    if let Some(n) = l.columns {
        let _ = writeln!(out, "columns = {n}");
    }
    for class in [ClassLabel::Bonafide, ClassLabel::Spoof] {
        let tokens: Vec<String> = l
            .label_tokens
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(t, _)| q(t))
            .collect();
        let _ = writeln!(out, "{class}_tokens = [{}]", tokens.join(", "));
    }
    for s in &config.systems {
        let _ = writeln!(out, "\n[[system]]");
        let _ = writeln!(out, "name = {}", q(&s.name));
        for (key, path) in [
            ("dev_protocol", &s.dev_protocol),
            ("dev_scores", &s.dev_scores),
            ("eval_protocol", &s.eval_protocol),
            ("eval_scores", &s.eval_scores),
        ] {
            let _ = writeln!(out, "{key} = {}", q(&path.to_string_lossy()));
        }
    }
    out
}
