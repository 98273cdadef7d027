//! Protocol and score file ingestion.
//!
//! A protocol file maps each utterance to a speaker, a group token and a
//! bonafide/spoof label. A score file maps each utterance to one detection
//! score. Both are joined by utterance id into an [`EvaluationSet`], which is
//! the input to every downstream computation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Demographic group token, upper-cased at construction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GroupLabel(String);

impl GroupLabel {
    pub fn new(token: &str) -> Result<Self> {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid group token {token:?}")));
        }
        Ok(GroupLabel(token.to_uppercase()))
    }

    pub fn female() -> Self {
        GroupLabel("F".into())
    }

    pub fn male() -> Self {
        GroupLabel("M".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Column heading used in reports: "Female"/"Male" for the canonical
    /// tokens, the token itself otherwise.
    pub fn display_name(&self) -> &str {
        match self.0.as_str() {
            "F" => "Female",
            "M" => "Male",
            other => other,
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for GroupLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GroupLabel::new(s)
    }
}

impl TryFrom<String> for GroupLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        GroupLabel::new(&s)
    }
}

impl From<GroupLabel> for String {
    fn from(g: GroupLabel) -> String {
        g.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Bonafide,
    Spoof,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Bonafide => "bonafide",
            ClassLabel::Spoof => "spoof",
        }
    }

    pub fn other(self) -> Self {
        match self {
            ClassLabel::Bonafide => ClassLabel::Spoof,
            ClassLabel::Spoof => ClassLabel::Bonafide,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("bonafide") {
            Ok(ClassLabel::Bonafide)
        } else if s.eq_ignore_ascii_case("spoof") {
            Ok(ClassLabel::Spoof)
        } else {
            Err(Error::Config(format!("unknown class {s:?}")))
        }
    }
}

/// Which class a larger raw score points to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    #[default]
    HigherBonafide,
    HigherSpoof,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::HigherBonafide => "higher-bonafide",
            Polarity::HigherSpoof => "higher-spoof",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::HigherBonafide => Polarity::HigherSpoof,
            Polarity::HigherSpoof => Polarity::HigherBonafide,
        }
    }

    fn higher_class(self) -> ClassLabel {
        match self {
            Polarity::HigherBonafide => ClassLabel::Bonafide,
            Polarity::HigherSpoof => ClassLabel::Spoof,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "higher-bonafide" => Ok(Polarity::HigherBonafide),
            "higher-spoof" => Ok(Polarity::HigherSpoof),
            _ => Err(Error::Config(format!("unknown polarity {s:?}"))),
        }
    }
}

/// Score polarity together with the class designated as positive (Y=1).
///
/// An *oriented* score is the raw score multiplied by [`Orientation::sign`],
/// so that larger oriented scores always point to the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Orientation {
    pub polarity: Polarity,
    pub positive_class: ClassLabel,
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation {
            polarity: Polarity::HigherBonafide,
            positive_class: ClassLabel::Spoof,
        }
    }
}

impl Orientation {
    pub fn new(polarity: Polarity, positive_class: ClassLabel) -> Self {
        Orientation {
            polarity,
            positive_class,
        }
    }

    pub fn sign(self) -> f64 {
        if self.polarity.higher_class() == self.positive_class {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn orient(self, raw: f64) -> f64 {
        self.sign() * raw
    }

    #[inline]
    pub fn is_positive(self, label: ClassLabel) -> bool {
        label == self.positive_class
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub group: GroupLabel,
    pub label: ClassLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub utt_id: String,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Delimiter {
    /// Any run of ASCII whitespace.
    #[default]
    Whitespace,
    Char(char),
}

/// Column positions (0-based) and tokenisation rules for a protocol file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub speaker: usize,
    pub utt: usize,
    pub gender: usize,
    pub label: usize,
    pub delimiter: Delimiter,
    /// Exact column count to enforce; `None` only requires enough columns to
    /// reach the highest configured index.
    pub columns: Option<usize>,
    /// Token to class map, matched case-insensitively.
    pub label_tokens: Vec<(String, ClassLabel)>,
}

impl Default for ColumnLayout {
    fn default() -> Self {
        ColumnLayout {
            speaker: 0,
            utt: 1,
            gender: 2,
            label: 3,
            delimiter: Delimiter::Whitespace,
            columns: None,
            label_tokens: vec![
                ("bonafide".into(), ClassLabel::Bonafide),
                ("spoof".into(), ClassLabel::Spoof),
            ],
        }
    }
}

impl ColumnLayout {
    /// Column order of the ASVspoof 5 protocol files:
    /// `SPEAKER FILE GENDER CODEC CODEC_Q CODEC_SEED ATTACK_TAG ATTACK_LABEL KEY TMP`.
    pub fn asvspoof5() -> Self {
        ColumnLayout {
            label: 8,
            ..ColumnLayout::default()
        }
    }

    fn min_columns(&self) -> usize {
        self.speaker.max(self.utt).max(self.gender).max(self.label) + 1
    }

    fn class_of(&self, token: &str) -> Option<ClassLabel> {
        self.label_tokens
            .iter()
            .find(|(t, _)| t.eq_ignore_ascii_case(token))
            .map(|&(_, c)| c)
    }
}

/// Iterates `(1-based line number, line)` over non-blank, non-comment lines.
fn content_lines(input: &[u8]) -> impl Iterator<Item = (usize, Result<&str>)> {
    input
        .split(|&b| b == b'\n')
        .enumerate()
        .filter_map(|(i, raw)| {
            let line_no = i + 1;
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let start = raw.iter().position(|b| !b.is_ascii_whitespace())?;
            if raw[start] == b'#' {
                return None;
            }
            Some((
                line_no,
                std::str::from_utf8(raw).map_err(|_| Error::MalformedRow {
                    line: line_no,
                    reason: "invalid UTF-8".into(),
                }),
            ))
        })
}

fn split_fields<'a>(line: &'a str, delimiter: Delimiter, out: &mut Vec<&'a str>) {
    out.clear();
    match delimiter {
        Delimiter::Whitespace => out.extend(line.split_ascii_whitespace()),
        Delimiter::Char(c) => out.extend(line.split(c)),
    }
}

pub fn parse_protocol(input: &[u8], layout: &ColumnLayout) -> Result<Vec<TrialRecord>> {
    let min_columns = layout.min_columns();
    let mut records = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut fields = Vec::with_capacity(min_columns.max(4));

    for (line_no, line) in content_lines(input) {
        let line = line?;
        split_fields(line, layout.delimiter, &mut fields);
        let malformed = |reason: String| Error::MalformedRow {
            line: line_no,
            reason,
        };
        match layout.columns {
            Some(n) if fields.len() != n => {
                return Err(malformed(format!("expected {n} columns, found {}", fields.len())))
            }
            _ if fields.len() < min_columns => {
                return Err(malformed(format!(
                    "expected at least {min_columns} columns, found {}",
                    fields.len()
                )))
            }
            _ => {}
        }

        let utt = fields[layout.utt];
        let label_token = fields[layout.label];
        let label = layout
            .class_of(label_token)
            .ok_or_else(|| malformed(format!("unknown label {label_token:?}")))?;
        let group = GroupLabel::new(fields[layout.gender])
            .map_err(|_| malformed(format!("invalid group {:?}", fields[layout.gender])))?;
        if utt.is_empty() || fields[layout.speaker].is_empty() {
            return Err(malformed("empty id field".into()));
        }
        if !seen.insert(utt) {
            return Err(Error::DuplicateUtt(utt.to_string()));
        }
        records.push(TrialRecord {
            utt_id: utt.to_string(),
            speaker_id: fields[layout.speaker].to_string(),
            group,
            label,
        });
    }

    if records.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(records)
}

pub fn parse_scores(input: &[u8]) -> Result<Vec<ScoreRecord>> {
    let mut records = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();

    for (line_no, line) in content_lines(input) {
        let line = line?;
        let mut it = line.split_ascii_whitespace();
        let (Some(utt), Some(value), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: "expected \"utt_id score\"".into(),
            });
        };
        let score: f64 = value.parse().map_err(|_| Error::MalformedRow {
            line: line_no,
            reason: format!("unparseable score {value:?}"),
        })?;
        if !score.is_finite() {
            return Err(Error::NonFiniteScore(utt.to_string()));
        }
        if !seen.insert(utt) {
            return Err(Error::DuplicateUtt(utt.to_string()));
        }
        records.push(ScoreRecord {
            utt_id: utt.to_string(),
            score,
        });
    }

    if records.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(records)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_protocol(path: &Path, layout: &ColumnLayout) -> Result<Vec<TrialRecord>> {
    parse_protocol(&read_file(path)?, layout).map_err(|e| e.in_file(path))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    parse_scores(&read_file(path)?).map_err(|e| e.in_file(path))
}

/// Posterior probability of the bonafide class from a two-class logit pair.
pub fn logits_to_score(logit_spoof: f64, logit_bonafide: f64) -> Result<f64> {
    if !logit_spoof.is_finite() || !logit_bonafide.is_finite() {
        return Err(Error::NonFiniteInput("logits_to_score"));
    }
    let m = logit_spoof.max(logit_bonafide);
    let e_spoof = (logit_spoof - m).exp();
    let e_bona = (logit_bonafide - m).exp();
    Ok(e_bona / (e_spoof + e_bona))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub trial: TrialRecord,
    pub score: f64,
}

/// Trials joined with their scores, sorted by utterance id.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationSet {
    trials: Vec<ScoredTrial>,
    orientation: Orientation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub bonafide: usize,
    pub spoof: usize,
}

impl ClassCounts {
    fn add(&mut self, label: ClassLabel) {
        match label {
            ClassLabel::Bonafide => self.bonafide += 1,
            ClassLabel::Spoof => self.spoof += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.bonafide + self.spoof
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSummary {
    pub n_total: usize,
    pub per_class: ClassCounts,
    pub per_group: BTreeMap<GroupLabel, ClassCounts>,
}

impl EvaluationSet {
    /// Builds a set from already-joined trials. Sorts by utterance id and
    /// rejects duplicate ids and non-finite scores.
    pub fn from_scored(mut trials: Vec<ScoredTrial>, orientation: Orientation) -> Result<Self> {
        if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
            return Err(Error::NonFiniteScore(t.trial.utt_id.clone()));
        }
        trials.sort_unstable_by(|a, b| a.trial.utt_id.cmp(&b.trial.utt_id));
        if let Some(w) = trials
            .windows(2)
            .find(|w| w[0].trial.utt_id == w[1].trial.utt_id)
        {
            return Err(Error::DuplicateUtt(w[0].trial.utt_id.clone()));
        }
        Ok(EvaluationSet {
            trials,
            orientation,
        })
    }

    pub fn trials(&self) -> &[ScoredTrial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn polarity(&self) -> Polarity {
        self.orientation.polarity
    }

    pub fn positive_class(&self) -> ClassLabel {
        self.orientation.positive_class
    }

    /// `(oriented score, is positive class)` per trial, in set order.
    pub fn oriented(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        let o = self.orientation;
        self.trials
            .iter()
            .map(move |t| (o.orient(t.score), o.is_positive(t.trial.label)))
    }

    pub fn groups(&self) -> Vec<GroupLabel> {
        self.trials
            .iter()
            .map(|t| &t.trial.group)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect()
    }

    pub fn summary(&self) -> SetSummary {
        let mut s = SetSummary {
            n_total: self.trials.len(),
            ..SetSummary::default()
        };
        for t in &self.trials {
            s.per_class.add(t.trial.label);
            s.per_group
                .entry(t.trial.group.clone())
                .or_default()
                .add(t.trial.label);
        }
        s
    }

    /// Same trials with scores passed through `f` (used by invariance tests
    /// and score calibration).
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let trials = self
            .trials
            .iter()
            .map(|t| ScoredTrial {
                trial: t.trial.clone(),
                score: f(t.score),
            })
            .collect();
        EvaluationSet::from_scored(trials, self.orientation)
    }

    pub fn with_orientation(&self, orientation: Orientation) -> Self {
        EvaluationSet {
            trials: self.trials.clone(),
            orientation,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JoinOptions {
    /// Accept scores without a matching trial instead of failing.
    pub allow_orphans: bool,
}

#[derive(Debug)]
pub struct Joined {
    pub set: EvaluationSet,
    /// Score ids without a trial (only non-empty with `allow_orphans`), sorted.
    pub orphans: Vec<String>,
}

pub fn join_trials(
    trials: Vec<TrialRecord>,
    scores: Vec<ScoreRecord>,
    orientation: Orientation,
    options: JoinOptions,
) -> Result<Joined> {
    let mut by_id: HashMap<String, f64> = HashMap::with_capacity(scores.len());
    for s in scores {
        if !s.score.is_finite() {
            return Err(Error::NonFiniteScore(s.utt_id));
        }
        if let Some(_prev) = by_id.insert(s.utt_id.clone(), s.score) {
            return Err(Error::DuplicateUtt(s.utt_id));
        }
    }

    let mut missing = Vec::new();
    let mut joined = Vec::with_capacity(trials.len());
    for trial in trials {
        match by_id.remove(&trial.utt_id) {
            Some(score) => joined.push(ScoredTrial { trial, score }),
            None => missing.push(trial.utt_id),
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(Error::MissingScore(missing));
    }

    let mut orphans: Vec<String> = by_id.into_keys().collect();
    orphans.sort_unstable();
    if !orphans.is_empty() && !options.allow_orphans {
        return Err(Error::OrphanScore(orphans));
    }

    Ok(Joined {
        set: EvaluationSet::from_scored(joined, orientation)?,
        orphans,
    })
}

/// Group subsets of an evaluation set plus the combined set.
#[derive(Clone, Debug)]
pub struct Partition {
    pub all: EvaluationSet,
    pub groups: BTreeMap<GroupLabel, EvaluationSet>,
}

impl Partition {
    pub fn group(&self, g: &GroupLabel) -> Result<&EvaluationSet> {
        self.groups
            .get(g)
            .ok_or_else(|| Error::MissingGroup(g.clone()))
    }
}

pub fn partition_by_group(set: EvaluationSet) -> Partition {
    let mut groups: BTreeMap<GroupLabel, Vec<ScoredTrial>> = BTreeMap::new();
    for t in &set.trials {
        groups
            .entry(t.trial.group.clone())
            .or_default()
            .push(t.clone());
    }
    let orientation = set.orientation;
    Partition {
        groups: groups
            .into_iter()
            .map(|(g, trials)| {
                (
                    g,
                    EvaluationSet {
                        trials,
                        orientation,
                    },
                )
            })
            .collect(),
        all: set,
    }
}

pub const CANONICAL_HEADER: &str = "utt_id\tspeaker_id\tgender\tlabel\tscore";

/// Renders the canonical TSV export. Scores use the shortest representation
/// that parses back to the same `f64`.
pub fn render_canonical_tsv(set: &EvaluationSet) -> String {
    let mut out = String::with_capacity(set.len() * 32 + CANONICAL_HEADER.len() + 1);
    out.push_str(CANONICAL_HEADER);
    out.push('\n');
    for t in &set.trials {
        use std::fmt::Write;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            t.trial.utt_id,
            t.trial.speaker_id,
            t.trial.group,
            t.trial.label.as_str(),
            t.score
        );
    }
    out
}

pub fn parse_canonical_tsv(input: &[u8], orientation: Orientation) -> Result<EvaluationSet> {
    let mut lines = content_lines(input);
    match lines.next() {
        Some((_, Ok(h))) if h == CANONICAL_HEADER => {}
        Some((line, _)) => {
            return Err(Error::MalformedRow {
                line,
                reason: "missing canonical header".into(),
            })
        }
        None => return Err(Error::EmptyFile),
    }

    let layout = ColumnLayout {
        speaker: 1,
        utt: 0,
        gender: 2,
        label: 3,
        delimiter: Delimiter::Char('\t'),
        columns: Some(5),
        ..ColumnLayout::default()
    };
    let mut trials = Vec::new();
    let mut fields = Vec::with_capacity(5);
    for (line_no, line) in lines {
        let line = line?;
        split_fields(line, layout.delimiter, &mut fields);
        let malformed = |reason: &str| Error::MalformedRow {
            line: line_no,
            reason: reason.into(),
        };
        if fields.len() != 5 {
            return Err(malformed("expected 5 tab-separated columns"));
        }
        let label = layout
            .class_of(fields[3])
            .ok_or_else(|| malformed("unknown label"))?;
        let group = GroupLabel::new(fields[2]).map_err(|_| malformed("invalid group"))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| malformed("unparseable score"))?;
        trials.push(ScoredTrial {
            trial: TrialRecord {
                utt_id: fields[0].to_string(),
                speaker_id: fields[1].to_string(),
                group,
                label,
            },
            score,
        });
    }
    if trials.is_empty() {
        return Err(Error::EmptyFile);
    }
    EvaluationSet::from_scored(trials, orientation)
}

/// Renders trials in the default protocol layout (`speaker utt gender label`).
pub fn render_protocol(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 24);
    for r in records {
        out.push_str(&r.speaker_id);
        out.push(' ');
        out.push_str(&r.utt_id);
        out.push(' ');
        out.push_str(r.group.as_str());
        out.push(' ');
        out.push_str(r.label.as_str());
        out.push('\n');
    }
    out
}
