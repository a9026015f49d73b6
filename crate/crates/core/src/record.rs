//! Capture files: the newline-delimited JSON format that carries model
//! generations, and the label merge that turns judge ratings into binary
//! accuracy.
//!
//! A capture is a header line followed by one [`GenerationRecord`] per line:
//!
//! ```text
//! {"format":"csl-capture","version":1,"n_heads":2,"head_layout":"layer-major"}
//! {"id":"q1","dataset":"toy","model":"m","tokens":["Paris"],"logprobs":[-0.1],"attn_prompt":[[0.3],[0.6]], ...}
//! ```
//!
//! Attention rows are stored raw (the softmax mass that the probe position
//! put on each response token), so rows generally sum to less than one.
//! Normalization happens at scoring time.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CAPTURE_FORMAT: &str = "csl-capture";
pub const CAPTURE_VERSION: u32 = 1;
pub const HEAD_LAYOUT: &str = "layer-major";

/// Slack allowed on attention row mass before a row counts as over-full.
pub const ROW_MASS_SLACK: f64 = 1e-6;

/// H×n attention mass from one probe position onto the response tokens.
///
/// Row `h` belongs to flattened head `layer * heads_per_layer + head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct AttentionMatrix {
    n_heads: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl AttentionMatrix {
    /// Builds a matrix from rows. Rows must be non-empty and rectangular.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_heads = rows.len();
        if n_heads == 0 {
            return Err(Error::InvalidInput("attention matrix has no rows".into()));
        }
        let n_cols = rows[0].len();
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidInput("attention matrix rows are ragged".into()));
        }
        Ok(Self {
            n_heads,
            n_cols,
            values: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds a matrix from row-major storage.
    pub fn from_flat(n_heads: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_heads == 0 || values.len() != n_heads * n_cols {
            return Err(Error::InvalidInput(format!(
                "flat attention storage of length {} does not fit {n_heads}x{n_cols}",
                values.len()
            )));
        }
        Ok(Self {
            n_heads,
            n_cols,
            values,
        })
    }

    /// Every head puts the same mass `1/n` on every token.
    pub fn uniform(n_heads: usize, n_cols: usize) -> Self {
        let v = 1.0 / n_cols as f64;
        Self {
            n_heads,
            n_cols,
            values: vec![v; n_heads * n_cols],
        }
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, head: usize) -> &[f64] {
        &self.values[head * self.n_cols..(head + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_heads).map(move |h| self.row(h))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<Vec<f64>>> for AttentionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<AttentionMatrix> for Vec<Vec<f64>> {
    fn from(m: AttentionMatrix) -> Self {
        m.rows().map(<[f64]>::to_vec).collect()
    }
}

/// Which probe position the attention was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionSource {
    /// Last token of the attention-eliciting judge prompt.
    Prompt,
    /// First decoding step after the response finished.
    Next,
}

impl AttentionSource {
    pub const ALL: [AttentionSource; 2] = [AttentionSource::Prompt, AttentionSource::Next];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionSource::Prompt => "prompt",
            AttentionSource::Next => "next",
        }
    }
}

impl fmt::Display for AttentionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AttentionSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prompt" => Ok(AttentionSource::Prompt),
            "next" => Ok(AttentionSource::Next),
            other => Err(Error::Config(format!("unknown attention source {other:?}"))),
        }
    }
}

/// An additional sampled generation for the same question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledGeneration {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    #[serde(default)]
    pub cluster: Option<i64>,
    #[serde(default)]
    pub sim_to_greedy: Option<f64>,
    #[serde(default)]
    pub attn_prompt: Option<AttentionMatrix>,
    #[serde(default)]
    pub attn_next: Option<AttentionMatrix>,
}

impl SampledGeneration {
    pub fn attention(&self, source: AttentionSource) -> Option<&AttentionMatrix> {
        match source {
            AttentionSource::Prompt => self.attn_prompt.as_ref(),
            AttentionSource::Next => self.attn_next.as_ref(),
        }
    }
}

/// One question/response instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub id: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub model: String,
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    #[serde(default)]
    pub attn_prompt: Option<AttentionMatrix>,
    #[serde(default)]
    pub attn_next: Option<AttentionMatrix>,
    #[serde(default)]
    pub ratings: BTreeMap<String, f64>,
    #[serde(default, with = "binary_label")]
    pub accuracy: Option<bool>,
    #[serde(default)]
    pub ptrue: Option<f64>,
    #[serde(default)]
    pub token_relevance: Option<Vec<f64>>,
    #[serde(default)]
    pub samples: Vec<SampledGeneration>,
}

impl GenerationRecord {
    /// A bare record with tokens and log-probs only.
    pub fn new(id: impl Into<String>, tokens: Vec<String>, logprobs: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            dataset: String::new(),
            model: String::new(),
            tokens,
            logprobs,
            attn_prompt: None,
            attn_next: None,
            ratings: BTreeMap::new(),
            accuracy: None,
            ptrue: None,
            token_relevance: None,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn attention(&self, source: AttentionSource) -> Option<&AttentionMatrix> {
        match source {
            AttentionSource::Prompt => self.attn_prompt.as_ref(),
            AttentionSource::Next => self.attn_next.as_ref(),
        }
    }

    /// Number of heads in the record's attention, if it carries any.
    pub fn n_heads(&self) -> Option<usize> {
        self.attn_prompt
            .as_ref()
            .or(self.attn_next.as_ref())
            .map(AttentionMatrix::n_heads)
    }

    /// The binary label, or an error naming the record when it is unset.
    pub fn label(&self) -> Result<bool> {
        self.accuracy.ok_or_else(|| Error::UnresolvedLabel(self.id.clone()))
    }
}

mod binary_label {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_u8(u8::from(*b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(other) => Err(serde::de::Error::custom(format!(
                "accuracy must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// First line of every capture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureHeader {
    pub format: String,
    pub version: u32,
    pub n_heads: usize,
    pub head_layout: String,
}

impl CaptureHeader {
    pub fn new(n_heads: usize) -> Self {
        Self {
            format: CAPTURE_FORMAT.to_owned(),
            version: CAPTURE_VERSION,
            n_heads,
            head_layout: HEAD_LAYOUT.to_owned(),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.format != CAPTURE_FORMAT {
            return Err(format!("unknown format {:?}", self.format));
        }
        if self.version != CAPTURE_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        if self.head_layout != HEAD_LAYOUT {
            return Err(format!("unsupported head layout {:?}", self.head_layout));
        }
        Ok(())
    }
}

/// A parsed capture: header plus records in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub header: CaptureHeader,
    pub records: Vec<GenerationRecord>,
}

impl Capture {
    pub fn new(n_heads: usize, records: Vec<GenerationRecord>) -> Self {
        Self {
            header: CaptureHeader::new(n_heads),
            records,
        }
    }

    pub fn n_heads(&self) -> usize {
        self.header.n_heads
    }
}

/// A single broken invariant of a record.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    PositiveLogprob {
        index: usize,
        value: f64,
    },
    NonFinite {
        what: String,
    },
    NegativeAttention {
        what: String,
        head: usize,
        col: usize,
        value: f64,
    },
    RowMassExceeded {
        what: String,
        head: usize,
        mass: f64,
    },
    HeadCount {
        what: String,
        expected: usize,
        found: usize,
    },
    OutOfUnitRange {
        what: String,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty response (n = 0)"),
            Violation::LengthMismatch { what, expected, found } => {
                write!(f, "length mismatch: {what} has {found}, expected {expected}")
            }
            Violation::PositiveLogprob { index, value } => {
                write!(f, "positive logprob {value} at token {index}")
            }
            Violation::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Violation::NegativeAttention { what, head, col, value } => {
                write!(f, "negative attention {value} in {what}[{head}][{col}]")
            }
            Violation::RowMassExceeded { what, head, mass } => {
                write!(f, "row mass > 1: {what}[{head}] sums to {mass}")
            }
            Violation::HeadCount { what, expected, found } => {
                write!(f, "head-count mismatch: {what} has {found} heads, expected {expected}")
            }
            Violation::OutOfUnitRange { what, value } => {
                write!(f, "{what} = {value} outside [0, 1]")
            }
        }
    }
}

/// Outcome of [`validate_record`]: every violated invariant, not just the first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Checks every record-local invariant and returns all violations.
pub fn validate_record(r: &GenerationRecord) -> Validation {
    let mut v = Vec::new();
    check_sequence(&mut v, "", &r.tokens, &r.logprobs);
    let n = r.tokens.len();
    let mut heads = None;
    for (name, m) in [("attn_prompt", &r.attn_prompt), ("attn_next", &r.attn_next)] {
        if let Some(m) = m {
            check_matrix(&mut v, name, m, n, &mut heads);
        }
    }
    for (judge, &rating) in &r.ratings {
        check_unit(&mut v, &format!("ratings[{judge}]"), rating);
    }
    if let Some(p) = r.ptrue {
        if !p.is_finite() {
            v.push(Violation::NonFinite { what: "ptrue".into() });
        }
    }
    if let Some(rel) = &r.token_relevance {
        if rel.len() != n {
            v.push(Violation::LengthMismatch {
                what: "token_relevance".into(),
                expected: n,
                found: rel.len(),
            });
        }
        for (i, &x) in rel.iter().enumerate() {
            check_unit(&mut v, &format!("token_relevance[{i}]"), x);
        }
    }
    for (j, s) in r.samples.iter().enumerate() {
        let prefix = format!("samples[{j}].");
        check_sequence(&mut v, &prefix, &s.tokens, &s.logprobs);
        if let Some(sim) = s.sim_to_greedy {
            check_unit(&mut v, &format!("{prefix}sim_to_greedy"), sim);
        }
        for (name, m) in [("attn_prompt", &s.attn_prompt), ("attn_next", &s.attn_next)] {
            if let Some(m) = m {
                check_matrix(&mut v, &format!("{prefix}{name}"), m, s.tokens.len(), &mut heads);
            }
        }
    }
    Validation { violations: v }
}

fn check_sequence(v: &mut Vec<Violation>, prefix: &str, tokens: &[String], logprobs: &[f64]) {
    if tokens.is_empty() {
        v.push(Violation::Empty);
    }
    if logprobs.len() != tokens.len() {
        v.push(Violation::LengthMismatch {
            what: format!("{prefix}logprobs"),
            expected: tokens.len(),
            found: logprobs.len(),
        });
    }
    for (i, &l) in logprobs.iter().enumerate() {
        if !l.is_finite() {
            v.push(Violation::NonFinite {
                what: format!("{prefix}logprobs[{i}]"),
            });
        } else if l > 0.0 {
            v.push(Violation::PositiveLogprob { index: i, value: l });
        }
    }
}

fn check_matrix(v: &mut Vec<Violation>, what: &str, m: &AttentionMatrix, n: usize, heads: &mut Option<usize>) {
    if m.n_cols() != n {
        v.push(Violation::LengthMismatch {
            what: format!("{what} columns"),
            expected: n,
            found: m.n_cols(),
        });
    }
    match *heads {
        Some(h) if h != m.n_heads() => v.push(Violation::HeadCount {
            what: what.to_owned(),
            expected: h,
            found: m.n_heads(),
        }),
        Some(_) => {}
        None => *heads = Some(m.n_heads()),
    }
    for (h, row) in m.rows().enumerate() {
        let mut mass = 0.0;
        for (c, &a) in row.iter().enumerate() {
            if !a.is_finite() {
                v.push(Violation::NonFinite {
                    what: format!("{what}[{h}][{c}]"),
                });
            } else if a < 0.0 {
                v.push(Violation::NegativeAttention {
                    what: what.to_owned(),
                    head: h,
                    col: c,
                    value: a,
                });
            }
            mass += a;
        }
        if mass > 1.0 + ROW_MASS_SLACK {
            v.push(Violation::RowMassExceeded {
                what: what.to_owned(),
                head: h,
                mass,
            });
        }
    }
}

fn check_unit(v: &mut Vec<Violation>, what: &str, x: f64) {
    if !(0.0..=1.0).contains(&x) {
        v.push(Violation::OutOfUnitRange {
            what: what.to_owned(),
            value: x,
        });
    }
}

/// Reads and fully validates a capture file.
pub fn parse_capture(path: impl AsRef<Path>) -> Result<Capture> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_capture(BufReader::new(file))
}

/// Reads and fully validates a capture from any buffered reader.
///
/// Fails on the first malformed line, invalid record, head-count mismatch or
/// duplicate id. Blank lines are skipped.
pub fn read_capture<R: BufRead>(reader: R) -> Result<Capture> {
    let mut lines = numbered_lines(reader);
    let header = read_header(&mut lines)?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for item in lines {
        let (line, text) = item?;
        let record: GenerationRecord = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let validation = validate_record(&record);
        if let Some(hc) = validation.violations.iter().find_map(|v| match v {
            Violation::HeadCount { expected, found, .. } => Some((*expected, *found)),
            _ => None,
        }) {
            return Err(Error::HeadCountMismatch {
                expected: hc.0,
                found: hc.1,
                id: record.id,
            });
        }
        if !validation.is_ok() {
            return Err(Error::Parse {
                line,
                message: format!("record {}: {}", record.id, validation.messages().join("; ")),
            });
        }
        if let Some(found) = record_head_count(&record) {
            if found != header.n_heads {
                return Err(Error::HeadCountMismatch {
                    expected: header.n_heads,
                    found,
                    id: record.id,
                });
            }
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(Capture { header, records })
}

fn record_head_count(r: &GenerationRecord) -> Option<usize> {
    r.n_heads().or_else(|| {
        r.samples
            .iter()
            .find_map(|s| s.attn_prompt.as_ref().or(s.attn_next.as_ref()))
            .map(AttentionMatrix::n_heads)
    })
}

type NumberedLine = Result<(usize, String)>;

fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = NumberedLine> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| {
            l.map(|text| (i + 1, text)).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .filter(|item| !matches!(item, Ok((_, t)) if t.trim().is_empty()))
}

fn read_header(lines: &mut impl Iterator<Item = NumberedLine>) -> Result<CaptureHeader> {
    let (line, text) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing capture header".into(),
    })??;
    let header: CaptureHeader = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line,
        message: format!("bad capture header: {e}"),
    })?;
    header.check().map_err(|message| Error::Parse { line, message })?;
    Ok(header)
}

/// One problem found by [`audit_capture`].
#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub line: usize,
    pub id: Option<String>,
    pub messages: Vec<String>,
}

/// Lenient pass over a capture that collects every problem instead of
/// stopping at the first one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    pub header: Option<CaptureHeader>,
    pub n_records: usize,
    pub findings: Vec<Finding>,
}

impl Audit {
    pub fn is_ok(&self) -> bool {
        self.header.is_some() && self.findings.is_empty()
    }
}

pub fn audit_capture<R: BufRead>(reader: R) -> Audit {
    let mut audit = Audit::default();
    let mut lines = numbered_lines(reader);
    match read_header(&mut lines) {
        Ok(h) => audit.header = Some(h),
        Err(e) => {
            audit.findings.push(Finding {
                line: 1,
                id: None,
                messages: vec![e.to_string()],
            });
            return audit;
        }
    }
    let expected_heads = audit.header.as_ref().map(|h| h.n_heads);
    let mut seen = HashSet::new();
    for item in lines {
        let (line, text) = match item {
            Ok(x) => x,
            Err(e) => {
                audit.findings.push(Finding {
                    line: 0,
                    id: None,
                    messages: vec![e.to_string()],
                });
                continue;
            }
        };
        audit.n_records += 1;
        let record: GenerationRecord = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(e) => {
                audit.findings.push(Finding {
                    line,
                    id: None,
                    messages: vec![e.to_string()],
                });
                continue;
            }
        };
        let mut messages = validate_record(&record).messages();
        if let (Some(expected), Some(found)) = (expected_heads, record_head_count(&record)) {
            if expected != found {
                messages.push(format!(
                    "head-count mismatch: {found} heads, header declares {expected}"
                ));
            }
        }
        if !seen.insert(record.id.clone()) {
            messages.push(format!("duplicate id {:?}", record.id));
        }
        if !messages.is_empty() {
            audit.findings.push(Finding {
                line,
                id: Some(record.id),
                messages,
            });
        }
    }
    audit
}

/// Writes a capture as NDJSON, header first.
pub fn write_capture(path: impl AsRef<Path>, capture: &Capture) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_capture_to(&mut w, capture).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_capture_to<W: Write>(w: &mut W, capture: &Capture) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    serde_json::to_writer(&mut *w, &capture.header)?;
    w.write_all(b"\n").map_err(io)?;
    for r in &capture.records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

/// A judge and the rating at or above which it counts a response correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeThreshold {
    pub judge: String,
    pub threshold: f64,
}

impl JudgeThreshold {
    pub fn new(judge: impl Into<String>, threshold: f64) -> Self {
        Self {
            judge: judge.into(),
            threshold,
        }
    }

    fn verdict(&self, r: &GenerationRecord) -> Result<bool> {
        r.ratings
            .get(&self.judge)
            .map(|&rating| rating >= self.threshold)
            .ok_or_else(|| Error::MissingJudge {
                id: r.id.clone(),
                judge: self.judge.clone(),
            })
    }
}

/// What to do when two judges disagree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disagreement {
    /// Drop the record from downstream metrics.
    #[default]
    Exclude,
    /// Label it incorrect (logical AND of the two verdicts).
    And,
}

/// How judge ratings become binary accuracy labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LabelPolicy {
    Single(JudgeThreshold),
    Consensus {
        first: JudgeThreshold,
        second: JudgeThreshold,
        #[serde(default)]
        on_disagreement: Disagreement,
    },
}

impl LabelPolicy {
    /// Parses `single:JUDGE:T` or `consensus:JUDGE_A:T_A,JUDGE_B:T_B[,and]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad label policy {spec:?}"));
        let judge = |s: &str| -> Result<JudgeThreshold> {
            let (name, t) = s.rsplit_once(':').ok_or_else(bad)?;
            let threshold = t.parse::<f64>().map_err(|_| bad())?;
            Ok(JudgeThreshold::new(name, threshold))
        };
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        match kind {
            "single" => Ok(LabelPolicy::Single(judge(rest)?)),
            "consensus" => {
                let parts: Vec<&str> = rest.split(',').collect();
                let on_disagreement = match parts.get(2).copied() {
                    None | Some("exclude") => Disagreement::Exclude,
                    Some("and") => Disagreement::And,
                    Some(_) => return Err(bad()),
                };
                if parts.len() < 2 || parts.len() > 3 {
                    return Err(bad());
                }
                Ok(LabelPolicy::Consensus {
                    first: judge(parts[0])?,
                    second: judge(parts[1])?,
                    on_disagreement,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Records with labels set, plus the ids dropped for judge disagreement.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub records: Vec<GenerationRecord>,
    pub excluded: Vec<String>,
}

/// Thresholds judge ratings into `accuracy`, preserving record order.
pub fn merge_ratings(records: Vec<GenerationRecord>, policy: &LabelPolicy) -> Result<MergeOutcome> {
    let mut kept = Vec::with_capacity(records.len());
    let mut excluded = Vec::new();
    for mut r in records {
        let label = match policy {
            LabelPolicy::Single(j) => Some(j.verdict(&r)?),
            LabelPolicy::Consensus {
                first,
                second,
                on_disagreement,
            } => {
                let (a, b) = (first.verdict(&r)?, second.verdict(&r)?);
                match (a == b, on_disagreement) {
                    (true, _) => Some(a),
                    (false, Disagreement::And) => Some(false),
                    (false, Disagreement::Exclude) => None,
                }
            }
        };
        match label {
            Some(l) => {
                r.accuracy = Some(l);
                kept.push(r);
            }
            None => excluded.push(r.id),
        }
    }
    Ok(MergeOutcome {
        records: kept,
        excluded,
    })
}

/// One line of a judge rating file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEntry {
    pub id: String,
    pub judge: String,
    pub rating: f64,
}

/// Reads a JSONL rating file (`{"id":..,"judge":..,"rating":..}` per line)
/// into the matching records' `ratings` maps. Returns the number of entries
/// applied; ratings for unknown ids are an error.
pub fn apply_rating_file(records: &mut [GenerationRecord], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let index: BTreeMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    let mut applied = 0;
    for item in numbered_lines(BufReader::new(file)) {
        let (line, text) = item?;
        let entry: RatingEntry = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&entry.rating) {
            return Err(Error::Parse {
                line,
                message: format!("rating {} outside [0, 1]", entry.rating),
            });
        }
        let &i = index.get(&entry.id).ok_or_else(|| Error::Parse {
            line,
            message: format!("rating for unknown record {:?}", entry.id),
        })?;
        records[i].ratings.insert(entry.judge, entry.rating);
        applied += 1;
    }
    Ok(applied)
}

/// Writes any serializable artifact as pretty JSON.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
