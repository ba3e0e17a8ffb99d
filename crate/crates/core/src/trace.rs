//! Coding vocabulary and the two-level coding of raw trace events:
//! trace events become learning actions through an [`ActionLibrary`], and
//! action streams become self-regulated-learning process codes through a
//! [`ProcessLibrary`].
//!
//! Both libraries are plain JSON so a study can swap in its own rules. The
//! defaults shipped under `assets/` realize the seven process codes plus the
//! `CHATGPT` label.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label assigned to anything no rule accounts for.
pub const NOT_RECOGNIZED: &str = "NOT_RECOGNIZED";

const DEFAULT_ACTION_LIBRARY: &str = include_str!("../assets/action_library.json");
const DEFAULT_PROCESS_LIBRARY: &str = include_str!("../assets/process_library.json");

/// One logged interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub learner_id: String,
    pub timestamp_ms: u64,
    pub event_kind: String,
    pub detail: String,
}

/// Process code alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcessCode {
    #[serde(rename = "MCO")]
    Mco,
    #[serde(rename = "MCP")]
    Mcp,
    #[serde(rename = "MCE")]
    Mce,
    #[serde(rename = "MCM")]
    Mcm,
    #[serde(rename = "LCF")]
    Lcf,
    #[serde(rename = "LCR")]
    Lcr,
    #[serde(rename = "HCEO")]
    Hceo,
    #[serde(rename = "CHATGPT")]
    Chatgpt,
    #[serde(rename = "NOT_RECOGNIZED")]
    NotRecognized,
    /// Missing value in a pre-coded export (`nan` / empty cell).
    #[serde(rename = "nan")]
    Missing,
}

impl ProcessCode {
    /// The eight informative codes, in the order used as the default HMM alphabet.
    pub const INFORMATIVE: [ProcessCode; 8] = [
        ProcessCode::Mco,
        ProcessCode::Mcp,
        ProcessCode::Mce,
        ProcessCode::Mcm,
        ProcessCode::Lcf,
        ProcessCode::Lcr,
        ProcessCode::Hceo,
        ProcessCode::Chatgpt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProcessCode::Mco => "MCO",
            ProcessCode::Mcp => "MCP",
            ProcessCode::Mce => "MCE",
            ProcessCode::Mcm => "MCM",
            ProcessCode::Lcf => "LCF",
            ProcessCode::Lcr => "LCR",
            ProcessCode::Hceo => "HCEO",
            ProcessCode::Chatgpt => "CHATGPT",
            ProcessCode::NotRecognized => NOT_RECOGNIZED,
            ProcessCode::Missing => "nan",
        }
    }

    pub fn is_informative(self) -> bool {
        !matches!(self, ProcessCode::NotRecognized | ProcessCode::Missing)
    }
}

impl fmt::Display for ProcessCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcessCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = match s.trim() {
            "MCO" => ProcessCode::Mco,
            "MCP" => ProcessCode::Mcp,
            "MCE" => ProcessCode::Mce,
            "MCM" => ProcessCode::Mcm,
            "LCF" => ProcessCode::Lcf,
            "LCR" => ProcessCode::Lcr,
            "HCEO" => ProcessCode::Hceo,
            "CHATGPT" => ProcessCode::Chatgpt,
            NOT_RECOGNIZED => ProcessCode::NotRecognized,
            "" | "nan" | "NaN" | "NAN" => ProcessCode::Missing,
            other => {
                return Err(Error::validation(
                    "process code",
                    format!("unknown process code {other:?}"),
                ))
            }
        };
        Ok(code)
    }
}

/// One learner's stream of learning actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub learner_id: String,
    pub actions: Vec<String>,
}

/// One learner's stream of process codes (the observed sequence).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSequence {
    pub learner_id: String,
    pub codes: Vec<ProcessCode>,
}

impl ProcessSequence {
    pub fn new(learner_id: impl Into<String>, codes: Vec<ProcessCode>) -> Self {
        Self {
            learner_id: learner_id.into(),
            codes,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionRuleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    event_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detail_equals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detail_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detail_regex: Option<String>,
    action: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionLibrarySpec {
    actions: Vec<String>,
    rules: Vec<ActionRuleSpec>,
}

#[derive(Debug, Clone)]
struct ActionRule {
    event_kind: Option<String>,
    detail_equals: Option<String>,
    detail_contains: Option<String>,
    detail_regex: Option<Regex>,
    action: String,
}

impl ActionRule {
    fn matches(&self, record: &TraceRecord) -> bool {
        self.event_kind
            .as_deref()
            .is_none_or(|k| k == record.event_kind)
            && self
                .detail_equals
                .as_deref()
                .is_none_or(|d| d == record.detail)
            && self
                .detail_contains
                .as_deref()
                .is_none_or(|d| record.detail.contains(d))
            && self
                .detail_regex
                .as_ref()
                .is_none_or(|re| re.is_match(&record.detail))
    }
}

/// Ordered first-match rules from trace events to action labels.
#[derive(Debug, Clone)]
pub struct ActionLibrary {
    actions: Vec<String>,
    rules: Vec<ActionRule>,
}

impl ActionLibrary {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ActionLibrarySpec =
            serde_json::from_str(json).map_err(|e| Error::Library(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The bundled default library (17 actions).
    pub fn default_library() -> Self {
        Self::from_json(DEFAULT_ACTION_LIBRARY).expect("bundled action library is valid")
    }

    fn from_spec(spec: ActionLibrarySpec) -> Result<Self> {
        let mut declared = HashSet::new();
        for label in &spec.actions {
            if label == NOT_RECOGNIZED {
                return Err(Error::Library(format!(
                    "{NOT_RECOGNIZED} is the implicit fallback and must not be declared"
                )));
            }
            if !declared.insert(label.as_str()) {
                return Err(Error::Library(format!("action {label:?} declared twice")));
            }
        }
        let mut rules = Vec::with_capacity(spec.rules.len());
        for (i, rule) in spec.rules.into_iter().enumerate() {
            if !declared.contains(rule.action.as_str()) {
                return Err(Error::Library(format!(
                    "rule {i} maps to undeclared action {:?}",
                    rule.action
                )));
            }
            if rule.event_kind.is_none()
                && rule.detail_equals.is_none()
                && rule.detail_contains.is_none()
                && rule.detail_regex.is_none()
            {
                return Err(Error::Library(format!("rule {i} has no match predicate")));
            }
            let detail_regex = rule
                .detail_regex
                .as_deref()
                .map(Regex::new)
                .transpose()
                .map_err(|e| Error::Library(format!("rule {i}: {e}")))?;
            rules.push(ActionRule {
                event_kind: rule.event_kind,
                detail_equals: rule.detail_equals,
                detail_contains: rule.detail_contains,
                detail_regex,
                action: rule.action,
            });
        }
        Ok(Self {
            actions: spec.actions,
            rules,
        })
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn label(&self, record: &TraceRecord) -> &str {
        self.rules
            .iter()
            .find(|r| r.matches(record))
            .map_or(NOT_RECOGNIZED, |r| r.action.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessRuleSpec {
    pattern: Vec<String>,
    code: ProcessCode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessLibrarySpec {
    rules: Vec<ProcessRuleSpec>,
}

/// Rules from action n-grams to process codes, matched greedily left to
/// right with the longest pattern first.
#[derive(Debug, Clone)]
pub struct ProcessLibrary {
    /// Pattern lengths, longest first.
    lengths: Vec<usize>,
    by_pattern: HashMap<Vec<String>, ProcessCode>,
}

impl ProcessLibrary {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ProcessLibrarySpec =
            serde_json::from_str(json).map_err(|e| Error::Library(e.to_string()))?;
        Self::from_rules(spec.rules.into_iter().map(|r| (r.pattern, r.code)))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn default_library() -> Self {
        Self::from_json(DEFAULT_PROCESS_LIBRARY).expect("bundled process library is valid")
    }

    pub fn from_rules<I>(rules: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<String>, ProcessCode)>,
    {
        let mut by_pattern = HashMap::new();
        let mut lengths = Vec::new();
        for (i, (pattern, code)) in rules.into_iter().enumerate() {
            if pattern.is_empty() {
                return Err(Error::Library(format!("rule {i} has an empty pattern")));
            }
            if code == ProcessCode::Missing {
                return Err(Error::Library(format!("rule {i} emits the missing marker")));
            }
            if !lengths.contains(&pattern.len()) {
                lengths.push(pattern.len());
            }
            if by_pattern.insert(pattern.clone(), code).is_some() {
                // Two rules on the same window: first-match would silently hide one.
                return Err(Error::Library(format!(
                    "rule {i} repeats pattern {pattern:?}; equal-length patterns must be distinct"
                )));
            }
        }
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self {
            lengths,
            by_pattern,
        })
    }

    pub fn max_pattern_len(&self) -> usize {
        self.lengths.first().copied().unwrap_or(0)
    }
}

/// Label each record of one learner. Records are stably sorted by timestamp
/// first, so equal timestamps keep their input order.
pub fn code_actions(records: &[TraceRecord], lib: &ActionLibrary) -> ActionSequence {
    let mut ordered: Vec<&TraceRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.timestamp_ms);
    ActionSequence {
        learner_id: records
            .first()
            .map(|r| r.learner_id.clone())
            .unwrap_or_default(),
        actions: ordered.iter().map(|r| lib.label(r).to_string()).collect(),
    }
}

/// Turn an action stream into process codes. Each matched window emits one
/// code; an action that starts no window emits `NOT_RECOGNIZED`.
pub fn code_processes(actions: &ActionSequence, lib: &ProcessLibrary) -> ProcessSequence {
    let stream = &actions.actions;
    let mut codes = Vec::with_capacity(stream.len());
    let mut pos = 0;
    'outer: while pos < stream.len() {
        for &len in &lib.lengths {
            if pos + len > stream.len() {
                continue;
            }
            if let Some(&code) = lib.by_pattern.get(&stream[pos..pos + len]) {
                codes.push(code);
                pos += len;
                continue 'outer;
            }
        }
        codes.push(ProcessCode::NotRecognized);
        pos += 1;
    }
    ProcessSequence::new(actions.learner_id.clone(), codes)
}

/// Group records by learner (sorted by learner id) and code each group.
pub fn code_cohort(
    records: &[TraceRecord],
    actions: &ActionLibrary,
    processes: &ProcessLibrary,
) -> Vec<ProcessSequence> {
    group_by_learner(records)
        .into_values()
        .map(|group| code_processes(&code_actions(&group, actions), processes))
        .collect()
}

pub fn group_by_learner(records: &[TraceRecord]) -> BTreeMap<String, Vec<TraceRecord>> {
    let mut groups: BTreeMap<String, Vec<TraceRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry(r.learner_id.clone())
            .or_default()
            .push(r.clone());
    }
    groups
}

fn ingest_error(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn required<'a>(
    record: &'a csv::StringRecord,
    idx: usize,
    name: &str,
    path: &str,
    line: u64,
) -> Result<&'a str> {
    match record.get(idx) {
        Some(v) if !v.trim().is_empty() || name == "detail" => Ok(v),
        _ => Err(ingest_error(path, line, format!("missing field `{name}`"))),
    }
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], path: &str) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(ingest_error(
            path,
            1,
            format!(
                "expected header {}, found {}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader)
}

/// Read a `learner_id,timestamp_ms,event_kind,detail` trace CSV.
pub fn read_trace_csv<R: Read>(reader: R, source: &str) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv_reader(reader);
    check_header(
        rdr.headers()?,
        &["learner_id", "timestamp_ms", "event_kind", "detail"],
        source,
    )?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(ingest_error(
                source,
                line,
                format!("expected 4 fields, found {}", row.len()),
            ));
        }
        let learner_id = required(&row, 0, "learner_id", source, line)?;
        let ts = required(&row, 1, "timestamp_ms", source, line)?;
        let timestamp_ms: u64 = ts.trim().parse().map_err(|_| {
            ingest_error(
                source,
                line,
                format!("timestamp_ms {ts:?} is not a nonnegative integer"),
            )
        })?;
        out.push(TraceRecord {
            learner_id: learner_id.to_string(),
            timestamp_ms,
            event_kind: required(&row, 2, "event_kind", source, line)?.to_string(),
            detail: required(&row, 3, "detail", source, line)?.to_string(),
        });
    }
    Ok(out)
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace_csv(file, &path.display().to_string())
}

/// `(seq_index, value, line)` rows per learner.
type IndexedRows = BTreeMap<String, Vec<(u64, String, u64)>>;

/// Rows of a pre-coded `learner_id,seq_index,<value>` CSV, grouped per
/// learner and ordered by `seq_index` (ties keep file order).
fn read_indexed_csv<R: Read>(reader: R, source: &str, value_column: &str) -> Result<IndexedRows> {
    let mut rdr = csv_reader(reader);
    check_header(
        rdr.headers()?,
        &["learner_id", "seq_index", value_column],
        source,
    )?;
    let mut groups: BTreeMap<String, Vec<(u64, String, u64)>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(ingest_error(
                source,
                line,
                format!("expected 3 fields, found {}", row.len()),
            ));
        }
        let learner_id = required(&row, 0, "learner_id", source, line)?;
        let idx = required(&row, 1, "seq_index", source, line)?;
        let seq_index: u64 = idx.trim().parse().map_err(|_| {
            ingest_error(
                source,
                line,
                format!("seq_index {idx:?} is not a nonnegative integer"),
            )
        })?;
        let value = row.get(2).unwrap_or("").trim().to_string();
        groups
            .entry(learner_id.to_string())
            .or_default()
            .push((seq_index, value, line));
    }
    for rows in groups.values_mut() {
        rows.sort_by_key(|r| r.0);
    }
    Ok(groups)
}

/// Read a pre-coded `learner_id,seq_index,process_code` CSV. Empty cells and
/// `nan` become [`ProcessCode::Missing`].
pub fn read_process_csv<R: Read>(reader: R, source: &str) -> Result<Vec<ProcessSequence>> {
    read_indexed_csv(reader, source, "process_code")?
        .into_iter()
        .map(|(learner_id, rows)| {
            let codes = rows
                .into_iter()
                .map(|(_, v, line)| {
                    v.parse::<ProcessCode>()
                        .map_err(|e| ingest_error(source, line, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ProcessSequence::new(learner_id, codes))
        })
        .collect()
}

/// Read a pre-coded `learner_id,seq_index,action` CSV.
pub fn read_action_csv<R: Read>(reader: R, source: &str) -> Result<Vec<ActionSequence>> {
    Ok(read_indexed_csv(reader, source, "action")?
        .into_iter()
        .map(|(learner_id, rows)| ActionSequence {
            learner_id,
            actions: rows
                .into_iter()
                .map(|(_, v, _)| {
                    if v.is_empty() {
                        NOT_RECOGNIZED.to_string()
                    } else {
                        v
                    }
                })
                .collect(),
        })
        .collect())
}

pub fn write_process_csv<W: std::io::Write>(
    writer: W,
    sequences: &[ProcessSequence],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["learner_id", "seq_index", "process_code"])?;
    for seq in sequences {
        for (i, code) in seq.codes.iter().enumerate() {
            w.write_record([seq.learner_id.as_str(), &i.to_string(), code.as_str()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<process csv>", e))?;
    Ok(())
}

pub fn write_trace_csv<W: std::io::Write>(writer: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["learner_id", "timestamp_ms", "event_kind", "detail"])?;
    for r in records {
        w.write_record([
            r.learner_id.as_str(),
            &r.timestamp_ms.to_string(),
            &r.event_kind,
            &r.detail,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(learner: &str, ts: u64, kind: &str, detail: &str) -> TraceRecord {
        TraceRecord {
            learner_id: learner.into(),
            timestamp_ms: ts,
            event_kind: kind.into(),
            detail: detail.into(),
        }
    }

    fn timer_library() -> ActionLibrary {
        ActionLibrary::from_json(
            r#"{"actions": ["TIMER", "WRITE_ESSAY", "CHATGPT_PROMPT"],
                "rules": [
                    {"event_kind": "keystroke", "detail_contains": "essay", "action": "WRITE_ESSAY"},
                    {"detail_regex": "(?i)chatgpt", "action": "CHATGPT_PROMPT"},
                    {"detail_contains": "TIMER", "action": "TIMER"}
                ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn timer_click_is_labelled_timer() {
        let seq = code_actions(&[rec("a", 0, "click", "TIMER click")], &timer_library());
        assert_eq!(seq.actions, vec!["TIMER"]);
    }

    #[test]
    fn unmatched_record_falls_back() {
        let seq = code_actions(&[rec("a", 0, "scroll", "sidebar")], &timer_library());
        assert_eq!(seq.actions, vec![NOT_RECOGNIZED]);
    }

    #[test]
    fn labels_follow_timestamps_not_rules() {
        // Rule 3 fires on the earlier record, rule 1 on the later one.
        let records = [
            rec("a", 20, "keystroke", "essay body"),
            rec("a", 10, "click", "TIMER"),
        ];
        let seq = code_actions(&records, &timer_library());
        assert_eq!(seq.actions, vec!["TIMER", "WRITE_ESSAY"]);
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let records = [
            rec("a", 5, "click", "ChatGPT send"),
            rec("a", 5, "click", "TIMER"),
        ];
        let seq = code_actions(&records, &timer_library());
        assert_eq!(seq.actions, vec!["CHATGPT_PROMPT", "TIMER"]);
    }

    #[test]
    fn empty_records_give_empty_sequence() {
        let seq = code_actions(&[], &timer_library());
        assert!(seq.actions.is_empty());
    }

    fn actions(labels: &[&str]) -> ActionSequence {
        ActionSequence {
            learner_id: "a".into(),
            actions: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn lib(rules: &[(&[&str], ProcessCode)]) -> ProcessLibrary {
        ProcessLibrary::from_rules(
            rules
                .iter()
                .map(|(p, c)| (p.iter().map(|s| s.to_string()).collect(), *c)),
        )
        .unwrap()
    }

    #[test]
    fn timer_maps_to_monitoring() {
        let lib = lib(&[(&["TIMER"], ProcessCode::Mcm)]);
        assert_eq!(
            code_processes(&actions(&["TIMER"]), &lib).codes,
            vec![ProcessCode::Mcm]
        );
    }

    #[test]
    fn chatgpt_prompt_maps_to_chatgpt() {
        let lib = lib(&[(&["CHATGPT_PROMPT"], ProcessCode::Chatgpt)]);
        let out = code_processes(&actions(&["CHATGPT_PROMPT"]), &lib);
        assert_eq!(out.codes, vec![ProcessCode::Chatgpt]);
    }

    #[test]
    fn empty_actions_give_empty_processes() {
        let lib = lib(&[(&["TIMER"], ProcessCode::Mcm)]);
        assert!(code_processes(&actions(&[]), &lib).codes.is_empty());
    }

    #[test]
    fn longest_pattern_wins() {
        let lib = lib(&[
            (&["RUBRIC"], ProcessCode::Mco),
            (&["WRITE"], ProcessCode::Hceo),
            (&["RUBRIC", "WRITE"], ProcessCode::Mce),
        ]);
        let out = code_processes(&actions(&["RUBRIC", "WRITE", "WRITE", "X", "RUBRIC"]), &lib);
        assert_eq!(
            out.codes,
            vec![
                ProcessCode::Mce,
                ProcessCode::Hceo,
                ProcessCode::NotRecognized,
                ProcessCode::Mco
            ]
        );
    }

    #[test]
    fn duplicate_patterns_are_rejected() {
        let err = ProcessLibrary::from_rules(vec![
            (vec!["A".to_string(), "B".to_string()], ProcessCode::Mco),
            (vec!["A".to_string(), "B".to_string()], ProcessCode::Mcp),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Library(_)));
    }

    #[test]
    fn library_validation() {
        assert!(ActionLibrary::from_json(
            r#"{"actions": ["A"], "rules": [{"detail_contains": "x", "action": "B"}]}"#
        )
        .is_err());
        assert!(
            ActionLibrary::from_json(r#"{"actions": ["A"], "rules": [{"action": "A"}]}"#).is_err()
        );
        assert!(ActionLibrary::from_json(r#"{"actions": ["A", "A"], "rules": []}"#).is_err());
        assert!(
            ProcessLibrary::from_json(r#"{"rules": [{"pattern": [], "code": "MCO"}]}"#).is_err()
        );
        assert!(
            ProcessLibrary::from_json(r#"{"rules": [{"pattern": ["A"], "code": "XYZ"}]}"#).is_err()
        );
    }

    #[test]
    fn default_libraries_cover_every_informative_code() {
        let actions = ActionLibrary::default_library();
        assert_eq!(actions.actions().len(), 17);
        let procs = ProcessLibrary::default_library();
        let mut emitted: HashSet<ProcessCode> = procs.by_pattern.values().copied().collect();
        emitted.remove(&ProcessCode::NotRecognized);
        assert_eq!(emitted, ProcessCode::INFORMATIVE.into_iter().collect());
    }

    #[test]
    fn trace_csv_reports_line_of_malformed_record() {
        let text = "learner_id,timestamp_ms,event_kind,detail\n\
                    a,1,click,TIMER\n\
                    b,,click,TIMER\n";
        match read_trace_csv(text.as_bytes(), "t.csv").unwrap_err() {
            Error::Ingest { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("timestamp_ms"));
            }
            e => panic!("unexpected {e}"),
        }
        let short = "learner_id,timestamp_ms,event_kind,detail\na,1,click\n";
        assert!(matches!(
            read_trace_csv(short.as_bytes(), "t.csv").unwrap_err(),
            Error::Ingest { line: 2, .. }
        ));
        let negative = "learner_id,timestamp_ms,event_kind,detail\na,-4,click,x\n";
        assert!(read_trace_csv(negative.as_bytes(), "t.csv").is_err());
    }

    #[test]
    fn trace_csv_accepts_quoted_fields() {
        let text =
            "learner_id,timestamp_ms,event_kind,detail\n\"s,1\",7,click,\"TIMER, top bar\"\n";
        let recs = read_trace_csv(text.as_bytes(), "t.csv").unwrap();
        assert_eq!(recs[0].learner_id, "s,1");
        assert_eq!(recs[0].detail, "TIMER, top bar");
    }

    #[test]
    fn process_csv_orders_by_index_and_reads_nan() {
        let text = "learner_id,seq_index,process_code\nb,1,HCEO\nb,0,nan\na,0,MCO\n";
        let seqs = read_process_csv(text.as_bytes(), "p.csv").unwrap();
        assert_eq!(seqs[0], ProcessSequence::new("a", vec![ProcessCode::Mco]));
        assert_eq!(
            seqs[1],
            ProcessSequence::new("b", vec![ProcessCode::Missing, ProcessCode::Hceo])
        );
        let bad = "learner_id,seq_index,process_code\na,0,XYZ\n";
        assert!(matches!(
            read_process_csv(bad.as_bytes(), "p.csv").unwrap_err(),
            Error::Ingest { line: 2, .. }
        ));
    }
}
