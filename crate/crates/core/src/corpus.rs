//! Trace corpora: loading, validation, stats, and training-view rendering.
//!
//! A corpus is a UTF-8 JSONL file with one [`TraceRecord`] per line. Unknown
//! fields are preserved across load/save round-trips. Token counts are taken
//! from the file when present; otherwise they are filled with the whitespace
//! token count and flagged approximate.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// System text of the standard evaluation prompt.
pub const DEFAULT_SYSTEM_TEXT: &str =
    "Please reason step by step, and put your final answer within $\\boxed{}$.";

/// One (question, response) sample — the universal corpus row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub question: String,
    pub response: String,
    pub gold_answer: String,
    #[serde(default)]
    pub sample_index: u32,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<u8>,
    pub token_count: Option<u64>,
    pub token_count_exact: bool,
    /// Unknown fields, preserved on round-trip.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl TraceRecord {
    /// Minimal constructor for programmatic corpora.
    pub fn new(id: impl Into<String>, question: impl Into<String>, response: impl Into<String>, gold_answer: impl Into<String>) -> Self {
        TraceRecord {
            id: id.into(),
            question: question.into(),
            response: response.into(),
            gold_answer: gold_answer.into(),
            sample_index: 0,
            model: String::new(),
            dataset: String::new(),
            difficulty: None,
            token_count: None,
            token_count_exact: false,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_sample_index(mut self, idx: u32) -> Self {
        self.sample_index = idx;
        self
    }

    /// Token count plus an exactness flag; falls back to the whitespace
    /// tokenization of the response.
    pub fn token_count_or_approx(&self) -> (u64, bool) {
        match self.token_count {
            Some(n) => (n, self.token_count_exact),
            None => (whitespace_token_count(&self.response), false),
        }
    }
}

/// Whitespace tokenization used whenever the original tokenizer is absent.
pub fn whitespace_token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Raw deserialization shape: distinguishes "absent" from "supplied" for the
/// token fields so the loader can apply the fill rule.
#[derive(Deserialize)]
struct RawRecord {
    id: String,
    question: String,
    response: String,
    gold_answer: String,
    #[serde(default)]
    sample_index: u32,
    #[serde(default)]
    model: String,
    #[serde(default)]
    dataset: String,
    #[serde(default)]
    difficulty: Option<u8>,
    #[serde(default)]
    token_count: Option<u64>,
    #[serde(default)]
    token_count_exact: Option<bool>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

impl RawRecord {
    fn validate(self, line: usize, issues: &mut Vec<(usize, String)>) -> Option<TraceRecord> {
        if self.id.is_empty() {
            issues.push((line, "id must be nonempty".into()));
            return None;
        }
        if let Some(d) = self.difficulty {
            if !(1..=5).contains(&d) {
                issues.push((line, format!("difficulty {d} outside 1..=5")));
                return None;
            }
        }
        let (token_count, token_count_exact) = match (self.token_count, self.token_count_exact) {
            (None, _) => (Some(whitespace_token_count(&self.response)), false),
            (Some(n), None) => (Some(n), true),
            (Some(n), Some(e)) => (Some(n), e),
        };
        Some(TraceRecord {
            id: self.id,
            question: self.question,
            response: self.response,
            gold_answer: self.gold_answer,
            sample_index: self.sample_index,
            model: self.model,
            dataset: self.dataset,
            difficulty: self.difficulty,
            token_count,
            token_count_exact,
            extra: self.extra,
        })
    }
}

/// Load and validate a JSONL corpus.
///
/// Every malformed line is reported with its 1-based line number; any issue
/// fails the load. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut issues: Vec<(usize, String)> = Vec::new();
    let mut seen: HashSet<(String, u32)> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(&line) {
            Ok(raw) => {
                if let Some(record) = raw.validate(line_no, &mut issues) {
                    let key = (record.id.clone(), record.sample_index);
                    if !seen.insert(key) {
                        issues.push((
                            line_no,
                            format!(
                                "duplicate (id, sample_index) = ({}, {})",
                                record.id, record.sample_index
                            ),
                        ));
                    } else {
                        records.push(record);
                    }
                }
            }
            Err(e) => issues.push((line_no, e.to_string())),
        }
    }
    if !issues.is_empty() {
        return Err(Error::Schema(issues));
    }
    Ok(records)
}

/// Write a corpus as JSONL.
pub fn save_corpus(path: impl AsRef<Path>, records: &[TraceRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// A training example rendered from a record.
///
/// `loss_span` is a half-open index range over whitespace tokens of
/// `target_text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedExample {
    pub prompt_text: String,
    pub target_text: String,
    pub loss_span: (usize, usize),
}

/// Render the standard supervised view: the three-role chat prompt followed
/// by the response as the loss target.
pub fn render_sft(record: &TraceRecord, system_text: &str) -> Result<RenderedExample> {
    if record.question.is_empty() {
        return Err(Error::InvalidInput(format!(
            "record {}: question is empty, cannot render supervised view",
            record.id
        )));
    }
    let prompt_text = format!(
        "System: {system_text}\nUser: {}\nAssistant: ",
        record.question
    );
    let n = whitespace_token_count(&record.response) as usize;
    Ok(RenderedExample {
        prompt_text,
        target_text: record.response.clone(),
        loss_span: (0, n),
    })
}

/// Render the question-free view: no prompt, no template scaffolding, loss
/// over every response token.
pub fn render_qfft(record: &TraceRecord) -> Result<RenderedExample> {
    if record.response.is_empty() {
        return Err(Error::InvalidInput(format!(
            "record {}: response is empty, cannot render question-free view",
            record.id
        )));
    }
    let n = whitespace_token_count(&record.response) as usize;
    Ok(RenderedExample {
        prompt_text: String::new(),
        target_text: record.response.clone(),
        loss_span: (0, n),
    })
}

/// Summary statistics over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub record_count: usize,
    pub question_count: usize,
    pub mean_response_tokens: Real,
    /// Histogram: samples-per-question -> number of questions.
    pub samples_per_question: BTreeMap<usize, usize>,
}

/// Compute [`CorpusStats`]; empty input yields zeros.
pub fn corpus_stats(records: &[TraceRecord]) -> CorpusStats {
    let mut per_question: BTreeMap<&str, usize> = BTreeMap::new();
    let mut token_sum: u64 = 0;
    for r in records {
        *per_question.entry(r.id.as_str()).or_insert(0) += 1;
        token_sum += r.token_count_or_approx().0;
    }
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for &count in per_question.values() {
        *histogram.entry(count).or_insert(0) += 1;
    }
    CorpusStats {
        record_count: records.len(),
        question_count: per_question.len(),
        mean_response_tokens: if records.is_empty() {
            0.0
        } else {
            token_sum as Real / records.len() as Real
        },
        samples_per_question: histogram,
    }
}

/// Export row for rendered training examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderedRow {
    pub prompt: String,
    pub target: String,
    pub loss_start: usize,
    pub loss_end: usize,
}

impl From<RenderedExample> for RenderedRow {
    fn from(e: RenderedExample) -> Self {
        RenderedRow {
            prompt: e.prompt_text,
            target: e.target_text,
            loss_start: e.loss_span.0,
            loss_end: e.loss_span.1,
        }
    }
}

/// Write rendered examples as JSONL.
pub fn save_rendered(path: impl AsRef<Path>, rows: &[RenderedRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(f.path(), body).unwrap();
        f
    }

    #[test]
    fn empty_file_loads_empty() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let records = load_corpus(f.path()).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn well_formed_lines_fill_token_counts() {
        let f = write_lines(&[
            r#"{"id":"q1","question":"1+1?","response":"the answer is 2","gold_answer":"2"}"#,
            r#"{"id":"q2","question":"2+2?","response":"4","gold_answer":"4","sample_index":1}"#,
            r#"{"id":"q3","question":"3+3?","response":"6","gold_answer":"6","token_count":9}"#,
        ]);
        let records = load_corpus(f.path()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].token_count, Some(4));
        assert!(!records[0].token_count_exact);
        assert_eq!(records[2].token_count, Some(9));
        assert!(records[2].token_count_exact, "supplied counts default to exact");
    }

    #[test]
    fn duplicate_key_reports_line() {
        let f = write_lines(&[
            r#"{"id":"q1","question":"a","response":"r","gold_answer":"g"}"#,
            r#"{"id":"q1","question":"a","response":"r","gold_answer":"g"}"#,
        ]);
        let err = load_corpus(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "error should name the line: {msg}");
        assert!(msg.contains("duplicate"));
    }

    #[test]
    fn malformed_line_reports_line() {
        let f = write_lines(&[
            r#"{"id":"q1","question":"a","response":"r","gold_answer":"g"}"#,
            r#"{"id":"q2","question":"a"}"#,
        ]);
        let err = load_corpus(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(err.is_input_error());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_corpus("/nonexistent/file.jsonl").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let f = write_lines(&[
            r#"{"id":"q1","question":"a","response":"r","gold_answer":"g","origin":"unit-test","weird":[1,2]}"#,
        ]);
        let records = load_corpus(f.path()).unwrap();
        assert_eq!(records[0].extra["origin"], "unit-test");
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(out.path(), &records).unwrap();
        let reloaded = load_corpus(out.path()).unwrap();
        assert_eq!(records, reloaded);
    }

    #[test]
    fn second_generation_serialization_is_stable() {
        let f = write_lines(&[
            r#"{"id":"q1","question":"a","response":"two words","gold_answer":"g","origin":"x"}"#,
        ]);
        let records = load_corpus(f.path()).unwrap();
        let out1 = tempfile::NamedTempFile::new().unwrap();
        save_corpus(out1.path(), &records).unwrap();
        let reloaded = load_corpus(out1.path()).unwrap();
        let out2 = tempfile::NamedTempFile::new().unwrap();
        save_corpus(out2.path(), &reloaded).unwrap();
        let bytes1 = std::fs::read(out1.path()).unwrap();
        let bytes2 = std::fs::read(out2.path()).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn sft_render_uses_chat_layout() {
        let record = TraceRecord::new("q1", "1+1?", "2", "2");
        let rendered = render_sft(&record, DEFAULT_SYSTEM_TEXT).unwrap();
        assert!(rendered.prompt_text.contains("Please reason step by step"));
        assert!(rendered.prompt_text.contains("User: 1+1?"));
        assert_eq!(rendered.target_text, "2");
        assert_eq!(rendered.loss_span, (0, 1));
    }

    #[test]
    fn sft_loss_span_length_equals_target_tokens() {
        let record = TraceRecord::new("q1", "q", "three token reply", "x");
        let rendered = render_sft(&record, "sys").unwrap();
        assert_eq!(
            rendered.loss_span.1 - rendered.loss_span.0,
            whitespace_token_count(&rendered.target_text) as usize
        );
    }

    #[test]
    fn sft_empty_question_errors() {
        let record = TraceRecord::new("q1", "", "r", "g");
        assert!(render_sft(&record, "sys").is_err());
    }

    #[test]
    fn qfft_render_has_no_prompt_and_full_span() {
        let record = TraceRecord::new("q1", "x?", "a b c", "g");
        let rendered = render_qfft(&record).unwrap();
        assert_eq!(rendered.prompt_text, "");
        assert_eq!(rendered.loss_span, (0, 3));
    }

    #[test]
    fn qfft_render_is_question_independent() {
        let with_q = TraceRecord::new("q1", "x?", "a b c", "g");
        let mut without_q = with_q.clone();
        without_q.question = String::new();
        assert_eq!(render_qfft(&with_q).unwrap(), render_qfft(&without_q).unwrap());
    }

    #[test]
    fn qfft_empty_response_errors() {
        let record = TraceRecord::new("q1", "x?", "", "g");
        assert!(render_qfft(&record).is_err());
    }

    #[test]
    fn stats_empty() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.record_count, 0);
        assert_eq!(stats.question_count, 0);
    }

    #[test]
    fn stats_sixteen_samples_one_question() {
        let records: Vec<TraceRecord> = (0..16)
            .map(|i| TraceRecord::new("q1", "q", "r", "g").with_sample_index(i))
            .collect();
        let stats = corpus_stats(&records);
        assert_eq!(stats.question_count, 1);
        assert_eq!(stats.samples_per_question, BTreeMap::from([(16, 1)]));
    }

    #[test]
    fn stats_histogram_two_questions() {
        // Hand count: 2 ids with 3 and 5 samples -> histogram {3:1, 5:1}.
        let mut records = Vec::new();
        for i in 0..3 {
            records.push(TraceRecord::new("a", "q", "r", "g").with_sample_index(i));
        }
        for i in 0..5 {
            records.push(TraceRecord::new("b", "q", "r", "g").with_sample_index(i));
        }
        let stats = corpus_stats(&records);
        assert_eq!(stats.samples_per_question, BTreeMap::from([(3, 1), (5, 1)]));
        let total: usize = stats
            .samples_per_question
            .iter()
            .map(|(k, v)| k * v)
            .sum();
        assert_eq!(total, stats.record_count);
    }
}
