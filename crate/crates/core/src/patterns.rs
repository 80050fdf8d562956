//! Short/Long CoT pattern classification and reflective-behavior analysis.
//!
//! A response is Long iff a reflective marker ("wait" by default) occurs as a
//! whole word, case-insensitively. The first marker occurrence is the
//! boundary between the initial concise segment and the reflective segment;
//! the rule engine classifies the surrounding sentence window into one of
//! four behaviors, abstaining when no keyword fires (abstentions may be
//! routed to an external judge, see [`crate::inference`]).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Pattern label for one response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternLabel {
    Short,
    Long,
}

/// Reflective-behavior category. `Abstain` means the rule engine scored zero
/// hits in every category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Verification,
    Backtracking,
    SubgoalSetting,
    BackwardChaining,
    Abstain,
}

impl Behavior {
    /// The four classifiable categories in tie-break priority order.
    pub const CATEGORIES: [Behavior; 4] = [
        Behavior::Verification,
        Behavior::Backtracking,
        Behavior::SubgoalSetting,
        Behavior::BackwardChaining,
    ];
}

/// Marker and keyword lists driving classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    /// Ordered reflective marker phrases, lowercase. Order breaks position
    /// ties when two markers match at the same offset.
    pub reflective_markers: Vec<String>,
    pub verification: Vec<String>,
    pub backtracking: Vec<String>,
    pub subgoal_setting: Vec<String>,
    pub backward_chaining: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            reflective_markers: vec!["wait".into()],
            verification: vec![
                "double-check".into(),
                "double check".into(),
                "verify".into(),
                "check again".into(),
                "let me check".into(),
                "make sure".into(),
                "confirm".into(),
            ],
            backtracking: vec![
                "already".into(),
                "instead".into(),
                "mistake".into(),
                "wrong".into(),
                "go back".into(),
                "start over".into(),
                "doesn't work".into(),
                "revise".into(),
            ],
            subgoal_setting: vec![
                "break this down".into(),
                "break it down".into(),
                "first step".into(),
                "next step".into(),
                "step by step".into(),
                "subgoal".into(),
                "sub-goal".into(),
                "let's start by".into(),
            ],
            backward_chaining: vec![
                "in terms of".into(),
                "work backward".into(),
                "working backward".into(),
                "backwards from".into(),
                "from the desired".into(),
                "reverse".into(),
            ],
        }
    }
}

impl Lexicon {
    /// Strict default plus the opt-in extended marker set.
    pub fn extended() -> Self {
        let mut lex = Lexicon::default();
        for phrase in ["let me double-check", "hold on", "hmm", "on second thought"] {
            lex.reflective_markers.push(phrase.into());
        }
        lex
    }

    /// Load from a JSON file matching the serialized shape.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Lexicon> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let lex: Lexicon = serde_json::from_reader(file)?;
        lex.validate()?;
        Ok(lex)
    }

    /// Markers nonempty, every phrase lowercase, no duplicates within a list.
    pub fn validate(&self) -> Result<()> {
        if self.reflective_markers.is_empty() {
            return Err(Error::InvalidInput("reflective_markers must be nonempty".into()));
        }
        let lists: [(&str, &[String]); 5] = [
            ("reflective_markers", &self.reflective_markers),
            ("verification", &self.verification),
            ("backtracking", &self.backtracking),
            ("subgoal_setting", &self.subgoal_setting),
            ("backward_chaining", &self.backward_chaining),
        ];
        for (name, list) in lists {
            let mut seen = std::collections::HashSet::new();
            for phrase in list {
                if phrase.is_empty() {
                    return Err(Error::InvalidInput(format!("{name}: empty phrase")));
                }
                if phrase.chars().any(|c| c.is_uppercase()) {
                    return Err(Error::InvalidInput(format!(
                        "{name}: phrase {phrase:?} must be lowercase"
                    )));
                }
                if !seen.insert(phrase.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "{name}: duplicate phrase {phrase:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn keywords(&self, behavior: Behavior) -> &[String] {
        match behavior {
            Behavior::Verification => &self.verification,
            Behavior::Backtracking => &self.backtracking,
            Behavior::SubgoalSetting => &self.subgoal_setting,
            Behavior::BackwardChaining => &self.backward_chaining,
            Behavior::Abstain => &[],
        }
    }
}

/// Classification result for one response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternAnnotation {
    pub label: PatternLabel,
    /// `(char offset, matched marker text)`; present iff the label is Long.
    pub boundary: Option<(usize, String)>,
    /// Present only for Long responses.
    pub behavior: Option<Behavior>,
}

/// Exact three-way split of a Long response around its first marker.
///
/// `pre_text + marker_text + post_text` reconstructs the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySplit {
    pub pre_text: String,
    pub marker_text: String,
    pub post_text: String,
}

/// Byte offset and byte length of the earliest marker match, with ties broken
/// by marker list order. Markers match whole words, ASCII case-insensitively.
fn find_first_marker(response: &str, lexicon: &Lexicon) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for marker in &lexicon.reflective_markers {
        if let Some(pos) = find_word(response, marker) {
            if best.is_none_or(|(b, _)| pos < b) {
                best = Some((pos, marker.len()));
            }
        }
    }
    best
}

/// First whole-word, case-insensitive occurrence of `needle` in `haystack`.
fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || n.len() > h.len() {
        return None;
    }
    for start in 0..=(h.len() - n.len()) {
        if !haystack.is_char_boundary(start) {
            continue;
        }
        if !h[start..start + n.len()].eq_ignore_ascii_case(n) {
            continue;
        }
        let end = start + n.len();
        if !haystack.is_char_boundary(end) {
            continue;
        }
        let before_is_word = haystack[..start]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric());
        let after_is_word = haystack[end..]
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric());
        if !before_is_word && !after_is_word {
            return Some(start);
        }
    }
    None
}

/// Label a response Short or Long and locate the boundary.
pub fn classify_pattern(response: &str, lexicon: &Lexicon) -> PatternAnnotation {
    match find_first_marker(response, lexicon) {
        Some((byte_pos, byte_len)) => {
            let char_offset = response[..byte_pos].chars().count();
            PatternAnnotation {
                label: PatternLabel::Long,
                boundary: Some((char_offset, response[byte_pos..byte_pos + byte_len].to_string())),
                behavior: None,
            }
        }
        None => PatternAnnotation {
            label: PatternLabel::Short,
            boundary: None,
            behavior: None,
        },
    }
}

/// Split a Long response at its first marker. Errors on Short responses.
pub fn split_at_boundary(response: &str, lexicon: &Lexicon) -> Result<BoundarySplit> {
    let (pos, len) = find_first_marker(response, lexicon).ok_or_else(|| {
        Error::InvalidInput("split_at_boundary called on a response without markers".into())
    })?;
    Ok(BoundarySplit {
        pre_text: response[..pos].to_string(),
        marker_text: response[pos..pos + len].to_string(),
        post_text: response[pos + len..].to_string(),
    })
}

/// Split `text` into sentence pieces whose concatenation is `text`.
///
/// A sentence ends at '.', '!' or '?' followed by whitespace; the whitespace
/// run is attached to the piece it terminates.
pub fn segment_sentences(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if matches!(c, '.' | '!' | '?')
            && i + 1 < bytes.len()
            && (bytes[i + 1] as char).is_ascii_whitespace()
        {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                j += 1;
            }
            pieces.push(&text[start..j]);
            start = j;
            i = j;
        } else {
            i += 1;
        }
    }
    if start < text.len() {
        pieces.push(&text[start..]);
    }
    pieces
}

/// The classification window: the last `n` sentences before the marker, the
/// marker itself, and the first `n` sentences after it.
pub fn behavior_window(split: &BoundarySplit, n: usize) -> String {
    let n = n.max(1);
    let pre = segment_sentences(&split.pre_text);
    let post = segment_sentences(&split.post_text);
    let pre_tail: String = pre[pre.len().saturating_sub(n)..].concat();
    let post_head: String = post[..n.min(post.len())].concat();
    format!("{pre_tail}{}{post_head}", split.marker_text)
}

/// Default window width (sentences on each side of the marker).
pub const DEFAULT_WINDOW_SENTENCES: usize = 2;

/// Count non-overlapping case-insensitive occurrences of `keyword`.
fn count_occurrences(window_lower: &str, keyword: &str) -> usize {
    let mut count = 0;
    let mut from = 0;
    while let Some(rel) = window_lower[from..].find(keyword) {
        count += 1;
        from += rel + keyword.len();
    }
    count
}

/// Score the window against each behavior's keyword list; highest total wins,
/// ties resolved by [`Behavior::CATEGORIES`] order; zero hits abstains.
pub fn classify_behavior(window: &str, lexicon: &Lexicon) -> Behavior {
    let lower = window.to_lowercase();
    let mut best = Behavior::Abstain;
    let mut best_score = 0usize;
    for behavior in Behavior::CATEGORIES {
        let score: usize = lexicon
            .keywords(behavior)
            .iter()
            .map(|kw| count_occurrences(&lower, kw))
            .sum();
        if score > best_score {
            best = behavior;
            best_score = score;
        }
    }
    best
}

/// Classify a response end to end: label, boundary, and (for Long) behavior.
pub fn annotate_response(response: &str, lexicon: &Lexicon) -> PatternAnnotation {
    let mut annotation = classify_pattern(response, lexicon);
    if annotation.label == PatternLabel::Long {
        let split = split_at_boundary(response, lexicon)
            .expect("Long classification implies a marker exists");
        let window = behavior_window(&split, DEFAULT_WINDOW_SENTENCES);
        annotation.behavior = Some(classify_behavior(&window, lexicon));
    }
    annotation
}

/// Behavior mix at one difficulty level. Proportions cover the four
/// classifiable behaviors and sum to 1; abstentions are tallied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDistribution {
    pub proportions: BTreeMap<Behavior, Real>,
    pub classified_count: usize,
    pub abstain_count: usize,
}

/// Per-difficulty-level behavior proportions. Annotations without a behavior
/// label or without a difficulty level are ignored; levels with no
/// contributing annotations are omitted.
pub fn behavior_distribution(
    items: &[(PatternAnnotation, Option<u8>)],
) -> BTreeMap<u8, BehaviorDistribution> {
    let mut counts: BTreeMap<u8, (BTreeMap<Behavior, usize>, usize)> = BTreeMap::new();
    for (annotation, difficulty) in items {
        let (Some(behavior), Some(level)) = (annotation.behavior, *difficulty) else {
            continue;
        };
        let entry = counts.entry(level).or_default();
        if behavior == Behavior::Abstain {
            entry.1 += 1;
        } else {
            *entry.0.entry(behavior).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(level, (by_behavior, abstains))| {
            let total: usize = by_behavior.values().sum();
            let proportions = by_behavior
                .into_iter()
                .map(|(b, c)| (b, c as Real / total.max(1) as Real))
                .collect();
            (
                level,
                BehaviorDistribution {
                    proportions,
                    classified_count: total,
                    abstain_count: abstains,
                },
            )
        })
        .collect()
}

/// Fraction of responses classified Long. Errors on empty input.
pub fn reflection_rate<'a, I>(responses: I, lexicon: &Lexicon) -> Result<Real>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut total = 0usize;
    let mut long = 0usize;
    for response in responses {
        total += 1;
        if classify_pattern(response, lexicon).label == PatternLabel::Long {
            long += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("reflection rate over zero responses".into()));
    }
    Ok(long as Real / total as Real)
}

/// Export row for the annotation JSONL interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub id: String,
    pub sample_index: u32,
    pub label: PatternLabel,
    pub boundary_offset: Option<usize>,
    pub marker: Option<String>,
    pub behavior: Option<Behavior>,
}

impl AnnotationRow {
    pub fn new(id: &str, sample_index: u32, annotation: &PatternAnnotation) -> Self {
        AnnotationRow {
            id: id.to_string(),
            sample_index,
            label: annotation.label,
            boundary_offset: annotation.boundary.as_ref().map(|(o, _)| *o),
            marker: annotation.boundary.as_ref().map(|(_, m)| m.clone()),
            behavior: annotation.behavior,
        }
    }
}

/// Write annotation rows as JSONL.
pub fn save_annotations(path: impl AsRef<Path>, rows: &[AnnotationRow]) -> Result<()> {
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

/// Load annotation rows from JSONL.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in std::io::BufRead::lines(reader).enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: AnnotationRow = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(vec![(idx + 1, e.to_string())]))?;
        rows.push(row);
    }
    Ok(rows)
}
