//! Shared grading and grouping helpers.

use std::collections::BTreeMap;
use std::path::Path;

use cotlab_core::answers::{equivalent, extract_boxed};
use cotlab_core::corpus::TraceRecord;
use cotlab_core::patterns::Lexicon;
use cotlab_core::{Error, Result};

/// Correctness of each record: extracted answer equivalent to gold.
pub fn grade(records: &[TraceRecord], tolerance: f64) -> Vec<bool> {
    records
        .iter()
        .map(|r| {
            let extracted = extract_boxed(&r.response);
            equivalent(&extracted.raw, &r.gold_answer, tolerance).equal
        })
        .collect()
}

/// Group correctness flags by question id, in record order.
pub fn grouped_flags(records: &[TraceRecord], flags: &[bool]) -> BTreeMap<String, Vec<bool>> {
    let mut groups: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for (r, &c) in records.iter().zip(flags) {
        groups.entry(r.id.clone()).or_default().push(c);
    }
    groups
}

/// Load a lexicon file or fall back to the strict default.
pub fn load_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    match path {
        Some(p) => Lexicon::from_file(p),
        None => Ok(Lexicon::default()),
    }
}

/// Distinct values of a record field, joined for report labels.
pub fn joined_tag(records: &[TraceRecord], field: impl Fn(&TraceRecord) -> &str) -> String {
    let mut seen: Vec<&str> = Vec::new();
    for r in records {
        let v = field(r);
        if !v.is_empty() && !seen.contains(&v) {
            seen.push(v);
        }
    }
    if seen.is_empty() {
        "unknown".to_string()
    } else {
        seen.join("+")
    }
}

/// Require every eval question to carry the same set of sample indices;
/// returns the per-question sample count.
pub fn consistent_sample_count(records: &[TraceRecord]) -> Result<u32> {
    let mut per_question: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for r in records {
        per_question.entry(r.id.as_str()).or_default().push(r.sample_index);
    }
    let mut expected: Option<Vec<u32>> = None;
    for (id, mut indices) in per_question {
        indices.sort_unstable();
        match &expected {
            None => expected = Some(indices),
            Some(e) if *e == indices => {}
            Some(e) => {
                return Err(Error::InvalidInput(format!(
                    "inconsistent sample indices: question {id} has {indices:?}, expected {e:?}"
                )))
            }
        }
    }
    let indices = expected.ok_or_else(|| Error::EmptyInput("corpus has no records".into()))?;
    Ok(indices.len() as u32)
}
