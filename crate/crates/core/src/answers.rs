//! Final-answer extraction and answer equivalence.
//!
//! Extraction scans for `\boxed{...}` with nested-brace bodies and keeps the
//! last balanced occurrence; when no box exists it falls back to the last
//! standalone number of the final sentence. Equivalence normalizes both sides
//! and compares them as strings, then as exact rationals, then numerically
//! under a relative tolerance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

const BOXED_OPENER: &str = "\\boxed{";

/// How an answer was pulled out of a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionKind {
    Boxed,
    LastNumber,
    None,
}

/// An answer located in a response text.
///
/// `source_span` is a `(start, end)` pair of character offsets into the
/// original text; `(0, 0)` when nothing was extracted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub raw: String,
    pub normalized: String,
    pub source_span: (usize, usize),
    pub extraction_kind: ExtractionKind,
    /// Present when extraction failed in a noteworthy way (e.g. unbalanced
    /// braces after an opener).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ExtractedAnswer {
    fn none(detail: Option<String>) -> Self {
        ExtractedAnswer {
            raw: String::new(),
            normalized: String::new(),
            source_span: (0, 0),
            extraction_kind: ExtractionKind::None,
            detail,
        }
    }
}

/// Which rule decided an equivalence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceMethod {
    String,
    Numeric,
    Rational,
}

/// Outcome of [`equivalent`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub equal: bool,
    pub method: EquivalenceMethod,
    pub detail: String,
}

/// Byte span of the body of the last balanced `\boxed{...}`, plus whether an
/// unbalanced opener was seen along the way.
fn scan_boxed(text: &str) -> (Option<(usize, usize)>, bool) {
    let mut last: Option<(usize, usize)> = None;
    let mut unbalanced = false;
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find(BOXED_OPENER) {
        let open = search_from + rel;
        let body_start = open + BOXED_OPENER.len();
        match consume_balanced(text, body_start) {
            Some(body_end) => {
                last = Some((body_start, body_end));
                search_from = body_end + 1;
            }
            None => {
                unbalanced = true;
                search_from = body_start;
            }
        }
    }
    (last, unbalanced)
}

/// Byte span of the last balanced `\boxed{}` body, if any.
pub(crate) fn last_boxed_body_span(text: &str) -> Option<(usize, usize)> {
    scan_boxed(text).0
}

/// Extract the final answer from a response.
///
/// All `\boxed{` openers are scanned; each consumes a balanced-brace body
/// (nesting allowed) and the last balanced occurrence wins. Without any
/// balanced box, the last standalone number of the final sentence is used.
/// Unbalanced input never panics: it yields `ExtractionKind::None` with a
/// detail message.
pub fn extract_boxed(text: &str) -> ExtractedAnswer {
    let (last, unbalanced) = scan_boxed(text);

    if let Some((start, end)) = last {
        let raw = &text[start..end];
        return ExtractedAnswer {
            raw: raw.to_string(),
            normalized: normalize(raw),
            source_span: (char_offset(text, start), char_offset(text, end)),
            extraction_kind: ExtractionKind::Boxed,
            detail: None,
        };
    }
    if unbalanced {
        return ExtractedAnswer::none(Some("unbalanced braces after \\boxed{ opener".into()));
    }

    // Fallback: last standalone number in the final sentence.
    let final_sentence = last_sentence(text);
    if let Some((start, end)) = last_standalone_number(text, final_sentence) {
        let raw = &text[start..end];
        return ExtractedAnswer {
            raw: raw.to_string(),
            normalized: normalize(raw),
            source_span: (char_offset(text, start), char_offset(text, end)),
            extraction_kind: ExtractionKind::LastNumber,
            detail: None,
        };
    }
    ExtractedAnswer::none(None)
}

/// Byte index just past the balanced body that starts at `start` (depth 1),
/// or `None` if the braces never close.
fn consume_balanced(text: &str, start: usize) -> Option<usize> {
    let mut depth = 1usize;
    for (i, ch) in text[start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i);
                }
            }
            _ => {}
        }
    }
    None
}

fn char_offset(text: &str, byte_idx: usize) -> usize {
    text[..byte_idx].chars().count()
}

/// Byte range of the final sentence (same '.', '!', '?' + whitespace rule as
/// the pattern module's window).
fn last_sentence(text: &str) -> std::ops::Range<usize> {
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i] as char;
        if matches!(b, '.' | '!' | '?') {
            let next = i + 1;
            if next < bytes.len() && (bytes[next] as char).is_ascii_whitespace() {
                // Skip the whitespace run; the next sentence starts after it.
                let mut j = next;
                while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                    j += 1;
                }
                if j < bytes.len() {
                    start = j;
                }
                i = j;
                continue;
            }
        }
        i += 1;
    }
    start..text.len()
}

/// Last number token in `range`, delimited so that digits embedded in words
/// or identifiers do not match. Returns a byte span into `text`.
pub(crate) fn last_standalone_number(
    text: &str,
    range: std::ops::Range<usize>,
) -> Option<(usize, usize)> {
    let slice = &text[range.clone()];
    let mut best: Option<(usize, usize)> = None;
    let chars: Vec<(usize, char)> = slice.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (pos, ch) = chars[k];
        if ch.is_ascii_digit() {
            // Candidate start; optionally include a directly preceding '-'.
            let prev = if k > 0 { Some(chars[k - 1].1) } else { None };
            if prev.is_some_and(|p| p.is_alphanumeric() || p == '.' || p == '_') {
                // Embedded in a word or a dotted identifier: skip the run.
                while k < chars.len() && (chars[k].1.is_ascii_digit() || chars[k].1 == ',') {
                    k += 1;
                }
                continue;
            }
            let mut start = pos;
            if k > 0 && chars[k - 1].1 == '-' {
                let before_minus = if k >= 2 { Some(chars[k - 2].1) } else { None };
                if !before_minus.is_some_and(|p| p.is_alphanumeric()) {
                    start = chars[k - 1].0;
                }
            }
            // Consume integer part with thousands separators.
            let mut j = k;
            while j < chars.len() && (chars[j].1.is_ascii_digit() || chars[j].1 == ',') {
                j += 1;
            }
            // Trailing comma is punctuation, not part of the number.
            let mut end_char = j;
            while end_char > k && chars[end_char - 1].1 == ',' {
                end_char -= 1;
            }
            // Optional fractional part.
            if end_char < chars.len()
                && chars[end_char].1 == '.'
                && end_char == j
                && j + 1 < chars.len()
                && chars[j + 1].1.is_ascii_digit()
            {
                j += 1;
                while j < chars.len() && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
                end_char = j;
            }
            let after = chars.get(end_char).map(|&(_, c)| c);
            if !after.is_some_and(|c| c.is_alphanumeric()) {
                let end_byte = chars
                    .get(end_char)
                    .map(|&(p, _)| p)
                    .unwrap_or(slice.len());
                best = Some((range.start + start, range.start + end_byte));
            }
            k = end_char.max(k + 1);
        } else {
            k += 1;
        }
    }
    best
}

/// Canonicalize an answer string. Idempotent.
///
/// Trims whitespace, strips enclosing dollar signs, rewrites `\frac{a}{b}`
/// to `a/b`, drops thousands separators, and lowercases purely alphabetic
/// answers.
pub fn normalize(raw: &str) -> String {
    let mut s = raw
        .trim_matches(|c: char| c.is_whitespace() || c == '$')
        .to_string();
    s = collapse_frac(&s);
    s = strip_thousands_separators(&s);
    if !s.is_empty() && s.chars().all(|c| c.is_alphabetic() || c.is_whitespace()) {
        s = s.to_lowercase();
    }
    s
}

/// Rewrite every `\frac{a}{b}` (and the `\dfrac`/`\tfrac` variants) as `a/b`.
fn collapse_frac(s: &str) -> String {
    let mut out = s.to_string();
    for opener in ["\\frac{", "\\dfrac{", "\\tfrac{"] {
        while let Some(pos) = out.find(opener) {
            let num_start = pos + opener.len();
            let Some(num_end) = consume_balanced(&out, num_start) else { break };
            let denom_opener = num_end + 1;
            if !out[denom_opener..].starts_with('{') {
                break;
            }
            let den_start = denom_opener + 1;
            let Some(den_end) = consume_balanced(&out, den_start) else { break };
            let numerator = out[num_start..num_end].to_string();
            let denominator = out[den_start..den_end].to_string();
            out.replace_range(pos..den_end + 1, &format!("{numerator}/{denominator}"));
        }
    }
    out
}

/// Remove commas that sit between two digits.
fn strip_thousands_separators(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == ','
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            continue;
        }
        out.push(c);
    }
    out
}

/// Parse a normalized answer as an exact rational. Supports integers,
/// decimals, and `a/b` fractions of integers.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_decimal(num.trim())?;
        let d = parse_decimal(den.trim())?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => match s.strip_prefix('+') {
            Some(rest) => (1, rest),
            None => (1, s),
        },
    };
    if digits.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mantissa = format!("{int_part}{frac_part}");
    let mantissa = if mantissa.is_empty() { "0".into() } else { mantissa };
    let numerator: BigInt = mantissa.parse().ok()?;
    let denominator = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(BigRational::new(numerator * BigInt::from(sign), denominator))
}

/// Decide whether two answer strings denote the same answer.
///
/// String equality on normalized forms wins first (`method = String`); exact
/// rational equality is reported as `Rational`; otherwise a relative
/// tolerance check `|a - b| <= tol * max(1, |a|, |b|)` decides (`Numeric`).
/// The scale term uses both magnitudes so the verdict is symmetric in its
/// arguments.
pub fn equivalent(a: &str, b: &str, tol: f64) -> EquivalenceVerdict {
    let na = normalize(a);
    let nb = normalize(b);
    if na == nb {
        return EquivalenceVerdict {
            equal: true,
            method: EquivalenceMethod::String,
            detail: format!("normalized forms match: {na:?}"),
        };
    }
    let (ra, rb) = match (parse_rational(&na), parse_rational(&nb)) {
        (Some(ra), Some(rb)) => (ra, rb),
        _ => {
            return EquivalenceVerdict {
                equal: false,
                method: EquivalenceMethod::String,
                detail: format!("normalized forms differ: {na:?} vs {nb:?}"),
            }
        }
    };
    if ra == rb {
        return EquivalenceVerdict {
            equal: true,
            method: EquivalenceMethod::Rational,
            detail: "exact rational equality".into(),
        };
    }
    let tol_r = BigRational::from_float(tol).unwrap_or_else(BigRational::zero);
    let bound = tol_r * BigRational::one().max(ra.abs()).max(rb.abs());
    let equal = (ra - rb).abs() <= bound;
    EquivalenceVerdict {
        equal,
        method: EquivalenceMethod::Numeric,
        detail: if equal {
            format!("within relative tolerance {tol}")
        } else {
            format!("outside relative tolerance {tol}")
        },
    }
}

/// Default relative tolerance for numeric equivalence.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// One exported grading verdict, matching the verdict JSONL interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRow {
    pub id: String,
    pub sample_index: u32,
    pub extracted: String,
    pub gold: String,
    pub equal: bool,
    pub method: EquivalenceMethod,
}
