//! Dataset transformations: question nullification, alpha-mixing, the four
//! noise levels, difficulty splits, shortest-correct selection, preference
//! pairs, and low-resource subsampling.
//!
//! Every stochastic transform is a pure function of `(input, seed)`.

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::answers::{last_boxed_body_span, last_standalone_number, normalize, parse_rational};
use crate::corpus::TraceRecord;
use crate::error::{Error, Result};
use crate::metrics::SolvabilityTable;
use crate::patterns::segment_sentences;

/// Transform family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Nullify,
    AlphaMix,
    Noise,
    DadSplit,
    ShortestSelect,
    PreferencePairs,
    LowResource,
}

/// Declarative transform description; doubles as the provenance manifest
/// written beside each output corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TransformKind::AlphaMix => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::InvalidInput("alpha-mix requires alpha".into()))?;
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
                }
                if self.seed.is_none() {
                    return Err(Error::InvalidInput("alpha-mix requires a seed".into()));
                }
            }
            TransformKind::Noise => {
                let level = self
                    .level
                    .ok_or_else(|| Error::InvalidInput("noise requires a level".into()))?;
                if !(1..=4).contains(&level) {
                    return Err(Error::InvalidInput(format!("noise level {level} outside 1..=4")));
                }
                if self.seed.is_none() {
                    return Err(Error::InvalidInput("noise requires a seed".into()));
                }
            }
            TransformKind::LowResource
                if self.seed.is_none() => {
                    return Err(Error::InvalidInput("low-resource requires a seed".into()));
                }
            _ => {}
        }
        Ok(())
    }

    /// Write the manifest JSON beside an output corpus.
    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Empty every question field; responses and ordering are untouched.
pub fn apply_qfft(records: &[TraceRecord]) -> Vec<TraceRecord> {
    records
        .iter()
        .map(|r| {
            let mut out = r.clone();
            out.question = String::new();
            out
        })
        .collect()
}

/// Number of records that keep their question under alpha-mixing:
/// round-half-up of `alpha * n`, with a floor of 1 whenever `alpha > 0`
/// and the corpus is nonempty.
pub fn alpha_mix_keep_count(n: usize, alpha: f64) -> usize {
    if n == 0 || alpha <= 0.0 {
        return 0;
    }
    let rounded = (alpha * n as f64 + 0.5).floor() as usize;
    rounded.clamp(1, n)
}

/// Keep questions on a seeded uniform subset of `round(alpha * n)` records
/// and nullify the rest. Order is preserved.
pub fn apply_alpha_mix(records: &[TraceRecord], alpha: f64, seed: u64) -> Result<Vec<TraceRecord>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    let keep = alpha_mix_keep_count(records.len(), alpha);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let kept: std::collections::HashSet<usize> =
        rand::seq::index::sample(&mut rng, records.len(), keep)
            .into_iter()
            .collect();
    Ok(records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut out = r.clone();
            if !kept.contains(&i) {
                out.question = String::new();
            }
            out
        })
        .collect())
}

/// Options for [`apply_noise_with_options`].
#[derive(Debug, Clone, Copy, Default)]
pub struct NoiseOptions {
    /// Level 3 only: pick the truncation target uniformly in [40%, 60%] of
    /// the character length instead of the fixed 50% rule.
    pub level3_random: bool,
}

/// Apply one of the four noise levels. See [`apply_noise_with_options`].
pub fn apply_noise(records: &[TraceRecord], level: u8, seed: u64) -> Result<Vec<TraceRecord>> {
    apply_noise_with_options(records, level, seed, NoiseOptions::default())
}

/// Noise levels:
///
/// 1. identity;
/// 2. the final number of the response (and of the last `\boxed{}` body)
///    becomes `gold + 1`, so the conclusion always differs from gold;
/// 3. sentence-complete truncation to the shortest prefix holding at least
///    half the characters;
/// 4. responses permuted by a seeded derangement, so no question keeps its
///    own response.
pub fn apply_noise_with_options(
    records: &[TraceRecord],
    level: u8,
    seed: u64,
    options: NoiseOptions,
) -> Result<Vec<TraceRecord>> {
    match level {
        1 => Ok(records.to_vec()),
        2 => Ok(records.iter().map(noise_incorrect_conclusion).collect()),
        3 => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            Ok(records
                .iter()
                .map(|r| {
                    let target = if options.level3_random {
                        use rand::Rng;
                        rng.gen_range(0.4..=0.6)
                    } else {
                        0.5
                    };
                    noise_truncate(r, target)
                })
                .collect())
        }
        4 => {
            if records.len() < 2 {
                return Err(Error::InvalidInput(
                    "noise level 4 needs at least 2 records (no derangement exists)".into(),
                ));
            }
            let permutation = seeded_derangement(records.len(), seed);
            Ok(records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let source = &records[permutation[i]];
                    let mut out = r.clone();
                    out.response = source.response.clone();
                    out.token_count = source.token_count;
                    out.token_count_exact = source.token_count_exact;
                    out
                })
                .collect())
        }
        _ => Err(Error::InvalidInput(format!("noise level {level} outside 1..=4"))),
    }
}

/// `value + 1` rendered in the same style as the input: integers stay
/// integers, decimals keep their fractional digits, fractions stay `a/b`.
fn bump_by_one(text: &str) -> Option<String> {
    let normalized = normalize(text);
    let value = parse_rational(&normalized)? + BigRational::one();
    Some(render_rational(&value, &normalized))
}

fn render_rational(value: &BigRational, style_hint: &str) -> String {
    if value.is_integer() {
        return value.numer().to_string();
    }
    if style_hint.contains('/') {
        return format!("{}/{}", value.numer(), value.denom());
    }
    // Decimal rendering: the denominator of a parsed decimal is 2^a * 5^b.
    let mut denom = value.denom().clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&denom % &two).is_zero() {
        denom /= &two;
        twos += 1;
    }
    while (&denom % &five).is_zero() {
        denom /= &five;
        fives += 1;
    }
    if !denom.is_one() {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let digits = twos.max(fives);
    let scaled = value * BigRational::from_integer(BigInt::from(10u32).pow(digits));
    let scaled_int = scaled.to_integer();
    let negative = scaled_int.is_negative();
    let mut mantissa = scaled_int.abs().to_string();
    while mantissa.len() <= digits as usize {
        mantissa.insert(0, '0');
    }
    mantissa.insert(mantissa.len() - digits as usize, '.');
    if negative {
        mantissa.insert(0, '-');
    }
    mantissa
}

/// Level 2: rewrite the concluding number(s) to `gold + 1`.
fn noise_incorrect_conclusion(record: &TraceRecord) -> TraceRecord {
    let response = record.response.as_str();
    let box_body = last_boxed_body_span(response);
    let num_in_box =
        box_body.and_then(|(s, e)| last_standalone_number(response, s..e));
    let num_overall = last_standalone_number(response, 0..response.len());

    let replacement = bump_by_one(&record.gold_answer)
        .or_else(|| num_overall.and_then(|(s, e)| bump_by_one(&response[s..e])))
        .or_else(|| num_in_box.and_then(|(s, e)| bump_by_one(&response[s..e])));
    let Some(replacement) = replacement else {
        // No numeric anchor anywhere; the record passes through.
        return record.clone();
    };

    let mut spans: Vec<(usize, usize)> = [num_in_box, num_overall].into_iter().flatten().collect();
    if spans.is_empty() {
        // Numeric gold but no number in the response: rewrite the box body
        // if one exists, else pass through.
        if let Some((s, e)) = box_body {
            let mut out = record.clone();
            out.response.replace_range(s..e, &replacement);
            return out;
        }
        return record.clone();
    }
    spans.sort();
    spans.dedup();
    let mut out = record.clone();
    for &(s, e) in spans.iter().rev() {
        out.response.replace_range(s..e, &replacement);
    }
    out
}

/// Level 3: shortest sentence prefix reaching `target` of the characters.
fn noise_truncate(record: &TraceRecord, target: f64) -> TraceRecord {
    let total_chars = record.response.chars().count();
    if total_chars == 0 {
        return record.clone();
    }
    let threshold = (total_chars as f64 * target).max(1.0);
    let mut kept_chars = 0usize;
    let mut kept_bytes = 0usize;
    for piece in segment_sentences(&record.response) {
        kept_chars += piece.chars().count();
        kept_bytes += piece.len();
        if kept_chars as f64 >= threshold {
            break;
        }
    }
    let mut out = record.clone();
    out.response.truncate(kept_bytes);
    // The count described the full response; the truncation invalidates it.
    out.token_count = Some(crate::corpus::whitespace_token_count(&out.response));
    out.token_count_exact = false;
    out
}

/// Seeded fixpoint-free permutation via shuffle-and-retry, with a rotation
/// fallback that is itself a derangement.
fn seeded_derangement(n: usize, seed: u64) -> Vec<usize> {
    debug_assert!(n >= 2);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..1000 {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
    (0..n).map(|i| (i + 1) % n).collect()
}

/// Partition records into (easy, hard) by reference-model solvability.
pub fn dad_split(
    records: &[TraceRecord],
    table: &SolvabilityTable,
) -> Result<(Vec<TraceRecord>, Vec<TraceRecord>)> {
    let mut easy = Vec::new();
    let mut hard = Vec::new();
    for r in records {
        if table.is_solvable(&r.id)? {
            easy.push(r.clone());
        } else {
            hard.push(r.clone());
        }
    }
    Ok((easy, hard))
}

/// Result of a per-question selection; questions with no usable samples are
/// reported, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: Vec<TraceRecord>,
    pub skipped_questions: Vec<String>,
}

fn group_graded<'a>(
    records: &'a [TraceRecord],
    correct: &[bool],
) -> Result<BTreeMap<&'a str, Vec<(&'a TraceRecord, bool)>>> {
    if records.len() != correct.len() {
        return Err(Error::InvalidInput(format!(
            "records ({}) and correctness flags ({}) differ in length",
            records.len(),
            correct.len()
        )));
    }
    let mut groups: BTreeMap<&str, Vec<(&TraceRecord, bool)>> = BTreeMap::new();
    for (r, &c) in records.iter().zip(correct) {
        groups.entry(r.id.as_str()).or_default().push((r, c));
    }
    Ok(groups)
}

fn shortest_correct<'a>(group: &[(&'a TraceRecord, bool)]) -> Option<&'a TraceRecord> {
    group
        .iter()
        .filter(|(_, c)| *c)
        .map(|(r, _)| *r)
        .min_by_key(|r| (r.token_count_or_approx().0, r.sample_index))
}

/// Per question, the correct sample with the fewest tokens (ties broken by
/// lowest sample index). Output is ordered by question id.
pub fn select_shortest_correct(records: &[TraceRecord], correct: &[bool]) -> Result<Selection> {
    let groups = group_graded(records, correct)?;
    let mut selected = Vec::new();
    let mut skipped = Vec::new();
    for (id, group) in groups {
        match shortest_correct(&group) {
            Some(r) => selected.push(r.clone()),
            None => skipped.push(id.to_string()),
        }
    }
    Ok(Selection {
        selected,
        skipped_questions: skipped,
    })
}

/// A preference judgment: the shortest correct response is preferred over
/// the longest correct one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub question_id: String,
    pub chosen: TraceRecord,
    pub rejected: TraceRecord,
}

/// Result of preference-pair construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PairsResult {
    pub pairs: Vec<PreferencePair>,
    pub skipped_questions: Vec<String>,
}

/// Build (shortest correct, longest correct) pairs per question. Questions
/// with fewer than two correct samples, or whose correct samples all share
/// one length, are skipped and reported.
pub fn build_preference_pairs(records: &[TraceRecord], correct: &[bool]) -> Result<PairsResult> {
    let groups = group_graded(records, correct)?;
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (id, group) in groups {
        let correct_samples: Vec<&TraceRecord> =
            group.iter().filter(|(_, c)| *c).map(|(r, _)| *r).collect();
        let chosen = correct_samples
            .iter()
            .min_by_key(|r| (r.token_count_or_approx().0, r.sample_index));
        let rejected = correct_samples
            .iter()
            .max_by_key(|r| (r.token_count_or_approx().0, std::cmp::Reverse(r.sample_index)));
        match (chosen, rejected) {
            (Some(&c), Some(&j))
                if correct_samples.len() >= 2
                    && c.token_count_or_approx().0 < j.token_count_or_approx().0 =>
            {
                pairs.push(PreferencePair {
                    question_id: id.to_string(),
                    chosen: c.clone(),
                    rejected: j.clone(),
                });
            }
            _ => skipped.push(id.to_string()),
        }
    }
    Ok(PairsResult {
        pairs,
        skipped_questions: skipped,
    })
}

/// Seeded low-resource subsample: `q_count` questions chosen uniformly among
/// those with at least `r_count` samples, keeping the first `r_count` sample
/// indices of each. Errors when too few questions qualify.
pub fn low_resource_sample(
    records: &[TraceRecord],
    q_count: usize,
    r_count: usize,
    seed: u64,
) -> Result<Vec<TraceRecord>> {
    if q_count == 0 || r_count == 0 {
        return Err(Error::InvalidInput("q_count and r_count must be positive".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.id.as_str()).or_default().push(r);
    }
    let eligible: Vec<(&str, Vec<&TraceRecord>)> = groups
        .into_iter()
        .filter(|(_, g)| g.len() >= r_count)
        .collect();
    if eligible.len() < q_count {
        return Err(Error::InvalidInput(format!(
            "need {q_count} questions with >= {r_count} samples, found {}",
            eligible.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, eligible.len(), q_count).into_vec();
    chosen.sort_unstable();
    let mut out = Vec::with_capacity(q_count * r_count);
    for idx in chosen {
        let (_, group) = &eligible[idx];
        let mut sorted: Vec<&TraceRecord> = group.clone();
        sorted.sort_by_key(|r| r.sample_index);
        for r in sorted.into_iter().take(r_count) {
            out.push(r.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answers::{equivalent, extract_boxed, DEFAULT_TOLERANCE};
    use crate::metrics::solvability;

    fn record(id: &str, idx: u32, question: &str, response: &str, gold: &str) -> TraceRecord {
        TraceRecord::new(id, question, response, gold).with_sample_index(idx)
    }

    fn with_tokens(mut r: TraceRecord, tokens: u64) -> TraceRecord {
        r.token_count = Some(tokens);
        r.token_count_exact = true;
        r
    }

    #[test]
    fn qfft_nullifies_and_preserves_responses() {
        let records = vec![
            record("a", 0, "q1", "r1", "g"),
            record("b", 0, "q2", "r2", "g"),
        ];
        let out = apply_qfft(&records);
        assert!(out.iter().all(|r| r.question.is_empty()));
        assert_eq!(out[0].response, "r1");
        assert_eq!(out[1].response, "r2");
        let twice = apply_qfft(&out);
        assert_eq!(out, twice);
    }

    #[test]
    fn alpha_mix_endpoints() {
        let records: Vec<TraceRecord> =
            (0..20).map(|i| record(&format!("q{i}"), 0, "q", "r", "g")).collect();
        let all_null = apply_alpha_mix(&records, 0.0, 7).unwrap();
        assert!(all_null.iter().all(|r| r.question.is_empty()));
        let unchanged = apply_alpha_mix(&records, 1.0, 7).unwrap();
        assert_eq!(unchanged, records);
    }

    #[test]
    fn alpha_mix_exact_count() {
        let records: Vec<TraceRecord> =
            (0..1000).map(|i| record(&format!("q{i}"), 0, "q", "r", "g")).collect();
        let out = apply_alpha_mix(&records, 0.01, 3).unwrap();
        let kept = out.iter().filter(|r| !r.question.is_empty()).count();
        assert_eq!(kept, 10);
    }

    #[test]
    fn alpha_mix_count_formula_sweep() {
        for n in [0usize, 1, 2, 3, 7, 99, 100, 1000, 10_000] {
            for &alpha in &[0.0, 0.001, 0.01, 0.1, 0.115, 0.5, 0.995, 1.0] {
                let expected = if n == 0 || alpha <= 0.0 {
                    0
                } else {
                    (((alpha * n as f64) + 0.5).floor() as usize).clamp(1, n)
                };
                assert_eq!(alpha_mix_keep_count(n, alpha), expected, "n={n} alpha={alpha}");
            }
        }
    }

    #[test]
    fn alpha_mix_min_one_floor() {
        let records: Vec<TraceRecord> =
            (0..50).map(|i| record(&format!("q{i}"), 0, "q", "r", "g")).collect();
        let out = apply_alpha_mix(&records, 0.001, 9).unwrap();
        let kept = out.iter().filter(|r| !r.question.is_empty()).count();
        assert_eq!(kept, 1);
    }

    #[test]
    fn alpha_mix_deterministic() {
        let records: Vec<TraceRecord> =
            (0..100).map(|i| record(&format!("q{i}"), 0, "q", "r", "g")).collect();
        let a = apply_alpha_mix(&records, 0.3, 42).unwrap();
        let b = apply_alpha_mix(&records, 0.3, 42).unwrap();
        assert_eq!(a, b);
        let c = apply_alpha_mix(&records, 0.3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_level1_is_identity() {
        let records = vec![record("a", 0, "q", "some text. more text.", "g")];
        let out = apply_noise(&records, 1, 5).unwrap();
        assert_eq!(out, records);
    }

    #[test]
    fn noise_level2_bumps_boxed_conclusion() {
        let records = vec![record("a", 0, "q", "so x = 42, thus \\boxed{42}", "42")];
        let out = apply_noise(&records, 2, 5).unwrap();
        assert_eq!(out[0].response, "so x = 42, thus \\boxed{43}");
        let extracted = extract_boxed(&out[0].response);
        assert!(!equivalent(&extracted.raw, "42", DEFAULT_TOLERANCE).equal);
    }

    #[test]
    fn noise_level2_bumps_final_number_outside_box() {
        let records = vec![record("a", 0, "q", "\\boxed{42}. The answer is 42", "42")];
        let out = apply_noise(&records, 2, 5).unwrap();
        assert_eq!(out[0].response, "\\boxed{43}. The answer is 43");
    }

    #[test]
    fn noise_level2_decimal_and_fraction_styles() {
        let records = vec![
            record("a", 0, "q", "final \\boxed{0.5}", "0.5"),
            record("b", 0, "q", "final \\boxed{\\frac{1}{2}}", "1/2"),
        ];
        let out = apply_noise(&records, 2, 5).unwrap();
        assert_eq!(out[0].response, "final \\boxed{1.5}");
        // gold 1/2 + 1 = 3/2; the number inside the frac body is rewritten.
        let extracted = extract_boxed(&out[1].response);
        assert!(!equivalent(&extracted.raw, "1/2", DEFAULT_TOLERANCE).equal);
    }

    #[test]
    fn noise_level3_exact_half_on_uniform_sentences() {
        // Four sentences of equal character length: keep the first two.
        let s = "aaaaaaaaa. bbbbbbbbb. ccccccccc. ddddddddd.";
        let records = vec![record("a", 0, "q", s, "g")];
        let out = apply_noise(&records, 3, 5).unwrap();
        assert_eq!(out[0].response, "aaaaaaaaa. bbbbbbbbb. ");
    }

    #[test]
    fn noise_level3_bounds_and_sentence_completeness() {
        let s = "one two three. four five six! seven eight? nine ten end";
        let records = vec![record("a", 0, "q", s, "g")];
        let out = apply_noise(&records, 3, 5).unwrap();
        let kept = &out[0].response;
        assert!(s.starts_with(kept.as_str()));
        let total = s.chars().count();
        let kept_chars = kept.chars().count();
        let max_sentence = segment_sentences(s)
            .iter()
            .map(|p| p.chars().count())
            .max()
            .unwrap();
        assert!(kept_chars * 2 >= total);
        assert!(kept_chars as f64 <= total as f64 * 0.5 + max_sentence as f64);
    }

    #[test]
    fn noise_level4_is_derangement() {
        let records: Vec<TraceRecord> = (0..7)
            .map(|i| record(&format!("q{i}"), 0, "q", &format!("resp{i}"), "g"))
            .collect();
        for seed in 0..50 {
            let out = apply_noise(&records, 4, seed).unwrap();
            for (orig, noised) in records.iter().zip(&out) {
                assert_ne!(orig.response, noised.response, "seed {seed}");
            }
            // Still a permutation of the original responses.
            let mut orig: Vec<&str> = records.iter().map(|r| r.response.as_str()).collect();
            let mut got: Vec<&str> = out.iter().map(|r| r.response.as_str()).collect();
            orig.sort_unstable();
            got.sort_unstable();
            assert_eq!(orig, got);
        }
    }

    #[test]
    fn noise_level4_two_records_swaps() {
        let records = vec![
            record("a", 0, "q", "ra", "g"),
            record("b", 0, "q", "rb", "g"),
        ];
        let out = apply_noise(&records, 4, 1).unwrap();
        assert_eq!(out[0].response, "rb");
        assert_eq!(out[1].response, "ra");
    }

    #[test]
    fn noise_level4_needs_two_records() {
        let records = vec![record("a", 0, "q", "r", "g")];
        assert!(apply_noise(&records, 4, 1).is_err());
    }

    #[test]
    fn dad_split_partitions() {
        let records: Vec<TraceRecord> = (0..6)
            .map(|i| record(&format!("q{i}"), 0, "q", "r", "g"))
            .collect();
        let groups: BTreeMap<String, Vec<bool>> = (0..6)
            .map(|i| (format!("q{i}"), vec![i < 4]))
            .collect();
        let table = solvability(&groups).unwrap();
        let (easy, hard) = dad_split(&records, &table).unwrap();
        assert_eq!((easy.len(), hard.len()), (4, 2));
        assert_eq!(easy.len() + hard.len(), records.len());

        let all_solvable = solvability(
            &(0..6).map(|i| (format!("q{i}"), vec![true])).collect(),
        )
        .unwrap();
        let (easy, hard) = dad_split(&records, &all_solvable).unwrap();
        assert_eq!((easy.len(), hard.len()), (6, 0));
    }

    #[test]
    fn dad_split_uncovered_question_errors() {
        let records = vec![record("missing", 0, "q", "r", "g")];
        let table = SolvabilityTable::default();
        assert!(dad_split(&records, &table).is_err());
    }

    #[test]
    fn shortest_correct_selection() {
        let records = vec![
            with_tokens(record("q", 0, "q", "r0", "g"), 900),
            with_tokens(record("q", 1, "q", "r1", "g"), 400),
            with_tokens(record("q", 2, "q", "r2", "g"), 700),
        ];
        let sel = select_shortest_correct(&records, &[true, true, true]).unwrap();
        assert_eq!(sel.selected.len(), 1);
        assert_eq!(sel.selected[0].sample_index, 1);

        // Tie at 400 tokens: lower sample index wins.
        let records = vec![
            with_tokens(record("q", 3, "q", "r3", "g"), 400),
            with_tokens(record("q", 1, "q", "r1", "g"), 400),
        ];
        let sel = select_shortest_correct(&records, &[true, true]).unwrap();
        assert_eq!(sel.selected[0].sample_index, 1);
    }

    #[test]
    fn shortest_correct_skips_hopeless_groups() {
        let records = vec![
            with_tokens(record("good", 0, "q", "r", "g"), 10),
            with_tokens(record("bad", 0, "q", "r", "g"), 10),
        ];
        let sel = select_shortest_correct(&records, &[true, false]).unwrap();
        assert_eq!(sel.selected.len(), 1);
        assert_eq!(sel.skipped_questions, vec!["bad".to_string()]);
    }

    #[test]
    fn preference_pairs_min_max() {
        let records = vec![
            with_tokens(record("q", 0, "q", "r0", "g"), 700),
            with_tokens(record("q", 1, "q", "r1", "g"), 400),
            with_tokens(record("q", 2, "q", "r2", "g"), 900),
            with_tokens(record("q", 3, "q", "r3", "g"), 100),
        ];
        // Sample 3 is wrong, so 400 vs 900 form the pair.
        let out = build_preference_pairs(&records, &[true, true, true, false]).unwrap();
        assert_eq!(out.pairs.len(), 1);
        let pair = &out.pairs[0];
        assert_eq!(pair.chosen.token_count, Some(400));
        assert_eq!(pair.rejected.token_count, Some(900));
        assert!(pair.chosen.token_count <= pair.rejected.token_count);
    }

    #[test]
    fn preference_pairs_skip_rules() {
        // One correct only.
        let records = vec![
            with_tokens(record("q", 0, "q", "r0", "g"), 700),
            with_tokens(record("q", 1, "q", "r1", "g"), 400),
        ];
        let out = build_preference_pairs(&records, &[true, false]).unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.skipped_questions, vec!["q".to_string()]);

        // Two correct with identical lengths.
        let records = vec![
            with_tokens(record("q", 0, "q", "r0", "g"), 500),
            with_tokens(record("q", 1, "q", "r1", "g"), 500),
        ];
        let out = build_preference_pairs(&records, &[true, true]).unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.skipped_questions, vec!["q".to_string()]);
    }

    #[test]
    fn low_resource_defaults_yield_100() {
        let mut records = Vec::new();
        for q in 0..30 {
            for s in 0..12 {
                records.push(record(&format!("q{q}"), s, "q", "r", "g"));
            }
        }
        let out = low_resource_sample(&records, 10, 10, 11).unwrap();
        assert_eq!(out.len(), 100);
        // First r_count sample indices per chosen question.
        for r in &out {
            assert!(r.sample_index < 10);
        }
    }

    #[test]
    fn low_resource_minimal_and_deterministic() {
        let records = vec![record("q", 0, "q", "r", "g")];
        let out = low_resource_sample(&records, 1, 1, 2).unwrap();
        assert_eq!(out.len(), 1);

        let mut records = Vec::new();
        for q in 0..20 {
            for s in 0..10 {
                records.push(record(&format!("q{q}"), s, "q", "r", "g"));
            }
        }
        let a = low_resource_sample(&records, 5, 10, 7).unwrap();
        let b = low_resource_sample(&records, 5, 10, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn low_resource_insufficient_errors() {
        let records = vec![record("q", 0, "q", "r", "g")];
        assert!(low_resource_sample(&records, 2, 1, 0).is_err());
        assert!(low_resource_sample(&records, 1, 2, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        let spec = TransformSpec {
            kind: TransformKind::AlphaMix,
            alpha: Some(0.5),
            level: None,
            q_count: None,
            r_count: None,
            seed: Some(1),
        };
        spec.validate().unwrap();
        let bad = TransformSpec {
            alpha: Some(1.5),
            ..spec.clone()
        };
        assert!(bad.validate().is_err());
        let no_seed = TransformSpec {
            seed: None,
            ..spec
        };
        assert!(no_seed.validate().is_err());
    }
}
