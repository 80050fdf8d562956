//! Adaptability and efficiency metrics: solvability, RAK, AES, pass@1,
//! and token statistics.
//!
//! RAK is chance-corrected agreement between question solvability (decided
//! once per question by a reference model's samples under a majority rule)
//! and the evaluated model's pattern choice. One confusion matrix is built
//! per sample index and the per-sample scores are averaged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::TraceRecord;
use crate::error::{Error, Result};
use crate::patterns::PatternLabel;
use crate::scalar::Scalar;

/// Per-question solvability under the reference model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolvabilityEntry {
    pub solvable: bool,
    pub reference_correct_count: u32,
    pub reference_sample_count: u32,
}

/// Map from question id to its reference-model verdict.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolvabilityTable(pub BTreeMap<String, SolvabilityEntry>);

impl SolvabilityTable {
    pub fn get(&self, id: &str) -> Option<&SolvabilityEntry> {
        self.0.get(id)
    }

    pub fn is_solvable(&self, id: &str) -> Result<bool> {
        self.0
            .get(id)
            .map(|e| e.solvable)
            .ok_or_else(|| Error::UnknownQuestion(id.to_string()))
    }
}

/// Decide solvability per question by majority over reference-model
/// correctness flags; ties count as solvable. Errors on an empty group.
pub fn solvability(groups: &BTreeMap<String, Vec<bool>>) -> Result<SolvabilityTable> {
    let mut table = BTreeMap::new();
    for (id, flags) in groups {
        if flags.is_empty() {
            return Err(Error::EmptyInput(format!("question {id} has no reference samples")));
        }
        let correct = flags.iter().filter(|&&c| c).count() as u32;
        let total = flags.len() as u32;
        table.insert(
            id.clone(),
            SolvabilityEntry {
                solvable: correct * 2 >= total,
                reference_correct_count: correct,
                reference_sample_count: total,
            },
        );
    }
    Ok(SolvabilityTable(table))
}

/// Agreement cells between solvability and pattern choice.
///
/// `tp` = solvable & Short, `fn` = solvable & Long, `fp` = unsolvable &
/// Short, `tn` = unsolvable & Long.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

/// Fill the confusion matrix from the evaluated model's pattern labels,
/// restricted to one sample index. Every question must be covered by the
/// solvability table.
pub fn build_confusion(
    table: &SolvabilityTable,
    labels: &[(String, u32, PatternLabel)],
    sample_index: u32,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for (id, idx, label) in labels {
        if *idx != sample_index {
            continue;
        }
        let solvable = table.is_solvable(id)?;
        match (solvable, label) {
            (true, PatternLabel::Short) => cm.tp += 1,
            (true, PatternLabel::Long) => cm.fn_ += 1,
            (false, PatternLabel::Short) => cm.fp += 1,
            (false, PatternLabel::Long) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Chance-corrected adaptability score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RakResult<S: Scalar> {
    pub p_o: S,
    pub p_e: S,
    pub rak: S,
    /// True when expected agreement is exactly 1 and the usual quotient is
    /// undefined; `rak` is then 1 for perfect agreement and 0 otherwise.
    pub degenerate: bool,
}

/// Compute observed agreement, expected agreement, and their
/// chance-corrected quotient. Errors when the matrix is empty.
pub fn rak<S: Scalar>(cm: &ConfusionMatrix) -> Result<RakResult<S>> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix has zero total".into()));
    }
    let t = S::from_count(total);
    let p_o = (S::from_count(cm.tp) + S::from_count(cm.tn)) / t;
    let pred_short = S::from_count(cm.tp + cm.fp);
    let pred_long = S::from_count(cm.fn_ + cm.tn);
    let actual_solvable = S::from_count(cm.tp + cm.fn_);
    let actual_unsolvable = S::from_count(cm.fp + cm.tn);
    let p_e = (pred_short * actual_solvable + pred_long * actual_unsolvable) / (t * t);
    if p_e == S::one() {
        let rak = if p_o == S::one() { S::one() } else { S::zero() };
        return Ok(RakResult {
            p_o,
            p_e,
            rak,
            degenerate: true,
        });
    }
    Ok(RakResult {
        p_o,
        p_e,
        rak: (p_o - p_e) / (S::one() - p_e),
        degenerate: false,
    })
}

/// Arithmetic mean of per-sample scores; degenerate samples participate with
/// their defined values. Errors on an empty slice.
pub fn rak_averaged<S: Scalar>(results: &[RakResult<S>]) -> Result<S> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no per-sample RAK results".into()));
    }
    let sum: S = results.iter().map(|r| r.rak).sum();
    Ok(sum / S::from_count(results.len() as u64))
}

/// Weights for the accuracy-efficiency score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AesConfig<S: Scalar> {
    pub alpha: S,
    pub beta: S,
    pub gamma: S,
    pub scale: S,
}

impl<S: Scalar> Default for AesConfig<S> {
    fn default() -> Self {
        AesConfig {
            alpha: S::from_f(0.1),
            beta: S::from_f(0.1),
            gamma: S::from_f(1.0),
            scale: S::from_f(100.0),
        }
    }
}

/// Accuracy-efficiency trade-off result, in percent units under the default
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AesResult<S: Scalar> {
    pub delta_l: S,
    pub delta_a: S,
    pub aes: S,
}

/// Accuracy-efficiency score of `model` against `base`, each given as
/// `(accuracy, mean tokens)`. Accuracy losses are weighted by `gamma`,
/// gains by `beta`.
pub fn aes<S: Scalar>(base: (S, S), model: (S, S), cfg: &AesConfig<S>) -> Result<AesResult<S>> {
    let (a_base, l_base) = base;
    let (a_model, l_model) = model;
    if l_base <= S::zero() {
        return Err(Error::InvalidInput("base token count must be positive".into()));
    }
    if a_base <= S::zero() {
        return Err(Error::InvalidInput("base accuracy must be positive".into()));
    }
    let delta_l = (l_base - l_model) / l_base;
    let delta_a = (a_model - a_base) / a_base;
    let aes = if delta_a >= S::zero() {
        cfg.scale * (cfg.alpha * delta_l + cfg.beta * delta_a.abs())
    } else {
        cfg.scale * (cfg.alpha * delta_l - cfg.gamma * delta_a.abs())
    };
    Ok(AesResult { delta_l, delta_a, aes })
}

/// Mean token count with an approximation flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStats<S: Scalar> {
    pub mean_tokens: S,
    /// True when any contributing count was approximated.
    pub approximate: bool,
}

/// Mean of per-record token counts. Errors on empty input.
pub fn token_stats<S: Scalar>(records: &[TraceRecord]) -> Result<TokenStats<S>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("token stats over zero records".into()));
    }
    let mut sum = 0u64;
    let mut approximate = false;
    for r in records {
        let (count, exact) = r.token_count_or_approx();
        sum += count;
        approximate |= !exact;
    }
    Ok(TokenStats {
        mean_tokens: S::from_count(sum) / S::from_count(records.len() as u64),
        approximate,
    })
}

/// Pass@1 accuracy report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport<S: Scalar> {
    /// Mean correctness per question, in [0, 1].
    pub per_question: BTreeMap<String, S>,
    /// Mean over questions of the per-question means, in percent.
    pub overall_pct: S,
    /// Token statistics, when supplied.
    pub tokens: Option<TokenStats<S>>,
}

/// Average correctness over k samples per question; overall accuracy is the
/// macro average across questions, in percent. Errors when any question has
/// zero samples.
pub fn pass_at_1<S: Scalar>(groups: &BTreeMap<String, Vec<bool>>) -> Result<AccuracyReport<S>> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("pass@1 over zero questions".into()));
    }
    let mut per_question = BTreeMap::new();
    let mut sum = S::zero();
    for (id, flags) in groups {
        if flags.is_empty() {
            return Err(Error::EmptyInput(format!("question {id} has zero samples")));
        }
        let correct = flags.iter().filter(|&&c| c).count() as u64;
        let mean = S::from_count(correct) / S::from_count(flags.len() as u64);
        sum += mean;
        per_question.insert(id.clone(), mean);
    }
    let overall_pct = sum / S::from_count(groups.len() as u64) * S::from_f(100.0);
    Ok(AccuracyReport {
        per_question,
        overall_pct,
        tokens: None,
    })
}
