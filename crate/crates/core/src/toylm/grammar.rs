//! Synthetic arithmetic grammar for the desk-scale fine-tuning experiments.
//!
//! Easy questions are two-operand expressions answered by a single-token
//! result ("3+ 4" -> "7"); hard questions chain three operands and their
//! responses open with a reflective marker followed by a verification clause
//! and the intermediate and final results spelled in digit words.
//!
//! Token design notes, forced by the order-4 model: the question fuses each
//! leading operand with its operator so the full question fits in the three
//! context tokens visible after the separator, and hard responses share no
//! symbols with easy responses so the question-free layer cannot bleed into
//! easy generations.

use serde::{Deserialize, Serialize};

use super::Vocab;
use crate::corpus::TraceRecord;
use crate::error::{Error, Result};

const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// Arithmetic operator of the toy grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Add,
    Mul,
}

impl Operator {
    pub fn apply(&self, a: u64, b: u64) -> u64 {
        match self {
            Operator::Add => a + b,
            Operator::Mul => a * b,
        }
    }

    pub fn symbol(&self) -> char {
        match self {
            Operator::Add => '+',
            Operator::Mul => '*',
        }
    }
}

/// Grammar configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub operand_min: u8,
    pub operand_max: u8,
    pub operators: Vec<Operator>,
    pub seed: u64,
}

impl Default for GrammarSpec {
    fn default() -> Self {
        GrammarSpec {
            operand_min: 0,
            operand_max: 9,
            operators: vec![Operator::Add, Operator::Mul],
            seed: 0,
        }
    }
}

impl GrammarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.operand_min > self.operand_max || self.operand_max > 9 {
            return Err(Error::InvalidInput(
                "operand range must satisfy min <= max <= 9".into(),
            ));
        }
        if self.operators.is_empty() {
            return Err(Error::InvalidInput("at least one operator required".into()));
        }
        Ok(())
    }

    fn operands(&self) -> impl Iterator<Item = u64> + '_ {
        (self.operand_min..=self.operand_max).map(u64::from)
    }
}

/// Pretrain (easy) and fine-tune (hard) record sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarCorpus {
    pub pretrain: Vec<TraceRecord>,
    pub finetune: Vec<TraceRecord>,
}

fn fused(operand: u64, op: Operator) -> String {
    format!("{operand}{}", op.symbol())
}

fn digit_words(value: u64) -> String {
    value
        .to_string()
        .chars()
        .map(|c| DIGIT_WORDS[c.to_digit(10).unwrap() as usize])
        .collect::<Vec<_>>()
        .join(" ")
}

fn easy_question(op: Operator, a: u64, b: u64) -> String {
    format!("{} {b}", fused(a, op))
}

fn easy_response(op: Operator, a: u64, b: u64) -> String {
    op.apply(a, b).to_string()
}

fn hard_question(op: Operator, a: u64, b: u64, c: u64) -> String {
    format!("{} {} {c}", fused(a, op), fused(b, op))
}

fn hard_response(op: Operator, a: u64, b: u64, c: u64) -> String {
    let first = op.apply(a, b);
    let total = op.apply(first, c);
    format!(
        "wait verify . {} . {} .",
        digit_words(first),
        digit_words(total)
    )
}

/// Enumerate every easy (operator, operand pair) combination and every hard
/// (operator, operand triple) combination. Responses follow the templates
/// exactly; gold answers are the arithmetic results.
pub fn generate_grammar_corpus(spec: &GrammarSpec) -> Result<GrammarCorpus> {
    spec.validate()?;
    let mut pretrain = Vec::new();
    for &op in &spec.operators {
        for a in spec.operands() {
            for b in spec.operands() {
                let mut r = TraceRecord::new(
                    format!("easy-{}-{a}-{b}", op.symbol()),
                    easy_question(op, a, b),
                    easy_response(op, a, b),
                    op.apply(a, b).to_string(),
                );
                r.dataset = "toy-easy".into();
                pretrain.push(r);
            }
        }
    }
    let mut finetune = Vec::new();
    for &op in &spec.operators {
        for a in spec.operands() {
            for b in spec.operands() {
                for c in spec.operands() {
                    let total = op.apply(op.apply(a, b), c);
                    let mut r = TraceRecord::new(
                        format!("hard-{}-{a}-{b}-{c}", op.symbol()),
                        hard_question(op, a, b, c),
                        hard_response(op, a, b, c),
                        total.to_string(),
                    );
                    r.dataset = "toy-hard".into();
                    finetune.push(r);
                }
            }
        }
    }
    Ok(GrammarCorpus { pretrain, finetune })
}

/// The vocabulary covering every token either corpus can produce.
pub fn grammar_vocab(spec: &GrammarSpec) -> Result<Vocab> {
    spec.validate()?;
    let mut symbols: Vec<String> = Vec::new();
    // Fused operand-operator tokens in a fixed order.
    for &op in &spec.operators {
        for a in spec.operands() {
            symbols.push(fused(a, op));
        }
    }
    // Every numeral that can appear: operands and easy results.
    let mut numerals: Vec<u64> = spec.operands().collect();
    for &op in &spec.operators {
        for a in spec.operands() {
            for b in spec.operands() {
                numerals.push(op.apply(a, b));
            }
        }
    }
    numerals.sort_unstable();
    numerals.dedup();
    symbols.extend(numerals.into_iter().map(|n| n.to_string()));
    symbols.extend(DIGIT_WORDS.iter().map(|w| w.to_string()));
    symbols.push("wait".into());
    symbols.push("verify".into());
    symbols.push(".".into());
    Vocab::build(symbols)
}
