//! The question-mixing override experiment: how does the fraction of easy
//! questions answered in the Short pattern change as the proportion of
//! fine-tuning records that keep their question grows?

use serde::{Deserialize, Serialize};

use super::grammar::{generate_grammar_corpus, grammar_vocab, GrammarSpec};
use super::{prompt_sequence, FinetuneMode, Layer, ModelParams, NGramModel};
use crate::error::{Error, Result};
use crate::patterns::{classify_pattern, Lexicon, PatternLabel};
use crate::scalar::Scalar;

/// Decoding configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig<S: Scalar> {
    /// Temperature; 0 means argmax decoding.
    pub temperature: S,
    /// Maximum number of generated tokens.
    pub max_length: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for SampleConfig<S> {
    fn default() -> Self {
        SampleConfig {
            temperature: S::from_f(0.6),
            max_length: 64,
            seed: 0,
        }
    }
}

/// One point of the override curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverridePoint<S: Scalar> {
    pub alpha: f64,
    pub short_ratio: S,
    /// Samples behind the ratio (eval questions x samples per question).
    pub n_samples: usize,
}

/// Short-ratio as a function of the question-keeping proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideCurve<S: Scalar> {
    pub points: Vec<OverridePoint<S>>,
    pub n_eval_questions: usize,
    pub n_samples_per_q: usize,
    pub config: SampleConfig<S>,
    pub model: ModelParams<S>,
}

impl<S: Scalar> OverrideCurve<S> {
    /// CSV rows `(alpha, short_ratio, n_samples, seed)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,short_ratio,n_samples,seed\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.alpha, p.short_ratio, p.n_samples, self.config.seed
            ));
        }
        out
    }
}

/// Splitmix-style stream seed so every (alpha, question, sample) draw is an
/// independent deterministic function of the run seed.
fn derive_seed(root: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = root
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// For each alpha: pretrain a fresh model on the easy corpus, fine-tune with
/// the alpha mixture of the hard corpus, sample continuations for held-out
/// easy questions, and record the fraction classified Short.
pub fn run_override_experiment<S: Scalar>(
    alphas: &[f64],
    grammar: &GrammarSpec,
    model_params: &ModelParams<S>,
    cfg: &SampleConfig<S>,
    n_eval_questions: usize,
    n_samples_per_q: usize,
) -> Result<OverrideCurve<S>> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("at least one alpha required".into()));
    }
    for &alpha in alphas {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
        }
    }
    let mut alphas: Vec<f64> = alphas.to_vec();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();
    if n_eval_questions == 0 || n_samples_per_q == 0 {
        return Err(Error::InvalidInput(
            "eval questions and samples per question must be positive".into(),
        ));
    }

    let corpus = generate_grammar_corpus(grammar)?;
    let vocab = grammar_vocab(grammar)?;
    if n_eval_questions > corpus.pretrain.len() {
        return Err(Error::InvalidInput(format!(
            "requested {n_eval_questions} eval questions but the grammar has {}",
            corpus.pretrain.len()
        )));
    }

    // Held out from fine-tuning by construction (the fine-tune set contains
    // only hard questions); chosen deterministically from the grammar seed.
    let eval_indices = {
        use rand::SeedableRng;
        let mut rng =
            rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, grammar.seed, 0, 0));
        let mut idx: Vec<usize> =
            rand::seq::index::sample(&mut rng, corpus.pretrain.len(), n_eval_questions).into_vec();
        idx.sort_unstable();
        idx
    };

    let base_sequences: Vec<Vec<u32>> = corpus
        .pretrain
        .iter()
        .map(|r| super::sft_sequence(&vocab, r))
        .collect::<Result<_>>()?;

    let lexicon = Lexicon::default();
    let mut points = Vec::with_capacity(alphas.len());
    for (alpha_idx, &alpha) in alphas.iter().enumerate() {
        let mut model = NGramModel::new(vocab.clone(), *model_params)?;
        model.train_counts(&base_sequences, Layer::Base)?;
        model.finetune(
            &corpus.finetune,
            FinetuneMode::AlphaMix {
                alpha,
                seed: derive_seed(cfg.seed, alpha_idx as u64, 1, 0),
            },
        )?;

        let mut short = 0usize;
        let mut total = 0usize;
        for (q_pos, &q_idx) in eval_indices.iter().enumerate() {
            let prompt = prompt_sequence(&vocab, &corpus.pretrain[q_idx].question)?;
            for s in 0..n_samples_per_q {
                let sample_cfg = SampleConfig {
                    seed: derive_seed(cfg.seed, alpha_idx as u64, q_pos as u64 + 1, s as u64 + 1),
                    ..*cfg
                };
                let continuation = model.sample(&prompt, &sample_cfg)?;
                let text = vocab.detokenize(&continuation);
                if classify_pattern(&text, &lexicon).label == PatternLabel::Short {
                    short += 1;
                }
                total += 1;
            }
        }
        points.push(OverridePoint {
            alpha,
            short_ratio: S::from_count(short as u64) / S::from_count(total as u64),
            n_samples: total,
        });
    }

    Ok(OverrideCurve {
        points,
        n_eval_questions,
        n_samples_per_q,
        config: *cfg,
        model: *model_params,
    })
}

/// Exploratory statistic: how often sampled continuations of *hard*
/// questions contain a reflective marker. Reported for inspection only; no
/// acceptance bound is attached to it.
pub fn reflective_trigger_rate<S: Scalar>(
    model: &NGramModel<S>,
    questions: &[String],
    cfg: &SampleConfig<S>,
    n_samples_per_q: usize,
) -> Result<S> {
    if questions.is_empty() || n_samples_per_q == 0 {
        return Err(Error::EmptyInput("no hard questions to probe".into()));
    }
    let lexicon = Lexicon::default();
    let mut long = 0usize;
    let mut total = 0usize;
    for (qi, q) in questions.iter().enumerate() {
        let prompt = prompt_sequence(model.vocab(), q)?;
        for s in 0..n_samples_per_q {
            let sample_cfg = SampleConfig {
                seed: derive_seed(cfg.seed, 0xA11CE, qi as u64, s as u64),
                ..*cfg
            };
            let continuation = model.sample(&prompt, &sample_cfg)?;
            let text = model.vocab().detokenize(&continuation);
            if classify_pattern(&text, &lexicon).label == PatternLabel::Long {
                long += 1;
            }
            total += 1;
        }
    }
    Ok(S::from_count(long as u64) / S::from_count(total as u64))
}
