//! Deterministic add-k backoff n-gram model with separate pretraining and
//! fine-tuning count layers.
//!
//! The model exists to make fine-tuning data effects auditable at desk
//! scale: counts are exact, the fine-tune layer is weighted by a single
//! intensity knob `w`, and every probability is `(c + k) / (C + k|V|)` at
//! the longest context suffix that has been seen.

mod grammar;
mod experiment;

pub use experiment::{
    reflective_trigger_rate, run_override_experiment, OverrideCurve, OverridePoint, SampleConfig,
};
pub use grammar::{generate_grammar_corpus, grammar_vocab, GrammarCorpus, GrammarSpec, Operator};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TraceRecord;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transforms::apply_alpha_mix;

pub const BOS: &str = "<bos>";
pub const SEP: &str = "<sep>";
pub const EOS: &str = "<eos>";

/// Ordered symbol table with the three special tokens always present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Build from plain symbols; specials are prepended.
    pub fn build<I, T>(symbols: I) -> Result<Vocab>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut all: Vec<String> = vec![BOS.into(), SEP.into(), EOS.into()];
        all.extend(symbols.into_iter().map(Into::into));
        Vocab::from_symbols(all)
    }

    /// Build from a full ordered list that already contains the specials.
    pub fn from_symbols(symbols: Vec<String>) -> Result<Vocab> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocab symbol {s:?}")));
            }
        }
        for special in [BOS, SEP, EOS] {
            if !index.contains_key(special) {
                return Err(Error::InvalidInput(format!("vocab missing special {special:?}")));
            }
        }
        Ok(Vocab { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn bos(&self) -> u32 {
        self.index[BOS]
    }

    pub fn sep(&self) -> u32 {
        self.index[SEP]
    }

    pub fn eos(&self) -> u32 {
        self.index[EOS]
    }

    /// Whitespace tokenization into ids; unknown symbols are errors.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace()
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| Error::OutOfVocab(w.to_string()))
            })
            .collect()
    }

    /// Space-joined symbol text for a token sequence.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.symbol(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Which count layer an update targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Base,
    Finetune,
}

/// How fine-tuning sequences are built from records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinetuneMode {
    /// `[BOS, Q, SEP, R, EOS]` per record.
    Sft,
    /// `[BOS, R, EOS]` per record; questions never enter the counts.
    Qfft,
    /// Keep questions on a seeded `alpha` fraction of records, then train
    /// SFT-style; nullified records contribute `[BOS, R, EOS]`.
    AlphaMix { alpha: f64, seed: u64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    by_token: HashMap<u32, u64>,
}

/// Count tables for context lengths `0..order-1`, keyed by the context
/// token ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountTable {
    maps: Vec<HashMap<Vec<u32>, ContextCounts>>,
}

impl CountTable {
    fn new(order: usize) -> Self {
        CountTable {
            maps: vec![HashMap::new(); order],
        }
    }

    fn increment(&mut self, context: &[u32], token: u32) {
        let entry = self.maps[context.len()]
            .entry(context.to_vec())
            .or_default();
        entry.total += 1;
        *entry.by_token.entry(token).or_insert(0) += 1;
    }

    fn get(&self, context: &[u32]) -> Option<&ContextCounts> {
        self.maps.get(context.len())?.get(context)
    }

    /// Total number of recorded unigram events (= tokens seen).
    pub fn token_total(&self) -> u64 {
        self.maps[0].get(&Vec::new()).map_or(0, |c| c.total)
    }
}

/// Model hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S: Scalar> {
    pub order: usize,
    pub smoothing_k: S,
    pub finetune_weight: S,
}

impl<S: Scalar> Default for ModelParams<S> {
    fn default() -> Self {
        ModelParams {
            order: 4,
            smoothing_k: S::from_f(0.1),
            finetune_weight: S::from_f(5.0),
        }
    }
}

/// Backoff n-gram model over a fixed vocabulary.
///
/// The effective count of `(context, token)` is
/// `base + w * finetune`; next-token probabilities are add-k smoothed at the
/// longest context suffix whose effective total is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel<S: Scalar> {
    order: usize,
    smoothing_k: S,
    finetune_weight: S,
    vocab: Vocab,
    base: CountTable,
    finetune: CountTable,
}

impl<S: Scalar> NGramModel<S> {
    pub fn new(vocab: Vocab, params: ModelParams<S>) -> Result<Self> {
        if params.order == 0 {
            return Err(Error::InvalidInput("order must be >= 1".into()));
        }
        if params.smoothing_k <= S::zero() {
            return Err(Error::InvalidInput("smoothing_k must be > 0".into()));
        }
        if params.finetune_weight < S::zero() {
            return Err(Error::InvalidInput("finetune_weight must be >= 0".into()));
        }
        Ok(NGramModel {
            order: params.order,
            smoothing_k: params.smoothing_k,
            finetune_weight: params.finetune_weight,
            vocab,
            base: CountTable::new(params.order),
            finetune: CountTable::new(params.order),
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_k(&self) -> S {
        self.smoothing_k
    }

    pub fn finetune_weight(&self) -> S {
        self.finetune_weight
    }

    pub fn base_counts(&self) -> &CountTable {
        &self.base
    }

    pub fn finetune_counts(&self) -> &CountTable {
        &self.finetune
    }

    fn table_mut(&mut self, layer: Layer) -> &mut CountTable {
        match layer {
            Layer::Base => &mut self.base,
            Layer::Finetune => &mut self.finetune,
        }
    }

    fn check_ids(&self, sequence: &[u32]) -> Result<()> {
        for &id in sequence {
            if id as usize >= self.vocab.len() {
                return Err(Error::OutOfVocab(format!("token id {id}")));
            }
        }
        Ok(())
    }

    /// Accumulate counts for every position and every context length
    /// `0..order-1`. Commutative over sequence order.
    pub fn train_counts(&mut self, sequences: &[Vec<u32>], layer: Layer) -> Result<()> {
        for seq in sequences {
            self.check_ids(seq)?;
        }
        let order = self.order;
        let table = self.table_mut(layer);
        for seq in sequences {
            for i in 0..seq.len() {
                let max_len = i.min(order - 1);
                for context_len in 0..=max_len {
                    table.increment(&seq[i - context_len..i], seq[i]);
                }
            }
        }
        Ok(())
    }

    /// Fine-tune on trace records in the given mode. Errors on an empty
    /// record set.
    pub fn finetune(&mut self, records: &[TraceRecord], mode: FinetuneMode) -> Result<()> {
        if records.is_empty() {
            return Err(Error::EmptyInput("finetune over zero records".into()));
        }
        let sequences: Vec<Vec<u32>> = match mode {
            FinetuneMode::Sft => records
                .iter()
                .map(|r| sft_sequence(&self.vocab, r))
                .collect::<Result<_>>()?,
            FinetuneMode::Qfft => records
                .iter()
                .map(|r| qfft_sequence(&self.vocab, r))
                .collect::<Result<_>>()?,
            FinetuneMode::AlphaMix { alpha, seed } => {
                let mixed = apply_alpha_mix(records, alpha, seed)?;
                mixed
                    .iter()
                    .map(|r| sft_sequence(&self.vocab, r))
                    .collect::<Result<_>>()?
            }
        };
        self.train_counts(&sequences, Layer::Finetune)
    }

    fn effective(&self, context: &[u32]) -> Option<(S, Vec<S>)> {
        let base = self.base.get(context);
        let fine = self.finetune.get(context);
        let w = self.finetune_weight;
        let total = S::from_count(base.map_or(0, |c| c.total))
            + w * S::from_count(fine.map_or(0, |c| c.total));
        if total <= S::zero() {
            return None;
        }
        let mut counts = vec![S::zero(); self.vocab.len()];
        if let Some(c) = base {
            for (&t, &n) in &c.by_token {
                counts[t as usize] += S::from_count(n);
            }
        }
        if let Some(c) = fine {
            for (&t, &n) in &c.by_token {
                counts[t as usize] += w * S::from_count(n);
            }
        }
        Some((total, counts))
    }

    /// Add-k smoothed next-token distribution at the longest seen context
    /// suffix; uniform over the vocabulary when nothing has been seen.
    pub fn next_token_dist(&self, context: &[u32]) -> Vec<S> {
        let v = self.vocab.len();
        let max_ctx = (self.order - 1).min(context.len());
        for ctx_len in (0..=max_ctx).rev() {
            let suffix = &context[context.len() - ctx_len..];
            if let Some((total, counts)) = self.effective(suffix) {
                let k = self.smoothing_k;
                let denom = total + k * S::from_count(v as u64);
                return counts.into_iter().map(|c| (c + k) / denom).collect();
            }
        }
        vec![S::one() / S::from_count(v as u64); v]
    }

    /// Autoregressive sampling. Temperature 0 decodes argmax (ties to the
    /// lowest token id); otherwise probabilities are raised to `1/tau` and
    /// renormalized. Returns the continuation, excluding the terminating
    /// end-of-sequence token.
    pub fn sample(&self, prompt: &[u32], cfg: &SampleConfig<S>) -> Result<Vec<u32>> {
        self.check_ids(prompt)?;
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let mut context: Vec<u32> = prompt.to_vec();
        let mut out = Vec::new();
        let eos = self.vocab.eos();
        while out.len() < cfg.max_length {
            let dist = self.next_token_dist(&context);
            let token = if cfg.temperature == S::zero() {
                argmax(&dist)
            } else {
                draw_tempered(&dist, cfg.temperature, &mut rng)
            };
            if token == eos {
                break;
            }
            out.push(token);
            context.push(token);
        }
        Ok(out)
    }

    /// Mean negative log-probability per response token, with the question
    /// excluded from every context: scoring starts at a fresh BOS.
    pub fn nll_response(&self, record: &TraceRecord) -> Result<S> {
        let response_ids = self.vocab.tokenize(&record.response)?;
        if response_ids.is_empty() {
            return Err(Error::EmptyInput(format!(
                "record {} has an empty response",
                record.id
            )));
        }
        let mut seq = Vec::with_capacity(response_ids.len() + 1);
        seq.push(self.vocab.bos());
        seq.extend_from_slice(&response_ids);
        let mut sum = S::zero();
        for t in 1..seq.len() {
            let dist = self.next_token_dist(&seq[..t]);
            sum -= dist[seq[t] as usize].ln();
        }
        Ok(sum / S::from_count(response_ids.len() as u64))
    }

    /// Write a versioned JSON dump; exact round-trip via [`NGramModel::load`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()>
    where
        S: Serialize,
    {
        let path = path.as_ref();
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            order: self.order,
            smoothing_k: self.smoothing_k,
            finetune_weight: self.finetune_weight,
            vocab: self.vocab.symbols.clone(),
            base: encode_table(&self.base),
            finetune: encode_table(&self.finetune),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self>
    where
        S: serde::de::DeserializeOwned,
    {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ModelFile<S> = serde_json::from_slice(&bytes)?;
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model file version {}",
                file.version
            )));
        }
        let vocab = Vocab::from_symbols(file.vocab)?;
        let mut model = NGramModel::new(
            vocab,
            ModelParams {
                order: file.order,
                smoothing_k: file.smoothing_k,
                finetune_weight: file.finetune_weight,
            },
        )?;
        model.base = decode_table(&file.base, file.order, model.vocab.len())?;
        model.finetune = decode_table(&file.finetune, file.order, model.vocab.len())?;
        Ok(model)
    }
}

fn argmax<S: Scalar>(dist: &[S]) -> u32 {
    let mut best = 0usize;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best as u32
}

/// Sample from `p^(1/tau)` renormalized, computed in log space so that tiny
/// temperatures degrade gracefully into argmax.
fn draw_tempered<S: Scalar>(dist: &[S], tau: S, rng: &mut ChaCha12Rng) -> u32 {
    let max_p = dist.iter().fold(S::zero(), |a, &b| if b > a { b } else { a });
    let weights: Vec<S> = dist
        .iter()
        .map(|&p| ((p.ln() - max_p.ln()) / tau).exp())
        .collect();
    let total: S = weights.iter().copied().sum();
    let u = S::from_f(rng.gen::<f64>()) * total;
    let mut acc = S::zero();
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u32;
        }
    }
    (weights.len() - 1) as u32
}

/// `[BOS] Q [SEP] R [EOS]`; a record with an empty question contributes no
/// prompt segment and degenerates to `[BOS] R [EOS]`.
pub fn sft_sequence(vocab: &Vocab, record: &TraceRecord) -> Result<Vec<u32>> {
    let question = vocab.tokenize(&record.question)?;
    let response = vocab.tokenize(&record.response)?;
    let mut seq = Vec::with_capacity(question.len() + response.len() + 3);
    seq.push(vocab.bos());
    if !question.is_empty() {
        seq.extend_from_slice(&question);
        seq.push(vocab.sep());
    }
    seq.extend_from_slice(&response);
    seq.push(vocab.eos());
    Ok(seq)
}

/// `[BOS] R [EOS]`: the question never appears.
pub fn qfft_sequence(vocab: &Vocab, record: &TraceRecord) -> Result<Vec<u32>> {
    let response = vocab.tokenize(&record.response)?;
    let mut seq = Vec::with_capacity(response.len() + 2);
    seq.push(vocab.bos());
    seq.extend_from_slice(&response);
    seq.push(vocab.eos());
    Ok(seq)
}

/// `[BOS] Q [SEP]`: the generation prompt for a question.
pub fn prompt_sequence(vocab: &Vocab, question: &str) -> Result<Vec<u32>> {
    let question = vocab.tokenize(question)?;
    let mut seq = Vec::with_capacity(question.len() + 2);
    seq.push(vocab.bos());
    seq.extend_from_slice(&question);
    seq.push(vocab.sep());
    Ok(seq)
}

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile<S> {
    version: u32,
    order: usize,
    smoothing_k: S,
    finetune_weight: S,
    vocab: Vec<String>,
    base: BTreeMap<String, BTreeMap<String, u64>>,
    finetune: BTreeMap<String, BTreeMap<String, u64>>,
}

fn encode_table(table: &CountTable) -> BTreeMap<String, BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    for map in &table.maps {
        for (context, counts) in map {
            let key = context
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let tokens: BTreeMap<String, u64> = counts
                .by_token
                .iter()
                .map(|(t, n)| (t.to_string(), *n))
                .collect();
            out.insert(key, tokens);
        }
    }
    out
}

fn decode_table(
    encoded: &BTreeMap<String, BTreeMap<String, u64>>,
    order: usize,
    vocab_len: usize,
) -> Result<CountTable> {
    let mut table = CountTable::new(order);
    for (key, tokens) in encoded {
        let context: Vec<u32> = if key.is_empty() {
            Vec::new()
        } else {
            key.split(',')
                .map(|s| {
                    s.parse::<u32>()
                        .map_err(|_| Error::ModelFormat(format!("bad context key {key:?}")))
                })
                .collect::<Result<_>>()?
        };
        if context.len() >= order {
            return Err(Error::ModelFormat(format!(
                "context {key:?} exceeds order {order}"
            )));
        }
        if context.iter().any(|&id| id as usize >= vocab_len) {
            return Err(Error::ModelFormat(format!("context {key:?} out of vocab")));
        }
        let mut counts = ContextCounts::default();
        for (t, n) in tokens {
            let id: u32 = t
                .parse()
                .map_err(|_| Error::ModelFormat(format!("bad token id {t:?}")))?;
            if id as usize >= vocab_len {
                return Err(Error::ModelFormat(format!("token id {id} out of vocab")));
            }
            counts.total += n;
            counts.by_token.insert(id, *n);
        }
        table.maps[context.len()].insert(context, counts);
    }
    Ok(table)
}
