//! `cotlab toylm` — pretrain, finetune, sample, and the override sweep.

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use cotlab_core::corpus::{load_corpus, save_corpus};
use cotlab_core::toylm::{
    generate_grammar_corpus, grammar_vocab, prompt_sequence, reflective_trigger_rate,
    run_override_experiment, sft_sequence, FinetuneMode, GrammarSpec, Layer, ModelParams,
    NGramModel as GenericModel, Operator,
};
use cotlab_core::{Error, NGramModel, Real, Result, SampleConfig};
use serde::Serialize;

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Sft,
    Qfft,
    AlphaMix,
}

#[derive(Debug, Args, Serialize)]
pub struct GrammarArgs {
    #[arg(long, default_value_t = 0)]
    pub operand_min: u8,
    #[arg(long, default_value_t = 9)]
    pub operand_max: u8,
    /// Comma-separated list drawn from {add, mul}.
    #[arg(long, default_value = "add,mul")]
    pub operators: String,
    #[arg(long, default_value_t = 0)]
    pub grammar_seed: u64,
}

impl GrammarArgs {
    pub fn to_spec(&self) -> Result<GrammarSpec> {
        let mut operators = Vec::new();
        for op in self.operators.split(',') {
            match op.trim() {
                "add" => operators.push(Operator::Add),
                "mul" => operators.push(Operator::Mul),
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown operator {other:?} (expected add or mul)"
                    )))
                }
            }
        }
        let spec = GrammarSpec {
            operand_min: self.operand_min,
            operand_max: self.operand_max,
            operators,
            seed: self.grammar_seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub smoothing_k: Real,
    #[arg(long, default_value_t = 5.0)]
    pub finetune_weight: Real,
}

impl ModelArgs {
    fn params(&self) -> ModelParams<Real> {
        ModelParams {
            order: self.order,
            smoothing_k: self.smoothing_k,
            finetune_weight: self.finetune_weight,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
pub enum ToylmCommand {
    /// Generate the grammar corpora and train the base count layer.
    Pretrain {
        #[command(flatten)]
        grammar: GrammarArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Also write pretrain.jsonl and finetune.jsonl here.
        #[arg(long)]
        dump_corpora: Option<PathBuf>,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Add fine-tune counts from a corpus in the given mode.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Decode a continuation for one question.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long, default_value_t = 0.6)]
        tau: Real,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the decoded text here instead of stdout only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Short-ratio versus the question-keeping proportion alpha.
    OverrideSweep {
        #[command(flatten)]
        grammar: GrammarArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated alphas in [0, 1].
        #[arg(long, default_value = "0,0.01,0.1,1")]
        alphas: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        eval_questions: usize,
        #[arg(long, default_value_t = 20)]
        samples_per_q: usize,
        #[arg(long, default_value_t = 0.6)]
        tau: Real,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

pub fn run(cmd: &ToylmCommand) -> Result<()> {
    match cmd {
        ToylmCommand::Pretrain {
            grammar,
            model,
            dump_corpora,
            model_out,
        } => {
            let spec = grammar.to_spec()?;
            let corpus = generate_grammar_corpus(&spec)?;
            let vocab = grammar_vocab(&spec)?;
            let mut m: NGramModel = GenericModel::new(vocab.clone(), model.params())?;
            let sequences: Vec<Vec<u32>> = corpus
                .pretrain
                .iter()
                .map(|r| sft_sequence(&vocab, r))
                .collect::<Result<_>>()?;
            m.train_counts(&sequences, Layer::Base)?;
            m.save(model_out)?;
            let mut outputs = vec![model_out.clone()];
            if let Some(dir) = dump_corpora {
                std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                    path: dir.clone(),
                    source,
                })?;
                let pretrain_path = dir.join("pretrain.jsonl");
                let finetune_path = dir.join("finetune.jsonl");
                save_corpus(&pretrain_path, &corpus.pretrain)?;
                save_corpus(&finetune_path, &corpus.finetune)?;
                outputs.push(pretrain_path);
                outputs.push(finetune_path);
            }
            eprintln!(
                "pretrained on {} easy records ({} hard records available)",
                corpus.pretrain.len(),
                corpus.finetune.len()
            );
            let manifest =
                RunManifest::new("toylm pretrain", cmd, vec![], outputs, vec![grammar.grammar_seed])?;
            manifest.write_beside(model_out)?;
            Ok(())
        }
        ToylmCommand::Finetune {
            model,
            corpus,
            mode,
            alpha,
            seed,
            model_out,
        } => {
            let mut m: NGramModel = GenericModel::load(model)?;
            let records = load_corpus(corpus)?;
            let mode = match mode {
                ModeArg::Sft => FinetuneMode::Sft,
                ModeArg::Qfft => FinetuneMode::Qfft,
                ModeArg::AlphaMix => FinetuneMode::AlphaMix {
                    alpha: alpha
                        .ok_or_else(|| Error::InvalidInput("alpha-mix requires --alpha".into()))?,
                    seed: seed
                        .ok_or_else(|| Error::InvalidInput("alpha-mix requires --seed".into()))?,
                },
            };
            m.finetune(&records, mode)?;
            m.save(model_out)?;
            let manifest = RunManifest::new(
                "toylm finetune",
                cmd,
                vec![model.clone(), corpus.clone()],
                vec![model_out.clone()],
                seed.iter().copied().collect(),
            )?;
            manifest.write_beside(model_out)?;
            Ok(())
        }
        ToylmCommand::Sample {
            model,
            question,
            tau,
            max_len,
            seed,
            out,
        } => {
            let m: NGramModel = GenericModel::load(model)?;
            let prompt = prompt_sequence(m.vocab(), question)?;
            let cfg = SampleConfig {
                temperature: *tau,
                max_length: *max_len,
                seed: *seed,
            };
            let continuation = m.sample(&prompt, &cfg)?;
            let text = m.vocab().detokenize(&continuation);
            println!("{text}");
            if let Some(path) = out {
                std::fs::write(path, format!("{text}\n")).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                let manifest = RunManifest::new(
                    "toylm sample",
                    cmd,
                    vec![model.clone()],
                    vec![path.clone()],
                    vec![*seed],
                )?;
                manifest.write_beside(path)?;
            }
            Ok(())
        }
        ToylmCommand::OverrideSweep {
            grammar,
            model,
            alphas,
            seed,
            eval_questions,
            samples_per_q,
            tau,
            max_len,
            output,
        } => {
            let spec = grammar.to_spec()?;
            let alphas: Vec<f64> = alphas
                .split(',')
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad alpha {a:?}")))
                })
                .collect::<Result<_>>()?;
            let cfg = SampleConfig {
                temperature: *tau,
                max_length: *max_len,
                seed: *seed,
            };
            let params = model.params();
            let curve = run_override_experiment(
                &alphas,
                &spec,
                &params,
                &cfg,
                *eval_questions,
                *samples_per_q,
            )?;
            std::fs::write(output, curve.to_csv()).map_err(|source| Error::Io {
                path: output.clone(),
                source,
            })?;
            for p in &curve.points {
                eprintln!("alpha {:>6}: short_ratio {:.3}", p.alpha, p.short_ratio);
            }

            // Exploratory only: how often hard questions trigger the
            // reflective pattern after question-free fine-tuning.
            let corpus = generate_grammar_corpus(&spec)?;
            let vocab = grammar_vocab(&spec)?;
            let mut probe: NGramModel = GenericModel::new(vocab.clone(), params)?;
            let sequences: Vec<Vec<u32>> = corpus
                .pretrain
                .iter()
                .map(|r| sft_sequence(&vocab, r))
                .collect::<Result<_>>()?;
            probe.train_counts(&sequences, Layer::Base)?;
            probe.finetune(&corpus.finetune, FinetuneMode::Qfft)?;
            let hard_questions: Vec<String> = corpus
                .finetune
                .iter()
                .take(10)
                .map(|r| r.question.clone())
                .collect();
            let rate = reflective_trigger_rate(&probe, &hard_questions, &cfg, 5)?;
            eprintln!("exploratory: long-trigger rate on hard questions after question-free tuning = {rate:.3}");

            let manifest = RunManifest::new(
                "toylm override-sweep",
                cmd,
                vec![],
                vec![output.clone()],
                vec![*seed, grammar.grammar_seed],
            )?;
            manifest.write_beside(output)?;
            Ok(())
        }
    }
}
