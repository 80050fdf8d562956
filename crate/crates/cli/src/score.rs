//! `cotlab score` — accuracy, token, RAK, and AES metrics for an evaluated
//! corpus against a reference corpus.

use std::path::PathBuf;

use clap::Args;
use cotlab_core::answers::{equivalent, extract_boxed, VerdictRow};
use cotlab_core::corpus::load_corpus;
use cotlab_core::metrics::{
    aes, build_confusion, pass_at_1, rak, rak_averaged, solvability, token_stats, AesConfig,
};
use cotlab_core::patterns::classify_pattern;
use cotlab_core::report::{metrics_csv, MetricRow};
use cotlab_core::{Error, RakResult, Real, Result};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::util::{consistent_sample_count, grade, grouped_flags, joined_tag, load_lexicon};

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Evaluated corpus (JSONL).
    #[arg(long)]
    pub eval: PathBuf,
    /// Reference-model corpus deciding solvability (JSONL).
    #[arg(long)]
    pub reference: PathBuf,
    /// Lexicon JSON; defaults to the strict marker set.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = cotlab_core::answers::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Baseline accuracy for an AES row.
    #[arg(long, requires = "aes_base_tokens")]
    pub aes_base_acc: Option<f64>,
    /// Baseline mean tokens for an AES row.
    #[arg(long, requires = "aes_base_acc")]
    pub aes_base_tokens: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub aes_alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub aes_beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub aes_gamma: f64,
    #[arg(long, default_value_t = 100.0)]
    pub aes_scale: f64,
    /// Optional per-sample grading export (JSONL).
    #[arg(long)]
    pub verdicts_out: Option<PathBuf>,
    /// Metric report CSV.
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: &ScoreArgs) -> Result<()> {
    let eval = load_corpus(&args.eval)?;
    let reference = load_corpus(&args.reference)?;
    if eval.is_empty() {
        return Err(Error::EmptyInput("eval corpus has no records".into()));
    }
    let lexicon = load_lexicon(args.lexicon.as_deref())?;
    let k = consistent_sample_count(&eval)?;

    // Reference side: correctness -> per-question solvability.
    let ref_flags = grade(&reference, args.tolerance);
    let table = solvability(&grouped_flags(&reference, &ref_flags))?;
    for record in &eval {
        if table.get(&record.id).is_none() {
            return Err(Error::UnknownQuestion(format!(
                "{} present in eval but missing from reference",
                record.id
            )));
        }
    }

    // Evaluated side: correctness and pattern labels.
    let eval_flags = grade(&eval, args.tolerance);
    let accuracy = pass_at_1::<Real>(&grouped_flags(&eval, &eval_flags))?;
    let tokens = token_stats::<Real>(&eval)?;
    let labels: Vec<(String, u32, cotlab_core::patterns::PatternLabel)> = eval
        .iter()
        .map(|r| {
            (
                r.id.clone(),
                r.sample_index,
                classify_pattern(&r.response, &lexicon).label,
            )
        })
        .collect();

    let sample_indices: Vec<u32> = {
        let mut idx: Vec<u32> = eval.iter().map(|r| r.sample_index).collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    };
    debug_assert_eq!(sample_indices.len() as u32, k);
    let per_sample: Vec<RakResult> = sample_indices
        .iter()
        .map(|&idx| rak(&build_confusion(&table, &labels, idx)?))
        .collect::<Result<_>>()?;
    let mean_rak = rak_averaged(&per_sample)?;
    let mean_p_o = per_sample.iter().map(|r| r.p_o).sum::<Real>() / per_sample.len() as Real;
    let mean_p_e = per_sample.iter().map(|r| r.p_e).sum::<Real>() / per_sample.len() as Real;

    let aes_value = match (args.aes_base_acc, args.aes_base_tokens) {
        (Some(base_acc), Some(base_tokens)) => {
            let cfg = AesConfig {
                alpha: args.aes_alpha,
                beta: args.aes_beta,
                gamma: args.aes_gamma,
                scale: args.aes_scale,
            };
            Some(
                aes(
                    (base_acc, base_tokens),
                    (accuracy.overall_pct, tokens.mean_tokens),
                    &cfg,
                )?
                .aes,
            )
        }
        _ => None,
    };

    if let Some(verdicts_path) = &args.verdicts_out {
        let file = std::fs::File::create(verdicts_path).map_err(|source| Error::Io {
            path: verdicts_path.clone(),
            source,
        })?;
        let mut w = std::io::BufWriter::new(file);
        for (record, &equal) in eval.iter().zip(&eval_flags) {
            let extracted = extract_boxed(&record.response);
            let verdict = equivalent(&extracted.raw, &record.gold_answer, args.tolerance);
            let row = VerdictRow {
                id: record.id.clone(),
                sample_index: record.sample_index,
                extracted: extracted.raw,
                gold: record.gold_answer.clone(),
                equal,
                method: verdict.method,
            };
            serde_json::to_writer(&mut w, &row)?;
            std::io::Write::write_all(&mut w, b"\n").map_err(|source| Error::Io {
                path: verdicts_path.clone(),
                source,
            })?;
        }
        std::io::Write::flush(&mut w).map_err(|source| Error::Io {
            path: verdicts_path.clone(),
            source,
        })?;
    }

    let row = MetricRow {
        dataset: joined_tag(&eval, |r| &r.dataset),
        model: joined_tag(&eval, |r| &r.model),
        accuracy: accuracy.overall_pct,
        mean_tokens: tokens.mean_tokens,
        tokens_exact: !tokens.approximate,
        rak: mean_rak,
        rak_x100: mean_rak * 100.0,
        p_o: mean_p_o,
        p_e: mean_p_e,
        aes: aes_value,
    };
    let csv = metrics_csv(&[row])?;
    std::fs::write(&args.output, csv).map_err(|source| Error::Io {
        path: args.output.clone(),
        source,
    })?;

    let mut outputs = vec![args.output.clone()];
    outputs.extend(args.verdicts_out.clone());
    let manifest = RunManifest::new(
        "score",
        args,
        vec![args.eval.clone(), args.reference.clone()],
        outputs,
        vec![],
    )?;
    manifest.write_beside(&args.output)?;
    Ok(())
}
