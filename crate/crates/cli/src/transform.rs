//! `cotlab transform` — dataset variants with provenance manifests.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use cotlab_core::corpus::{load_corpus, save_corpus};
use cotlab_core::metrics::solvability;
use cotlab_core::transforms::{
    apply_alpha_mix, apply_noise_with_options, apply_qfft, build_preference_pairs, dad_split,
    low_resource_sample, select_shortest_correct, NoiseOptions, TransformKind, TransformSpec,
};
use cotlab_core::{Error, Result};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::util::{grade, grouped_flags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Nullify,
    AlphaMix,
    Noise,
    DadSplit,
    Shortest,
    PrefPairs,
    LowResource,
}

impl KindArg {
    fn to_kind(self) -> TransformKind {
        match self {
            KindArg::Nullify => TransformKind::Nullify,
            KindArg::AlphaMix => TransformKind::AlphaMix,
            KindArg::Noise => TransformKind::Noise,
            KindArg::DadSplit => TransformKind::DadSplit,
            KindArg::Shortest => TransformKind::ShortestSelect,
            KindArg::PrefPairs => TransformKind::PreferencePairs,
            KindArg::LowResource => TransformKind::LowResource,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TransformArgs {
    /// Input corpus (JSONL).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Proportion of records keeping their question (alpha-mix).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise level 1-4.
    #[arg(long)]
    pub level: Option<u8>,
    /// Level 3 only: randomize the truncation target in [40%, 60%].
    #[arg(long, default_value_t = false)]
    pub level3_random: bool,
    /// Questions to keep (low-resource).
    #[arg(long)]
    pub q_count: Option<usize>,
    /// Samples per kept question (low-resource).
    #[arg(long)]
    pub r_count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reference corpus for solvability (dad-split).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Answer-equivalence tolerance used when grading is needed.
    #[arg(long, default_value_t = cotlab_core::answers::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Output corpus file; for dad-split, an output directory.
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: &TransformArgs) -> Result<()> {
    let records = load_corpus(&args.input)?;
    let spec = TransformSpec {
        kind: args.kind.to_kind(),
        alpha: args.alpha,
        level: args.level,
        q_count: args.q_count,
        r_count: args.r_count,
        seed: args.seed,
    };
    spec.validate()?;

    let mut inputs = vec![args.input.clone()];
    let mut outputs = Vec::new();
    match args.kind {
        KindArg::Nullify => {
            let out = apply_qfft(&records);
            save_corpus(&args.output, &out)?;
            outputs.push(args.output.clone());
        }
        KindArg::AlphaMix => {
            let out = apply_alpha_mix(&records, args.alpha.unwrap(), args.seed.unwrap())?;
            save_corpus(&args.output, &out)?;
            outputs.push(args.output.clone());
        }
        KindArg::Noise => {
            let out = apply_noise_with_options(
                &records,
                args.level.unwrap(),
                args.seed.unwrap(),
                NoiseOptions {
                    level3_random: args.level3_random,
                },
            )?;
            save_corpus(&args.output, &out)?;
            outputs.push(args.output.clone());
        }
        KindArg::DadSplit => {
            let reference_path = args.reference.as_ref().ok_or_else(|| {
                Error::InvalidInput("dad-split requires --reference".into())
            })?;
            inputs.push(reference_path.clone());
            let reference = load_corpus(reference_path)?;
            let flags = grade(&reference, args.tolerance);
            let table = solvability(&grouped_flags(&reference, &flags))?;
            let (easy, hard) = dad_split(&records, &table)?;
            std::fs::create_dir_all(&args.output).map_err(|source| Error::Io {
                path: args.output.clone(),
                source,
            })?;
            let easy_path = args.output.join("easy.jsonl");
            let hard_path = args.output.join("hard.jsonl");
            save_corpus(&easy_path, &easy)?;
            save_corpus(&hard_path, &hard)?;
            eprintln!("dad-split: {} easy, {} hard", easy.len(), hard.len());
            outputs.push(easy_path);
            outputs.push(hard_path);
        }
        KindArg::Shortest => {
            let flags = grade(&records, args.tolerance);
            let selection = select_shortest_correct(&records, &flags)?;
            for id in &selection.skipped_questions {
                eprintln!("skipped (no correct sample): {id}");
            }
            save_corpus(&args.output, &selection.selected)?;
            outputs.push(args.output.clone());
        }
        KindArg::PrefPairs => {
            let flags = grade(&records, args.tolerance);
            let result = build_preference_pairs(&records, &flags)?;
            for id in &result.skipped_questions {
                eprintln!("skipped (needs two correct samples of distinct length): {id}");
            }
            let file = std::fs::File::create(&args.output).map_err(|source| Error::Io {
                path: args.output.clone(),
                source,
            })?;
            let mut w = std::io::BufWriter::new(file);
            for pair in &result.pairs {
                serde_json::to_writer(&mut w, pair)?;
                std::io::Write::write_all(&mut w, b"\n").map_err(|source| Error::Io {
                    path: args.output.clone(),
                    source,
                })?;
            }
            std::io::Write::flush(&mut w).map_err(|source| Error::Io {
                path: args.output.clone(),
                source,
            })?;
            outputs.push(args.output.clone());
        }
        KindArg::LowResource => {
            let q = args.q_count.unwrap_or(10);
            let r = args.r_count.unwrap_or(10);
            let out = low_resource_sample(&records, q, r, args.seed.unwrap())?;
            save_corpus(&args.output, &out)?;
            outputs.push(args.output.clone());
        }
    }

    // Provenance manifest for the transform itself, then the run manifest.
    let spec_path = if args.output.is_dir() {
        args.output.join("transform.json")
    } else {
        args.output.with_extension("transform.json")
    };
    spec.save_manifest(&spec_path)?;

    let manifest = RunManifest::new(
        "transform",
        args,
        inputs,
        outputs,
        args.seed.into_iter().collect(),
    )?;
    manifest.write_beside(&args.output)?;
    Ok(())
}
