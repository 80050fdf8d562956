//! `cotlab annotate` — pattern/behavior labels for every record, with
//! optional external judging of abstentions.

use std::path::PathBuf;

use clap::Args;
use cotlab_core::corpus::load_corpus;
use cotlab_core::inference::{judge_behavior, EndpointConfig, DEFAULT_JUDGE_RUBRIC};
use cotlab_core::patterns::{
    annotate_response, behavior_window, save_annotations, split_at_boundary, AnnotationRow,
    Behavior, PatternLabel, DEFAULT_WINDOW_SENTENCES,
};
use cotlab_core::{Error, Result};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::util::load_lexicon;

#[derive(Debug, Args, Serialize)]
pub struct AnnotateArgs {
    /// Corpus to annotate (JSONL).
    #[arg(long)]
    pub input: PathBuf,
    /// Lexicon JSON; defaults to the strict marker set.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Endpoint config; routes abstained behavior windows to the judge.
    #[arg(long)]
    pub judge_config: Option<PathBuf>,
    /// Override the built-in judge rubric.
    #[arg(long, requires = "judge_config")]
    pub rubric_file: Option<PathBuf>,
    /// Annotation export (JSONL).
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: &AnnotateArgs) -> Result<()> {
    let records = load_corpus(&args.input)?;
    let lexicon = load_lexicon(args.lexicon.as_deref())?;
    let judge = args
        .judge_config
        .as_ref()
        .map(EndpointConfig::from_file)
        .transpose()?;
    let rubric = match &args.rubric_file {
        Some(path) => std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?,
        None => DEFAULT_JUDGE_RUBRIC.to_string(),
    };

    let mut rows = Vec::with_capacity(records.len());
    let mut judged = 0usize;
    for record in &records {
        let mut annotation = annotate_response(&record.response, &lexicon);
        if annotation.label == PatternLabel::Long
            && annotation.behavior == Some(Behavior::Abstain)
        {
            if let Some(endpoint) = &judge {
                let split = split_at_boundary(&record.response, &lexicon)?;
                let window = behavior_window(&split, DEFAULT_WINDOW_SENTENCES);
                let outcome = judge_behavior(&window, endpoint, &rubric)?;
                if outcome.behavior == Behavior::Abstain {
                    eprintln!(
                        "judge abstained on ({}, {}): {:?}",
                        record.id, record.sample_index, outcome.raw_reply
                    );
                }
                annotation.behavior = Some(outcome.behavior);
                judged += 1;
            }
        }
        rows.push(AnnotationRow::new(&record.id, record.sample_index, &annotation));
    }
    save_annotations(&args.output, &rows)?;
    if judged > 0 {
        eprintln!("judge consulted for {judged} abstained windows");
    }

    let manifest = RunManifest::new(
        "annotate",
        args,
        vec![args.input.clone()],
        vec![args.output.clone()],
        vec![],
    )?;
    manifest.write_beside(&args.output)?;
    Ok(())
}
