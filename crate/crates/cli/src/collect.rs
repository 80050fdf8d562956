//! `cotlab collect` and `cotlab health` — endpoint sampling with cache and
//! replay, and a reachability probe.

use std::path::PathBuf;

use clap::Args;
use cotlab_core::corpus::save_corpus;
use cotlab_core::inference::{
    collect_samples, health_check, load_questions, EndpointConfig, SamplingParams,
};
use cotlab_core::{Error, Result};
use serde::Serialize;

use crate::manifest::RunManifest;

#[derive(Debug, Args, Serialize)]
pub struct CollectArgs {
    /// Questions JSONL: {"id", "question", "gold_answer"}.
    #[arg(long)]
    pub questions: PathBuf,
    /// Endpoint config JSON (base_url, model, auth_env, ...).
    #[arg(long)]
    pub endpoint: PathBuf,
    /// Append-only completion cache (JSONL).
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub n_samples: Option<u32>,
    #[arg(long)]
    pub system_text: Option<String>,
    /// Dataset tag stamped on collected records.
    #[arg(long, default_value = "collected")]
    pub dataset: String,
    /// Output corpus (JSONL).
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: &CollectArgs) -> Result<()> {
    let questions = load_questions(&args.questions)?;
    let endpoint = EndpointConfig::from_file(&args.endpoint)?;
    let mut params = SamplingParams::default();
    if let Some(t) = args.temperature {
        params.temperature = t;
    }
    if let Some(m) = args.max_tokens {
        params.max_tokens = m;
    }
    if let Some(n) = args.n_samples {
        params.n_samples = n;
    }
    if let Some(s) = &args.system_text {
        params.system_text = s.clone();
    }

    let outcome = collect_samples(&questions, &endpoint, &params, &args.cache, &args.dataset)?;
    save_corpus(&args.output, &outcome.records)?;
    eprintln!(
        "collected {} records ({} cache hits, {} requests issued)",
        outcome.records.len(),
        outcome.cache_hits,
        outcome.requests_issued
    );
    for failure in &outcome.failed {
        eprintln!(
            "failed ({}, {}): {}",
            failure.question_id, failure.sample_index, failure.error
        );
    }

    let manifest = RunManifest::new(
        "collect",
        args,
        vec![args.questions.clone(), args.endpoint.clone(), args.cache.clone()],
        vec![args.output.clone()],
        vec![],
    )?;
    manifest.write_beside(&args.output)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct HealthArgs {
    /// Endpoint config JSON.
    #[arg(long)]
    pub endpoint: PathBuf,
}

pub fn run_health(args: &HealthArgs) -> Result<()> {
    let endpoint = EndpointConfig::from_file(&args.endpoint)?;
    let report = health_check(&endpoint)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(Error::Json)?
    );
    Ok(())
}
