//! Command-line workbench for reasoning-trace analysis: dataset transforms,
//! pattern annotation, adaptability metrics, the toy-model override
//! experiment, endpoint sampling, and plot-data reports.

mod annotate;
mod collect;
mod manifest;
mod render;
mod report_cmd;
mod score;
mod toylm_cmd;
mod transform;
mod util;

use clap::Parser;
use cotlab_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "cotlab", version, about = "Reasoning-trace experimentation workbench")]
struct Cli {
    /// JSON object supplying defaults for any long flag of the subcommand;
    /// explicit flags win.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Build a dataset variant (nullify, alpha-mix, noise, splits, ...).
    Transform(transform::TransformArgs),
    /// Score an evaluated corpus against a reference corpus.
    Score(score::ScoreArgs),
    /// Label responses Short/Long with boundary and behavior.
    Annotate(annotate::AnnotateArgs),
    /// Export training views (supervised or question-free).
    Render(render::RenderArgs),
    /// Toy n-gram model commands.
    #[command(subcommand)]
    Toylm(toylm_cmd::ToylmCommand),
    /// Emit plot-ready series as JSON and CSV.
    Report(report_cmd::ReportArgs),
    /// Collect k samples per question from an endpoint, with caching.
    Collect(collect::CollectArgs),
    /// Probe an endpoint.
    Health(collect::HealthArgs),
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Transform(args) => transform::run(args),
        Command::Score(args) => score::run(args),
        Command::Annotate(args) => annotate::run(args),
        Command::Render(args) => render::run(args),
        Command::Toylm(cmd) => toylm_cmd::run(cmd),
        Command::Report(args) => report_cmd::run(args),
        Command::Collect(args) => collect::run(args),
        Command::Health(args) => collect::run_health(args),
    }
}

/// Merge `--config FILE` JSON entries into argv as flags, keeping any flag
/// the user passed explicitly.
fn argv_with_config() -> Result<Vec<String>> {
    let argv: Vec<String> = std::env::args().collect();
    let config_path = argv.iter().position(|a| a == "--config").map(|i| i + 1);
    let Some(value_idx) = config_path else {
        return Ok(argv);
    };
    let Some(path) = argv.get(value_idx) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)?;

    // Injected flags go right after the subcommand path (the leading tokens
    // that are not flags).
    let mut insert_at = 1;
    while insert_at < argv.len() && !argv[insert_at].starts_with('-') {
        insert_at += 1;
    }
    let mut injected = Vec::new();
    for (key, value) in &map {
        let flag = format!("--{key}");
        if argv.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        match value {
            serde_json::Value::Bool(true) => injected.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => {
                injected.push(flag);
                injected.push(s.clone());
            }
            other => {
                injected.push(flag);
                injected.push(other.to_string());
            }
        }
    }
    let mut merged = argv[..insert_at].to_vec();
    merged.extend(injected);
    merged.extend(argv[insert_at..].iter().cloned());
    Ok(merged)
}

fn main() {
    let argv = match argv_with_config() {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match dispatch(&cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            // Input problems exit 2; runtime/internal failures exit 1.
            std::process::exit(if e.is_input_error() { 2 } else { 1 });
        }
    }
}
