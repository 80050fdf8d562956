//! `cotlab render` — export a corpus as training examples in the supervised
//! or question-free view.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use cotlab_core::corpus::{
    load_corpus, render_qfft, render_sft, save_rendered, RenderedRow, DEFAULT_SYSTEM_TEXT,
};
use cotlab_core::Result;
use serde::Serialize;

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewArg {
    Sft,
    Qfft,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    /// Input corpus (JSONL).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub view: ViewArg,
    /// System text for the supervised chat layout.
    #[arg(long, default_value = DEFAULT_SYSTEM_TEXT)]
    pub system_text: String,
    /// Rendered-training export (JSONL).
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: &RenderArgs) -> Result<()> {
    let records = load_corpus(&args.input)?;
    let rows: Vec<RenderedRow> = records
        .iter()
        .map(|r| {
            let rendered = match args.view {
                ViewArg::Sft => render_sft(r, &args.system_text)?,
                ViewArg::Qfft => render_qfft(r)?,
            };
            Ok(rendered.into())
        })
        .collect::<Result<_>>()?;
    save_rendered(&args.output, &rows)?;

    let manifest = RunManifest::new(
        "render",
        args,
        vec![args.input.clone()],
        vec![args.output.clone()],
        vec![],
    )?;
    manifest.write_beside(&args.output)?;
    Ok(())
}
