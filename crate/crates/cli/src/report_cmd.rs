//! `cotlab report` — plot-ready series (JSON + CSV) from annotations,
//! corpora, and override curves.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cotlab_core::corpus::load_corpus;
use cotlab_core::patterns::{behavior_distribution, load_annotations, PatternAnnotation};
use cotlab_core::report::{behavior_dist_series, difficulty_ratio_series, override_curve_series, PlotData};
use cotlab_core::{Error, Real, Result};
use serde::Serialize;

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    DifficultyRatio,
    BehaviorDist,
    OverrideCurve,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: ReportKind,
    /// Annotation JSONL (difficulty-ratio, behavior-dist).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Corpus carrying per-question difficulty (difficulty-ratio, behavior-dist).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Override curve CSV (override-curve).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// JSON output path; a CSV twin is written beside it.
    #[arg(long)]
    pub output: PathBuf,
}

fn require<'a, T>(value: &'a Option<T>, flag: &str, kind: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("{kind} requires --{flag}")))
}

fn difficulty_by_question(path: &Path) -> Result<BTreeMap<String, u8>> {
    let records = load_corpus(path)?;
    let mut map = BTreeMap::new();
    for r in &records {
        if let Some(d) = r.difficulty {
            map.insert(r.id.clone(), d);
        }
    }
    Ok(map)
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let data: PlotData = match args.kind {
        ReportKind::DifficultyRatio => {
            let annotations_path = require(&args.annotations, "annotations", "difficulty-ratio")?;
            let corpus_path = require(&args.corpus, "corpus", "difficulty-ratio")?;
            inputs.push(annotation_input(annotations_path));
            inputs.push(corpus_path.clone());
            let rows = load_annotations(annotations_path)?;
            let difficulty = difficulty_by_question(corpus_path)?;
            let items: Vec<_> = rows
                .iter()
                .filter_map(|row| difficulty.get(&row.id).map(|&d| (row.label, d)))
                .collect();
            if items.is_empty() {
                return Err(Error::EmptyInput(
                    "no annotations with difficulty levels to report".into(),
                ));
            }
            difficulty_ratio_series(&items)
        }
        ReportKind::BehaviorDist => {
            let annotations_path = require(&args.annotations, "annotations", "behavior-dist")?;
            let corpus_path = require(&args.corpus, "corpus", "behavior-dist")?;
            inputs.push(annotation_input(annotations_path));
            inputs.push(corpus_path.clone());
            let rows = load_annotations(annotations_path)?;
            let difficulty = difficulty_by_question(corpus_path)?;
            let items: Vec<(PatternAnnotation, Option<u8>)> = rows
                .iter()
                .map(|row| {
                    let annotation = PatternAnnotation {
                        label: row.label,
                        boundary: row
                            .boundary_offset
                            .map(|o| (o, row.marker.clone().unwrap_or_default())),
                        behavior: row.behavior,
                    };
                    (annotation, difficulty.get(&row.id).copied())
                })
                .collect();
            let dist = behavior_distribution(&items);
            if dist.is_empty() {
                return Err(Error::EmptyInput(
                    "no behavior-labeled annotations with difficulty levels".into(),
                ));
            }
            behavior_dist_series(&dist)
        }
        ReportKind::OverrideCurve => {
            let curve_path = require(&args.curve, "curve", "override-curve")?;
            inputs.push(curve_path.clone());
            let points = read_curve_csv(curve_path)?;
            if points.is_empty() {
                return Err(Error::EmptyInput("curve CSV has no rows".into()));
            }
            override_curve_series(&points)
        }
    };

    let json_path = &args.output;
    let csv_path = json_path.with_extension("csv");
    std::fs::write(json_path, data.to_json()?).map_err(|source| Error::Io {
        path: json_path.clone(),
        source,
    })?;
    std::fs::write(&csv_path, data.to_csv()).map_err(|source| Error::Io {
        path: csv_path.clone(),
        source,
    })?;

    let manifest = RunManifest::new(
        "report",
        args,
        inputs,
        vec![json_path.clone(), csv_path],
        vec![],
    )?;
    manifest.write_beside(json_path)?;
    Ok(())
}

fn annotation_input(path: &Path) -> PathBuf {
    path.to_path_buf()
}

fn read_curve_csv(path: &Path) -> Result<Vec<(Real, Real)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::InvalidInput(format!("cannot read {}", path.display())),
        _ => Error::InvalidInput(format!("bad curve CSV: {e}")),
    })?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("bad curve CSV: {e}")))?;
        let alpha: Real = record
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidInput("curve CSV: bad alpha column".into()))?;
        let ratio: Real = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidInput("curve CSV: bad short_ratio column".into()))?;
        points.push((alpha, ratio));
    }
    Ok(points)
}
