//! Metric report rows and plot-ready data series.
//!
//! Figures are emitted as data (CSV and JSON series), never as images.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::patterns::{Behavior, BehaviorDistribution, PatternLabel};
use crate::Real;

/// One row of the metric report CSV.
///
/// RAK is reported both raw (in [-1, 1]) and scaled by 100, matching how
/// published tables print it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub model: String,
    /// Pass@1 accuracy in percent.
    pub accuracy: Real,
    pub mean_tokens: Real,
    pub tokens_exact: bool,
    pub rak: Real,
    pub rak_x100: Real,
    pub p_o: Real,
    pub p_e: Real,
    pub aes: Option<Real>,
}

/// Render metric rows as CSV with a header.
pub fn metrics_csv(rows: &[MetricRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| crate::Error::InvalidInput(format!("csv encode: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| crate::Error::InvalidInput(format!("csv flush: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// A labeled series of (x, y) points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(Real, Real)>,
}

/// Plot-ready data for one report kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub kind: String,
    pub series: Vec<PlotSeries>,
}

impl PlotData {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat CSV form: `series,x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,x,y\n");
        for series in &self.series {
            for (x, y) in &series.points {
                out.push_str(&format!("{},{},{}\n", series.label, x, y));
            }
        }
        out
    }
}

/// Long-CoT ratio per difficulty level.
pub fn difficulty_ratio_series(items: &[(PatternLabel, u8)]) -> PlotData {
    let mut counts: BTreeMap<u8, (usize, usize)> = BTreeMap::new();
    for (label, level) in items {
        let entry = counts.entry(*level).or_default();
        entry.1 += 1;
        if *label == PatternLabel::Long {
            entry.0 += 1;
        }
    }
    let points = counts
        .into_iter()
        .map(|(level, (long, total))| (level as Real, long as Real / total as Real))
        .collect();
    PlotData {
        kind: "difficulty-ratio".into(),
        series: vec![PlotSeries {
            label: "long_cot_ratio".into(),
            points,
        }],
    }
}

/// One series per behavior: proportion as a function of difficulty level.
pub fn behavior_dist_series(dist: &BTreeMap<u8, BehaviorDistribution>) -> PlotData {
    let mut series: Vec<PlotSeries> = Behavior::CATEGORIES
        .iter()
        .map(|b| PlotSeries {
            label: format!("{b:?}").to_lowercase(),
            points: Vec::new(),
        })
        .collect();
    for (level, d) in dist {
        for (i, behavior) in Behavior::CATEGORIES.iter().enumerate() {
            let p = d.proportions.get(behavior).copied().unwrap_or(0.0);
            series[i].points.push((*level as Real, p));
        }
    }
    PlotData {
        kind: "behavior-dist".into(),
        series,
    }
}

/// Short-ratio versus alpha, straight from an override curve.
pub fn override_curve_series(points: &[(Real, Real)]) -> PlotData {
    PlotData {
        kind: "override-curve".into(),
        series: vec![PlotSeries {
            label: "short_ratio".into(),
            points: points.to_vec(),
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_csv_has_header_and_rows() {
        let rows = vec![MetricRow {
            dataset: "gsm8k".into(),
            model: "toy".into(),
            accuracy: 88.2,
            mean_tokens: 1800.0,
            tokens_exact: true,
            rak: 0.284,
            rak_x100: 28.4,
            p_o: 0.8,
            p_e: 0.5,
            aes: Some(3.4),
        }];
        let csv = metrics_csv(&rows).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "dataset,model,accuracy,mean_tokens,tokens_exact,rak,rak_x100,p_o,p_e,aes"
        );
        assert!(lines.next().unwrap().starts_with("gsm8k,toy,88.2,1800"));
    }

    #[test]
    fn difficulty_ratio_points() {
        let items = vec![
            (PatternLabel::Long, 1),
            (PatternLabel::Short, 1),
            (PatternLabel::Long, 5),
            (PatternLabel::Long, 5),
        ];
        let data = difficulty_ratio_series(&items);
        assert_eq!(data.series[0].points, vec![(1.0, 0.5), (5.0, 1.0)]);
        let csv = data.to_csv();
        assert!(csv.starts_with("series,x,y\n"));
        assert!(csv.contains("long_cot_ratio,1,0.5"));
    }

    #[test]
    fn plot_json_round_trips() {
        let data = override_curve_series(&[(0.0, 0.9), (1.0, 0.05)]);
        let json = data.to_json().unwrap();
        let back: PlotData = serde_json::from_str(&json).unwrap();
        assert_eq!(back, data);
    }
}
