//! CSV and manifest emission. CSV is long-format (`round,metric,value,stderr`)
//! so plotting tools can filter by metric without pivoting; the manifest makes
//! a run reproducible from its output directory alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::{FerEstimate, MetricSeries, SweepTable};

/// Everything a preset run can produce. Constructed once per run, so the
/// size spread between variants does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Series(MetricSeries),
    Sweep(SweepTable),
    Fer(Vec<FerEstimate>),
}

fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

/// Write the long-format CSV. Scalar metrics use round 0; sweep and FER rows
/// carry the sweep value / crossover probability in the round column.
pub fn emit_csv(output: &RunOutput, path: &Path) -> std::io::Result<()> {
    let mut rows: Vec<String> = vec!["round,metric,value,stderr".to_string()];
    match output {
        RunOutput::Series(series) => push_series_rows(&mut rows, series),
        RunOutput::Sweep(table) => {
            for point in &table.points {
                let v = fmt(point.value);
                rows.push(format!(
                    "{v},efficiency_tracking,{},{}",
                    fmt(point.tracking.efficiency_ratio),
                    fmt(point.tracking.efficiency_stderr)
                ));
                rows.push(format!(
                    "{v},efficiency_baseline,{},{}",
                    fmt(point.baseline.efficiency_ratio),
                    fmt(point.baseline.efficiency_stderr)
                ));
            }
        }
        RunOutput::Fer(estimates) => {
            for est in estimates {
                rows.push(format!(
                    "{},fer,{},{}",
                    fmt(est.p),
                    fmt(est.fer),
                    fmt((est.ci_high - est.ci_low) / 2.0)
                ));
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    for row in rows {
        file.write_all(row.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn push_series_rows(rows: &mut Vec<String>, series: &MetricSeries) {
    for (i, &t) in series.rounds.iter().enumerate() {
        rows.push(format!(
            "{t},mean_revenue,{},{}",
            fmt(series.mean_revenue[i]),
            fmt(series.stderr_revenue[i])
        ));
        rows.push(format!("{t},mean_max_bid,{},", fmt(series.mean_max_bid[i])));
        rows.push(format!("{t},winner_prob,{},", fmt(series.winner_prob[i])));
        rows.push(format!("{t},mean_payoff,{},", fmt(series.mean_payoff[i])));
        for (d, &delta) in series.delta_levels.iter().enumerate() {
            rows.push(format!(
                "{t},conv_prob_delta_{delta},{},",
                fmt(series.conv_prob[d][i])
            ));
            if !series.payoff_conv_prob.is_empty() {
                rows.push(format!(
                    "{t},payoff_conv_prob_delta_{delta},{},",
                    fmt(series.payoff_conv_prob[d][i])
                ));
            }
        }
    }
    if !series.rounds.is_empty() {
        rows.push(format!(
            "0,efficiency_ratio,{},{}",
            fmt(series.efficiency_ratio),
            fmt(series.efficiency_stderr)
        ));
    }
}

/// Reproducibility record written once per output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub preset_name: String,
    pub master_seed: u64,
    /// Flat config echo; feeding these pairs back through the config parser
    /// reproduces the preset exactly.
    pub config: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Files emitted by the run, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

///// Atomic write: serialize to a temp file in the target directory, then
/// rename over the final name.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    let tmp = dir.join(".manifest.json.tmp");
    std::fs::write(&tmp, json.as_bytes())?;
    std::fs::rename(&tmp, dir.join(MANIFEST_FILE))
}

pub fn read_manifest(dir: &Path) -> std::io::Result<RunManifest> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
