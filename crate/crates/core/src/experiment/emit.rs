//! Result files.
//!
//! CSV output is two files: `regret.csv` with one row per (policy, seed,
//! checkpoint) and `summary.csv` with the per-policy mean and CI half-width.
//! JSON output is one `results.json` holding the same rows.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::error::{Error, Result};
use crate::sim::Aggregate;

pub const REGRET_HEADER: &str = "policy,seed,t,cum_regret,mean_flag";
pub const SUMMARY_HEADER: &str = "policy,t,mean_cum_regret,ci_halfwidth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub policy: String,
    pub seed: u64,
    pub t: usize,
    pub cum_regret: f64,
    /// 1 when the policy's aggregate rests on a single seed (CI reported as 0).
    pub mean_flag: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub t: usize,
    pub mean_cum_regret: f64,
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTables {
    pub regret: Vec<RegretRow>,
    pub summary: Vec<SummaryRow>,
}

impl ResultTables {
    pub fn from_aggregate(aggregate: &Aggregate) -> Result<Self> {
        if aggregate.policies.is_empty() || aggregate.traces.is_empty() {
            return Err(Error::InvalidArgument("aggregate is empty".into()));
        }
        let flags: std::collections::HashMap<&str, u8> = aggregate
            .policies
            .iter()
            .map(|p| (p.policy.as_str(), p.single_seed as u8))
            .collect();
        let regret = aggregate
            .traces
            .iter()
            .flat_map(|tr| {
                let flag = flags.get(tr.policy.as_str()).copied().unwrap_or(0);
                aggregate.checkpoints.iter().map(move |&t| RegretRow {
                    policy: tr.policy.clone(),
                    seed: tr.seed,
                    t,
                    cum_regret: tr.at(t),
                    mean_flag: flag,
                })
            })
            .collect();
        let summary = aggregate
            .policies
            .iter()
            .flat_map(|p| {
                aggregate
                    .checkpoints
                    .iter()
                    .enumerate()
                    .map(move |(k, &t)| SummaryRow {
                        policy: p.policy.clone(),
                        t,
                        mean_cum_regret: p.mean[k],
                        ci_halfwidth: p.ci_halfwidth[k],
                    })
            })
            .collect();
        Ok(Self { regret, summary })
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_regret_csv<W: Write>(rows: &[RegretRow], mut out: W) -> Result<()> {
    writeln!(out, "{REGRET_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.policy),
            r.seed,
            r.t,
            format_float(r.cum_regret),
            r.mean_flag
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            csv_field(&r.policy),
            r.t,
            format_float(r.mean_cum_regret),
            format_float(r.ci_halfwidth)
        )?;
    }
    Ok(())
}

pub fn read_regret_csv<R: std::io::Read>(input: R) -> Result<Vec<RegretRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes the aggregate under `dir` and returns the files written.
pub fn emit_results(aggregate: &Aggregate, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    let tables = ResultTables::from_aggregate(aggregate)?;
    std::fs::create_dir_all(dir)?;
    match format {
        OutputFormat::Csv => {
            let regret = dir.join("regret.csv");
            let summary = dir.join("summary.csv");
            let mut buf = Vec::new();
            write_regret_csv(&tables.regret, &mut buf)?;
            std::fs::write(&regret, &buf)?;
            buf.clear();
            write_summary_csv(&tables.summary, &mut buf)?;
            std::fs::write(&summary, &buf)?;
            Ok(vec![regret, summary])
        }
        OutputFormat::Json => {
            let path = dir.join("results.json");
            let mut text = serde_json::to_string_pretty(&tables)?;
            text.push('\n');
            std::fs::write(&path, text)?;
            Ok(vec![path])
        }
    }
}
