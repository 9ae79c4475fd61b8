//! Results table, scatter data and correlation summary.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::fixtures::{AppendixRow, DistanceFixture, ResultGroup};
use super::{pearson_r2, TypoError};
use crate::tiltprotocol::{t_quantile, AggregateResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// One L1 in the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub l1: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Natural-language L1s need a distance; others are left out of the scatter.
    pub linguistic: bool,
}

impl ReportEntry {
    pub fn from_aggregate(a: &AggregateResult, linguistic: bool) -> Self {
        Self {
            l1: a.l1_name.clone(),
            mean: a.mean,
            std: a.std,
            n: a.n,
            linguistic,
        }
    }

    /// Rows of the shipped results table summarize five seeds.
    pub fn from_appendix(row: &AppendixRow) -> Self {
        Self {
            l1: row.l1.clone(),
            mean: row.mean_value(),
            std: row.std_value(),
            n: 5,
            linguistic: row.group == ResultGroup::Language,
        }
    }

    pub fn ci95(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        t_quantile(0.975, (self.n - 1) as f64) * self.std / (self.n as f64).sqrt()
    }
}

/// A single trial's perplexity, for the per-trial correlation variant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPoint {
    pub l1: String,
    pub ppl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub format: ReportFormat,
    pub table: String,
    /// `l1,distance,mean_ppl,ci95`
    pub scatter: String,
    /// `subset,points,n,r2`
    pub r2: String,
}

impl Report {
    /// Writes `table.{csv,md}`, `scatter.csv` and `r2.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> io::Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let table = match self.format {
            ReportFormat::Csv => "table.csv",
            ReportFormat::Markdown => "table.md",
        };
        let mut out = Vec::new();
        for (name, body) in [(table, &self.table), ("scatter.csv", &self.scatter), ("r2.csv", &self.r2)] {
            let p = dir.join(name);
            fs::write(&p, body)?;
            out.push(p);
        }
        Ok(out)
    }
}

fn table(entries: &[ReportEntry], format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Csv => {
            s.push_str("L1,mean,std\n");
            for e in entries {
                let _ = writeln!(s, "{},{:.2},{:.2}", e.l1, e.mean, e.std);
            }
        }
        ReportFormat::Markdown => {
            s.push_str("| L1 | mean ppl | std |\n|---|---:|---:|\n");
            for e in entries {
                let _ = writeln!(s, "| {} | {:.2} | {:.2} |", e.l1, e.mean, e.std);
            }
        }
    }
    s
}

fn r2_line(s: &mut String, subset: &str, points: &str, x: &[f64], y: &[f64]) {
    let value = match pearson_r2(x, y) {
        Ok(r) => format!("{r}"),
        Err(_) => "NA".to_string(),
    };
    let _ = writeln!(s, "{subset},{points},{},{value}", x.len());
}

/// Builds the results table, the distance/perplexity scatter data and the
/// Indo-European and all-language r² (over per-L1 means, and over single
/// trials when `trials` is non-empty). Output depends only on the inputs.
pub fn emit_report(
    entries: &[ReportEntry],
    distances: &DistanceFixture,
    trials: &[TrialPoint],
    format: ReportFormat,
) -> Result<Report, TypoError> {
    let mut scatter = String::from("l1,distance,mean_ppl,ci95\n");
    let (mut x_all, mut y_all, mut x_ie, mut y_ie) = (vec![], vec![], vec![], vec![]);
    for e in entries.iter().filter(|e| e.linguistic) {
        let d = distances
            .lookup(&e.l1)
            .ok_or_else(|| TypoError::MissingDistance(e.l1.clone()))?;
        let _ = writeln!(scatter, "{},{},{},{}", e.l1, d.distance, e.mean, e.ci95());
        x_all.push(d.distance as f64);
        y_all.push(e.mean);
        if d.is_indo_european() {
            x_ie.push(d.distance as f64);
            y_ie.push(e.mean);
        }
    }

    let mut r2 = String::from("subset,points,n,r2\n");
    r2_line(&mut r2, "indo_european", "means", &x_ie, &y_ie);
    r2_line(&mut r2, "all", "means", &x_all, &y_all);
    if !trials.is_empty() {
        let (mut xa, mut ya, mut xi, mut yi) = (vec![], vec![], vec![], vec![]);
        for t in trials {
            let linguistic = entries.iter().any(|e| e.l1 == t.l1 && e.linguistic);
            if !linguistic {
                continue;
            }
            let d = distances
                .lookup(&t.l1)
                .ok_or_else(|| TypoError::MissingDistance(t.l1.clone()))?;
            xa.push(d.distance as f64);
            ya.push(t.ppl);
            if d.is_indo_european() {
                xi.push(d.distance as f64);
                yi.push(t.ppl);
            }
        }
        r2_line(&mut r2, "indo_european", "trials", &xi, &yi);
        r2_line(&mut r2, "all", "trials", &xa, &ya);
    }

    Ok(Report {
        format,
        table: table(entries, format),
        scatter,
        r2,
    })
}
