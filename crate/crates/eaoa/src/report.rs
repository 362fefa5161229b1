//! Tables and plot data from stored `summary.json` files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::harness::Summary;
use crate::{Error, Result};

/// One summary and the directory it came from, relative to the scan root.
#[derive(Debug, Clone)]
pub struct Entry {
    pub label: String,
    pub summary: Summary,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub entries: Vec<Entry>,
    /// Files that could not be read or parsed.
    pub skipped: Vec<(PathBuf, String)>,
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut children: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    children.sort();
    for path in children {
        if path.is_dir() {
            find_summaries(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "summary.json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Loads every `summary.json` under `dir`. Unreadable files are recorded
/// in [`Report::skipped`]; finding no usable summary is an error.
pub fn collect(dir: &Path) -> Result<Report> {
    let mut paths = Vec::new();
    find_summaries(dir, &mut paths)?;
    let mut report = Report::default();
    for path in paths {
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| serde_json::from_str::<Summary>(&text).map_err(|e| e.to_string()));
        match parsed {
            Ok(summary) => {
                let parent = path.parent().unwrap_or(dir);
                let rel = parent.strip_prefix(dir).unwrap_or(parent);
                let label = if rel.as_os_str().is_empty() {
                    summary.strategy.clone()
                } else {
                    rel.to_string_lossy().replace('\\', "/")
                };
                report.entries.push(Entry { label, summary });
            }
            Err(reason) => report.skipped.push((path, reason)),
        }
    }
    if report.entries.is_empty() {
        return Err(Error::Report(format!(
            "no usable summary.json under {}",
            dir.display()
        )));
    }
    Ok(report)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    fn series(
        &self,
        pick: impl Fn(&crate::harness::RoundSummary) -> crate::harness::Stat,
    ) -> String {
        let mut out = String::from("label,strategy,round,mean,std\n");
        for e in &self.entries {
            for r in &e.summary.rounds {
                let s = pick(r);
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(&e.label),
                    e.summary.strategy,
                    r.round,
                    s.mean,
                    s.std
                )
                .expect("writing to a String");
            }
        }
        out
    }

    pub fn accuracy_csv(&self) -> String {
        self.series(|r| r.test_accuracy)
    }

    pub fn precision_csv(&self) -> String {
        self.series(|r| r.query_precision)
    }

    /// Final-round comparison, one row per summary.
    pub fn table(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.label.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = format!(
            "{:<width$}  {:>6}  {:>5}  {:>15}  {:>15}  {:>15}\n",
            "label", "seeds", "round", "test_acc", "mQP", "detector_acc"
        );
        let cell = |s: crate::harness::Stat| format!("{:.4} ± {:.4}", s.mean, s.std);
        for e in &self.entries {
            let s = &e.summary;
            writeln!(
                out,
                "{:<width$}  {:>6}  {:>5}  {:>15}  {:>15}  {:>15}",
                e.label,
                s.seeds.len(),
                s.rounds.len(),
                cell(s.final_test_accuracy),
                cell(s.mqp),
                cell(s.final_detector_accuracy)
            )
            .expect("writing to a String");
        }
        out
    }

    /// Writes `accuracy_vs_round.csv`, `precision_vs_round.csv` and
    /// `final_table.txt` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        for (name, text) in [
            ("accuracy_vs_round.csv", self.accuracy_csv()),
            ("precision_vs_round.csv", self.precision_csv()),
            ("final_table.txt", self.table()),
        ] {
            let path = out_dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
