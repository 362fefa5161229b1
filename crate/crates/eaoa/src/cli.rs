//! Command-line front end. Every subcommand is a thin wrapper over library
//! calls; progress goes to stderr and data to files.

use std::env;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use eaoa_core::baseline::Strategy;
use eaoa_core::pool::synthetic_dataset;

use crate::config::{resolve_key, ExperimentConfig};
use crate::dataset_file::write_dataset;
use crate::harness::{run_to_dir, ExperimentResult, RoundMetrics};
use crate::report;
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "EAOA_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "eaoa",
    version,
    about = "Active open-set annotation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment.
    Run(Common),
    /// Run the same experiment once per strategy.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Strategies to run, comma-separated.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "random,uncertainty,certainty,mav,eaoa"
        )]
        strategies: Vec<String>,
    },
    /// Run one experiment per value of a config key.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Dotted config key or a unique leaf name such as `tP`.
        #[arg(long)]
        axis: String,
        /// Values to try, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Summarise stored results.
    Report {
        /// Directory scanned for summary.json files.
        dir: PathBuf,
        /// Where to write the report; defaults to `dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the configured synthetic dataset to a feature file.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to `$EAOA_OUTPUT_ROOT/<name>` or
    /// `results/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }

    fn out_dir(&self, name: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| default_root().join(name))
    }
}

fn default_root() -> PathBuf {
    env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

fn progress(m: &RoundMetrics) {
    let k = m.k.map(|k| format!(" k={k}")).unwrap_or_default();
    eprintln!(
        "[{} seed {}] round {}: rP={:.3}{k} test_acc={:.4} detector_acc={:.4} labeled={}+{}",
        m.strategy,
        m.seed,
        m.round,
        m.query_precision,
        m.test_accuracy,
        m.detector_accuracy,
        m.n_known,
        m.n_unknown
    );
}

fn run_one(config: &ExperimentConfig, out: &Path) -> Result<ExperimentResult> {
    let result = run_to_dir(config, out, &progress)?;
    eprintln!(
        "{}: mQP={:.4} final test_acc={:.4} -> {}",
        config.strategy,
        result.summary.mqp.mean,
        result.summary.final_test_accuracy.mean,
        out.display()
    );
    Ok(result)
}

/// Directory-safe rendering of an override value.
fn slug(value: &str) -> String {
    value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub const ABLATION_CSV_HEADER: &str = "axis,value,strategy,seeds,final_test_acc_mean,final_test_acc_std,mqp_mean,mqp_std,final_detector_acc_mean,final_detector_acc_std";

/// Runs an ablation grid and writes `ablation.csv` next to the member
/// directories.
pub fn ablate(
    base: &ExperimentConfig,
    axis: &str,
    values: &[String],
    out: &Path,
) -> Result<String> {
    let key = resolve_key(axis)?;
    // Validate the whole grid before running any member.
    let members = values
        .iter()
        .map(|v| {
            let cfg = base.with_overrides(&[format!("{key}={v}")])?;
            cfg.validate()?;
            Ok((v, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from(ABLATION_CSV_HEADER);
    csv.push('\n');
    for (value, cfg) in members {
        let dir = out.join(format!("{}={}", key, slug(value)));
        let s = run_one(&cfg, &dir)?.summary;
        writeln!(
            csv,
            "{key},\"{}\",{},{},{},{},{},{},{},{}",
            value.replace('"', "\"\""),
            s.strategy,
            s.seeds.len(),
            s.final_test_accuracy.mean,
            s.final_test_accuracy.std,
            s.mqp.mean,
            s.mqp.std,
            s.final_detector_accuracy.mean,
            s.final_detector_accuracy.std
        )
        .expect("writing to a String");
    }
    let path = out.join("ablation.csv");
    fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    Ok(csv)
}

/// Runs one experiment per strategy into `out/<strategy>`.
pub fn sweep(
    base: &ExperimentConfig,
    strategies: &[String],
    out: &Path,
) -> Result<Vec<ExperimentResult>> {
    let configs = strategies
        .iter()
        .map(|name| {
            let strategy: Strategy = name
                .trim()
                .parse()
                .map_err(|_| Error::config("strategies", format!("unknown strategy `{name}`")))?;
            let mut cfg = base.clone();
            cfg.strategy = strategy.name().to_string();
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    configs
        .iter()
        .map(|cfg| run_one(cfg, &out.join(&cfg.strategy)))
        .collect()
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            run_one(&cfg, &common.out_dir(&cfg.strategy))?;
        }
        Command::Sweep { common, strategies } => {
            let cfg = common.load()?;
            sweep(&cfg, &strategies, &common.out_dir("sweep"))?;
        }
        Command::Ablate {
            common,
            axis,
            values,
        } => {
            let cfg = common.load()?;
            let out = common.out_dir(&format!("ablate-{}", slug(&axis)));
            ablate(&cfg, &axis, &values, &out)?;
            eprintln!("wrote {}", out.join("ablation.csv").display());
        }
        Command::Report { dir, out } => {
            let rep = report::collect(&dir)?;
            for (path, reason) in &rep.skipped {
                eprintln!("warning: skipped {}: {reason}", path.display());
            }
            rep.write(out.as_deref().unwrap_or(&dir))?;
            print!("{}", rep.table());
        }
        Command::Generate {
            config,
            overrides,
            out,
        } => {
            let cfg = ExperimentConfig::load(config.as_deref(), &overrides)?;
            if !cfg.dataset.is_synthetic() {
                return Err(Error::config(
                    "dataset.path",
                    "generate needs a synthetic dataset",
                ));
            }
            let ds = synthetic_dataset(&cfg.dataset.synthetic(cfg.dataset.seed))?;
            write_dataset(&out, &ds)?;
            eprintln!("wrote {} examples to {}", ds.len(), out.display());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
