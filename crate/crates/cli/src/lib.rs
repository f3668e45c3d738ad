//! Command-line experiment runner for the `d2d_effcap` library.

// `!(x > 0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

pub use commands::{run, Command, Report};
pub use config::ExperimentConfig;

const CONFIG_MARK: &str = "# resolved config:";

#[derive(Parser, Debug)]
#[command(name = "d2d-effcap", version, about = "Effective capacity of mode-selected D2D links with truncated HARQ")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// `[section]` / `key = value` configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[montecarlo] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat warnings (clamped outage laws, negative EC, non-positive leak) as errors.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Thresholds and detection probabilities, analytical and simulated.
    ModeSelect(Common),
    /// EC of both queue models: closed form, companion root and simulation.
    Ec(Common),
    /// EC over a grid of one variable, written to `sweep_<variable>.csv`.
    Sweep(Common),
    /// Gradient ascent on the rate against a grid-search oracle.
    Optimize(Common),
    /// Internal consistency checks of the analytical pipeline.
    Validate(Common),
}

impl Cmd {
    pub fn split(&self) -> (Command, &Common) {
        match self {
            Cmd::ModeSelect(c) => (Command::ModeSelect, c),
            Cmd::Ec(c) => (Command::Ec, c),
            Cmd::Sweep(c) => (Command::Sweep, c),
            Cmd::Optimize(c) => (Command::Optimize, c),
            Cmd::Validate(c) => (Command::Validate, c),
        }
    }
}

/// Comment block naming the command and seed, followed by the resolved config.
pub fn header(cmd: Command, cfg: &ExperimentConfig) -> String {
    let mut h = format!("# d2d-effcap {}\n# seed = {}\n{CONFIG_MARK}\n", cmd.name(), cfg.montecarlo.seed);
    for line in cfg.to_toml().lines() {
        if line.is_empty() {
            h.push_str("#\n");
        } else {
            h.push_str("# ");
            h.push_str(line);
            h.push('\n');
        }
    }
    h
}

/// Recover the config text echoed into an output file.
pub fn config_from_output(text: &str) -> Option<String> {
    let mut lines = text.lines().skip_while(|l| *l != CONFIG_MARK);
    lines.next()?;
    let mut out = String::new();
    for l in lines.take_while(|l| l.starts_with('#')) {
        out.push_str(l.strip_prefix("# ").unwrap_or(l.trim_start_matches('#')));
        out.push('\n');
    }
    Some(out)
}

/// CSV body of an output file, without the header comments.
pub fn body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

pub fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.montecarlo.seed = s;
    }
    Ok(cfg)
}

pub fn write_report(cmd: Command, cfg: &ExperimentConfig, report: &Report, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let head = header(cmd, cfg);
    let mut written = Vec::new();
    for (name, csv) in &report.tables {
        let path = out.join(name);
        std::fs::write(&path, format!("{head}{csv}")).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// Exit codes: 0 success, 1 error, 2 warnings under `--strict`, 3 failed checks.
pub fn main_with(cli: Cli) -> i32 {
    let (cmd, common) = cli.command.split();
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    let report = match run(cmd, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if common.strict && !report.warnings.is_empty() {
        eprintln!("error: {} warning(s) under --strict", report.warnings.len());
        return 2;
    }
    match write_report(cmd, &cfg, &report, &common.out) {
        Ok(paths) => {
            print!("{}", report.summary);
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    }
    if let Some(f) = &report.failure {
        eprintln!("error: {f}");
        return 3;
    }
    0
}
