/*
  Copyright 2026 The trifinger-cpc Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
//! Command-line front end: `run`, `batch` and `compare`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{load_chain, load_config};
use crate::error::{Error, Result};
use crate::eval::{summarize_with_drops, EpisodeLog, SummaryStats};
use crate::grasp::GraspKind;
use crate::statemachine::{run_episode, EpisodeConfig, GoalSource};

#[derive(Debug, Parser)]
#[command(name = "trifinger-cpc", version, about = "Three-finger cube manipulation episodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its log.
    Run(RunArgs),
    /// Run seeded episodes and write their logs plus summary.csv.
    Batch(BatchArgs),
    /// Run two configurations on identical seeds and write a paired table.
    Compare(CompareArgs),
}

/// Flags shared by every subcommand. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct EpisodeArgs {
    /// Run config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Chain definition (TOML), replacing the config's chain.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Grasp: triangle | chuck.
    #[arg(long)]
    pub grasp: Option<GraspKind>,
    #[arg(long)]
    pub interp_n: Option<usize>,
    /// Episode seed (first seed for batch and compare).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episode length, s.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Goal trajectory (JSON array of {t_activate, goal}).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Grasp used when regrasping near the arena perimeter.
    #[arg(long)]
    pub perimeter_fallback: Option<GraspKind>,
    #[arg(long)]
    pub subgoal_tol: Option<f64>,
    #[arg(long)]
    pub subgoal_timeout: Option<usize>,
    #[arg(long)]
    pub standoff: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Second configuration: config file (flags still apply on top).
    #[arg(long)]
    pub vs_config: Option<PathBuf>,
    #[arg(long)]
    pub vs_grasp: Option<GraspKind>,
    #[arg(long)]
    pub vs_interp_n: Option<usize>,
    #[arg(long)]
    pub vs_perimeter_fallback: Option<GraspKind>,
}

impl EpisodeArgs {
    /// Config file (or defaults) with flag overrides applied, validated.
    pub fn resolve(&self) -> Result<EpisodeConfig> {
        self.resolve_from(self.config.as_deref())
    }

    fn resolve_from(&self, config_path: Option<&Path>) -> Result<EpisodeConfig> {
        let mut c = match config_path {
            Some(p) => load_config(p)?,
            None => EpisodeConfig::default(),
        };
        if let Some(p) = &self.chain {
            c.chain = load_chain(p)?;
        }
        if let Some(v) = self.grasp {
            c.grasp = v;
        }
        if let Some(v) = self.interp_n {
            c.interp_n = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.duration {
            c.duration = v;
        }
        if let Some(p) = &self.trajectory {
            c.goals = GoalSource::File { path: p.clone() };
        }
        if self.perimeter_fallback.is_some() {
            c.perimeter_fallback = self.perimeter_fallback;
        }
        if let Some(v) = self.subgoal_tol {
            c.subgoal_tol = v;
        }
        if let Some(v) = self.subgoal_timeout {
            c.subgoal_timeout = v;
        }
        if let Some(v) = self.standoff {
            c.standoff = v;
        }
        c.validate()?;
        Ok(c)
    }
}

impl CompareArgs {
    /// The two configurations being compared.
    pub fn resolve_pair(&self) -> Result<(EpisodeConfig, EpisodeConfig)> {
        let a = self.episode.resolve()?;
        let mut b = match &self.vs_config {
            Some(p) => self.episode.resolve_from(Some(p))?,
            None => a.clone(),
        };
        if let Some(v) = self.vs_grasp {
            b.grasp = v;
        }
        if let Some(v) = self.vs_interp_n {
            b.interp_n = v;
        }
        if self.vs_perimeter_fallback.is_some() {
            b.perimeter_fallback = self.vs_perimeter_fallback;
        }
        b.validate()?;
        Ok((a, b))
    }
}

/// Short human-readable name of a configuration, e.g. `triangle-n20`.
pub fn config_label(c: &EpisodeConfig) -> String {
    let mut s = format!("{}-n{}", c.grasp.as_str(), c.interp_n);
    if let Some(fb) = c.perimeter_fallback {
        let _ = write!(s, "-fallback-{}", fb.as_str());
    }
    s
}

pub fn log_file_name(seed: u64) -> String {
    format!("episode_seed{seed}.jsonl")
}

/// Runs `episodes` episodes with seeds `config.seed + i`, in parallel on
/// `jobs` threads; the result is in seed order regardless of `jobs`.
pub fn run_batch(config: &EpisodeConfig, episodes: usize, jobs: Option<usize>) -> Result<Vec<EpisodeLog>> {
    if episodes == 0 {
        return Err(Error::config("episodes", "must be >= 1"));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::config("jobs", "must be >= 1"));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..episodes as u64)
            .into_par_iter()
            .map(|i| {
                let seed = config.seed.wrapping_add(i);
                run_episode(&EpisodeConfig { seed, ..config.clone() })
            })
            .collect()
    })
}

pub fn summarize_logs(logs: &[EpisodeLog]) -> Result<SummaryStats> {
    let rewards: Vec<f64> = logs.iter().map(EpisodeLog::cumulative_reward).collect();
    let drops = logs.iter().map(EpisodeLog::drop_count).sum();
    summarize_with_drops(&rewards, drops)
}

pub const SUMMARY_HEADER: &str = "config,mean,median,stddev,drops";

pub fn summary_row(label: &str, s: &SummaryStats) -> String {
    format!("{label},{},{},{},{}", s.mean, s.median, s.stddev, s.drops)
}

/// Fraction of seeds on which `a` earned strictly more reward than `b`.
pub fn win_rate(a: &[EpisodeLog], b: &[EpisodeLog]) -> f64 {
    let wins = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.cumulative_reward() > y.cumulative_reward())
        .count();
    wins as f64 / a.len().max(1) as f64
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save_logs(dir: &Path, logs: &[EpisodeLog]) -> Result<()> {
    create_dir(dir)?;
    for log in logs {
        log.save(&dir.join(log_file_name(log.header.seed)))?;
    }
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<PathBuf> {
    let config = args.episode.resolve()?;
    let log = run_episode(&config)?;
    create_dir(&args.episode.out)?;
    let path = args.episode.out.join(log_file_name(config.seed));
    log.save(&path)?;
    println!(
        "{} seed {}: reward {:.3}, drops {}, log {}",
        config_label(&config),
        config.seed,
        log.cumulative_reward(),
        log.drop_count(),
        path.display()
    );
    Ok(path)
}

pub fn cmd_batch(args: &BatchArgs) -> Result<SummaryStats> {
    let config = args.episode.resolve()?;
    let logs = run_batch(&config, args.episodes, args.jobs)?;
    let out = &args.episode.out;
    save_logs(&out.join("logs"), &logs)?;
    let stats = summarize_logs(&logs)?;
    let label = config_label(&config);
    let csv = format!("{SUMMARY_HEADER}\n{}\n", summary_row(&label, &stats));
    write_file(&out.join("summary.csv"), &csv)?;
    print!("{csv}");
    Ok(stats)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(SummaryStats, SummaryStats)> {
    let (ca, cb) = args.resolve_pair()?;
    let la = run_batch(&ca, args.episodes, args.jobs)?;
    let lb = run_batch(&cb, args.episodes, args.jobs)?;
    let out = &args.episode.out;
    save_logs(&out.join("a"), &la)?;
    save_logs(&out.join("b"), &lb)?;
    let (sa, sb) = (summarize_logs(&la)?, summarize_logs(&lb)?);

    let mut table = format!("{SUMMARY_HEADER},win_rate\n");
    let _ = writeln!(table, "{},{}", summary_row(&config_label(&ca), &sa), win_rate(&la, &lb));
    let _ = writeln!(table, "{},{}", summary_row(&config_label(&cb), &sb), win_rate(&lb, &la));
    write_file(&out.join("compare.csv"), &table)?;

    let mut pairs = String::from("seed,reward_a,reward_b,drops_a,drops_b\n");
    for (a, b) in la.iter().zip(&lb) {
        let _ = writeln!(
            pairs,
            "{},{},{},{},{}",
            a.header.seed,
            a.cumulative_reward(),
            b.cumulative_reward(),
            a.drop_count(),
            b.drop_count()
        );
    }
    write_file(&out.join("pairs.csv"), &pairs)?;
    print!("{table}");
    Ok((sa, sb))
}

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| ()),
        Command::Batch(a) => cmd_batch(a).map(|_| ()),
        Command::Compare(a) => cmd_compare(a).map(|_| ()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("trifinger-cpc").chain(args.iter().copied()))
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&["run", "--grasp", "chuck", "--interp-n", "5", "--seed", "7", "--duration", "3"]).unwrap();
        let Command::Run(a) = cli.command else { panic!() };
        let c = a.episode.resolve().unwrap();
        assert_eq!((c.grasp, c.interp_n, c.seed, c.duration), (GraspKind::ThreeJawChuck, 5, 7, 3.0));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert!(parse(&["run", "--grasp", "pinch"]).is_err());
        assert!(parse(&["run", "--interp-n", "-1"]).is_err());
        assert!(parse(&["fly"]).is_err());
        let cli = parse(&["run", "--interp-n", "0"]).unwrap();
        let Command::Run(a) = cli.command else { panic!() };
        assert!(a.episode.resolve().is_err());
    }

    #[test]
    fn compare_pair() {
        let cli = parse(&["compare", "--grasp", "chuck", "--vs-grasp", "triangle", "--vs-interp-n", "1"]).unwrap();
        let Command::Compare(a) = cli.command else { panic!() };
        let (x, y) = a.resolve_pair().unwrap();
        assert_eq!(config_label(&x), "chuck-n20");
        assert_eq!(config_label(&y), "triangle-n1");
    }

    #[test]
    fn win_rate_counts_strict_wins() {
        let short = EpisodeConfig { duration: 0.02, ..Default::default() };
        let logs = run_batch(&short, 2, Some(1)).unwrap();
        assert_eq!(win_rate(&logs, &logs), 0.0);
    }
}
