//! Command-line interface. Every subcommand reads the same run configuration
//! (`--config`, then `--set section.key=value` overrides) and takes its
//! inputs and outputs as explicit paths.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gap_core::gradsuite::{check_component, run_suite, SuiteEntry};
use gap_core::policy::{PolicyController, TrainMode};
use gap_core::sim::{evaluate, gen_demos, intervention_experiment};
use gap_core::traj::Distribution;

use crate::checkpoint::{
    indicator_checkpoint, indicator_from_checkpoint, load_checkpoint, policy_checkpoint, policy_from_checkpoint,
    save_checkpoint,
};
use crate::config::RunConfig;
use crate::dataset_io::{load_dataset, save_dataset};
use crate::error::{GapError, Result};
use crate::formats::{
    check_segment_records, episode_records, from_jsonl, indicator_metrics, policy_metrics, to_jsonl,
    InterventionSummary, SegmentRecord,
};
use crate::fsutil::write_atomic;
use crate::pipeline::{plan, run_pipeline, sweep, RunOptions};
use crate::report::{build_report, write_report};
use crate::stages::{segment_dataset, train_indicator_on, train_policy, train_probe, RhoInputs};

#[derive(Debug, Parser)]
#[command(name = "gap", version, about = "Phase-guided gradient adjustment experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.lambda=0.2`. Repeatable; flags win over the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the scripted expert and write a demonstration file.
    GenDemos {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of demonstrations; defaults to `demos.count`.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value = "id")]
        dist: String,
    },
    /// Segment every demonstration into motion-consistent phases.
    Segment {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the transition indicator on demos plus their segmentation.
    TrainIndicator {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Behavior cloning in one training mode.
    TrainPolicy {
        #[arg(long)]
        mode: String,
        #[arg(long)]
        demos: PathBuf,
        /// Segmentation file, needed by `smooth`.
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Indicator checkpoint, needed by `gap`.
        #[arg(long)]
        indicator: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Roll out a policy checkpoint and log every episode.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value = "id")]
        dist: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Swap an alternate policy into base-policy rollouts window by window.
    Intervene {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        alt: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-window results, one line each.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a fresh head on a policy's frozen vision features.
    Probe {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of every differentiable component.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Check one component only.
        #[arg(long)]
        component: Option<String>,
    },
    /// One pipeline run per value of a parameter.
    Sweep {
        /// alpha, beta, lambda, x, mask_prob or rho_fixed.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long)]
        verbose: bool,
    },
    /// Rebuild report and tables from a run or sweep directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// The full pipeline for every configured seed.
    Run {
        /// Print the stage plan and exit without touching anything.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        verbose: bool,
    },
}

fn load_segments(path: &Path, n: usize) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path).map_err(|e| GapError::io(path, e))?;
    let source = path.display().to_string();
    let recs: Vec<SegmentRecord> = from_jsonl(&text, &source)?;
    check_segment_records(&recs, n, &source)?;
    Ok(recs.into_iter().map(|r| r.change_indices).collect())
}

fn parse_dist(s: &str) -> Result<Distribution> {
    Distribution::parse(s).map_err(|e| GapError::Config(e.to_string()))
}

fn print_suite(entries: &[SuiteEntry], tol: f64) -> bool {
    let mut ok = true;
    for e in entries {
        let pass = e.passes(tol);
        ok &= pass;
        println!(
            "{:<14} draws {:>3}  max rel err {:.3e}  {}",
            e.name,
            e.draws,
            e.report.max_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    ok
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    match cli.command {
        Command::GenDemos { out, seed, count, dist } => {
            let ds = gen_demos(&cfg.env.config()?, count.unwrap_or(cfg.demos.count), seed, parse_dist(&dist)?)?;
            save_dataset(&ds, &out)?;
            println!("wrote {} demonstrations to {}", ds.len(), out.display());
        }
        Command::Segment { demos, out } => {
            let ds = load_dataset(&demos)?;
            let results = segment_dataset(&ds, &cfg.segment.params()?)?;
            let recs: Vec<SegmentRecord> =
                results.iter().enumerate().map(|(i, r)| SegmentRecord::new(i, r, &cfg.segment)).collect();
            write_atomic(&out, to_jsonl(&recs).as_bytes())?;
            println!("segmented {} trajectories into {}", recs.len(), out.display());
        }
        Command::TrainIndicator { demos, segments, out, metrics, seed } => {
            let ds = load_dataset(&demos)?;
            let seg = load_segments(&segments, ds.len())?;
            let m = train_indicator_on(&ds, &seg, &cfg, seed)?;
            save_checkpoint(&indicator_checkpoint(&m), &out)?;
            write_atomic(&metrics, to_jsonl(&indicator_metrics(&m)).as_bytes())?;
            println!("final loss {}", m.loss_curve.last().copied().unwrap_or(f64::NAN));
        }
        Command::TrainPolicy { mode, demos, segments, indicator, out, metrics, seed } => {
            let mode = TrainMode::parse(&mode)?;
            let ds = load_dataset(&demos)?;
            let seg = segments.as_deref().map(|p| load_segments(p, ds.len())).transpose()?;
            let ind = match indicator.as_deref() {
                Some(p) => Some(indicator_from_checkpoint(&load_checkpoint(p)?, &p.display().to_string())?),
                None => None,
            };
            let inputs = RhoInputs {
                indicator: ind.as_ref(),
                segments: seg.as_deref(),
                rho_fixed: cfg.train.rho_fixed,
                smooth_sigma: cfg.train.smooth_sigma,
            };
            let o = train_policy(&ds, mode, &cfg, seed, &inputs)?;
            save_checkpoint(&policy_checkpoint(&o.policy), &out)?;
            write_atomic(&metrics, to_jsonl(&policy_metrics(&o.curve)).as_bytes())?;
            println!("final train loss {}", o.curve.last().map(|e| e.train_loss).unwrap_or(f64::NAN));
        }
        Command::Evaluate { policy, dist, n, seed, out } => {
            let p = policy_from_checkpoint(&load_checkpoint(&policy)?, &policy.display().to_string())?;
            let r = evaluate(&mut PolicyController { policy: &p }, &cfg.env.config()?, n, parse_dist(&dist)?, seed)?;
            write_atomic(&out, to_jsonl(&episode_records(&r)).as_bytes())?;
            println!("success rate {}", r.success_rate);
        }
        Command::Intervene { base, alt, seed, out } => {
            let b = policy_from_checkpoint(&load_checkpoint(&base)?, &base.display().to_string())?;
            let a = policy_from_checkpoint(&load_checkpoint(&alt)?, &alt.display().to_string())?;
            let r = intervention_experiment(
                &mut PolicyController { policy: &b },
                &mut PolicyController { policy: &a },
                &cfg.env.config()?,
                &cfg.eval.intervention(seed)?,
            )?;
            let s = InterventionSummary::from(&r);
            write_atomic(&out, to_jsonl(&s.windows).as_bytes())?;
            println!(
                "baseline {}  transition drop {}  consistent drop {}",
                s.baseline_rate, s.transition_drop, s.consistent_drop
            );
        }
        Command::Probe { policy, demos, out, metrics, seed } => {
            let p = policy_from_checkpoint(&load_checkpoint(&policy)?, &policy.display().to_string())?;
            let ds = load_dataset(&demos)?;
            let o = train_probe(&p, &ds, &cfg, seed)?;
            save_checkpoint(&policy_checkpoint(&o.policy), &out)?;
            write_atomic(&metrics, to_jsonl(&policy_metrics(&o.curve)).as_bytes())?;
            println!("final probe loss {}", o.curve.last().map(|e| e.train_loss).unwrap_or(f64::NAN));
        }
        Command::GradCheck { draws, seed, h, tol, component } => {
            let entries = match component {
                Some(c) => vec![check_component(&c, draws, seed, h).map_err(|e| GapError::Config(e.to_string()))?],
                None => run_suite(draws, seed, h)?,
            };
            if !print_suite(&entries, tol) {
                return Err(gap_core::Error::Internal(format!("gradient check above tolerance {tol}")).into());
            }
        }
        Command::Sweep { param, values, verbose } => {
            let r = sweep(&cfg, &param, &values, RunOptions { verbose })?;
            println!("swept {param} over {} values; report in {}", values.len(), cfg.paths.out_dir.display());
            if !r.missing.is_empty() {
                println!("{} missing cells", r.missing.len());
            }
        }
        Command::Report { dir } => {
            let r = build_report(&dir)?;
            write_report(&r, &dir)?;
            for a in &r.success_summary {
                println!("{}\t{}\t{}\tn={}\t{}", a.variant.as_deref().unwrap_or("-"), a.group, a.split, a.n, a.mean);
            }
            for m in &r.missing {
                println!("missing: {m}");
            }
        }
        Command::Run { dry_run, verbose } => {
            if dry_run {
                for s in plan(&cfg)? {
                    if s.stage == "report" {
                        println!("report");
                    } else {
                        println!("seed {}: {}", s.seed, s.stage);
                    }
                }
                return Ok(());
            }
            let o = run_pipeline(&cfg, RunOptions { verbose })?;
            println!(
                "report written to {} ({} stages computed, {} from cache)",
                o.out_dir.join(crate::report::REPORT_FILE).display(),
                o.cache_misses,
                o.cache_hits
            );
        }
    }
    Ok(())
}
