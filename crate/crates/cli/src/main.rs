use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use gardo_core::gardo::Method;
use gardo_core::harness::config::RESOLVED_CONFIG_FILE;
use gardo_core::harness::plot::SAMPLES_FILE;
use gardo_core::harness::{
    load_config, render_plots, run_eval, run_finetune, run_oracle, run_pretrain, run_root, TrainConfig,
    METRICS_FILE,
};
use gardo_core::metrics::EvalReport;
use gardo_core::rewards::{make_hacking_world, PRESETS};
use gardo_core::Error;

/// Largest closed-form ratio error `oracle` accepts.
const ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "gardo", version, about = "Toy 2-D diffusion RL laboratory for GARDO and GRPO baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reference diffusion policy on a preset's base mixture.
    Pretrain(TrainArgs),
    /// Fine-tune the pretrained policy with one method.
    Finetune(FinetuneArgs),
    /// Evaluate a finished run and append the report to its eval.csv.
    Eval(EvalArgs),
    /// Check the closed-form KL-regularized optimum on the reward grid.
    Oracle(OracleArgs),
    /// Render SVG figures from a run's metrics and samples.
    Plot(PlotArgs),
    /// List registered reward worlds.
    Presets,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` config file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: TrainArgs,
    #[arg(long)]
    method: Option<String>,
    /// Run directory (default: `$GARDO_RUN_ROOT/<preset>-<method>-s<seed>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 2048)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "fig3-hackable")]
    preset: String,
    /// KL coefficient; repeat for several.
    #[arg(long = "beta")]
    betas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    run: PathBuf,
    /// Output directory (default: the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples CSV (default: the run's samples.csv when present).
    #[arg(long)]
    samples: Option<PathBuf>,
}

fn build_config(args: &TrainArgs, method: Option<&str>) -> Result<TrainConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => TrainConfig::default(),
    };
    let mut apply = |key: &str, value: &str| {
        cfg.set(key, value).map_err(|message| Error::ConfigFile {
            path: "<command line>".into(),
            line: 0,
            key: key.into(),
            message,
        })
    };
    if let Some(p) = &args.preset {
        apply("preset", p)?;
    }
    if let Some(m) = method {
        Method::from_tag(m)?;
        apply("method", m)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{kv}` is not KEY=VALUE")))?;
        apply(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pretrain_cmd(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = build_config(&args, None)?;
    if let Some(seed) = args.seed {
        cfg.pretrain_seed = seed;
    }
    let path = run_pretrain(&cfg, &run_root())?;
    println!("{}", path.display());
    Ok(())
}

fn finetune_cmd(args: FinetuneArgs) -> anyhow::Result<()> {
    let mut cfg = build_config(&args.common, args.method.as_deref())?;
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    let dir = run_finetune(&cfg, &run_root(), args.out)?;
    println!("{}", dir.display());
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> anyhow::Result<()> {
    require_run(&args.run)?;
    let report = run_eval(&args.run, args.samples, args.seed)?;
    println!("{}", EvalReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}

fn oracle_cmd(args: OracleArgs) -> anyhow::Result<bool> {
    let betas = if args.betas.is_empty() { vec![0.04, 0.5, 5.0] } else { args.betas };
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::Usage(format!("--beta must be positive, got {b}")).into());
    }
    let results = run_oracle(&args.preset, &betas, args.pairs, args.seed)?;
    let mut ok = true;
    for (beta, err) in results {
        let pass = err < ORACLE_TOLERANCE;
        ok &= pass;
        println!("beta={beta} max_rel_error={err:.3e} {}", if pass { "ok" } else { "FAIL" });
    }
    Ok(ok)
}

fn plot_cmd(args: PlotArgs) -> anyhow::Result<()> {
    require_run(&args.run)?;
    let cfg = load_config(&args.run.join(RESOLVED_CONFIG_FILE))?;
    let world = make_hacking_world(&cfg.preset)?;
    let samples = args.samples.or_else(|| {
        let p = args.run.join(SAMPLES_FILE);
        p.exists().then_some(p)
    });
    let out = args.out.unwrap_or_else(|| args.run.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let files = render_plots(&args.run.join(METRICS_FILE), samples.as_deref(), &world.proxy, &out)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn require_run(dir: &Path) -> Result<(), Error> {
    if dir.join(RESOLVED_CONFIG_FILE).is_file() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{} is not a run directory (no {RESOLVED_CONFIG_FILE})", dir.display())))
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain(a) => pretrain_cmd(a).map(|_| true),
        Command::Finetune(a) => finetune_cmd(a).map(|_| true),
        Command::Eval(a) => eval_cmd(a).map(|_| true),
        Command::Oracle(a) => oracle_cmd(a),
        Command::Plot(a) => plot_cmd(a).map(|_| true),
        Command::Presets => {
            for (name, description) in PRESETS {
                println!("{name}\t{description}");
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            info!("oracle tolerance {ORACLE_TOLERANCE:e} exceeded");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
