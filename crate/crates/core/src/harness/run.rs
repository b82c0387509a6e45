use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::diffusion::{pretrain, sample_final, PolicyCheckpoint};
use crate::error::{Error, Result};
use crate::gardo::{finetune, FeatureMap, GroupRollout, RunObserver};
use crate::harness::config::{load_config, TrainConfig, RESOLVED_CONFIG_FILE};
use crate::harness::metrics_log::{MetricsRecord, MetricsWriter};
use crate::harness::plot::{write_samples, SAMPLES_FILE};
use crate::metrics::{evaluate, optimal_grid_solution, verify_proposition1, EvalReport, GridDensity};
use crate::numerics::{Checkpoint, MlpParams, Rng};
use crate::rewards::{make_hacking_world, World};

pub const RUN_ROOT_ENV: &str = "GARDO_RUN_ROOT";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const REFERENCE_FILE: &str = "reference.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const EVAL_FILE: &str = "eval.csv";

/// `$GARDO_RUN_ROOT`, or `./runs`.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn default_run_name(cfg: &TrainConfig) -> String {
    format!("{}-{}-s{}", cfg.preset, cfg.method.tag(), cfg.seed)
}

pub fn pretrain_dir(root: &Path, world: &World, cfg: &TrainConfig) -> PathBuf {
    root.join(format!("pretrain-{}-s{}", world.mixture.name(), cfg.pretrain_seed))
}

pub fn pretrain_path(root: &Path, world: &World, cfg: &TrainConfig) -> PathBuf {
    if cfg.pretrain_checkpoint.is_empty() {
        pretrain_dir(root, world, cfg).join(POLICY_FILE)
    } else {
        PathBuf::from(&cfg.pretrain_checkpoint)
    }
}

fn write_resolved(dir: &Path, cfg: &TrainConfig) -> Result<()> {
    fs::write(dir.join(RESOLVED_CONFIG_FILE), cfg.to_text())?;
    Ok(())
}

/// Train the reference policy for the preset's base distribution.
pub fn run_pretrain(cfg: &TrainConfig, root: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let world = make_hacking_world(&cfg.preset)?;
    let schedule = cfg.schedule()?;
    let path = pretrain_path(root, &world, cfg);
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let ck = pretrain(
        &world.mixture,
        &schedule,
        &cfg.pretrain_config(),
        &Rng::new(cfg.pretrain_seed),
    )?;
    ck.to_checkpoint().write_to(fs::File::create(&path)?)?;
    write_resolved(&dir, cfg)?;
    info!("pretrained policy written to {}", path.display());
    Ok(path)
}

pub fn load_pretrained(path: &Path) -> Result<PolicyCheckpoint> {
    let file = fs::File::open(path).map_err(|e| {
        Error::Usage(format!(
            "pretrained checkpoint {} not available ({e}); run `pretrain` first",
            path.display()
        ))
    })?;
    PolicyCheckpoint::from_checkpoint(Checkpoint::read_from(std::io::BufReader::new(file))?)
}

pub fn read_params(path: &Path) -> Result<MlpParams> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Usage(format!("cannot open checkpoint {}: {e}", path.display())))?;
    Ok(Checkpoint::read_from(std::io::BufReader::new(file))?.params)
}

/// Streams metrics and periodic checkpoints into a run directory.
pub struct RunDirObserver {
    dir: PathBuf,
    writer: MetricsWriter,
    method: String,
    seed: u64,
}

impl RunDirObserver {
    pub fn new(dir: &Path, cfg: &TrainConfig) -> Result<Self> {
        fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            writer: MetricsWriter::new(dir),
            method: cfg.method.tag().to_string(),
            seed: cfg.seed,
        })
    }
}

impl RunObserver for RunDirObserver {
    fn on_iteration(&mut self, record: &MetricsRecord, _group: &GroupRollout) -> Result<()> {
        self.writer.write(record).map_err(|e| {
            Error::Data(format!(
                "writing {} failed at iteration {} ({e}); rows up to the previous iteration are intact",
                self.writer.path().display(),
                record.iteration
            ))
        })
    }

    fn on_checkpoint(&mut self, iteration: usize, policy: &MlpParams) -> Result<()> {
        let path = self.dir.join(CHECKPOINT_DIR).join(format!("iter-{iteration:06}.ckpt"));
        Checkpoint::new(policy.clone())
            .with_meta("kind", "finetune")
            .with_meta("method", &self.method)
            .with_meta("seed", self.seed)
            .with_meta("iteration", iteration)
            .write_to(fs::File::create(path)?)
    }
}

/// Fine-tune into `run_dir`: resolved config, reference copy, metrics,
/// checkpoints, final policy and final samples.
pub fn run_finetune(cfg: &TrainConfig, root: &Path, run_dir: Option<PathBuf>) -> Result<PathBuf> {
    cfg.validate()?;
    let world = make_hacking_world(&cfg.preset)?;
    let schedule = cfg.schedule()?;
    let reference = load_pretrained(&pretrain_path(root, &world, cfg))?;
    if reference.params.embed_dim() != schedule.embed_dim() || reference.params.hidden() != cfg.hidden {
        return Err(Error::Config(format!(
            "pretrained network (hidden {}, time dim {}) does not match config (hidden {}, time dim {})",
            reference.params.hidden(),
            reference.params.embed_dim(),
            cfg.hidden,
            schedule.embed_dim()
        )));
    }
    let dir = run_dir.unwrap_or_else(|| root.join(default_run_name(cfg)));
    if dir.join(crate::harness::metrics_log::METRICS_FILE).exists() {
        info!("overwriting previous run in {}", dir.display());
        let _ = fs::remove_dir_all(dir.join(CHECKPOINT_DIR));
    }
    fs::create_dir_all(&dir)?;
    write_resolved(&dir, cfg)?;
    reference.to_checkpoint().write_to(fs::File::create(dir.join(REFERENCE_FILE))?)?;

    let mut observer = RunDirObserver::new(&dir, cfg)?;
    let outcome = finetune(&world, &schedule, &reference.params, &cfg.finetune_config(), &mut observer)?;
    Checkpoint::new(outcome.policy.clone())
        .with_meta("kind", "finetune")
        .with_meta("method", cfg.method.tag())
        .with_meta("seed", cfg.seed)
        .with_meta("iteration", cfg.iterations)
        .write_to(fs::File::create(dir.join(POLICY_FILE))?)?;
    let samples = sample_final(&outcome.policy, &schedule, cfg.final_samples, &Rng::stream(cfg.seed, 0x5A3F))?;
    write_samples(&dir.join(SAMPLES_FILE), &samples)?;
    info!(
        "finetune finished: {} resets, final k {:.4}, {} samples excluded",
        outcome.resets, outcome.final_k, outcome.excluded_samples
    );
    Ok(dir)
}

/// Evaluate a finished run from its own directory and append to `eval.csv`.
pub fn run_eval(run_dir: &Path, samples: usize, seed: u64) -> Result<EvalReport> {
    let cfg = load_config(&run_dir.join(RESOLVED_CONFIG_FILE))?;
    let world = make_hacking_world(&cfg.preset)?;
    let schedule = cfg.schedule()?;
    let policy = read_params(&run_dir.join(POLICY_FILE))?;
    let reference = read_params(&run_dir.join(REFERENCE_FILE))?;
    let fmap = FeatureMap::from_config(&cfg.feature_config(), &mut Rng::new(cfg.seed))?;
    let report = evaluate(&policy, &reference, &schedule, &world, &fmap, samples, seed)?;
    let path = run_dir.join(EVAL_FILE);
    let mut text = if path.exists() {
        fs::read_to_string(&path)?
    } else {
        format!("{}\n", EvalReport::CSV_HEADER)
    };
    text.push_str(&report.csv_row());
    text.push('\n');
    fs::write(&path, text)?;
    Ok(report)
}

/// Largest closed-form ratio error of the KL-regularized optimum for each β.
pub fn run_oracle(preset: &str, betas: &[f64], pairs: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let world = make_hacking_world(preset)?;
    let reference = GridDensity::standard(&world.mixture)?;
    let mut rng = Rng::new(seed);
    betas
        .iter()
        .map(|&beta| {
            let p_star = optimal_grid_solution(&reference, &world.proxy, beta)?;
            let err = verify_proposition1(&p_star, &reference, &world.proxy, beta, pairs, &mut rng)?;
            Ok((beta, err))
        })
        .collect()
}
