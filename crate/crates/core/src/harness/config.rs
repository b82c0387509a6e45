use std::fmt::Write as _;
use std::path::Path;

use crate::diffusion::{NoiseSchedule, PretrainConfig};
use crate::error::{Error, Result};
use crate::gardo::{FeatureKind, FeatureMapConfig, FinetuneConfig, GardoConfig, Method};
use crate::harness::metrics_log::METRICS_NOTES;

pub const CONFIG_FORMAT_VERSION: u32 = 1;
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

/// Every tunable of a pretrain / finetune / eval run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub preset: String,
    pub method: Method,
    pub seed: u64,
    pub pretrain_seed: u64,
    pub beta: f64,
    pub clip: f64,
    pub kl_threshold: f64,
    pub reset_steps: usize,
    pub window: usize,
    pub initial_k: f64,
    pub group_size: usize,
    pub diffusion_steps: usize,
    pub noise_beta_start: f64,
    pub noise_beta_end: f64,
    pub time_embed_dim: usize,
    pub lr: f64,
    pub hidden: usize,
    pub pretrain_steps: usize,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,
    pub iterations: usize,
    pub use_std: Option<bool>,
    pub diversity: Option<bool>,
    pub shared_noise: bool,
    pub feature_map: FeatureKind,
    pub feature_anchor: [f64; 2],
    pub feature_dim: usize,
    pub feature_scale: f64,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub final_samples: usize,
    pub checkpoint_every: usize,
    pub record_wall_clock: bool,
    /// Empty means `<run root>/pretrain-<mixture>-s<pretrain_seed>/policy.ckpt`.
    pub pretrain_checkpoint: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let g = GardoConfig::default();
        let p = PretrainConfig::default();
        Self {
            preset: "fig3".into(),
            method: Method::Gardo,
            seed: 0,
            pretrain_seed: 0,
            beta: g.beta,
            clip: g.clip,
            kl_threshold: g.kl_threshold,
            reset_steps: g.reset_steps,
            window: g.window,
            initial_k: g.initial_k,
            group_size: 24,
            diffusion_steps: 10,
            noise_beta_start: 1e-4,
            noise_beta_end: 0.2,
            time_embed_dim: 16,
            lr: 3e-4,
            hidden: p.hidden,
            pretrain_steps: p.steps,
            pretrain_batch: p.batch_size,
            pretrain_lr: p.lr,
            iterations: 1000,
            use_std: None,
            diversity: None,
            shared_noise: false,
            feature_map: FeatureKind::RandomProjection,
            feature_anchor: [5.0, 5.0],
            feature_dim: 64,
            feature_scale: 1.0,
            eval_every: 25,
            eval_samples: 512,
            final_samples: 2048,
            checkpoint_every: 50,
            record_wall_clock: false,
            pretrain_checkpoint: String::new(),
        }
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true/false, got `{v}`")),
    }
}

fn parse_auto_bool(v: &str) -> std::result::Result<Option<bool>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_bool(v).map(Some).map_err(|_| format!("expected auto/true/false, got `{v}`"))
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}` as {}", std::any::type_name::<T>()))
}

fn auto_bool(v: Option<bool>) -> String {
    v.map_or("auto".to_string(), |b| b.to_string())
}

impl TrainConfig {
    /// Keys accepted by [`TrainConfig::set`], in the order they are echoed.
    pub const KEYS: &'static [&'static str] = &[
        "format_version",
        "preset",
        "method",
        "seed",
        "pretrain_seed",
        "beta",
        "clip",
        "kl_threshold",
        "reset_steps",
        "window",
        "initial_k",
        "group_size",
        "diffusion_steps",
        "noise_beta_start",
        "noise_beta_end",
        "time_embed_dim",
        "lr",
        "hidden",
        "pretrain_steps",
        "pretrain_batch",
        "pretrain_lr",
        "iterations",
        "use_std",
        "diversity",
        "shared_noise",
        "feature_map",
        "feature_anchor",
        "feature_dim",
        "feature_scale",
        "eval_every",
        "eval_samples",
        "final_samples",
        "checkpoint_every",
        "record_wall_clock",
        "pretrain_checkpoint",
    ];

    /// Set one field from its textual value; the error names the problem only.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "format_version" => {
                let n: u32 = parse_num(v)?;
                if n != CONFIG_FORMAT_VERSION {
                    return Err(format!("unsupported format version {n}"));
                }
            }
            "preset" => self.preset = v.to_string(),
            "method" => self.method = Method::from_tag(v).map_err(|e| e.to_string())?,
            "seed" => self.seed = parse_num(v)?,
            "pretrain_seed" => self.pretrain_seed = parse_num(v)?,
            "beta" => self.beta = parse_num(v)?,
            "clip" => self.clip = parse_num(v)?,
            "kl_threshold" => self.kl_threshold = parse_num(v)?,
            "reset_steps" => self.reset_steps = parse_num(v)?,
            "window" => self.window = parse_num(v)?,
            "initial_k" => self.initial_k = parse_num(v)?,
            "group_size" => self.group_size = parse_num(v)?,
            "diffusion_steps" => self.diffusion_steps = parse_num(v)?,
            "noise_beta_start" => self.noise_beta_start = parse_num(v)?,
            "noise_beta_end" => self.noise_beta_end = parse_num(v)?,
            "time_embed_dim" => self.time_embed_dim = parse_num(v)?,
            "lr" => self.lr = parse_num(v)?,
            "hidden" => self.hidden = parse_num(v)?,
            "pretrain_steps" => self.pretrain_steps = parse_num(v)?,
            "pretrain_batch" => self.pretrain_batch = parse_num(v)?,
            "pretrain_lr" => self.pretrain_lr = parse_num(v)?,
            "iterations" => self.iterations = parse_num(v)?,
            "use_std" => self.use_std = parse_auto_bool(v)?,
            "diversity" => self.diversity = parse_auto_bool(v)?,
            "shared_noise" => self.shared_noise = parse_bool(v)?,
            "feature_map" => {
                self.feature_map = FeatureKind::from_tag(v)
                    .ok_or_else(|| format!("expected identity or random-projection, got `{v}`"))?
            }
            "feature_anchor" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(format!("expected two comma-separated numbers, got `{v}`"));
                }
                self.feature_anchor = [parse_num(parts[0])?, parse_num(parts[1])?];
            }
            "feature_dim" => self.feature_dim = parse_num(v)?,
            "feature_scale" => self.feature_scale = parse_num(v)?,
            "eval_every" => self.eval_every = parse_num(v)?,
            "eval_samples" => self.eval_samples = parse_num(v)?,
            "final_samples" => self.final_samples = parse_num(v)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(v)?,
            "record_wall_clock" => self.record_wall_clock = parse_bool(v)?,
            "pretrain_checkpoint" => self.pretrain_checkpoint = v.to_string(),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "format_version" => CONFIG_FORMAT_VERSION.to_string(),
            "preset" => self.preset.clone(),
            "method" => self.method.tag().to_string(),
            "seed" => self.seed.to_string(),
            "pretrain_seed" => self.pretrain_seed.to_string(),
            "beta" => format!("{:?}", self.beta),
            "clip" => format!("{:?}", self.clip),
            "kl_threshold" => format!("{:?}", self.kl_threshold),
            "reset_steps" => self.reset_steps.to_string(),
            "window" => self.window.to_string(),
            "initial_k" => format!("{:?}", self.initial_k),
            "group_size" => self.group_size.to_string(),
            "diffusion_steps" => self.diffusion_steps.to_string(),
            "noise_beta_start" => format!("{:?}", self.noise_beta_start),
            "noise_beta_end" => format!("{:?}", self.noise_beta_end),
            "time_embed_dim" => self.time_embed_dim.to_string(),
            "lr" => format!("{:?}", self.lr),
            "hidden" => self.hidden.to_string(),
            "pretrain_steps" => self.pretrain_steps.to_string(),
            "pretrain_batch" => self.pretrain_batch.to_string(),
            "pretrain_lr" => format!("{:?}", self.pretrain_lr),
            "iterations" => self.iterations.to_string(),
            "use_std" => auto_bool(self.use_std),
            "diversity" => auto_bool(self.diversity),
            "shared_noise" => self.shared_noise.to_string(),
            "feature_map" => self.feature_map.tag().to_string(),
            "feature_anchor" => format!("{:?},{:?}", self.feature_anchor[0], self.feature_anchor[1]),
            "feature_dim" => self.feature_dim.to_string(),
            "feature_scale" => format!("{:?}", self.feature_scale),
            "eval_every" => self.eval_every.to_string(),
            "eval_samples" => self.eval_samples.to_string(),
            "final_samples" => self.final_samples.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "record_wall_clock" => self.record_wall_clock.to_string(),
            "pretrain_checkpoint" => self.pretrain_checkpoint.clone(),
            _ => return None,
        })
    }

    /// Range checks; returns the offending key and message.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        fn req(ok: bool, key: &'static str, msg: &str) -> std::result::Result<(), (&'static str, String)> {
            if ok {
                Ok(())
            } else {
                Err((key, msg.to_string()))
            }
        }
        let finite_pos = |v: f64| v > 0.0 && v.is_finite();
        req(crate::rewards::PRESETS.iter().any(|p| p.0 == self.preset), "preset", "unknown preset")?;
        req(self.beta >= 0.0 && self.beta.is_finite(), "beta", "must be finite and >= 0")?;
        req(self.clip > 0.0 && self.clip < 1.0, "clip", "must lie in (0, 1)")?;
        req(self.kl_threshold >= 0.0 && self.kl_threshold.is_finite(), "kl_threshold", "must be finite and >= 0")?;
        req(self.reset_steps >= 1, "reset_steps", "must be >= 1")?;
        req(self.window >= 1, "window", "must be >= 1")?;
        req(self.initial_k > 0.0 && self.initial_k <= 1.0, "initial_k", "must lie in (0, 1]")?;
        req(self.group_size >= 2, "group_size", "must be >= 2")?;
        req(self.diffusion_steps >= 2, "diffusion_steps", "must be >= 2")?;
        req(finite_pos(self.noise_beta_start), "noise_beta_start", "must be > 0")?;
        req(
            self.noise_beta_end >= self.noise_beta_start && self.noise_beta_end < 1.0,
            "noise_beta_end",
            "must lie in [noise_beta_start, 1)",
        )?;
        req(self.time_embed_dim >= 2 && self.time_embed_dim.is_multiple_of(2), "time_embed_dim", "must be even and >= 2")?;
        req(finite_pos(self.lr), "lr", "must be > 0")?;
        req(self.hidden >= 1, "hidden", "must be >= 1")?;
        req(self.pretrain_batch >= 1, "pretrain_batch", "must be >= 1")?;
        req(finite_pos(self.pretrain_lr), "pretrain_lr", "must be > 0")?;
        req(self.feature_anchor.iter().all(|v| v.is_finite()), "feature_anchor", "must be finite")?;
        req(self.feature_dim >= 1, "feature_dim", "must be >= 1")?;
        req(finite_pos(self.feature_scale), "feature_scale", "must be > 0")?;
        req(self.eval_every >= 1, "eval_every", "must be >= 1")?;
        req(self.eval_samples >= crate::metrics::MIN_COVERAGE_SAMPLES, "eval_samples", "must be >= 256")?;
        req(self.final_samples >= crate::metrics::MIN_COVERAGE_SAMPLES, "final_samples", "must be >= 256")?;
        req(self.checkpoint_every >= 1, "checkpoint_every", "must be >= 1")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(key, msg)| Error::Config(format!("`{key}` {msg}")))
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut lines_of = std::collections::HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |key: &str, message: String| Error::ConfigFile {
                path: origin.to_string(),
                line: line_no,
                key: key.to_string(),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line, "expected `key = value`".into()))?;
            let key = key.trim();
            if lines_of.insert(key.to_string(), line_no).is_some() {
                return Err(err(key, "duplicate key".into()));
            }
            cfg.set(key, value).map_err(|m| err(key, m))?;
        }
        cfg.check().map_err(|(key, message)| Error::ConfigFile {
            path: origin.to_string(),
            line: lines_of.get(key).copied().unwrap_or(0),
            key: key.to_string(),
            message,
        })?;
        Ok(cfg)
    }

    /// Fully resolved config with column notes as comments.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved run configuration\n");
        for note in METRICS_NOTES {
            let _ = writeln!(s, "# {note}");
        }
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("known key"));
        }
        s
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(
            self.diffusion_steps,
            self.noise_beta_start,
            self.noise_beta_end,
            self.time_embed_dim,
        )
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain_steps,
            batch_size: self.pretrain_batch,
            lr: self.pretrain_lr,
            hidden: self.hidden,
            ..PretrainConfig::default()
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            method: self.method,
            seed: self.seed,
            gardo: GardoConfig {
                beta: self.beta,
                clip: self.clip,
                kl_threshold: self.kl_threshold,
                reset_steps: self.reset_steps,
                window: self.window,
                initial_k: self.initial_k,
            },
            group_size: self.group_size,
            lr: self.lr,
            iterations: self.iterations,
            use_std: self.use_std,
            diversity: self.diversity,
            shared_noise: self.shared_noise,
            features: self.feature_config(),
            eval_every: self.eval_every,
            eval_samples: self.eval_samples,
            checkpoint_every: self.checkpoint_every,
            record_wall_clock: self.record_wall_clock,
        }
    }

    pub fn feature_config(&self) -> FeatureMapConfig {
        FeatureMapConfig {
            kind: self.feature_map,
            anchor: self.feature_anchor,
            dim: self.feature_dim,
            length_scale: self.feature_scale,
        }
    }
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    TrainConfig::parse(&text, &path.display().to_string())
}
