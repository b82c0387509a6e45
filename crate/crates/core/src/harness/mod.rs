//! Run orchestration: configuration files, run directories, metrics logs and figures.

pub mod config;
pub mod metrics_log;
pub mod plot;
pub mod run;

pub use config::{load_config, TrainConfig, CONFIG_FORMAT_VERSION, RESOLVED_CONFIG_FILE};
pub use metrics_log::{read_metrics, write_metrics, MetricsRecord, MetricsWriter, METRICS_FILE, METRICS_HEADER};
pub use plot::{read_samples, render_plots, write_samples};
pub use run::{run_eval, run_finetune, run_oracle, run_pretrain, run_root, RUN_ROOT_ENV};
