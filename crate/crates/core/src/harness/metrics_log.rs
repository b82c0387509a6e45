use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub mean_proxy_reward: f64,
    pub mean_true_reward: f64,
    pub diversity: f64,
    pub k: f64,
    pub gated_fraction: f64,
    pub kl_loss: f64,
    pub reset: bool,
    pub mode_coverage: usize,
    pub wall_ms: u64,
}

pub const METRICS_FILE: &str = "metrics.csv";

pub const METRICS_HEADER: &str =
    "iteration,mean_proxy_reward,mean_true_reward,diversity,k,gated_fraction,kl_loss,reset,mode_coverage,wall_ms";

/// Column semantics, echoed as comments into the resolved config.
pub const METRICS_NOTES: &[&str] = &[
    "metrics.csv format_version 1; one row per iteration",
    "k, kl_loss and reset stay at their initial values (k0, 0, 0) for methods without gated KL",
    "gated_fraction is 0 without KL and 1 for ungated KL",
    "mode_coverage is refreshed every eval_every iterations and carried forward in between",
    "wall_ms is 0 unless record_wall_clock = true (keeps the file reproducible)",
];

impl MetricsRecord {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{}",
            self.iteration,
            self.mean_proxy_reward,
            self.mean_true_reward,
            self.diversity,
            self.k,
            self.gated_fraction,
            self.kl_loss,
            self.reset as u8,
            self.mode_coverage,
            self.wall_ms
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 10 {
            return Err(Error::Usage(format!("metrics row has {} fields, expected 10: `{line}`", f.len())));
        }
        let bad = |name: &str| Error::Usage(format!("metrics row: bad `{name}` in `{line}`"));
        let float = |i: usize, name: &str| f[i].parse::<f64>().map_err(|_| bad(name));
        Ok(Self {
            iteration: f[0].parse().map_err(|_| bad("iteration"))?,
            mean_proxy_reward: float(1, "mean_proxy_reward")?,
            mean_true_reward: float(2, "mean_true_reward")?,
            diversity: float(3, "diversity")?,
            k: float(4, "k")?,
            gated_fraction: float(5, "gated_fraction")?,
            kl_loss: float(6, "kl_loss")?,
            reset: match f[7] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("reset")),
            },
            mode_coverage: f[8].parse().map_err(|_| bad("mode_coverage"))?,
            wall_ms: f[9].parse().map_err(|_| bad("wall_ms"))?,
        })
    }
}

/// Append-only writer; the header goes out with the first record and every
/// row is flushed as it is written.
pub struct MetricsWriter {
    path: PathBuf,
    file: Option<File>,
    last_iteration: Option<usize>,
}

impl MetricsWriter {
    pub fn new(run_dir: &Path) -> Self {
        Self {
            path: run_dir.join(METRICS_FILE),
            file: None,
            last_iteration: None,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        if let Some(prev) = self.last_iteration {
            if record.iteration <= prev {
                return Err(Error::Internal(format!(
                    "metrics iteration {} does not follow {prev}",
                    record.iteration
                )));
            }
        }
        if self.file.is_none() {
            let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(&self.path)?;
            writeln!(f, "{METRICS_HEADER}")?;
            self.file = Some(f);
        }
        let f = self.file.as_mut().expect("opened above");
        writeln!(f, "{}", record.to_csv())?;
        f.flush()?;
        self.last_iteration = Some(record.iteration);
        Ok(())
    }
}

/// Append one record to `<run_dir>/metrics.csv`, writing the header if the
/// file does not exist yet.
pub fn write_metrics(record: &MetricsRecord, run_dir: &Path) -> Result<()> {
    let path = run_dir.join(METRICS_FILE);
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    if fresh {
        writeln!(f, "{METRICS_HEADER}")?;
    }
    writeln!(f, "{}", record.to_csv())?;
    f.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path)
        .map_err(|e| Error::Usage(format!("cannot open metrics file {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next().transpose()? {
        Some(h) if h.trim_end() == METRICS_HEADER => {}
        _ => {
            return Err(Error::Usage(format!(
                "{}: missing or unexpected metrics header",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(MetricsRecord::from_csv(&line)?);
        }
    }
    Ok(out)
}
