//! Dependency-free SVG figures. Output bytes depend only on the inputs.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::metrics_log::{read_metrics, MetricsRecord};
use crate::rewards::RewardSpec;

pub const SAMPLES_FILE: &str = "samples.csv";
pub const REWARD_PLOT: &str = "reward_curve.svg";
pub const KL_PLOT: &str = "kl_dynamics.svg";
pub const SAMPLES_PLOT: &str = "samples_panel.svg";

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub fn write_samples(path: &Path, samples: &[[f64; 2]]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "x,y")?;
    for s in samples {
        writeln!(f, "{:?},{:?}", s[0], s[1])?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<[f64; 2]>> {
    let file = File::open(path)
        .map_err(|e| Error::Usage(format!("cannot open samples file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (x, y) = line
            .split_once(',')
            .ok_or_else(|| Error::Usage(format!("{}:{}: expected `x,y`", path.display(), i + 1)))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("{}:{}: bad number `{v}`", path.display(), i + 1)))
        };
        out.push([parse(x)?, parse(y)?]);
    }
    Ok(out)
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map from a data range onto a pixel range; degenerate ranges are widened.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if (hi - lo).abs() < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        Self { lo, hi, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn frame(s: &mut String, x: Axis, y: Axis, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#333\"/>",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let fx = x.lo + (x.hi - x.lo) * i as f64 / 4.0;
        let fy = y.lo + (y.hi - y.lo) * i as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", x.map(fx), H - MARGIN + 16.0, tick(fx));
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", MARGIN - 4.0, y.map(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else if v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(s: &mut String, pts: impl Iterator<Item = (f64, f64)>, x: Axis, y: Axis, color: &str, dash: bool) {
    let coords: Vec<String> = pts.map(|(a, b)| format!("{:.2},{:.2}", x.map(a), y.map(b))).collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{} points=\"{}\"/>",
        if dash { " stroke-dasharray=\"5,3\"" } else { "" },
        coords.join(" ")
    );
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = W - MARGIN - 150.0;
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>", x + 18.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", x + 24.0, y + 4.0, escape(label));
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn reward_curve_svg(records: &[MetricsRecord]) -> String {
    let mut s = svg_open("Mean reward per iteration");
    let (x0, x1) = range(records.iter().map(|r| r.iteration as f64));
    let (y0, y1) = range(records.iter().flat_map(|r| [r.mean_proxy_reward, r.mean_true_reward]));
    let x = Axis::new(x0, x1, MARGIN, W - MARGIN);
    let y = Axis::new(y0.min(0.0), y1, H - MARGIN, MARGIN);
    frame(&mut s, x, y, "iteration", "reward");
    polyline(&mut s, records.iter().map(|r| (r.iteration as f64, r.mean_proxy_reward)), x, y, "#1f77b4", false);
    polyline(&mut s, records.iter().map(|r| (r.iteration as f64, r.mean_true_reward)), x, y, "#d62728", true);
    legend(&mut s, &[("proxy reward", "#1f77b4"), ("true reward", "#d62728")]);
    s.push_str("</svg>\n");
    s
}

/// `k` and gated fraction on the left axis, KL loss on the right.
pub fn kl_dynamics_svg(records: &[MetricsRecord]) -> String {
    let mut s = svg_open("Gate fraction and KL loss");
    let (x0, x1) = range(records.iter().map(|r| r.iteration as f64));
    let x = Axis::new(x0, x1, MARGIN, W - MARGIN);
    let y = Axis::new(0.0, 1.0, H - MARGIN, MARGIN);
    let kl_max = records.iter().map(|r| r.kl_loss).fold(0.0, f64::max);
    let y_kl = Axis::new(0.0, if kl_max > 0.0 { kl_max } else { 1.0 }, H - MARGIN, MARGIN);
    frame(&mut s, x, y, "iteration", "k / gated fraction");
    for i in 0..=4 {
        let v = y_kl.lo + (y_kl.hi - y_kl.lo) * i as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", W - MARGIN + 4.0, y_kl.map(v) + 4.0, tick(v));
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(90 {:.1} {:.1})\">KL loss</text>",
        W - 10.0,
        H / 2.0,
        W - 10.0,
        H / 2.0
    );
    polyline(&mut s, records.iter().map(|r| (r.iteration as f64, r.k)), x, y, "#2ca02c", false);
    polyline(&mut s, records.iter().map(|r| (r.iteration as f64, r.gated_fraction)), x, y, "#9467bd", false);
    polyline(&mut s, records.iter().map(|r| (r.iteration as f64, r.kl_loss)), x, y_kl, "#ff7f0e", true);
    for r in records.iter().filter(|r| r.reset) {
        let px = x.map(r.iteration as f64);
        let _ = writeln!(s, "<line x1=\"{px:.2}\" y1=\"{:.1}\" x2=\"{px:.2}\" y2=\"{:.1}\" stroke=\"#bbb\" stroke-width=\"0.5\"/>", H - MARGIN, H - MARGIN - 6.0);
    }
    legend(&mut s, &[("k", "#2ca02c"), ("gated fraction", "#9467bd"), ("KL loss (right)", "#ff7f0e")]);
    s.push_str("</svg>\n");
    s
}

/// Reward landscape as shaded cells with the samples on top.
pub fn samples_panel_svg(samples: &[[f64; 2]], reward: &RewardSpec) -> String {
    const CELLS: usize = 60;
    const LO: f64 = -5.0;
    const HI: f64 = 5.0;
    let mut s = svg_open("Final samples over the reward landscape");
    let side = H - 2.0 * MARGIN;
    let left = (W - side) / 2.0;
    let x = Axis::new(LO, HI, left, left + side);
    let y = Axis::new(LO, HI, MARGIN + side, MARGIN);
    let step = (HI - LO) / CELLS as f64;
    let mut values = Vec::with_capacity(CELLS * CELLS);
    for j in 0..CELLS {
        for i in 0..CELLS {
            values.push(reward.evaluate([LO + (i as f64 + 0.5) * step, LO + (j as f64 + 0.5) * step]));
        }
    }
    let (v0, v1) = range(values.iter().copied());
    let span = if v1 > v0 { v1 - v0 } else { 1.0 };
    let px = side / CELLS as f64;
    for j in 0..CELLS {
        for i in 0..CELLS {
            let level = (values[j * CELLS + i] - v0) / span;
            if level < 0.02 {
                continue;
            }
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{px:.2}\" height=\"{px:.2}\" fill=\"#f5a623\" fill-opacity=\"{:.3}\"/>",
                left + i as f64 * px,
                MARGIN + side - (j + 1) as f64 * px,
                level
            );
        }
    }
    let _ = writeln!(
        s,
        "<rect x=\"{left:.2}\" y=\"{MARGIN}\" width=\"{side:.2}\" height=\"{side:.2}\" fill=\"none\" stroke=\"#333\"/>"
    );
    for p in samples {
        if p[0] < LO || p[0] > HI || p[1] < LO || p[1] > HI || !p[0].is_finite() || !p[1].is_finite() {
            continue;
        }
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"#1f3a93\" fill-opacity=\"0.6\"/>", x.map(p[0]), y.map(p[1]));
    }
    s.push_str("</svg>\n");
    s
}

/// Write the three figures into `out_dir` and return their paths.
pub fn render_plots(metrics: &Path, samples: Option<&Path>, reward: &RewardSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_metrics(metrics)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{} holds no metrics rows", metrics.display())));
    }
    let points = match samples {
        Some(p) => read_samples(p)?,
        None => Vec::new(),
    };
    std::fs::create_dir_all(out_dir)?;
    let outputs = [
        (REWARD_PLOT, reward_curve_svg(&records)),
        (KL_PLOT, kl_dynamics_svg(&records)),
        (SAMPLES_PLOT, samples_panel_svg(&points, reward)),
    ];
    let mut paths = Vec::new();
    for (name, body) in outputs {
        let path = out_dir.join(name);
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}
