use std::fs;

use gardo_core::gardo::{FeatureKind, Method};
use gardo_core::harness::metrics_log::METRICS_NOTES;
use gardo_core::harness::plot::{KL_PLOT, REWARD_PLOT, SAMPLES_PLOT};
use gardo_core::harness::*;
use gardo_core::rewards::make_hacking_world;
use gardo_core::Error;
use proptest::prelude::*;

fn record(i: usize) -> MetricsRecord {
    MetricsRecord {
        iteration: i,
        mean_proxy_reward: 0.5 + i as f64 * 1e-3,
        mean_true_reward: 0.4 + i as f64 * 1e-3,
        diversity: 0.8,
        k: 0.1,
        gated_fraction: 2.0 / 24.0,
        kl_loss: 1e-5 * i as f64,
        reset: i.is_multiple_of(7),
        mode_coverage: 8,
        wall_ms: 0,
    }
}

#[test]
fn empty_config_gives_defaults() {
    let cfg = TrainConfig::parse("", "empty.cfg").unwrap();
    assert_eq!(cfg, TrainConfig::default());
    assert_eq!(cfg.beta, 0.04);
    assert_eq!(cfg.initial_k, 0.1);
    assert_eq!(cfg.reset_steps, 100);
    assert_eq!(cfg.window, 20);
    assert_eq!(cfg.kl_threshold, 1e-4);
    assert_eq!(cfg.group_size, 24);
    assert_eq!(cfg.diffusion_steps, 10);
    assert_eq!(cfg.lr, 3e-4);
    assert_eq!(cfg.clip, 1e-4);
}

#[test]
fn negative_beta_is_a_range_error() {
    let err = TrainConfig::parse("# comment\nbeta = -1\n", "bad.cfg").unwrap_err();
    assert!(err.is_usage());
    match err {
        Error::ConfigFile { line, key, .. } => {
            assert_eq!(line, 2);
            assert_eq!(key, "beta");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_lines_name_their_key() {
    for (text, key) in [
        ("nonsense_key = 3", "nonsense_key"),
        ("group_size = many", "group_size"),
        ("seed = 1\nseed = 2", "seed"),
        ("method = ppo", "method"),
        ("initial_k = 0", "initial_k"),
        ("feature_anchor = 1", "feature_anchor"),
    ] {
        match TrainConfig::parse(text, "x.cfg") {
            Err(Error::ConfigFile { key: k, .. }) => assert_eq!(k, key, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn lines_without_equals_are_rejected() {
    assert!(TrainConfig::parse("beta 0.1", "x.cfg").unwrap_err().is_usage());
}

#[test]
fn load_config_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.cfg");
    fs::write(&path, "method = grpo-kl\nbeta = 5\nfeature_anchor = 1.5, -2\n").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.method, Method::GrpoKl);
    assert_eq!(cfg.beta, 5.0);
    assert_eq!(cfg.feature_anchor, [1.5, -2.0]);
    assert!(load_config(&dir.path().join("missing.cfg")).is_err());
}

#[test]
fn resolved_text_carries_version_and_metric_notes() {
    let text = TrainConfig::default().to_text();
    assert!(text.contains(&format!("format_version {CONFIG_FORMAT_VERSION}")));
    for note in METRICS_NOTES {
        assert!(text.contains(note));
    }
}

fn arb_config() -> impl Strategy<Value = TrainConfig> {
    (
        prop::sample::select(Method::ALL.to_vec()),
        any::<u32>(),
        1e-6f64..10.0,
        1e-6f64..0.5,
        1e-6f64..1e3,
        (1usize..500, 1usize..50, 1e-3f64..=1.0, 2usize..64),
        (prop::option::of(any::<bool>()), prop::option::of(any::<bool>()), any::<bool>()),
        (prop::bool::ANY, -10.0f64..10.0, -10.0f64..10.0, 1e-2f64..10.0),
        1e-6f64..1e-2,
    )
        .prop_map(|(method, seed, beta, clip, eps, (m, w, k, g), (std, div, shared), (rp, ax, ay, ls), lr)| TrainConfig {
            method,
            seed: seed as u64,
            beta,
            clip,
            kl_threshold: eps,
            reset_steps: m,
            window: w,
            initial_k: k,
            group_size: g,
            use_std: std,
            diversity: div,
            shared_noise: shared,
            feature_map: if rp { FeatureKind::RandomProjection } else { FeatureKind::Identity },
            feature_anchor: [ax, ay],
            feature_scale: ls,
            lr,
            ..TrainConfig::default()
        })
}

proptest! {
    #[test]
    fn config_round_trips(cfg in arb_config()) {
        let back = TrainConfig::parse(&cfg.to_text(), "resolved").unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn metrics_rows_round_trip(
        rows in prop::collection::vec((any::<f64>(), -1e3f64..1e3, 0.0f64..2.0, 0.0f64..=1.0, any::<bool>(), 0usize..10, any::<u64>()), 1..20)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<MetricsRecord> = rows.iter().enumerate().map(|(i, r)| MetricsRecord {
            iteration: i + 1,
            mean_proxy_reward: if r.0.is_finite() { r.0 } else { 0.0 },
            mean_true_reward: r.1,
            diversity: r.2,
            k: r.3,
            gated_fraction: r.3 / 2.0,
            kl_loss: r.2 * 1e-7,
            reset: r.4,
            mode_coverage: r.5,
            wall_ms: r.6,
        }).collect();
        let mut w = MetricsWriter::new(dir.path());
        for r in &records {
            w.write(r).unwrap();
        }
        prop_assert_eq!(read_metrics(&dir.path().join(METRICS_FILE)).unwrap(), records);
    }
}

#[test]
fn first_write_creates_header_and_row() {
    let dir = tempfile::tempdir().unwrap();
    write_metrics(&record(1), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec![METRICS_HEADER, record(1).to_csv().as_str()]);
}

#[test]
fn hundred_writes_give_101_lines() {
    let dir = tempfile::tempdir().unwrap();
    for i in 1..=100 {
        write_metrics(&record(i), dir.path()).unwrap();
    }
    let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(text.lines().count(), 101);
    let back = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(back, (1..=100).map(record).collect::<Vec<_>>());
}

#[test]
fn writer_rejects_non_increasing_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = MetricsWriter::new(dir.path());
    w.write(&record(3)).unwrap();
    assert!(w.write(&record(3)).is_err());
    assert!(w.write(&record(2)).is_err());
    w.write(&record(4)).unwrap();
}

#[test]
fn header_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(METRICS_FILE);
    fs::write(&path, "iteration,reward\n1,0.5\n").unwrap();
    assert!(read_metrics(&path).is_err());
}

fn write_run(dir: &std::path::Path, rows: usize, samples: &[[f64; 2]]) {
    for i in 1..=rows {
        write_metrics(&record(i), dir).unwrap();
    }
    write_samples(&dir.join("samples.csv"), samples).unwrap();
}

fn parse_svg(path: &std::path::Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    text
}

#[test]
fn two_row_metrics_render_valid_svg() {
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), 2, &[[0.0, 3.0], [-3.0, 0.0], [4.0, 0.1]]);
    let world = make_hacking_world("fig3-hackable").unwrap();
    let files = render_plots(&dir.path().join(METRICS_FILE), Some(&dir.path().join("samples.csv")), &world.proxy, dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, vec![REWARD_PLOT, KL_PLOT, SAMPLES_PLOT]);
    for f in &files {
        parse_svg(f);
    }
    let panel = parse_svg(&dir.path().join(SAMPLES_PLOT));
    assert_eq!(panel.matches("<circle").count(), 3);
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pts: Vec<[f64; 2]> = (0..50).map(|i| [(i as f64 * 0.37).sin() * 3.0, (i as f64 * 0.11).cos() * 3.0]).collect();
    let world = make_hacking_world("fig3").unwrap();
    for d in [&a, &b] {
        write_run(d.path(), 40, &pts);
        render_plots(&d.path().join(METRICS_FILE), Some(&d.path().join("samples.csv")), &world.proxy, d.path()).unwrap();
    }
    for name in [REWARD_PLOT, KL_PLOT, SAMPLES_PLOT] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn empty_scatter_is_contour_only() {
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), 2, &[]);
    let world = make_hacking_world("fig3").unwrap();
    render_plots(&dir.path().join(METRICS_FILE), Some(&dir.path().join("samples.csv")), &world.proxy, dir.path()).unwrap();
    let panel = parse_svg(&dir.path().join(SAMPLES_PLOT));
    assert_eq!(panel.matches("<circle").count(), 0);
    assert!(panel.matches("<rect").count() > 10);
}

#[test]
fn empty_metrics_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(METRICS_FILE), format!("{METRICS_HEADER}\n")).unwrap();
    let world = make_hacking_world("fig3").unwrap();
    let err = render_plots(&dir.path().join(METRICS_FILE), None, &world.proxy, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(!err.is_usage());
}

#[test]
fn samples_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pts = vec![[0.1, -0.2], [1e-17, 3.5], [-4.0, 0.0]];
    let path = dir.path().join("s.csv");
    write_samples(&path, &pts).unwrap();
    assert_eq!(read_samples(&path).unwrap(), pts);
}
