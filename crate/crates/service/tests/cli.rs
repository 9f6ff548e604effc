use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowsnake::geometry::{BinaryMask, Curve, Point2, RasterImage};
use flowsnake::io::{read_curve, read_mask, write_curve, write_image, write_mask};
use flowsnake::neuralflow::{load_weights, save_weights, ConvNet, NetShape};
use flowsnake::patchdata::read_dataset;
use flowsnake::Net32;
use serde_json::Value;

const W: usize = 80;
const CENTER: (f64, f64) = (40.0, 41.0);
const RADIUS: f64 = 18.0;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowsnake"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn disk_mask() -> BinaryMask {
    BinaryMask::from_fn(W, W, |x, y| {
        let (dx, dy) = (x as f64 - CENTER.0, y as f64 - CENTER.1);
        (dx * dx + dy * dy).sqrt() <= RADIUS
    })
}

fn circle(r: f64, n: usize) -> Curve<f64> {
    Curve::new(
        (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                Point2::new(CENTER.0 + r * a.cos(), CENTER.1 - r * a.sin())
            })
            .collect(),
    )
    .unwrap()
}

/// Disk image, its mask and an initial circle of radius `r0`.
fn disk_files(dir: &Path, r0: f64) -> (PathBuf, PathBuf, PathBuf) {
    let m = disk_mask();
    let img = RasterImage::<f32>::from_fn(W, W, 1, |x, y, _| if m.get(x, y) { 0.75 } else { 0.25 });
    let (ip, mp, cp) = (dir.join("disk.png"), dir.join("disk_mask.png"), dir.join("init.json"));
    write_image(&ip, &img).unwrap();
    write_mask(&mp, &m).unwrap();
    write_curve(&cp, &circle(r0, 24)).unwrap();
    (ip, mp, cp)
}

fn mean_radius_error(c: &Curve<f64>) -> f64 {
    c.vertices()
        .iter()
        .map(|p| ((p.x - CENTER.0).hypot(p.y - CENTER.1) - RADIUS).abs())
        .sum::<f64>()
        / c.len() as f64
}

fn small_gen_args<'a>(dataset: &'a str) -> Vec<&'a str> {
    vec![
        "gen-data",
        "--dataset-dir",
        dataset,
        "--synth-count",
        "2",
        "--scales",
        "1.0",
        "--level-lo=-4",
        "--level-hi",
        "4",
        "--patch-size",
        "16",
        "--seed",
        "5",
    ]
}

#[test]
fn config_echoes_defaults_and_overrides() {
    let out = ok(&["config"]);
    assert!(out.contains("learning_rate = 0.05"), "{out}");
    assert!(out.contains("batch_size = 128"));
    let out = ok(&["config", "--epochs", "3", "--beta", "0.02"]);
    assert!(out.contains("epochs = 3"));
    assert!(out.contains("beta = 0.02"));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.toml");
    std::fs::write(&path, "[train]\nepochs = 7\nmomentum = 0.5\n").unwrap();
    let out = ok(&["--config", s(&path), "config", "--epochs", "2"]);
    assert!(out.contains("epochs = 2"));
    assert!(out.contains("momentum = 0.5"));
    std::fs::write(&path, "[train]\nepoch = 7\n").unwrap();
    assert!(!run(&["--config", s(&path), "config"]).status.success());
}

#[test]
fn gen_data_is_reproducible_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&small_gen_args(s(&a)));
    ok(&small_gen_args(s(&b)));
    for f in ["records.bin", "manifest.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let (ds, manifest) = read_dataset::<f32>(&a).unwrap();
    assert!(manifest.count > 0);
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.size, 16);
    for t in &ds.targets {
        assert!(t[0].hypot(t[1]) <= 16.0, "{t:?}");
    }
}

#[test]
fn gen_data_reads_image_mask_pairs_and_reports_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();

    let empty = run(&["gen-data", "--data-dir", s(&data), "--dataset-dir", s(&dir.path().join("x"))]);
    assert!(!empty.status.success());
    assert!(String::from_utf8_lossy(&empty.stderr).contains("found 0 image/mask pairs"));

    disk_files(&data, 10.0);
    write_image(&data.join("lonely.png"), &RasterImage::<f32>::filled(8, 8, 1, 0.5)).unwrap();
    write_image(&data.join("odd.png"), &RasterImage::<f32>::filled(8, 8, 1, 0.5)).unwrap();
    write_mask(&data.join("odd_mask.png"), &BinaryMask::empty(9, 8)).unwrap();
    let out = run(&[
        "gen-data",
        "--data-dir",
        s(&data),
        "--dataset-dir",
        s(&dir.path().join("ds")),
        "--scales",
        "1.0",
        "--patch-size",
        "16",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lonely.png"), "{err}");
    assert!(err.contains("odd.png"), "{err}");
    let (_, manifest) = read_dataset::<f32>(&dir.path().join("ds")).unwrap();
    assert_eq!(manifest.sources, vec!["disk".to_string()]);
}

#[test]
fn synth_writes_a_loadable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus");
    ok(&["synth", "--output-dir", s(&out), "--synth-count", "3"]);
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 6);
    ok(&[
        "gen-data",
        "--data-dir",
        s(&out),
        "--dataset-dir",
        s(&dir.path().join("ds")),
        "--scales",
        "1.0",
        "--patch-size",
        "16",
    ]);
}

#[test]
fn train_writes_weights_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    ok(&small_gen_args(s(&ds)));
    let model = dir.path().join("m").join("tiny.bin");
    let out = ok(&[
        "train",
        "--dataset-dir",
        s(&ds),
        "--model-path",
        s(&model),
        "--epochs",
        "3",
        "--batch-size",
        "16",
        "--seed",
        "1",
    ]);
    assert!(out.contains("best epoch"));
    let net: Net32 = load_weights(&model).unwrap();
    assert_eq!(net.shape().input_size, 16);
    let csv = std::fs::read_to_string(model.with_extension("csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let best = rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    assert!(best <= rows[0][2]);
    assert!(rows.iter().all(|r| r[1].is_finite() && r[2].is_finite()));
}

#[test]
fn train_refuses_to_resume() {
    let out = run(&["train", "--resume"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--resume is not supported"));
}

#[test]
fn train_reports_missing_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--dataset-dir", s(&dir.path().join("none"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reading dataset"));
}

#[test]
fn segment_with_oracle_converges_on_a_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask, init) = disk_files(dir.path(), 9.0);
    let out = dir.path().join("out");
    let summary = ok(&[
        "segment",
        "--image",
        s(&img),
        "--init",
        s(&init),
        "--predictor",
        "oracle",
        "--sdm-from",
        s(&mask),
        "--trace",
        "--output-dir",
        s(&out),
    ]);
    let v: Value = serde_json::from_str(summary.trim()).unwrap();
    assert_eq!(v["termination"], "converged");
    let c: Curve<f64> = read_curve(&out.join("contour.json")).unwrap();
    assert!(mean_radius_error(&c) < 1.0, "{}", mean_radius_error(&c));
    let m = read_mask(&out.join("mask.png")).unwrap();
    assert_eq!((m.width(), m.height()), (W, W));
    let trace: Value = serde_json::from_str(&std::fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["steps"].as_array().unwrap().len() as u64, v["iterations"].as_u64().unwrap());
}

#[test]
fn segment_with_baseline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask, init) = disk_files(dir.path(), 12.0);
    let out = dir.path().join("out");
    ok(&[
        "segment",
        "--image",
        s(&img),
        "--init",
        s(&init),
        "--predictor",
        "baseline",
        "--mu-from-gt",
        s(&mask),
        "--output-dir",
        s(&out),
    ]);
    let c: Curve<f64> = read_curve(&out.join("contour.json")).unwrap();
    assert!(mean_radius_error(&c) < 1.5, "{}", mean_radius_error(&c));
}

#[test]
fn segment_with_zero_iterations_returns_the_resampled_init() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask, init) = disk_files(dir.path(), 12.0);
    let out = dir.path().join("out");
    ok(&[
        "segment",
        "--image",
        s(&img),
        "--init",
        s(&init),
        "--predictor",
        "oracle",
        "--sdm-from",
        s(&mask),
        "--iterations",
        "0",
        "--points",
        "50",
        "--output-dir",
        s(&out),
    ]);
    let got: Curve<f32> = read_curve(&out.join("contour.json")).unwrap();
    let want = flowsnake::geometry::resample_uniform(&read_curve::<f32>(&init).unwrap(), 50).unwrap();
    assert_eq!(got.vertices(), want.vertices());
}

#[test]
fn segment_collapse_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _, init) = disk_files(dir.path(), 10.0);
    let out = dir.path().join("out");
    // Swapped means make the inside look like background.
    let r = run(&[
        "segment",
        "--image",
        s(&img),
        "--init",
        s(&init),
        "--predictor",
        "baseline",
        "--mu-in",
        "0.25",
        "--mu-out",
        "0.75",
        "--trace",
        "--output-dir",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("trace.json").exists());
    assert!(!out.join("contour.json").exists());
}

#[test]
fn segment_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _, _) = disk_files(dir.path(), 10.0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"vertices\": [[1, 2], ").unwrap();
    let out = dir.path().join("out");
    let r = run(&["segment", "--image", s(&img), "--init", s(&bad), "--predictor", "oracle", "--output-dir", s(&out)]);
    assert_eq!(r.status.code(), Some(1));

    let small = dir.path().join("small_mask.png");
    write_mask(&small, &BinaryMask::empty(10, 10)).unwrap();
    let init = dir.path().join("init.json");
    let r = run(&[
        "segment",
        "--image",
        s(&img),
        "--init",
        s(&init),
        "--predictor",
        "oracle",
        "--sdm-from",
        s(&small),
        "--output-dir",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

fn constant_model(dir: &Path, input: usize, bias: [f32; 2]) -> PathBuf {
    let mut shape = NetShape::standard(1);
    shape.input_size = input;
    let mut net = ConvNet::<f32>::zeros(shape).unwrap();
    net.set_output_bias(&bias);
    let p = dir.join("const.bin");
    save_weights(&net, &p).unwrap();
    p
}

#[test]
fn votemap_conserves_votes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _, _) = disk_files(dir.path(), 10.0);
    let model = constant_model(dir.path(), 16, [0.0, -3.0]);
    let mut outputs = Vec::new();
    for run_dir in ["v1", "v2"] {
        let out = dir.path().join(run_dir);
        let text = ok(&[
            "votemap",
            "--image",
            s(&img),
            "--model-path",
            s(&model),
            "--stride",
            "4",
            "--output-dir",
            s(&out),
        ]);
        let visited = (W / 4) * (W / 4);
        assert!(text.starts_with(&format!("{} votes cast", 4 * visited)), "{text}");
        outputs.push((std::fs::read(out.join("votes.csv")).unwrap(), std::fs::read(out.join("votemap.png")).unwrap()));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn evaluate_writes_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    let model = constant_model(dir.path(), 16, [0.0, 0.0]);
    let out = dir.path().join("eval");
    let text = ok(&[
        "evaluate",
        "--predictors",
        "cnn,oracle,baseline",
        "--model-path",
        s(&model),
        "--synth-count",
        "2",
        "--inits-per-image",
        "2",
        "--points",
        "40",
        "--scales",
        "1.0",
        "--level-lo=-2",
        "--level-hi",
        "2",
        "--patch-size",
        "16",
        "--output-dir",
        s(&out),
    ]);
    assert!(text.contains("PPV"));
    let seg: Value = serde_json::from_str(&std::fs::read_to_string(out.join("segmentation_report.json")).unwrap()).unwrap();
    for m in ["cnn", "oracle", "baseline"] {
        assert_eq!(seg["methods"][m]["runs"], 4, "{m}");
        assert_eq!(seg["runs"][m].as_array().unwrap().len(), 4);
    }
    let oracle_d = seg["methods"]["oracle"]["metrics"]["D"]["median"].as_f64().unwrap();
    assert!(oracle_d > 0.95, "{oracle_d}");
    let flow: Value = serde_json::from_str(&std::fs::read_to_string(out.join("flow_report.json")).unwrap()).unwrap();
    assert!(flow["pairs"].as_u64().unwrap() > 0);
    // A zero predictor is never within 10 degrees.
    assert_eq!(flow["angles"]["below_10"], 0.0);
    assert!(out.join("length_histogram.csv").exists());
    assert!(out.join("segmentation_report.txt").exists());
}
