//! End-to-end runs of the `motionsync` binary on a shrunken geometry.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use motionsync::bundle::{load_dataset, ModelBundle};
use motionsync::vtb::Tensor;
use motionsync_cli::RunConfig;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SMALL: &str = "\
seed = 5
data.source_count = 20
model.units = 12
whitening.dims = 20
skmeans.epochs = 2
sae.epochs = 2
pipeline.super_dims = 6x8x8
pipeline.sub_dims = 4x6x6
pipeline.sub_stride = 2
pipeline.pca_dims = 10
pipeline.vocab_size = 8
pipeline.vocab_iterations = 10
pipeline.pooling_centroids = 4
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_motionsync"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let patches = "data.count = 600\ndata.dims = 4x6x6\ndata.source_size = 24\npipeline.knn_k = 3\n";
        let videos = "data.count = 24\ndata.dims = 9x12x12\ndata.source_size = 32\npipeline.knn_k = 3\n";
        fs::write(dir.path().join("run.cfg"), format!("{SMALL}{extra}{patches}")).unwrap();
        fs::write(dir.path().join("videos.cfg"), format!("{SMALL}{extra}{videos}")).unwrap();
        Self { dir }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cfg(&self) -> String {
        s(&self.p("run.cfg")).to_string()
    }
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn full_pipeline_loo() {
    let w = Workspace::new("");
    let cfg = w.cfg();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("patches")), "--config", &cfg]);
    ok(&["gen-data", "--kind", "directions", "--out", s(&w.p("videos")), "--config", s(&w.p("videos.cfg"))]);
    ok(&["train", "--model", "skmeans", "--data", s(&w.p("patches")), "--out", s(&w.p("model")), "--config", &cfg]);
    let trace = fs::read_to_string(w.p("model/trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,loss\n"));
    assert_eq!(trace.lines().count(), 3);

    // Histograms need a codebook first.
    let err = fails(&["extract", "--model", s(&w.p("model")), "--videos", s(&w.p("videos")), "--out", s(&w.p("f")), "--config", &cfg]);
    assert!(err.contains("--fit-codebook"), "{err}");

    ok(&[
        "extract", "--model", s(&w.p("model")), "--videos", s(&w.p("videos")), "--out", s(&w.p("feat")), "--fit-codebook",
        "--config", &cfg,
    ]);
    let d = Tensor::read(w.p("feat/descriptors.vtb")).unwrap();
    assert_eq!(d.dims(), &[24, 8, 10]);
    let h = Tensor::read(w.p("feat/histograms.vtb")).unwrap();
    assert_eq!(h.dims(), &[24, 8]);
    for row in h.to_f64().chunks(8) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    // The fitted model now extracts without refitting, identically.
    ok(&["extract", "--model", s(&w.p("feat/model")), "--videos", s(&w.p("videos")), "--out", s(&w.p("feat2")), "--config", &cfg]);
    assert_eq!(sha(&w.p("feat/histograms.vtb")), sha(&w.p("feat2/histograms.vtb")));

    let stdout = ok(&["eval", "--train", s(&w.p("feat")), "--loo", "--out", s(&w.p("rep")), "--config", &cfg]);
    assert!(stdout.contains("accuracy"), "{stdout}");
    let preds = fs::read_to_string(w.p("rep/predictions.csv")).unwrap();
    assert!(preds.starts_with("video_id,true_label,predicted_label\n"));
    assert_eq!(preds.lines().count(), 25);
    assert!(w.p("rep/confusion.csv").exists() && w.p("rep/kernel_train.vtb").exists());

    // Self-test: classifying the training set against itself with k = 1.
    let k1 = w.p("k1.cfg");
    fs::write(&k1, fs::read_to_string(w.p("run.cfg")).unwrap().replace("knn_k = 3", "knn_k = 1")).unwrap();
    let stdout = ok(&["eval", "--train", s(&w.p("feat")), "--test", s(&w.p("feat")), "--out", s(&w.p("self")), "--config", s(&k1)]);
    assert!(stdout.contains("accuracy 1.0000"), "{stdout}");
}

#[test]
fn every_model_trains_and_visualises() {
    let w = Workspace::new("");
    let cfg = w.cfg();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("patches")), "--config", &cfg]);
    for kind in ["skmeans", "sae", "kmeans", "ae-baseline"] {
        let dir = w.p(kind);
        ok(&["train", "--model", kind, "--data", s(&w.p("patches")), "--out", s(&dir), "--config", &cfg]);
        let bundle = ModelBundle::load(&dir).unwrap();
        assert_eq!(bundle.model.kind(), kind);
        let pgm = w.p(&format!("{kind}.pgm"));
        ok(&["viz-filters", "--model", s(&dir), "--out", s(&pgm), "--config", &cfg]);
        let bytes = fs::read(&pgm).unwrap();
        // 12 rows of 4 frame tiles, 6x6 each, 1-pixel gaps.
        let header = format!("P5\n{} {}\n255\n", 4 * 6 + 3, 12 * 6 + 11);
        assert!(bytes.starts_with(header.as_bytes()));
        assert_eq!(bytes.len(), header.len() + 27 * 83);
    }
}

#[test]
fn pair_mode_mosaic_has_two_frames() {
    let w = Workspace::new("model.mode = pair\n");
    let cfg = w.cfg();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("patches")), "--config", &cfg]);
    ok(&["train", "--model", "sae", "--data", s(&w.p("patches")), "--out", s(&w.p("m")), "--config", &cfg]);
    ok(&["viz-filters", "--model", s(&w.p("m")), "--out", s(&w.p("m.pgm")), "--config", &cfg]);
    assert!(fs::read(w.p("m.pgm")).unwrap().starts_with(b"P5\n13 83\n255\n"));
}

#[test]
fn pooling_mosaic() {
    let w = Workspace::new("pipeline.pooling = true\n");
    let cfg = w.cfg();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("patches")), "--config", &cfg]);
    ok(&["gen-data", "--kind", "directions", "--out", s(&w.p("videos")), "--config", s(&w.p("videos.cfg"))]);
    ok(&["train", "--model", "skmeans", "--data", s(&w.p("patches")), "--out", s(&w.p("m")), "--config", &cfg]);
    let err = fails(&["viz-filters", "--model", s(&w.p("m")), "--out", s(&w.p("p.pgm")), "--pooling", s(&w.p("videos")), "--config", &cfg]);
    assert!(err.contains("pooling"), "{err}");
    ok(&["extract", "--model", s(&w.p("m")), "--videos", s(&w.p("videos")), "--out", s(&w.p("f")), "--fit-codebook", "--config", &cfg]);
    ok(&["viz-filters", "--model", s(&w.p("f/model")), "--out", s(&w.p("p.pgm")), "--pooling", s(&w.p("videos")), "--config", &cfg]);
    // Four groups of six single-frame tiles.
    assert!(fs::read(w.p("p.pgm")).unwrap().starts_with(b"P5\n41 27\n255\n"));
}

#[test]
fn gen_data_is_deterministic_and_seeded() {
    let w = Workspace::new("");
    let cfg = w.cfg();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("a")), "--config", &cfg]);
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("b")), "--config", &cfg]);
    for f in ["patches.vtb", "labels.vtb", "manifest.txt"] {
        assert_eq!(sha(&w.p("a").join(f)), sha(&w.p("b").join(f)), "{f}");
    }
    fs::write(w.p("other.cfg"), fs::read_to_string(w.p("run.cfg")).unwrap().replace("seed = 5", "seed = 6")).unwrap();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("c")), "--config", s(&w.p("other.cfg"))]);
    assert_ne!(sha(&w.p("a/patches.vtb")), sha(&w.p("c/patches.vtb")));
    let (ds, _) = load_dataset(w.p("a")).unwrap();
    assert_eq!(ds.len(), 600);
}

#[test]
fn sinusoid_dataset_layout() {
    let w = Workspace::new("");
    ok(&["gen-data", "--kind", "sinusoids", "--out", s(&w.p("sin")), "--config", &w.cfg()]);
    let (ds, _) = load_dataset(w.p("sin")).unwrap();
    assert_eq!(ds.len(), 1);
    let p = &ds.patches()[0];
    assert_eq!(p.dims().as_array(), [2, 1, 64]);
    // Second frame is the first shifted right by 4 samples.
    assert_eq!(p.frame(1)[4], p.frame(0)[0]);
}

#[test]
fn defaults_match_the_desk_corpus() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.data_count, 50_000);
    assert_eq!(cfg.data_dims.as_array(), [10, 16, 16]);
}

#[test]
fn config_errors_exit_nonzero() {
    let w = Workspace::new("");
    fs::write(w.p("bad.cfg"), "seed = 1\ncolour = blue\n").unwrap();
    let err = fails(&["gen-data", "--kind", "translations", "--out", s(&w.p("x")), "--config", s(&w.p("bad.cfg"))]);
    assert!(err.contains("line 2") && err.contains("colour"), "{err}");
    let err = fails(&["gen-data", "--kind", "translations", "--out", s(&w.p("x")), "--config", s(&w.p("missing.cfg"))]);
    assert!(err.contains("missing.cfg"), "{err}");
}

#[test]
fn input_errors_exit_nonzero() {
    let w = Workspace::new("");
    let cfg = w.cfg();
    fs::create_dir(w.p("empty")).unwrap();
    let err = fails(&["train", "--model", "skmeans", "--data", s(&w.p("empty")), "--out", s(&w.p("m")), "--config", &cfg]);
    assert!(err.contains("empty"), "{err}");
    // A dataset is not a model.
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("patches")), "--config", &cfg]);
    let err = fails(&["viz-filters", "--model", s(&w.p("patches")), "--out", s(&w.p("x.pgm"))]);
    assert!(err.contains("not a model bundle"), "{err}");
    let err = fails(&["extract", "--model", s(&w.p("m")), "--videos", s(&w.p("empty")), "--out", s(&w.p("f"))]);
    assert!(err.contains("not a model bundle"), "{err}");
    // Baselines are sequence-only.
    fs::write(w.p("pair.cfg"), format!("{}model.mode = pair\n", fs::read_to_string(w.p("run.cfg")).unwrap())).unwrap();
    let err = fails(&["train", "--model", "kmeans", "--data", s(&w.p("patches")), "--out", s(&w.p("k")), "--config", s(&w.p("pair.cfg"))]);
    assert!(err.contains("sequence mode"), "{err}");
}

#[test]
fn eval_rejects_unknown_test_classes() {
    let w = Workspace::new("");
    let cfg = w.cfg();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("patches")), "--config", &cfg]);
    ok(&["gen-data", "--kind", "directions", "--out", s(&w.p("videos")), "--config", s(&w.p("videos.cfg"))]);
    ok(&["train", "--model", "kmeans", "--data", s(&w.p("patches")), "--out", s(&w.p("m")), "--config", &cfg]);
    ok(&["extract", "--model", s(&w.p("m")), "--videos", s(&w.p("videos")), "--out", s(&w.p("f")), "--fit-codebook", "--config", &cfg]);
    // Relabel the test copy with a class the training split never saw.
    let test = w.p("t");
    fs::create_dir(&test).unwrap();
    for f in ["histograms.vtb", "descriptors.vtb", "manifest.txt"] {
        fs::copy(w.p("f").join(f), test.join(f)).unwrap();
    }
    Tensor::f64(vec![24], vec![9.0; 24]).unwrap().write(test.join("labels.vtb")).unwrap();
    let err = fails(&["eval", "--train", s(&w.p("f")), "--test", s(&test), "--out", s(&w.p("r")), "--config", &cfg]);
    assert!(err.contains("class 9"), "{err}");
    // Label count mismatch.
    Tensor::f64(vec![3], vec![0.0; 3]).unwrap().write(test.join("labels.vtb")).unwrap();
    let err = fails(&["eval", "--train", s(&w.p("f")), "--test", s(&test), "--out", s(&w.p("r")), "--config", &cfg]);
    assert!(err.contains("labels for"), "{err}");
}

// Recorded from a seeded run of the small configuration; any change to data
// generation, training, extraction or mosaic layout shows up here.
const PATCHES_SHA: &str = "f789febca27c9bc0c112b1add874731c35d6f35d0d84b39097e0d10d8701972b";
const W_SHA: &str = "653c62fbc8ab576e4f113841217b492c2cb90805b41be7616e0ec4067d8b84d0";
const HIST_SHA: &str = "d759f8b065d204dac4324fb331f0b660eeca758d2a3092e7a9f653fb008ba22d";
const MOSAIC_SHA: &str = "9b081bc0c0beb767a42b22b68145a88b91fa885ff430f14cfd2cf0ccc519dc73";

#[test]
fn frozen_fixture_hashes() {
    let w = Workspace::new("");
    let cfg = w.cfg();
    ok(&["gen-data", "--kind", "translations", "--out", s(&w.p("patches")), "--config", &cfg]);
    ok(&["gen-data", "--kind", "directions", "--out", s(&w.p("videos")), "--config", s(&w.p("videos.cfg"))]);
    ok(&["train", "--model", "skmeans", "--data", s(&w.p("patches")), "--out", s(&w.p("m")), "--config", &cfg]);
    ok(&["extract", "--model", s(&w.p("m")), "--videos", s(&w.p("videos")), "--out", s(&w.p("f")), "--fit-codebook", "--config", &cfg]);
    ok(&["viz-filters", "--model", s(&w.p("m")), "--out", s(&w.p("m.pgm")), "--config", &cfg]);
    let got = [
        sha(&w.p("patches/patches.vtb")),
        sha(&w.p("m/w.vtb")),
        sha(&w.p("f/histograms.vtb")),
        sha(&w.p("m.pgm")),
    ];
    eprintln!("fixture hashes: {got:?}");
    assert_eq!(got, [PATCHES_SHA, W_SHA, HIST_SHA, MOSAIC_SHA]);
}
