//! CLI behavior tests at toy scale: flag surface, error paths, determinism
//! of artifacts, and the stable stdout format.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lcad_core::checkpoint::Model;
use lcad_core::train::init_dictionary;

const BIN: &str = env!("CARGO_BIN_EXE_lcad");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn lcad")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "lcad {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_err(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "lcad {:?} unexpectedly succeeded", args);
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Tiny corpus + manifest in `dir`, returning the manifest path.
fn tiny_corpus(dir: &Path) -> PathBuf {
    let corpus = dir.join("corpus");
    run_ok(&["synth", "--out", &s(&corpus), "--count", "5", "--seed", "3", "--size", "32x32"]);
    corpus.join("manifest.txt")
}

fn tiny_train(dir: &Path, epochs: &str) -> PathBuf {
    let manifest = tiny_corpus(dir);
    let ckpt = dir.join("sc.lcad");
    run_ok(&[
        "train-sc", "--manifest", &s(&manifest), "--epochs", epochs, "--k", "8", "--seed", "11",
        "--out", &s(&ckpt),
    ]);
    ckpt
}

#[test]
fn help_lists_every_flag_with_defaults() {
    for sub in [
        vec!["synth"],
        vec!["train-sc"],
        vec!["train-ae"],
        vec!["encode"],
        vec!["analyze"],
        vec!["render", "montage"],
        vec!["render", "overlay"],
        vec!["render", "coeffs"],
        vec!["render", "hist"],
    ] {
        let mut args = sub.clone();
        args.push("--help");
        let text = run_ok(&args);
        assert!(text.contains("--help"), "{sub:?} help missing --help");
        assert!(text.contains("[default:"), "{sub:?} help shows no defaults:\n{text}");
    }
    // Spot-check a few flags and their defaults.
    let t = run_ok(&["train-sc", "--help"]);
    for needle in ["--lambda", "--patch", "--stride", "--lr", "--seed", "--batch", "--threads", "[default: 0.5]", "[default: 8]"] {
        assert!(t.contains(needle), "train-sc help missing {needle}:\n{t}");
    }
    let e = run_ok(&["encode", "--help"]);
    for needle in ["--ckpt", "--image", "--out-acts", "--trace", "--solver", "[default: 600]"] {
        assert!(e.contains(needle), "encode help missing {needle}:\n{e}");
    }
}

#[test]
fn synth_writes_count_pngs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    run_ok(&["synth", "--out", &s(&corpus), "--count", "10", "--seed", "1", "--size", "32x32"]);
    let pngs = std::fs::read_dir(&corpus)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 10);
    let manifest = std::fs::read_to_string(corpus.join("manifest.txt")).unwrap();
    assert!(manifest.contains("size:32x32"));
    assert_eq!(manifest.lines().filter(|l| l.starts_with("file:")).count(), 10);
}

#[test]
fn synth_is_bit_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["synth", "--out", &s(out), "--count", "3", "--seed", "9", "--size", "32x32"]);
    }
    for name in ["img_0000.png", "img_0002.png", "manifest.txt"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn zero_epoch_training_checkpoints_the_seeded_init() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_train(dir.path(), "0");
    let Model::SparseCoding(dict) = Model::load(&ckpt).unwrap() else {
        panic!("wrong kind")
    };
    let init: lcad_core::tensor::Dictionary<f64> = init_dictionary(11, 8, 8, 3, 4);
    assert_eq!(dict.elements_flat(), init.elements_flat());
}

#[test]
fn identical_flags_give_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_corpus(dir.path());
    let mut bytes = Vec::new();
    for name in ["a.lcad", "b.lcad"] {
        let ckpt = dir.path().join(name);
        run_ok(&[
            "train-sc", "--manifest", &s(&manifest), "--epochs", "2", "--k", "8", "--seed", "4",
            "--out", &s(&ckpt),
        ]);
        bytes.push(std::fs::read(&ckpt).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn stdout_epoch_lines_use_the_stable_format() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_corpus(dir.path());
    let ckpt = dir.path().join("sc.lcad");
    let stdout = run_ok(&[
        "train-sc", "--manifest", &s(&manifest), "--epochs", "2", "--k", "8", "--seed", "5",
        "--out", &s(&ckpt),
    ]);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("epoch=")).collect();
    assert_eq!(lines.len(), 2);
    assert!(
        lines[0].starts_with("epoch=1, mse=") && lines[0].contains(", energy=") && lines[0].contains(", active="),
        "unexpected stats line {:?}",
        lines[0]
    );
}

#[test]
fn encode_solver_mismatch_and_trace_rules() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_train(dir.path(), "1");
    let image = dir.path().join("corpus").join("img_0000.png");
    let acts = dir.path().join("acts.lcad");

    let err = run_err(&[
        "encode", "--ckpt", &s(&ckpt), "--image", &s(&image), "--solver", "ae",
        "--size", "32x32", "--out-acts", &s(&acts),
    ]);
    assert!(err.contains("does not match checkpoint kind"), "stderr: {err}");

    // An autoencoder checkpoint cannot emit an energy trace.
    let manifest = dir.path().join("corpus").join("manifest.txt");
    let ae_ckpt = dir.path().join("ae.lcad");
    run_ok(&[
        "train-ae", "--manifest", &s(&manifest), "--epochs", "1", "--k", "8", "--seed", "2",
        "--out", &s(&ae_ckpt),
    ]);
    let err = run_err(&[
        "encode", "--ckpt", &s(&ae_ckpt), "--image", &s(&image), "--size", "32x32",
        "--out-acts", &s(&acts), "--trace", &s(&dir.path().join("t.csv")),
    ]);
    assert!(err.contains("trace requires a sparse-coding checkpoint"), "stderr: {err}");

    // Matching the solver explicitly works.
    run_ok(&[
        "encode", "--ckpt", &s(&ae_ckpt), "--image", &s(&image), "--solver", "ae",
        "--size", "32x32", "--out-acts", &s(&acts),
    ]);
    assert!(acts.exists());
}

#[test]
fn analyze_rejects_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_train(dir.path(), "1");
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "# nothing here\nsize:32x32\n").unwrap();
    let err = run_err(&[
        "analyze", "--ckpt", &s(&ckpt), "--manifest", &s(&empty),
        "--report", &s(&dir.path().join("r.csv")),
    ]);
    assert!(err.contains("no entries"), "stderr: {err}");
}

#[test]
fn config_file_overlay_applies_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.conf");
    std::fs::write(&cfg, "count = 4\nsize = 32x32\n").unwrap();
    let out_dir = dir.path().join("c");
    run_ok(&["synth", "--out", &s(&out_dir), "--seed", "1", "--config", &s(&cfg)]);
    let pngs = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 4, "config count was not applied");

    // Explicit flags beat the config file.
    let out2 = dir.path().join("c2");
    run_ok(&["synth", "--out", &s(&out2), "--seed", "1", "--count", "2", "--config", &s(&cfg)]);
    let pngs2 = std::fs::read_dir(&out2)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs2, 2);

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "not_a_real_flag = 5\n").unwrap();
    let err = run_err(&["synth", "--out", &s(&dir.path().join("c3")), "--config", &s(&bad)]);
    assert!(err.contains("not_a_real_flag"), "stderr: {err}");
}

#[test]
fn render_commands_validate_inputs_and_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_train(dir.path(), "1");
    let image = dir.path().join("corpus").join("img_0001.png");
    let manifest = dir.path().join("corpus").join("manifest.txt");

    // Montage for the single-bank model; decoder is an error.
    let montage = dir.path().join("m.png");
    run_ok(&["render", "montage", "--ckpt", &s(&ckpt), "--out", &s(&montage)]);
    assert!(montage.exists());
    let err = run_err(&["render", "montage", "--ckpt", &s(&ckpt), "--bank", "decoder", "--out", &s(&montage)]);
    assert!(err.contains("single bank"), "stderr: {err}");

    // Encode, then overlay and coefficient charts from the activations file.
    let acts = dir.path().join("acts.lcad");
    run_ok(&[
        "encode", "--ckpt", &s(&ckpt), "--image", &s(&image), "--size", "32x32",
        "--out-acts", &s(&acts),
    ]);
    let overlay = dir.path().join("o.png");
    run_ok(&[
        "render", "overlay", "--image", &s(&image), "--acts", &s(&acts), "--element", "2",
        "--out", &s(&overlay),
    ]);
    assert!(overlay.exists());
    let err = run_err(&[
        "render", "overlay", "--image", &s(&image), "--acts", &s(&acts), "--element", "99",
        "--out", &s(&overlay),
    ]);
    assert!(err.contains("out of range"), "stderr: {err}");

    let coeffs = dir.path().join("c.png");
    run_ok(&["render", "coeffs", "--acts", &s(&acts), "--row", "0", "--col", "0", "--out", &s(&coeffs), "--omit-zeros"]);
    assert!(coeffs.exists());
    let err = run_err(&["render", "coeffs", "--acts", &s(&acts), "--row", "64", "--col", "0", "--out", &s(&coeffs)]);
    assert!(err.contains("outside"), "stderr: {err}");

    // Analyze, then histogram both report fields.
    let report = dir.path().join("r.csv");
    run_ok(&["analyze", "--ckpt", &s(&ckpt), "--manifest", &s(&manifest), "--report", &s(&report)]);
    let hist = dir.path().join("h.png");
    run_ok(&["render", "hist", "--report", &s(&report), "--field", "usage", "--bins", "8", "--out", &s(&hist)]);
    assert!(hist.exists());
    let bins_csv = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let total: usize = bins_csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 8, "usage histogram should count K=8 elements");
    run_ok(&["render", "hist", "--report", &s(&report), "--field", "percent-active", "--bins", "4", "--out", &s(&hist)]);
}

#[test]
fn montage_differs_between_init_and_trained_dictionaries() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_corpus(dir.path());
    let (init_ckpt, trained_ckpt) = (dir.path().join("i.lcad"), dir.path().join("t.lcad"));
    run_ok(&["train-sc", "--manifest", &s(&manifest), "--epochs", "0", "--k", "8", "--seed", "11", "--out", &s(&init_ckpt)]);
    run_ok(&["train-sc", "--manifest", &s(&manifest), "--epochs", "2", "--k", "8", "--seed", "11", "--out", &s(&trained_ckpt)]);
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    run_ok(&["render", "montage", "--ckpt", &s(&init_ckpt), "--out", &s(&a)]);
    run_ok(&["render", "montage", "--ckpt", &s(&trained_ckpt), "--out", &s(&b)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
