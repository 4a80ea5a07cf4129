//! Integration tests of the command-line surface: exit codes, file outputs
//! and the subject-independence guard.

use std::path::Path;
use std::process::{Command, Output};

use fuse2d::ingest::{
    write_recording, ChannelSpec, IntervalLabel, LabelInterval, Recording, SignalKind,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fuse2d"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// One subject with a single no-stress label covering a 60 s recording.
fn write_single_label_recording(dir: &Path) {
    let t = 60usize;
    let ppg: Vec<f64> = (0..t * 64).map(|i| (i as f64 * 0.11).sin()).collect();
    let eda: Vec<f64> = (0..t * 4).map(|i| 2.0 + (i as f64 * 0.05).cos()).collect();
    let acc: Vec<[f64; 3]> = (0..t * 32)
        .map(|i| [(i as f64 * 0.2).sin() * 0.1, 0.0, 1.0])
        .collect();
    let rec = Recording::new(
        "S01",
        ppg,
        eda,
        acc,
        vec![LabelInterval::new(0, 60, IntervalLabel::NoStress).unwrap()],
        [
            ChannelSpec::default_for(SignalKind::Ppg),
            ChannelSpec::default_for(SignalKind::Eda),
            ChannelSpec::default_for(SignalKind::Acc),
        ],
    )
    .unwrap();
    write_recording(&dir.join("S01"), &rec).unwrap();
}

#[test]
fn synth_writes_subject_dirs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    for out in ["a", "b"] {
        let r = run(
            &["synth", "--subjects", "4", "--seconds", "10", "--seed", "7", "--out", out],
            cwd,
        );
        assert_ok(&r);
    }
    let subjects: Vec<String> = (1..=4).map(|i| format!("S{i:02}")).collect();
    assert!(subjects.iter().all(|s| cwd.join("a").join(s).is_dir()));
    for s in &subjects {
        for f in ["subject.json", "ppg.csv", "eda.csv", "acc.csv", "labels.csv"] {
            let a = std::fs::read(cwd.join("a").join(s).join(f)).unwrap();
            let b = std::fs::read(cwd.join("b").join(s).join(f)).unwrap();
            assert_eq!(a, b, "{s}/{f}");
        }
    }
}

#[test]
fn synth_rejects_zero_subjects_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(
        &["synth", "--subjects", "0", "--seed", "1", "--out", "x"],
        tmp.path(),
    );
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let r = bin()
        .args(["synth", "--subjects", "1", "--seconds", "5", "--out", "envseed"])
        .env("FUSE2D_SEED", "9")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_ok(&r);

    let missing = run(
        &["synth", "--subjects", "1", "--seconds", "5", "--out", "noseed"],
        tmp.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn images_all_arrangements_count_matches_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    write_single_label_recording(&cwd.join("data"));

    let r = run(
        &["images", "--data", "data", "--out", "imgs", "--arrangement", "all"],
        cwd,
    );
    assert_ok(&r);

    // 56 windows x 3! arrangements.
    let pngs: Vec<_> = std::fs::read_dir(cwd.join("imgs"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .collect();
    assert_eq!(pngs.len(), 336);
    let manifest = std::fs::read_to_string(cwd.join("imgs/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count() - 1, 336);
}

#[test]
fn images_named_selector_and_schemes() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    write_single_label_recording(&cwd.join("data"));

    let r = run(
        &["images", "--data", "data", "--out", "three", "--arrangement", "PEA,EPA,EAP"],
        cwd,
    );
    assert_ok(&r);
    let manifest = std::fs::read_to_string(cwd.join("three/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count() - 1, 56 * 3);

    for scheme in ["gray", "custom"] {
        let r = run(
            &[
                "images", "--data", "data", "--out", scheme, "--arrangement", "PEA",
                "--scheme", scheme,
            ],
            cwd,
        );
        assert_ok(&r);
    }
    let gray = std::fs::read(cwd.join("gray/S01_0_PEA_gray.png")).unwrap();
    let custom = std::fs::read(cwd.join("custom/S01_0_PEA_custom.png")).unwrap();
    assert_ne!(gray, custom);

    // Gray pixels satisfy R = G = B.
    let img = image::open(cwd.join("gray/S01_0_PEA_gray.png")).unwrap().to_rgb8();
    assert!(img.pixels().all(|p| p[0] == p[1] && p[1] == p[2]));
}

#[test]
fn images_with_workers_matches_single_worker() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    write_single_label_recording(&cwd.join("data"));
    for (out, workers) in [("w1", "1"), ("w2", "2")] {
        let r = run(
            &[
                "images", "--data", "data", "--out", out, "--arrangement", "PEA,EAP",
                "--workers", workers,
            ],
            cwd,
        );
        assert_ok(&r);
    }
    let m1 = std::fs::read(cwd.join("w1/manifest.csv")).unwrap();
    let m2 = std::fs::read(cwd.join("w2/manifest.csv")).unwrap();
    assert_eq!(m1, m2);
    let a = std::fs::read(cwd.join("w1/S01_17_EAP_custom.png")).unwrap();
    let b = std::fs::read(cwd.join("w2/S01_17_EAP_custom.png")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn train_missing_manifest_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(
        &["train", "--stage1", "ghost_dir", "--seed", "1", "--profile", "tiny"],
        tmp.path(),
    );
    assert_eq!(r.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("ghost_dir"), "{stderr}");
    assert!(stderr.contains("manifest.csv"), "{stderr}");
}

#[test]
fn train_single_class_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    write_single_label_recording(&cwd.join("data")); // only nostress labels
    assert_ok(&run(
        &["images", "--data", "data", "--out", "imgs", "--arrangement", "PEA"],
        cwd,
    ));
    let r = run(
        &["train", "--stage1", "imgs", "--seed", "1", "--profile", "tiny"],
        cwd,
    );
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("single class"));
}

#[test]
fn train_divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    assert_ok(&run(
        &["synth", "--subjects", "2", "--seconds", "8", "--seed", "3", "--out", "data"],
        cwd,
    ));
    assert_ok(&run(
        &["images", "--data", "data", "--out", "imgs", "--arrangement", "PEA"],
        cwd,
    ));
    let r = run(
        &[
            "train", "--stage1", "imgs", "--seed", "1", "--profile", "tiny",
            "--learning-rate", "1e30", "--epochs", "6", "--no-val",
        ],
        cwd,
    );
    assert_eq!(
        r.status.code(),
        Some(4),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
}

#[test]
fn eval_guard_blocks_leaks_and_allow_leak_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    assert_ok(&run(
        &["synth", "--subjects", "3", "--seconds", "15", "--seed", "5", "--out", "data"],
        cwd,
    ));
    assert_ok(&run(
        &[
            "images", "--data", "data", "--subjects", "S01,S02", "--out", "train_imgs",
            "--arrangement", "EAP",
        ],
        cwd,
    ));
    assert_ok(&run(
        &[
            "images", "--data", "data", "--subjects", "S03", "--out", "test_imgs",
            "--arrangement", "EAP",
        ],
        cwd,
    ));
    assert_ok(&run(
        &[
            "train", "--stage1", "train_imgs", "--seed", "1", "--profile", "tiny",
            "--epochs", "8", "--out", "model.f2dm",
        ],
        cwd,
    ));

    // Clean evaluation on the held-out subject.
    let ok = run(
        &["eval", "--model", "model.f2dm", "--data", "test_imgs", "--out", "report.json"],
        cwd,
    );
    assert_ok(&ok);
    let report = fuse2d::metrics::read_report(&cwd.join("report.json")).unwrap();
    assert!((0.0..=1.0).contains(&report.auc));
    assert!((0.0..=1.0).contains(&report.accuracy));

    // Evaluating on training subjects trips the guard.
    let leak = run(
        &["eval", "--model", "model.f2dm", "--data", "train_imgs", "--out", "leak.json"],
        cwd,
    );
    assert_eq!(leak.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&leak.stderr).contains("leak"));

    let allowed = run(
        &[
            "eval", "--model", "model.f2dm", "--data", "train_imgs", "--out", "leak.json",
            "--allow-leak",
        ],
        cwd,
    );
    assert_ok(&allowed);
    // Overfit sanity: training accuracy on the train images is high.
    let leak_report = fuse2d::metrics::read_report(&cwd.join("leak.json")).unwrap();
    assert!(leak_report.accuracy > 0.9, "{}", leak_report.accuracy);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    std::fs::write(
        cwd.join("cfg.json"),
        r#"{"seed": 11, "subjects": 2, "seconds": 6}"#,
    )
    .unwrap();
    // Config alone.
    assert_ok(&run(
        &["--config", "cfg.json", "synth", "--out", "from_config"],
        cwd,
    ));
    assert!(cwd.join("from_config/S02").is_dir());
    assert!(!cwd.join("from_config/S03").exists());

    // Flag overrides the config value.
    assert_ok(&run(
        &["--config", "cfg.json", "synth", "--subjects", "3", "--out", "flagged"],
        cwd,
    ));
    assert!(cwd.join("flagged/S03").is_dir());

    // Unknown config keys are a usage error.
    std::fs::write(cwd.join("bad.json"), r#"{"sede": 1}"#).unwrap();
    let r = run(&["--config", "bad.json", "synth", "--out", "x"], cwd);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn images_empty_window_set_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    // Every interval is ignored, so every window is dropped.
    let t = 20usize;
    let rec = Recording::new(
        "S01",
        vec![0.5; t * 64],
        vec![0.5; t * 4],
        vec![[0.0, 0.0, 1.0]; t * 32],
        vec![LabelInterval::new(0, 20, IntervalLabel::Ignore).unwrap()],
        [
            ChannelSpec::default_for(SignalKind::Ppg),
            ChannelSpec::default_for(SignalKind::Eda),
            ChannelSpec::default_for(SignalKind::Acc),
        ],
    )
    .unwrap();
    write_recording(&cwd.join("data/S01"), &rec).unwrap();
    let r = run(&["images", "--data", "data", "--out", "imgs"], cwd);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("dropped"));
}

#[test]
fn images_can_dump_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    write_single_label_recording(&cwd.join("data"));
    assert_ok(&run(
        &[
            "images", "--data", "data", "--out", "imgs", "--arrangement", "PEA",
            "--dump-matrices",
        ],
        cwd,
    ));
    let csv = std::fs::read_to_string(cwd.join("imgs/S01_0_PEA.csv")).unwrap();
    assert_eq!(csv.lines().count(), 32);
    assert!(csv.lines().all(|l| l.split(',').count() == 32));
}

#[test]
fn train_two_stage_freezes_and_persists_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    assert_ok(&run(
        &["synth", "--subjects", "2", "--seconds", "10", "--seed", "2", "--out", "data"],
        cwd,
    ));
    for arr in ["EAP", "PEA", "EPA"] {
        assert_ok(&run(
            &[
                "images", "--data", "data", "--out", &arr.to_lowercase(), "--arrangement", arr,
            ],
            cwd,
        ));
    }
    assert_ok(&run(
        &[
            "train", "--stage1", "eap", "--stage2", "pea,epa", "--seed", "1",
            "--profile", "tiny", "--epochs", "3", "--out", "two.f2dm",
        ],
        cwd,
    ));
    let model = fuse2d::cnn::load_model(&cwd.join("two.f2dm")).unwrap();
    let frozen: Vec<bool> = model.layers().iter().map(|l| l.frozen()).collect();
    assert_eq!(
        frozen,
        vec![true, true, true, true, true, true, true, false, false, false]
    );

    // The history names both stages.
    let history = std::fs::read_to_string(cwd.join("two.f2dm.history.csv")).unwrap();
    assert!(history.lines().any(|l| l.split(',').nth(1) == Some("2")));
}

#[test]
fn gradcheck_command_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(&["gradcheck", "--seed", "1"], tmp.path());
    assert_ok(&r);
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("max relative error"), "{stdout}");
    assert!(stdout.contains("gradient check passed"), "{stdout}");
}
