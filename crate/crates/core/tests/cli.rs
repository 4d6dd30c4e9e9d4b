//! Drives the `emoaug` binary end to end on tiny synthetic corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emoaugnet::audio_io::{AudioClip, save_wav};
use emoaugnet::datastore::read_cache;
use emoaugnet::features::FEATURE_DIM;

fn emoaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emoaug"))
        .args(args)
        .env_remove("EMOAUG_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Three 3.5 s tones at 16 kHz plus a manifest naming them.
fn corpus(dir: &Path) -> PathBuf {
    let labels = ["neutral", "happy", "angry"];
    let mut manifest = String::from("path,label,clip_id\n");
    for (i, label) in labels.iter().enumerate() {
        let freq = 220.0 * (i + 1) as f64;
        let samples = (0..56_000)
            .map(|n| 0.4 * (2.0 * std::f64::consts::PI * freq * n as f64 / 16_000.0).sin())
            .collect();
        let name = format!("tone{i}.wav");
        save_wav(&AudioClip::new(samples, 16_000), dir.join(&name)).unwrap();
        manifest.push_str(&format!("{name},{label},clip{i}\n"));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).unwrap();
    path
}

#[test]
fn augment_writes_ten_variants_per_clip_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = emoaug(&["--threads", "1", "augment", "--manifest", p(&manifest), "--out-dir", p(out), "--seed", "9"]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 30);
    assert!(names.contains(&"tone1__v7.wav".to_string()));
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn missing_audio_exits_3_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "path,label,clip_id\nnope.wav,sad,x\n").unwrap();
    let out = dir.path().join("out");
    let res = emoaug(&["augment", "--manifest", p(&manifest), "--out-dir", p(&out)]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("nope.wav"), "{}", stderr(&res));
}

#[test]
fn manifest_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "path,label,clip_id\na.wav,calm,x\n").unwrap();
    let cache = dir.path().join("c.eafv");
    let res = emoaug(&["extract", "--manifest", p(&manifest), "--cache", p(&cache)]);
    assert_eq!(code(&res), 2, "{}", stderr(&res));
    assert!(stderr(&res).contains("calm"));
}

#[test]
fn extract_counts_and_overwrite_guard() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let aug = dir.path().join("aug.eafv");
    let res = emoaug(&["extract", "--manifest", p(&manifest), "--cache", p(&aug), "--augment", "--seed", "1"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(stdout(&res).contains("wrote 30 records"));
    let records = read_cache(&aug).unwrap();
    assert_eq!(records.len(), 30);
    assert!(records.iter().all(|r| r.features.len() == FEATURE_DIM));
    for clip in 0..3 {
        let variants: Vec<u8> = records
            .iter()
            .filter(|r| r.clip_id == format!("clip{clip}"))
            .map(|r| r.variant)
            .collect();
        assert_eq!(variants, (0..10).collect::<Vec<u8>>());
    }

    let plain = dir.path().join("plain.eafv");
    let res = emoaug(&["extract", "--manifest", p(&manifest), "--cache", p(&plain), "--no-augment"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let records = read_cache(&plain).unwrap();
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r.variant == 0));

    let res = emoaug(&["extract", "--manifest", p(&manifest), "--cache", p(&plain), "--no-augment"]);
    assert_eq!(code(&res), 4);
    let res = emoaug(&["extract", "--manifest", p(&manifest), "--cache", p(&plain), "--no-augment", "--force"]);
    assert_eq!(code(&res), 0);
}

#[test]
fn in_dir_uses_ravdess_names() {
    let dir = tempfile::tempdir().unwrap();
    let actor = dir.path().join("Actor_01");
    fs::create_dir(&actor).unwrap();
    for code in ["02", "05"] {
        let samples = vec![0.1; 40_000];
        save_wav(&AudioClip::new(samples, 22_050), actor.join(format!("03-01-{code}-01-01-01-01.wav"))).unwrap();
    }
    let cache = dir.path().join("r.eafv");
    let res = emoaug(&["extract", "--in-dir", p(dir.path()), "--cache", p(&cache), "--no-augment"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let labels: Vec<&str> = read_cache(&cache).unwrap().iter().map(|r| r.label.name()).collect::<Vec<_>>();
    assert_eq!(labels, vec!["neutral", "angry"]);

    let dropped = dir.path().join("d.eafv");
    let res = emoaug(&["extract", "--in-dir", p(dir.path()), "--cache", p(&dropped), "--no-augment", "--calm", "drop"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(read_cache(&dropped).unwrap().len(), 1);
}

#[test]
fn train_eval_infer_round() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let cache = dir.path().join("toy.eafv");
    let res = emoaug(&["extract", "--manifest", p(&manifest), "--cache", p(&cache), "--no-augment"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let relu = dir.path().join("relu.eann");
    let elu = dir.path().join("elu.eann");
    for (ck, act) in [(&relu, "relu"), (&elu, "elu")] {
        let res = emoaug(&[
            "train",
            "--cache",
            p(&cache),
            "--checkpoint-out",
            p(ck),
            "--activation",
            act,
            "--max-epochs",
            "1",
        ]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        assert!(stdout(&res).contains("best val_acc"));
    }
    let history = fs::read_to_string(dir.path().join("relu.eann.history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc,lr");
    assert_eq!(lines.len(), 2);
    let (a, b) = (fs::read(&relu).unwrap(), fs::read(&elu).unwrap());
    assert_eq!(&a[..4], b"EANN");
    assert_eq!((a[6], b[6]), (0, 1));

    let reports = dir.path().join("reports");
    let res = emoaug(&["eval", "--cache", p(&cache), "--checkpoint", p(&relu), "--report-dir", p(&reports)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(stdout(&res).contains("wa="));
    let confusion = fs::read_to_string(reports.join("confusion.csv")).unwrap();
    assert!(confusion.starts_with(",neutral,happy,sad,angry,fear,disgust,surprise\n"));
    assert_eq!(confusion.lines().count(), 8);
    assert!(fs::read_to_string(reports.join("summary.txt")).unwrap().starts_with("wa="));

    let res = emoaug(&["infer", "--wav", p(&dir.path().join("tone0.wav")), "--checkpoint", p(&relu)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = stdout(&res);
    let probs: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with("prediction"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 7);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    assert!(text.contains("prediction: "));

    let mut corrupt = a.clone();
    corrupt[..4].copy_from_slice(b"NOPE");
    let bad = dir.path().join("bad.eann");
    fs::write(&bad, corrupt).unwrap();
    let res = emoaug(&["eval", "--cache", p(&cache), "--checkpoint", p(&bad), "--report-dir", p(&reports)]);
    assert_eq!(code(&res), 6);
    let res = emoaug(&["infer", "--wav", p(&dir.path().join("tone0.wav")), "--checkpoint", p(&bad)]);
    assert_eq!(code(&res), 6);
}

#[test]
fn divergence_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let cache = dir.path().join("toy.eafv");
    assert_eq!(code(&emoaug(&["extract", "--manifest", p(&manifest), "--cache", p(&cache), "--no-augment"])), 0);
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{"model": {"width": "reduced"}, "train": {"lr0": 1e30, "min_lr": 0.0, "batch_size": 1, "max_epochs": 5}}"#,
    )
    .unwrap();
    let ck = dir.path().join("x.eann");
    let res = emoaug(&["--config", p(&config), "train", "--cache", p(&cache), "--checkpoint-out", p(&ck)]);
    assert_eq!(code(&res), 5, "{}{}", stdout(&res), stderr(&res));
    assert!(stderr(&res).contains("epoch"));
    assert!(!ck.exists());
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&emoaug(&["extract", "--bogus"])), 2);
    assert_eq!(code(&emoaug(&["frobnicate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(&config, r#"{"augment": {"noise": 0.1}}"#).unwrap();
    let res = emoaug(&["--config", p(&config), "extract", "--manifest", "m.csv", "--cache", "c"]);
    assert_eq!(code(&res), 2);

    let help = emoaug(&["extract", "--help"]);
    assert_eq!(code(&help), 0);
    let text = stdout(&help);
    for flag in ["--manifest", "--in-dir", "--cache", "--augment", "--no-augment", "--seed", "--force", "--threads"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    let help = stdout(&emoaug(&["train", "--help"]));
    for flag in ["--cache", "--config", "--checkpoint-out", "--activation"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn seed_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let run = |out: &Path, flag: Option<&str>, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_emoaug"));
        cmd.args(["augment", "--manifest", p(&manifest), "--out-dir", p(out)]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        cmd.env_remove("EMOAUG_SEED");
        if let Some(s) = env {
            cmd.env("EMOAUG_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        fs::read(out.join("tone0__v1.wav")).unwrap()
    };
    let by_flag = run(&dir.path().join("f"), Some("42"), None);
    let by_env = run(&dir.path().join("e"), None, Some("42"));
    let other = run(&dir.path().join("o"), None, Some("43"));
    assert_eq!(by_flag, by_env);
    assert_ne!(by_flag, other);
}
