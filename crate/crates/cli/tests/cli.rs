use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_absparse"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs");
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn corpus(dir: &Path) {
    // four worlds per statement so every group is tied-reward eligible
    let mut text = String::new();
    for (i, p) in ["Exist ALL_ITEMS", "Exist Filter ALL_ITEMS lambda IsBlue x"]
        .iter()
        .enumerate()
    {
        let f = format!("w{i}.jsonl");
        ok(
            dir,
            &[
                "--seed",
                &i.to_string(),
                "sample-world",
                "--n",
                "4",
                "--program",
                p,
                "--out",
                &f,
            ],
        );
        text.push_str(&std::fs::read_to_string(dir.join(&f)).unwrap());
    }
    std::fs::write(dir.join("train.jsonl"), text).unwrap();
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);

    ok(
        d,
        &["ingest", "--corpus", "train.jsonl", "--out", "canon.jsonl"],
    );
    assert_eq!(
        std::fs::read_to_string(d.join("canon.jsonl"))
            .unwrap()
            .lines()
            .count(),
        8
    );

    let cov = ok(d, &["coverage", "--corpus", "train.jsonl"]);
    assert!(cov.contains("utterances\t2"), "{cov}");

    let rule = ok(
        d,
        &[
            "rule-parse",
            "--corpus",
            "train.jsonl",
            "--train",
            "train.jsonl",
        ],
    );
    assert!(rule.contains("groups\t2"), "{rule}");

    ok(
        d,
        &[
            "augment",
            "--n",
            "60",
            "--out",
            "gen.jsonl",
            "--valid-out",
            "val.jsonl",
        ],
    );
    ok(
        d,
        &[
            "train-sup",
            "--corpus",
            "train.jsonl",
            "--generated",
            "gen.jsonl",
            "--valid",
            "val.jsonl",
            "--epochs",
            "1",
            "--out",
            "sup.ckpt",
            "--log",
            "sup.log",
        ],
    );
    assert!(std::fs::read_to_string(d.join("sup.log"))
        .unwrap()
        .contains("epoch=1"));

    ok(
        d,
        &[
            "--deterministic",
            "train-weak",
            "--corpus",
            "train.jsonl",
            "--init",
            "sup.ckpt",
            "--epochs",
            "1",
            "--cache",
            "cache.txt",
            "--out",
            "weak.ckpt",
        ],
    );
    let dump = ok(d, &["cache-dump", "--cache", "cache.txt"]);
    let saved = std::fs::read_to_string(d.join("cache.txt")).unwrap();
    assert!(saved.starts_with("absparse-cache 1"));
    let keys: Vec<&str> = saved
        .lines()
        .filter_map(|l| l.strip_prefix("utterance\t"))
        .collect();
    let listed: Vec<&str> = dump.lines().filter(|l| !l.starts_with('\t')).collect();
    assert_eq!(keys, listed);

    ok(
        d,
        &[
            "train-rerank",
            "--corpus",
            "train.jsonl",
            "--model",
            "weak.ckpt",
            "--epochs",
            "1",
            "--out",
            "rr.ckpt",
        ],
    );
    let ev = ok(
        d,
        &[
            "eval",
            "--corpus",
            "train.jsonl",
            "--model",
            "weak.ckpt",
            "--rerank",
            "rr.ckpt",
            "--beam",
            "5",
            "--report",
            "report.json",
        ],
    );
    assert!(ev.contains("examples\t8"), "{ev}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdicts"].as_array().unwrap().len(), 2);

    let parsed = ok(
        d,
        &[
            "parse",
            "--model",
            "weak.ckpt",
            "--beam",
            "5",
            "--k",
            "3",
            "there is a blue item",
        ],
    );
    assert_eq!(parsed.lines().count(), 3, "{parsed}");
}

#[test]
fn deterministic_training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    ok(d, &["augment", "--n", "30", "--out", "gen.jsonl"]);
    for (out, workers) in [("a.ckpt", "1"), ("b.ckpt", "3")] {
        ok(
            d,
            &[
                "--workers",
                workers,
                "train-sup",
                "--corpus",
                "train.jsonl",
                "--generated",
                "gen.jsonl",
                "--epochs",
                "2",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(
        std::fs::read(d.join("a.ckpt")).unwrap(),
        std::fs::read(d.join("b.ckpt")).unwrap()
    );
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(
        !run(d, &["ingest", "--corpus", "missing.jsonl", "--out", "x"])
            .status
            .success()
    );
    std::fs::write(d.join("bad.jsonl"), "{not json\n").unwrap();
    assert!(!run(d, &["ingest", "--corpus", "bad.jsonl", "--out", "x"])
        .status
        .success());
    assert!(!run(d, &["sample-world", "--program", "Exist Exist"])
        .status
        .success());
    assert!(!run(d, &["cache-dump", "--cache", "bad.jsonl"])
        .status
        .success());
    assert!(!run(d, &["no-such-command"]).status.success());
}

#[test]
fn supervision_without_augmentation() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    // a sentence an annotation covers, frequent enough to survive <unk> replacement
    let text: String = std::fs::read_to_string(d.join("train.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["sentence"] = "There is a blue circle".into();
            format!("{v}\n")
        })
        .collect();
    std::fs::write(d.join("train.jsonl"), text).unwrap();
    let args = [
        "train-sup",
        "--corpus",
        "train.jsonl",
        "--epochs",
        "1",
        "--out",
        "s.ckpt",
    ];
    assert!(!run(d, &args).status.success(), "needs --generated");
    let mut with_flag = args.to_vec();
    with_flag.push("--no-augmentation");
    ok(d, &with_flag);
    std::fs::write(d.join("cfg.txt"), "version = 1\nno_augmentation = true\n").unwrap();
    let mut with_config = args.to_vec();
    with_config.extend(["--config", "cfg.txt"]);
    ok(d, &with_config);
}

#[test]
fn config_seed_applies_unless_overridden() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    ok(d, &["augment", "--n", "20", "--out", "gen.jsonl"]);
    std::fs::write(d.join("cfg.txt"), "version = 1\nseed = 5\nepochs = 1\n").unwrap();
    let base = [
        "train-sup",
        "--corpus",
        "train.jsonl",
        "--generated",
        "gen.jsonl",
        "--config",
        "cfg.txt",
    ];
    for (out, seed) in [
        ("cfg.ckpt", None),
        ("five.ckpt", Some("5")),
        ("six.ckpt", Some("6")),
    ] {
        let mut args = base.to_vec();
        args.extend(["--out", out]);
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        ok(d, &args);
    }
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("cfg.ckpt"), read("five.ckpt"));
    assert_ne!(read("cfg.ckpt"), read("six.ckpt"));
}
