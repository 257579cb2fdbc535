use std::path::Path;
use std::process::{Command, Output};

fn lfdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfdf"))
        .args(args)
        .env_remove("LFDF_DATA_ROOT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("run lfdf")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: [&str; 12] = [
    "--set",
    "network.angular=3",
    "--set",
    "network.channels=4",
    "--set",
    "network.adams=1",
    "--set",
    "network.imdbs=1",
    "--set",
    "train.patch_size=4",
    "--set",
    "train.stride=8",
];

fn generate(dir: &Path, n: usize) {
    let o = lfdf(&[
        "generate",
        "--out",
        dir.to_str().unwrap(),
        "--kd",
        "1",
        "--set",
        &format!("generate.random_scenes={n}"),
        "--set",
        "generate.angular=3",
        "--set",
        "generate.spatial=[16,16]",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn generate_train_eval_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, test, run, eval) = (
        tmp.path().join("train"),
        tmp.path().join("test"),
        tmp.path().join("run"),
        tmp.path().join("eval"),
    );
    generate(&train, 2);
    generate(&test, 1);
    let scenes = std::fs::read_dir(&train)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(scenes, 2);

    let mut args = vec![
        "train",
        "--epochs",
        "1",
        "--seed",
        "3",
        "--out",
        run.to_str().unwrap(),
    ];
    args.extend(TINY);
    let set_train = format!("data.train=\"{}\"", train.display());
    args.extend(["--set", &set_train]);
    let o = lfdf(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "ckpt_epoch_0.json",
        "ckpt_epoch_1.bin",
        "ckpt_epoch_1.json",
        "train_log.jsonl",
        "effective_config.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let eff: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("effective_config.json")).unwrap())
            .unwrap();
    assert_eq!(eff["train"]["seed"], 3);
    assert_eq!(eff["network"]["channels"], 4);

    let ckpt = run.join("ckpt_epoch_1.json");
    let set_test = format!("data.test=\"{}\"", test.display());
    let o = lfdf(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
        "--set",
        &set_test,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("psnr"));
    assert!(eval.join("report.json").exists() && eval.join("report.csv").exists());
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let o = lfdf(&["train", "--out", out, "--set", "train.nonsense=1"]);
    assert_eq!(code(&o), 3);
    let line = stderr(&o);
    assert!(
        line.contains("error kind=config code=3 message=\""),
        "{line}"
    );

    let o = lfdf(&["eval", "--out", out]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = lfdf(&["eval", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 3);

    let o = lfdf(&["train", "--alpha", "3", "--out", out]);
    assert_eq!(code(&o), 2);

    let ghost = tmp.path().join("missing.json");
    let o = lfdf(&[
        "eval",
        "--checkpoint",
        ghost.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_ne!(code(&o), 0);
}

#[test]
fn untrained_train_run_writes_initial_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("r");
    let mut args = vec!["train", "--epochs", "0", "--out", run.to_str().unwrap()];
    args.extend(TINY);
    let o = lfdf(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(run.join("ckpt_epoch_0.bin").exists());
}
