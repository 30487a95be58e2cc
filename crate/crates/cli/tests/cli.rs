use std::path::Path;
use std::process::{Command, Output};

fn ampgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ampgen(dir.path(), &["frobnicate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ampgen(dir.path(), &["--help"])), 0);
    for sub in [
        "encode",
        "decode",
        "cond",
        "negatives",
        "featurize",
        "train-clf",
        "predict",
        "eval-clf",
        "train-denoiser",
        "sample",
        "metrics",
    ] {
        let out = ampgen(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn randomized_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&ampgen(
            dir.path(),
            &["negatives", "--mode", "shuffled", "--output", "x.fa"]
        )),
        2
    );
    assert_eq!(
        code(&ampgen(
            dir.path(),
            &["cond", "--mode", "sc", "--output", "c.csv"]
        )),
        2
    );
    assert!(!dir.path().join("x.fa").exists());
    assert!(!dir.path().join("c.csv").exists());
}

#[test]
fn negatives_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.fa", "b.fa"] {
        let out = ampgen(
            dir.path(),
            &[
                "negatives",
                "--mode",
                "shuffled",
                "--seed",
                "7",
                "--output",
                name,
            ],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read_to_string(dir.path().join("a.fa")).unwrap();
    assert_eq!(a, std::fs::read_to_string(dir.path().join("b.fa")).unwrap());
    assert_eq!(a.lines().count(), 2000);
    assert!(a.starts_with(">syn|shuffled|seed=7|i=0\n"));
}

#[test]
fn runtime_errors_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.fa"), ">ok\nKLAK\n>broken\nKXK\n").unwrap();
    let out = ampgen(
        dir.path(),
        &[
            "train-clf",
            "--negatives",
            "synthetic-s=bad.fa",
            "--seed",
            "1",
            "--output",
            "model.json",
            "--log",
            "log.csv",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken"));
    let left: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(left, vec![std::ffi::OsString::from("bad.fa")]);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[train]\nmax_trees = 3\n").unwrap();
    let out = ampgen(
        dir.path(),
        &[
            "--config",
            "c.toml",
            "negatives",
            "--mode",
            "random",
            "--seed",
            "1",
            "--output",
            "n.fa",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_trees"));
    assert!(!dir.path().join("n.fa").exists());
}

#[test]
fn flags_override_config_and_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.toml"),
        "[train]\nmax_estimators = 5\nmax_depth = 2\n",
    )
    .unwrap();
    let run = |args: &[&str]| {
        let out = ampgen(d, args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&[
        "negatives",
        "--mode",
        "random",
        "--seed",
        "2",
        "--count",
        "200",
        "--output",
        "r.fa",
    ]);
    run(&[
        "--config",
        "c.toml",
        "train-clf",
        "--negatives",
        "synthetic-r=r.fa",
        "--seed",
        "3",
        "--max-estimators",
        "4",
        "--output",
        "m.json",
        "--report",
        "rep.json",
    ]);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rep.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["train"]["max_estimators"], 4);
    assert_eq!(rep["config"]["train"]["max_depth"], 2);
    assert_eq!(rep["config"]["train"]["seed"], 3);
    assert_eq!(rep["result"]["examples"]["synthetic-r"], 200);
}

#[test]
fn encode_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("in.fa"),
        ">a\nKLAKLAK\n>b\ngigkflhsakkfgkafvgeimns\n",
    )
    .unwrap();
    assert_eq!(
        code(&ampgen(
            d,
            &["encode", "--input", "in.fa", "--output", "e.json"]
        )),
        0
    );
    assert_eq!(
        code(&ampgen(
            d,
            &["decode", "--input", "e.json", "--output", "out.fa"]
        )),
        0
    );
    assert_eq!(
        std::fs::read_to_string(d.join("out.fa")).unwrap(),
        ">a\nKLAKLAK\n>b\nGIGKFLHSAKKFGKAFVGEIMNS\n"
    );
}

#[test]
fn empty_fasta_warns_and_yields_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.fa"), "").unwrap();
    let out = ampgen(
        d,
        &["featurize", "--input", "empty.fa", "--output", "f.csv"],
    );
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let text = std::fs::read_to_string(d.join("f.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
}
