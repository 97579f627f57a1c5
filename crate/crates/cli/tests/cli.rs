use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smsb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smsb"))
        .args(args)
        .current_dir(dir)
        .env_remove("SMSB_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = smsb(dir, args);
    assert!(
        out.status.success(),
        "smsb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32, tag: &str) {
    let out = smsb(dir, args);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "smsb {args:?}: {err}");
    assert!(err.starts_with(&format!("error[{tag}]: ")), "smsb {args:?}: {err}");
}

fn presets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

#[test]
fn help_lists_every_flag_and_command() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(dir.path(), &["--help"]);
    for flag in [
        "--config",
        "--preset",
        "--seed",
        "--repeats",
        "--threads",
        "--mu-dict",
        "--mu-code",
        "--mask-mode",
        "--out",
        "--dump-config",
        "SMSB_THREADS",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
    for cmd in ["fit", "encode", "train-svm", "classify", "evaluate", "map", "synth", "bench"] {
        assert!(help.contains(cmd), "missing {cmd}");
        let sub = ok(dir.path(), &[cmd, "--help"]);
        assert!(sub.contains("--out") && sub.contains("--seed"));
    }
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = ok(
        dir.path(),
        &["--preset", "salinas", "--seed", "9", "--mu-dict", "0.25", "--mu-code", "relative:0.2", "--mask-mode", "threshold:0.001", "--dump-config"],
    );
    assert!(first.contains("seed = 9") && first.contains("threshold:0.001"));
    std::fs::write(dir.path().join("run.toml"), &first).unwrap();
    let second = ok(dir.path(), &["--config", "run.toml", "--dump-config"]);
    assert_eq!(first, second);
}

#[test]
fn shipped_presets_match_builtin_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut names: Vec<_> = std::fs::read_dir(presets_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for path in names {
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let from_file = ok(dir.path(), &["--config", path.to_str().unwrap(), "--dump-config"]);
        let builtin = ok(dir.path(), &["--preset", &name, "--dump-config"]);
        assert_eq!(from_file, builtin, "{name}");
    }
    let ip = ok(dir.path(), &["--preset", "indian-pines", "--dump-config"]);
    for line in ["group_size = 12", "block_count = 10", "atoms = 28", "mask_mode = \"top_n:8\"", "repeats = 10"] {
        assert!(ip.contains(line), "{line}");
    }
}

#[test]
fn flags_override_file_and_env_sets_threads() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), "seed = 3\nthreads = 2\n").unwrap();
    let out = ok(dir.path(), &["--config", "a.toml", "--seed", "5", "--dump-config"]);
    assert!(out.contains("seed = 5") && out.contains("threads = 2"));

    let env = Command::new(env!("CARGO_BIN_EXE_smsb"))
        .args(["--dump-config"])
        .env("SMSB_THREADS", "1")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&env.stdout).contains("threads = 1"));
}

#[test]
fn synthetic_pipeline_is_perfect_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--classes", "3", "--seed", "7", "--out", "s"]);
    let cfg = "s/synth.toml";
    let fit = ok(dir, &["--config", cfg, "fit"]);
    assert!(fit.contains("active blocks [1, 3]"), "{fit}");
    ok(dir, &["--config", cfg, "fit", "--out", "again.model"]);
    assert_eq!(
        std::fs::read(dir.join("s/synth.model")).unwrap(),
        std::fs::read(dir.join("again.model")).unwrap()
    );

    ok(dir, &["--config", cfg, "encode"]);
    ok(dir, &["--config", cfg, "train-svm"]);
    let classify = ok(dir, &["--config", cfg, "classify", "--out", "pred.labels"]);
    assert!(classify.contains("OA 100.00%"), "{classify}");
    ok(dir, &["--config", cfg, "classify", "--out", "pred2.labels"]);
    assert_eq!(
        std::fs::read(dir.join("pred.labels")).unwrap(),
        std::fs::read(dir.join("pred2.labels")).unwrap()
    );

    ok(dir, &["map", "--labels", "pred.labels", "--truth", "s/synth.labels", "--out", "map.ppm"]);
    let ppm = std::fs::read(dir.join("map.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n24 16\n255\n"));
    assert_eq!(ppm.len(), "P6\n24 16\n255\n".len() + 24 * 16 * 3);

    let eval = ok(dir, &["--config", cfg, "--repeats", "2", "evaluate", "--out", "report.tsv"]);
    assert!(eval.contains("runs: 2"), "{eval}");
    assert!(eval.contains("OA (%): 100.00 ± 0.00"), "{eval}");
    assert!(eval.contains("kappa: 1.0000 ± 0.0000"), "{eval}");
    let tsv = std::fs::read_to_string(dir.join("report.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 3);
}

#[test]
fn bench_prints_stage_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--threads", "1", "bench", "--classes", "3"]);
    for row in ["fit", "encode", "cross_validation", "train", "predict", "total", "OA (%)", "smsb", "svm-raw"] {
        assert!(out.contains(row), "{row} missing in {out}");
    }
}

#[test]
fn exit_codes_follow_error_families() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.toml"), "[dictionary]\natom = 3\n").unwrap();
    fails(dir, &["--config", "bad.toml", "--dump-config"], 2, "config.invalid");
    fails(dir, &["--preset", "houston", "--dump-config"], 2, "config.invalid");
    fails(dir, &["--mask-mode", "top_n:0", "--dump-config"], 2, "config.invalid");
    fails(dir, &["fit"], 2, "config.invalid");
    fails(dir, &["fit", "--cube", "missing.cube"], 3, "io.os");

    ok(dir, &["synth", "--classes", "3", "--out", "s"]);
    let cube = std::fs::read(dir.join("s/synth.cube")).unwrap();
    std::fs::write(dir.join("cut.cube"), &cube[..cube.len() - 1]).unwrap();
    fails(dir, &["fit", "--cube", "cut.cube"], 3, "io.truncated");

    let cfg = "s/synth.toml";
    ok(dir, &["--config", cfg, "fit"]);
    fails(dir, &["--config", cfg, "classify"], 7, "pipeline.model_mismatch");
    ok(dir, &["encode", "--cube", "s/synth.cube", "--model", "s/synth.model", "--out", "nolabels.feat"]);
    fails(
        dir,
        &["train-svm", "--features", "nolabels.feat", "--model", "s/synth.model"],
        6,
        "svm.degenerate_labels",
    );
}
