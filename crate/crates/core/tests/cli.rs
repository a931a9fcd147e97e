use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pinn2d::cli::RunConfig;
use pinn2d::{Activation, Mlp, NetConfig};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pinn2d"));
    cmd.env_remove("PINN_SEED");
    cmd
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn small_config(dir: &Path, problem: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{problem}.cfg"));
    fs::write(
        &path,
        format!(
            "PROBLEM = \"{problem}\"\nEPOCHS = 5\nLAYERS = 2\nNEURONS_PER_LAYER = 6\nN_POINTS = 4\nN_POINTS_PLOT = 10\nOUTPUT_DIR = \"{}\"\n{extra}",
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn shipped_configs_match_defaults() {
    for (file, problem) in [
        ("heat.cfg", "heat"),
        ("wave.cfg", "wave"),
        ("thermal.cfg", "thermal_inversion"),
        ("tumor.cfg", "tumor"),
    ] {
        let parsed = RunConfig::load(&example(file)).unwrap();
        let defaults = RunConfig {
            output_dir: parsed.output_dir.clone(),
            ..RunConfig::defaults(problem).unwrap()
        };
        assert_eq!(parsed, defaults, "{file}");
    }
}

#[test]
fn help_and_bad_usage() {
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
    assert_eq!(code(&bin().arg("bogus").output().unwrap()), 1);
    assert_eq!(code(&bin().args(["train"]).output().unwrap()), 1);
}

#[test]
fn unknown_problem_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("foo.cfg");
    fs::write(&cfg, "PROBLEM = \"foo\"\n").unwrap();
    let out = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PROBLEM"));
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "tumor", "");
    let out_dir = dir.path().join("elsewhere");
    let out = bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("epoch,total,residual,initial,boundary\n1,"));
    let summary = fs::read_to_string(out_dir.join("summary.toml")).unwrap();
    assert!(summary.contains("epochs_run = 5"));
    assert!(summary.contains("wall_time_seconds"));
    let net = Mlp::load(&out_dir.join("checkpoint.bin")).unwrap();
    assert_eq!(net.sizes(), &[3, 6, 6, 1]);
}

#[test]
fn seed_environment_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "heat", "");
    let run = |seed: Option<&str>, sub: &str| {
        let mut cmd = bin();
        if let Some(s) = seed {
            cmd.env("PINN_SEED", s);
        }
        let out_dir = dir.path().join(sub);
        let out = cmd.args(["train", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        assert_eq!(code(&out), 0);
        fs::read(out_dir.join("checkpoint.bin")).unwrap()
    };
    let base = run(None, "a");
    assert_eq!(run(Some("0"), "b"), base);
    assert_ne!(run(Some("99"), "c"), base);
    let mut cmd = bin();
    let out = cmd
        .env("PINN_SEED", "not-a-number")
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn evaluate_zero_network_heat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "heat", "");
    let config = RunConfig::load(&cfg).unwrap();
    let sizes = config.net_config().layer_sizes();
    let n = pinn2d::network::parameter_count(&sizes);
    let zero = Mlp::from_parts(sizes, Activation::Tanh, vec![0.0; n], 0).unwrap();
    let ckpt = dir.path().join("zero.bin");
    zero.save(&ckpt).unwrap();
    let out = bin().args(["evaluate", "--checkpoint"]).arg(&ckpt).arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: toml::Table = fs::read_to_string(dir.path().join("out/evaluation.toml")).unwrap().parse().unwrap();
    let per_time = report["per_time"].as_array().unwrap();
    assert_eq!(per_time[0]["t"].as_float(), Some(0.0));
    assert_eq!(per_time[0]["rel_l2"].as_float(), Some(1.0));
}

#[test]
fn evaluate_without_exact_reports_losses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "wave", "");
    let ckpt = dir.path().join("w.bin");
    let config = RunConfig::load(&cfg).unwrap();
    Mlp::init(&config.net_config()).unwrap().save(&ckpt).unwrap();
    let out = bin().args(["evaluate", "--checkpoint"]).arg(&ckpt).arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: toml::Table = fs::read_to_string(dir.path().join("out/evaluation.toml")).unwrap().parse().unwrap();
    let losses = report["losses"].as_table().unwrap();
    for key in ["total", "residual", "initial", "boundary"] {
        assert!(losses[key].as_float().unwrap().is_finite());
    }
}

#[test]
fn shape_mismatch_and_missing_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "heat", "");
    let other = Mlp::init(&NetConfig {
        num_hidden: 3,
        dim_hidden: 6,
        activation: Activation::Tanh,
        seed: 0,
    })
    .unwrap();
    let ckpt = dir.path().join("other.bin");
    other.save(&ckpt).unwrap();
    let out = bin().args(["evaluate", "--checkpoint"]).arg(&ckpt).arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
    let out = bin()
        .args(["evaluate", "--checkpoint"])
        .arg(dir.path().join("missing.bin"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn snapshot_and_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "heat", "TOTAL_TIME = 0.5\n");
    let train_out = dir.path().join("trained");
    assert_eq!(code(&bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&train_out).output().unwrap()), 0);
    let ckpt = train_out.join("checkpoint.bin");

    let out = bin()
        .args(["snapshot", "--checkpoint"])
        .arg(&ckpt)
        .arg("--config")
        .arg(&cfg)
        .args(["--t", "0.25"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/snapshot_t0.25.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert!(csv.starts_with("x,y,u\n0,0,"));

    let frames = |dt: &str| {
        bin()
            .args(["frames", "--checkpoint"])
            .arg(&ckpt)
            .arg("--config")
            .arg(&cfg)
            .args(["--dt", dt])
            .output()
            .unwrap()
    };
    assert_eq!(code(&frames("0.01")), 0);
    let pngs = fs::read_dir(dir.path().join("out/frames"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 50);
    assert!(dir.path().join("out/frames/img_049.png").exists());
    assert!(dir.path().join("out/frames/img_049.csv").exists());
    assert_eq!(code(&frames("0")), 1);
    assert_eq!(code(&frames("-0.1")), 1);
}
