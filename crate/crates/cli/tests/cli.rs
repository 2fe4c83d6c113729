//! The binary's subcommands, file formats and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nnde::config::RunConfig;
use nnde_core::Zoo;

fn nnde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnde")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path, zoo: Zoo, edit: impl FnOnce(&mut RunConfig)) -> PathBuf {
    let mut c = RunConfig::from_zoo(zoo);
    c.network.width = 6;
    c.optimizer.max_iters = 120;
    c.optimizer.n_interior = 32;
    c.run.output = dir.join("out").to_string_lossy().into_owned();
    c.run.validate_points = 50;
    c.run.grid_res = 5;
    edit(&mut c);
    let path = dir.join("config.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn selftest_passes() {
    let o = nnde(&["selftest"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn run_then_validate_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Zoo::SinhLine, |_| {});
    assert_eq!(nnde(&["run", s(&cfg)]).status.code(), Some(0));
    let out = dir.path().join("out");
    assert!(out.join("train_stage0.csv").exists() && out.join("train_stage1.csv").exists());

    let o = nnde(&["validate", s(&cfg), s(&out.join("model.ckpt"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["metrics_sample.csv", "metrics_grid.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x0,n_value,corr_sum,phi,true_err,est_err,abs_residual"));
        for row in lines {
            let v: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
            // corr_sum = N + Σ corrections and true_err = Φ − N
            assert!((v[2] - v[1] - v[5]).abs() <= 1e-12 * (1.0 + v[2].abs()));
            assert!((v[4] - (v[3] - v[1])).abs() <= 1e-12 * (1.0 + v[3].abs()));
        }
    }
    assert_eq!(
        std::fs::read_to_string(out.join("metrics_grid.csv")).unwrap().lines().count(),
        6
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("improvement"));
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Zoo::Logistic, |_| {});
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        assert!(nnde(&["solve", s(&cfg), "--out", s(&out)]).status.success());
        csvs.push(std::fs::read(out.join("train_stage0.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert!(text.starts_with("iter,loss_interior,loss_boundary,loss_total,grad_norm,wall_ms\n0,"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn correct_appends_a_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Zoo::ExpSquare, |c| c.run.bprime = "taylor:2".into());
    assert!(nnde(&["solve", s(&cfg)]).status.success());
    let ckpt = dir.path().join("out/model.ckpt");
    let o = nnde(&["correct", s(&cfg), s(&ckpt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, _, model) = nnde::checkpoint::load(&ckpt).unwrap();
    assert_eq!(model.n_corrections(), 1);
    assert_eq!(model.corrections()[0].form, nnde_core::BPrimeForm::Taylor(2));
    assert!(dir.path().join("out/train_stage1.csv").exists());

    // a checkpoint from another problem is refused
    let other = dir.path().join("other");
    std::fs::create_dir(&other).unwrap();
    let cfg2 = small_config(&other, Zoo::SinhLine, |_| {});
    assert_eq!(nnde(&["correct", s(&cfg2), s(&ckpt)]).status.code(), Some(1));
}

#[test]
fn gradcheck_passes_on_zoo_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Zoo::SinhCube, |c| c.network.width = 4);
    let o = nnde(&["gradcheck", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn configuration_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    for text in [
        "[problem]\nzoo = \"z1\"\nunknown = 3\n",
        "[problem]\nzoo = \"z7\"\n",
        "[problem]\ndim = 1\nsource = \"manufactured\"\nphi = \"sin(\"\n",
        "not toml at all [",
    ] {
        std::fs::write(&bad, text).unwrap();
        let o = nnde(&["solve", s(&bad), "--out", s(dir.path())]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    assert_eq!(nnde(&["solve", s(&dir.path().join("missing.toml"))]).status.code(), Some(1));
}

#[test]
fn divergent_training_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Zoo::ExpSquare, |c| {
        c.optimizer.learning_rate = 1e6;
        c.optimizer.max_iters = 300;
    });
    let o = nnde(&["solve", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    // the log up to the failure is still written
    assert!(dir.path().join("out/train_stage0.csv").exists());
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Zoo::SinhLine, |c| c.optimizer.max_iters = 5);
    assert!(nnde(&["solve", s(&cfg)]).status.success());
    let ckpt = dir.path().join("out/model.ckpt");
    let text = std::fs::read_to_string(&ckpt).unwrap();
    std::fs::write(&ckpt, &text[..text.len() / 2 + 3]).unwrap();
    assert_eq!(nnde(&["validate", s(&cfg), s(&ckpt)]).status.code(), Some(1));
}
