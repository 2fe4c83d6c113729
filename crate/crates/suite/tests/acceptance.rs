//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit
//! status if any criterion failed.
//!
//! The end-to-end criteria train real networks (about six minutes on one
//! core with the optimised test profile).

use std::path::Path;
use std::time::Instant;

use nnde::checks::{self, CheckResult};
use nnde::config::{OptimizerSection, RunConfig};
use clap::Parser;
use nnde::{checkpoint, hexfloat, main_with, Cli, ExitCode};
use nnde_core::metrics::validate;
use nnde_core::trainer::{solve_and_correct, train_primary, NoClock};
use nnde_core::{CorrectedModel, Zoo};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

fn from_checks(id: u32, title: &'static str, results: &[CheckResult]) -> Verdict {
    let passed = results.iter().all(CheckResult::passed);
    let detail = results.iter().map(CheckResult::summary).collect::<Vec<_>>().join("\n      ");
    Verdict { id, title, passed, detail }
}

/// The z1 setting used for the end-to-end criteria: defaults everywhere
/// (width 16, two hidden layers, 128 interior and 16 boundary points, at
/// most 5000 iterations) except that correction stages weight their
/// boundary term by 100.
fn z1_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::from_zoo(Zoo::SinhLine);
    c.network.seed = seed;
    c.optimizer.seed = seed;
    c.correction_optimizer = Some(OptimizerSection {
        seed,
        boundary_weight: 100.0,
        ..OptimizerSection::default()
    });
    c.run.n_corrections = 2;
    c
}

struct Z1Seed {
    l2: [f64; 3],
    indicator: f64,
    correlation: f64,
}

fn run_z1(seed: u64) -> Z1Seed {
    let r = z1_config(seed).resolve().expect("valid configuration");
    let outcome = solve_and_correct(&r.problem, &r.algorithm, &NoClock);
    assert!(outcome.error.is_none(), "seed {seed}: {:?}", outcome.error);
    let model = outcome.model.expect("all stages trained");
    let mut l2 = [0.0; 3];
    let mut indicator = 0.0;
    let mut correlation = 0.0;
    for (k, slot) in l2.iter_mut().enumerate() {
        let v = validate(&model.truncated(k), &r.problem, 1000, 201, 99).expect("validation");
        let s = &v.sample.stats;
        *slot = s.l2_corrected.expect("known solution");
        if k == 0 {
            indicator = s.indicator_ratio.expect("known solution");
            correlation = s.correlation.expect("known solution");
        }
    }
    Z1Seed { l2, indicator, correlation }
}

fn run_z3(seed: u64) -> (f64, f64) {
    let mut c = RunConfig::from_zoo(Zoo::SinhCube);
    c.network.seed = seed;
    c.optimizer.seed = seed;
    c.optimizer.n_interior = 512;
    let r = c.resolve().expect("valid configuration");
    let (stage, _) = train_primary(&r.problem, r.algorithm.primary_net, &r.algorithm.primary_opt, &NoClock)
        .unwrap_or_else(|f| panic!("seed {seed}: {}", f.error));
    let model = CorrectedModel::new(stage);
    let v = validate(&model, &r.problem, 1000, 2, 99).expect("validation");
    let s = &v.sample.stats;
    (s.indicator_ratio.expect("known solution"), s.correlation.expect("known solution"))
}

fn indicator_verdict(name: &str, ratios: &[f64], corrs: &[f64]) -> (bool, String) {
    let (mr, mc) = (median(ratios.to_vec()), median(corrs.to_vec()));
    let ok = (0.05..=20.0).contains(&mr) && mc > 0.0;
    let text = format!(
        "{name}: median mean|e|/mean|F| = {mr:.3} [{}], median correlation = {mc:.3} [{}]",
        fmt_list(ratios),
        fmt_list(corrs)
    );
    (ok, text)
}

/// Runs a command line through the same entry point as the `nnde` binary.
fn nnde(args: &[&str]) -> ExitCode {
    let cli = Cli::try_parse_from(std::iter::once("nnde").chain(args.iter().copied())).expect("valid command line");
    main_with(cli)
}

fn determinism(dir: &Path) -> (bool, String) {
    let mut c = RunConfig::from_zoo(Zoo::ExpSquare);
    c.network.width = 6;
    c.optimizer.max_iters = 150;
    c.optimizer.n_interior = 32;
    c.run.n_corrections = 1;
    let cfg = dir.join("det.toml");
    std::fs::write(&cfg, c.to_toml()).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;

    let mut csvs = Vec::new();
    let mut ckpts = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        ok &= nnde(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]) == ExitCode::Ok;
        csvs.push([0, 1].map(|s| std::fs::read(out.join(format!("train_stage{s}.csv"))).unwrap_or_default()));
        ckpts.push(std::fs::read(out.join("model.ckpt")).unwrap_or_default());
    }
    let same_csv = csvs[0] == csvs[1] && !csvs[0][0].is_empty();
    let same_ckpt = ckpts[0] == ckpts[1] && !ckpts[0].is_empty();
    ok &= same_csv && same_ckpt;
    notes.push(format!("training CSVs identical: {same_csv}, checkpoints identical: {same_ckpt}"));

    let text = String::from_utf8(ckpts[0].clone()).unwrap_or_default();
    let round = checkpoint::from_text(&text).map(|(cfg, _, model)| (checkpoint::to_text(&cfg, &model), model));
    match round {
        Ok((again, model)) => {
            let bytes_equal = again == text;
            let first = model.primary().params.as_slice().first().copied().unwrap_or(f64::NAN);
            let bits_equal = text.contains(&hexfloat::format(first));
            ok &= bytes_equal && bits_equal;
            notes.push(format!("save→load→save identical: {bytes_equal}"));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("checkpoint reload failed: {e}"));
        }
    }
    (ok, notes.join("; "))
}

fn main() {
    let start = Instant::now();
    let mut verdicts = Vec::new();

    verdicts.push(from_checks(
        1,
        "derivative engine matches finite differences",
        &[checks::expr_jets(1000, 101, 1e-5), checks::net_jets(1000, 102, 1e-5)],
    ));
    verdicts.push(from_checks(2, "loss gradients match finite differences", &checks::zoo_loss_gradients(103, 1e-4)));
    verdicts.push(from_checks(3, "exact B′ equals b(n+e) − b(n)", &checks::bprime_identity(10_000, 104)));
    verdicts.push(from_checks(4, "Taylor truncation error has order K+1", &checks::taylor_orders()));
    let identity: Vec<CheckResult> = Zoo::ALL
        .map(|z| {
            let mut r = checks::error_identity(&z.build(), 1000, 105, 1e-9);
            r.name = format!("{} on {}", r.name, z.name());
            r
        })
        .into();
    verdicts.push(from_checks(5, "true error solves the error equation", &identity));
    verdicts.push(from_checks(6, "linear case: A[Φ − N] = −F[N]", &checks::linear_exactness(1000, 106, 1e-10)));

    let z1: Vec<Z1Seed> = SEEDS.iter().map(|&s| run_z1(s)).collect();
    let improvement: Vec<f64> = z1.iter().map(|r| r.l2[1] / r.l2[0]).collect();
    let m7 = median(improvement.clone());
    verdicts.push(Verdict {
        id: 7,
        title: "one correction halves the z1 error (median of 5 seeds)",
        passed: m7 <= 0.5,
        detail: format!("median L2(N + ê)/L2(N) = {m7:.3} [{}]", fmt_list(&improvement)),
    });

    let z3: Vec<(f64, f64)> = SEEDS.iter().map(|&s| run_z3(s)).collect();
    let (ok1, t1) = indicator_verdict(
        "z1",
        &z1.iter().map(|r| r.indicator).collect::<Vec<_>>(),
        &z1.iter().map(|r| r.correlation).collect::<Vec<_>>(),
    );
    let (ok3, t3) = indicator_verdict(
        "z3",
        &z3.iter().map(|r| r.0).collect::<Vec<_>>(),
        &z3.iter().map(|r| r.1).collect::<Vec<_>>(),
    );
    verdicts.push(Verdict {
        id: 8,
        title: "residual tracks the error on z1 and z3",
        passed: ok1 && ok3,
        detail: format!("{t1}\n      {t3}"),
    });

    let second: Vec<f64> = z1.iter().map(|r| r.l2[2] / r.l2[1]).collect();
    let m9 = median(second.clone());
    verdicts.push(Verdict {
        id: 9,
        title: "a second correction does not degrade z1 by more than 10%",
        passed: m9 <= 1.1,
        detail: format!("median L2(2 corrections)/L2(1 correction) = {m9:.3} [{}]", fmt_list(&second)),
    });

    let dir = tempfile::tempdir().expect("temporary directory");
    let (ok10, t10) = determinism(dir.path());
    verdicts.push(Verdict {
        id: 10,
        title: "determinism and checkpoint persistence",
        passed: ok10,
        detail: t10,
    });

    println!();
    for v in &verdicts {
        println!("[{:>2}] {} {}", v.id, if v.passed { "PASS" } else { "FAIL" }, v.title);
        println!("      {}", v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("\n{} of {} criteria passed in {:.0?}", verdicts.len() - failed, verdicts.len(), start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
