use nnde::checkpoint::{self, CheckpointError};
use nnde::config::RunConfig;
use nnde::hexfloat;
use nnde_core::model::{Correction, Stage};
use nnde_core::trainer::{correction_arch, primary_arch};
use nnde_core::{BPrimeForm, CorrectedModel, ParameterVector, Zoo};
use proptest::prelude::*;

fn model_for(cfg: &RunConfig, n_corr: usize, seed: u64) -> CorrectedModel {
    let r = cfg.resolve().unwrap();
    let arch = primary_arch(&r.problem, r.algorithm.primary_net).unwrap();
    let params = r.algorithm.primary_net.init(seed);
    let mut m = CorrectedModel::new(Stage { arch, params });
    for j in 1..=n_corr {
        let (net, _) = r.algorithm.correction_stage(j);
        let arch = correction_arch(&r.problem, net, 0.1 * j as f64 + 1.0 / 3.0).unwrap();
        let params = net.init(seed + j as u64);
        m.push(Correction {
            stage: Stage { arch, params },
            form: if j % 2 == 0 { BPrimeForm::Taylor(3) } else { BPrimeForm::Exact },
        });
    }
    m
}

#[test]
fn save_load_save_is_byte_identical() {
    let cfg = RunConfig::from_zoo(Zoo::ExpSquare);
    let model = model_for(&cfg, 2, 5);
    let text = checkpoint::to_text(&cfg, &model);
    let (cfg2, p, back) = checkpoint::from_text(&text).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(p, Zoo::ExpSquare.build());
    assert_eq!(back, model);
    assert_eq!(checkpoint::to_text(&cfg2, &back), text);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let cfg = RunConfig::from_zoo(Zoo::SinhLine);
    let model = model_for(&cfg, 1, 0);
    checkpoint::save(&path, &cfg, &model).unwrap();
    let (_, _, back) = checkpoint::load(&path).unwrap();
    assert_eq!(back.n_corrections(), 1);
    for (a, b) in back.primary().params.as_slice().iter().zip(model.primary().params.as_slice()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert!(matches!(checkpoint::load(&dir.path().join("nope")), Err(CheckpointError::Io(_))));
}

#[test]
fn layout_and_header() {
    let cfg = RunConfig::from_zoo(Zoo::SinhLine);
    let text = checkpoint::to_text(&cfg, &model_for(&cfg, 1, 0));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("NNDE-CKPT v1"));
    assert!(lines.next().unwrap().starts_with("config "));
    assert!(text.contains("\nstages 2\n"));
    assert!(text.contains("\nstage 0 primary params 321\n"));
    assert!(text.contains("\nstage 1 correction bprime exact scale 0x1.bbbbbbbbbbbbcp-2 params 321\n"));
}

#[test]
fn truncation_is_a_parameter_count_error() {
    let cfg = RunConfig::from_zoo(Zoo::SinhLine);
    let text = checkpoint::to_text(&cfg, &model_for(&cfg, 1, 0));
    let lines: Vec<&str> = text.lines().collect();
    for keep in [lines.len() - 1, lines.len() - 200, lines.len() - 322] {
        let cut = lines[..keep].join("\n");
        match checkpoint::from_text(&cut) {
            Err(CheckpointError::ParamCount { stage, expected, found }) => {
                assert_eq!(expected, 321);
                assert!(found < expected, "stage {stage}");
            }
            other => panic!("keeping {keep} lines: {other:?}"),
        }
    }
}

#[test]
fn version_and_shape_errors() {
    let cfg = RunConfig::from_zoo(Zoo::SinhLine);
    let text = checkpoint::to_text(&cfg, &model_for(&cfg, 0, 0));
    let v2 = text.replacen("NNDE-CKPT v1", "NNDE-CKPT v2", 1);
    assert!(matches!(checkpoint::from_text(&v2), Err(CheckpointError::Version(v)) if v == "NNDE-CKPT v2"));

    // a checkpoint whose embedded network no longer matches its parameters
    let wider = text.replacen("width = 16", "width = 17", 1);
    assert!(matches!(checkpoint::from_text(&wider), Err(CheckpointError::ParamCount { stage: 0, .. })));

    let junk = text.replacen("\nstage 0 primary params 321\n0x", "\nstage 0 primary params 321\nzz", 1);
    assert!(matches!(checkpoint::from_text(&junk), Err(CheckpointError::Malformed { .. })));

    let extra = format!("{text}0x1p+0\n");
    assert!(matches!(checkpoint::from_text(&extra), Err(CheckpointError::Malformed { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_parameters_survive(values in prop::collection::vec(any::<u64>(), 4)) {
        let cfg = RunConfig::from_zoo(Zoo::Logistic);
        let mut model = model_for(&cfg, 1, 9);
        let mut params = model.primary().params.0.clone();
        for (slot, bits) in params.iter_mut().zip(&values) {
            let v = f64::from_bits(*bits);
            *slot = if v.is_nan() { 0.0 } else { v };
        }
        let primary = Stage { arch: model.primary().arch.clone(), params: ParameterVector(params) };
        let corrections = model.corrections().to_vec();
        model = CorrectedModel::new(primary);
        for c in corrections {
            model.push(c);
        }
        let text = checkpoint::to_text(&cfg, &model);
        let (_, _, back) = checkpoint::from_text(&text).unwrap();
        for (a, b) in back.primary().params.as_slice().iter().zip(model.primary().params.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(checkpoint::to_text(&cfg, &back), text);
    }

    #[test]
    fn hex_round_trip(v in any::<f64>().prop_filter("not NaN", |v| !v.is_nan())) {
        prop_assert_eq!(hexfloat::parse(&hexfloat::format(v)).unwrap().to_bits(), v.to_bits());
    }
}
