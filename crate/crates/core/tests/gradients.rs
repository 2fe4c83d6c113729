//! Finite-difference checks of every derivative the trainer relies on.

use nnde_core::model::{CorrectedModel, Stage, StageArch};
use nnde_core::net::{forward_jet, param_gradient};
use nnde_core::trainer::{loss_correction, loss_primary, sample_boundary, sample_interior, SampleRng};
use nnde_core::{BPrimeForm, Jet2, JetAdjoint, NetworkConfig, ParameterVector, Zoo};
use rand::{Rng, SeedableRng};

fn rel_ok(analytic: f64, fd: f64, rel: f64, abs_floor: f64) -> bool {
    let err = (analytic - fd).abs();
    err <= abs_floor || err <= rel * analytic.abs().max(fd.abs())
}

fn central<F: Fn(&ParameterVector) -> f64>(f: F, p: &ParameterVector, k: usize, h: f64) -> f64 {
    let mut plus = p.clone();
    plus.0[k] += h;
    let mut minus = p.clone();
    minus.0[k] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

fn random_adjoint(rng: &mut SampleRng, out: usize, d: usize) -> JetAdjoint {
    JetAdjoint(
        (0..out)
            .map(|_| Jet2 {
                value: rng.random_range(-1.0..1.0),
                gradient: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                laplacian: rng.random_range(-1.0..1.0),
            })
            .collect(),
    )
}

fn pairing(a: &JetAdjoint, j: &[Jet2]) -> f64 {
    a.0.iter()
        .zip(j)
        .map(|(a, j)| {
            a.value * j.value
                + a.gradient.iter().zip(&j.gradient).map(|(p, q)| p * q).sum::<f64>()
                + a.laplacian * j.laplacian
        })
        .sum()
}

#[test]
fn param_gradient_matches_finite_differences_on_random_configs() {
    let mut rng = SampleRng::seed_from_u64(2024);
    for case in 0..10 {
        let d = 1 + case % 3;
        let out = 1 + case % 2;
        let width = rng.random_range(1..=16);
        let depth = rng.random_range(1..=3);
        let mut cfg = NetworkConfig::new(d, out, width, depth);
        if case % 4 == 3 {
            cfg.activation = nnde_core::Activation::Sin;
        }
        let params = cfg.init(case as u64);
        let batch: Vec<(Vec<f64>, JetAdjoint)> = (0..3)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, random_adjoint(&mut rng, out, d))
            })
            .collect();
        let grad = param_gradient(&params, &cfg, &batch).unwrap();
        let objective = |p: &ParameterVector| -> f64 {
            batch
                .iter()
                .map(|(x, a)| pairing(a, &forward_jet(p, &cfg, x).unwrap().0))
                .sum()
        };
        for k in 0..params.len() {
            let fd = central(objective, &params, k, 1e-5);
            assert!(
                rel_ok(grad[k], fd, 1e-4, 1e-7),
                "case {case} ({cfg:?}) param {k}: {} vs {fd}",
                grad[k]
            );
        }
    }
}

#[test]
fn param_gradient_is_additive_over_batches() {
    let cfg = NetworkConfig::new(2, 2, 6, 2);
    let params = cfg.init(4);
    let mut rng = SampleRng::seed_from_u64(8);
    let batch: Vec<(Vec<f64>, JetAdjoint)> = (0..5)
        .map(|_| (vec![rng.random(), rng.random()], random_adjoint(&mut rng, 2, 2)))
        .collect();
    let whole = param_gradient(&params, &cfg, &batch).unwrap();
    let mut parts = vec![0.0; whole.len()];
    for item in &batch {
        let g = param_gradient(&params, &cfg, std::slice::from_ref(item)).unwrap();
        parts.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    for (a, b) in whole.iter().zip(&parts) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn loss_gradients_match_finite_differences_on_zoo() {
    for zoo in Zoo::ALL {
        let p = zoo.build();
        let d = p.dim();
        let net = NetworkConfig::new(d, 1, 5, 2);
        let arch = StageArch::plain(net);
        let params = net.init(17);
        let mut rng = SampleRng::seed_from_u64(3);
        let xi = sample_interior(&p.domain, 8, &mut rng);
        let xb = sample_boundary(&p.domain, 4, &mut rng);

        let eval = loss_primary(&p, &arch, &params, &xi, &xb, 1.5).unwrap();
        let f = |q: &ParameterVector| loss_primary(&p, &arch, q, &xi, &xb, 1.5).unwrap().total;
        for k in 0..params.len() {
            let fd = central(f, &params, k, 1e-5);
            assert!(
                rel_ok(eval.grad[k], fd, 1e-4, 1e-7),
                "{} primary param {k}: {} vs {fd}",
                zoo.name(),
                eval.grad[k]
            );
        }

        let frozen = CorrectedModel::new(Stage {
            arch: arch.clone(),
            params: params.clone(),
        });
        let corr_arch = StageArch {
            scale: 0.2,
            ..StageArch::plain(net)
        };
        let cparams = net.init(99);
        for form in [BPrimeForm::Exact, BPrimeForm::Taylor(2)] {
            let eval = loss_correction(&p, &frozen, &corr_arch, &cparams, form, &xi, &xb, 0.7).unwrap();
            let f = |q: &ParameterVector| {
                loss_correction(&p, &frozen, &corr_arch, q, form, &xi, &xb, 0.7)
                    .unwrap()
                    .total
            };
            for k in 0..cparams.len() {
                let fd = central(f, &cparams, k, 1e-5);
                assert!(
                    rel_ok(eval.grad[k], fd, 1e-4, 1e-7),
                    "{} correction ({form}) param {k}: {} vs {fd}",
                    zoo.name(),
                    eval.grad[k]
                );
            }
        }
    }
}
