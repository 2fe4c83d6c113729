use nnde::config::{Exprs, ModeSetting, NetworkSection, OptimizerSection, ProblemSection, RunConfig, ScaleSetting};
use nnde_core::Zoo;
use proptest::prelude::*;

fn network() -> impl Strategy<Value = NetworkSection> {
    (1usize..64, 1usize..5, prop::bool::ANY, any::<u64>()).prop_map(|(width, depth, sin, seed)| NetworkSection {
        width,
        depth,
        activation: if sin { "sin".into() } else { "tanh".into() },
        seed,
    })
}

fn optimizer() -> impl Strategy<Value = OptimizerSection> {
    (1e-6f64..1.0, 1usize..1000, 1usize..100, 0usize..100_000, 1e-9f64..0.5, any::<u64>(), 1e-3f64..1e3).prop_map(
        |(learning_rate, n_interior, n_boundary, max_iters, stop_ratio, seed, boundary_weight)| OptimizerSection {
            learning_rate,
            n_interior,
            n_boundary,
            max_iters,
            stop_ratio,
            seed,
            boundary_weight,
            ..Default::default()
        },
    )
}

fn problem() -> impl Strategy<Value = ProblemSection> {
    prop_oneof![
        (0usize..4).prop_map(|i| ProblemSection::zoo(Zoo::ALL[i])),
        (prop::bool::ANY, -5.0f64..5.0).prop_map(|(hard, a)| ProblemSection {
            dim: Some(2),
            lower: Some(vec![0.0, -1.0]),
            upper: Some(vec![1.0, a.abs() + 0.5]),
            c1: Some(vec!["0".into(), "x".into()]),
            nonlinearity: Some("sinh".into()),
            coefficients: Some(vec![a]),
            source: Some(Exprs::One("manufactured".into())),
            phi: Some(Exprs::Many(vec!["sin(pi*x)*y".into()])),
            mode: Some(if hard { ModeSetting::Hard } else { ModeSetting::Soft }),
            ..Default::default()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn print_parse_round_trip(
        problem in problem(),
        network in network(),
        corr_net in prop::option::of(network()),
        optimizer in optimizer(),
        corr_opt in prop::option::of(optimizer()),
        n_corrections in 0usize..5,
        taylor in prop::option::of(1u32..6),
        scale in prop::option::of(1e-6f64..10.0),
        deterministic in prop::bool::ANY,
    ) {
        let mut c = RunConfig::from_zoo(Zoo::SinhLine);
        c.problem = problem;
        c.network = network;
        c.correction_network = corr_net;
        c.optimizer = optimizer;
        c.correction_optimizer = corr_opt;
        c.run.n_corrections = n_corrections;
        c.run.bprime = taylor.map_or("exact".into(), |k| format!("taylor:{k}"));
        c.run.correction_scale = scale.map_or(ScaleSetting::default(), ScaleSetting::Fixed);
        c.run.deterministic = deterministic;

        let text = c.to_toml();
        let parsed = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(RunConfig::parse(&parsed.to_toml()).unwrap(), parsed.clone());
        prop_assert!(parsed.resolve().is_ok());
    }
}

#[test]
fn missing_sections_take_defaults() {
    let c = RunConfig::parse("[problem]\nzoo = \"z2\"\n[run]\nn_corrections = 3\n").unwrap();
    assert_eq!(c.network, NetworkSection::default());
    assert_eq!(c.optimizer, OptimizerSection::default());
    assert_eq!(c.run.n_corrections, 3);
    assert_eq!(c.run.bprime, "exact");
    let r = c.resolve().unwrap();
    assert_eq!(r.algorithm.correction_net, r.algorithm.primary_net);
}
