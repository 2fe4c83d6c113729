use nnde_core::expr::{BinOp, UnaryFn};
use nnde_core::model::{StageArch};
use nnde_core::trainer::{loss_primary, sample_boundary, sample_interior, SampleRng};
use nnde_core::{bprime, bprime_de, forward_jet, BPrimeForm, Expr, Jet2, NetworkConfig, NonlinearitySpec, Zoo};
use proptest::prelude::*;
use rand::SeedableRng;

fn expr(dim: usize) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0..dim).prop_map(Expr::Var),
        (-16i32..16).prop_map(|k| Expr::Const(k as f64 / 8.0)),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let binop = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
        let unary = prop_oneof![
            Just(UnaryFn::Neg),
            Just(UnaryFn::Sin),
            Just(UnaryFn::Cos),
            Just(UnaryFn::Tanh),
            Just(UnaryFn::Sinh),
            Just(UnaryFn::Exp),
            Just(UnaryFn::Log),
            Just(UnaryFn::Sqrt),
        ];
        prop_oneof![
            (binop, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            (inner.clone(), -2i32..5).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
            (unary, inner).prop_map(|(f, a)| Expr::Unary(f, Box::new(a))),
        ]
    })
}

fn stencil<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let d = (a - b).abs();
    d <= abs || d <= rel * a.abs().max(b.abs())
}

fn tame(j: &Jet2) -> bool {
    let ok = |v: f64| v.is_finite() && v.abs() < 1e4;
    ok(j.value) && ok(j.laplacian) && j.gradient.iter().all(|g| ok(*g))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn expression_jets_match_differences(e in expr(2), x in -1.5f64..1.5, y in -1.5f64..1.5) {
        let p = [x, y];
        let h = 1e-4;
        let j = e.eval_jet(&p);
        prop_assume!(j.as_ref().is_ok_and(tame));
        let j = j.unwrap();
        let at = |k: usize, t: f64| { let mut q = p; q[k] = t; e.eval_jet(&q) };
        for k in 0..2 {
            prop_assume!([-2.0, -1.0, 1.0, 2.0].iter().all(|s| at(k, p[k] + s * h).as_ref().is_ok_and(tame)));
        }
        let mut lap = 0.0;
        for k in 0..2 {
            let g = stencil(|t| at(k, t).unwrap().value, p[k], h);
            prop_assert!(close(j.gradient[k], g, 1e-6, 1e-8 * (1.0 + j.value.abs())), "∂{k} `{e}`: {} vs {g}", j.gradient[k]);
            lap += stencil(|t| at(k, t).unwrap().gradient[k], p[k], h);
        }
        prop_assert!(close(j.laplacian, lap, 1e-6, 1e-8 * (1.0 + j.value.abs())), "Δ `{e}`: {} vs {lap}", j.laplacian);
    }

    #[test]
    fn printed_expressions_parse_back(e in expr(3), x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let back = Expr::parse(&e.to_string(), 3).unwrap();
        let p = [x, y, z];
        match (e.eval(&p), back.eval(&p)) {
            (Ok(a), Ok(b)) => prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "`{e}`: {a} vs {b}"),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
        prop_assert_eq!(back.to_string(), e.to_string());
    }

    #[test]
    fn value_channel_agrees_with_eval(e in expr(2), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        if let (Ok(v), Ok(j)) = (e.eval(&[x, y]), e.eval_jet(&[x, y])) {
            prop_assert!(v.to_bits() == j.value.to_bits() || (v.is_nan() && j.value.is_nan()));
        }
    }

    #[test]
    fn jet_product_rule(a in prop::array::uniform4(-3.0f64..3.0), b in prop::array::uniform4(-3.0f64..3.0)) {
        let ja = Jet2 { value: a[0], gradient: vec![a[1], a[2]], laplacian: a[3] };
        let jb = Jet2 { value: b[0], gradient: vec![b[1], b[2]], laplacian: b[3] };
        let p = &ja * &jb;
        let dot = a[1] * b[1] + a[2] * b[2];
        prop_assert!((p.value - a[0] * b[0]).abs() < 1e-12);
        prop_assert!((p.laplacian - (a[3] * b[0] + 2.0 * dot + a[0] * b[3])).abs() < 1e-12);
        let s = &(&ja + &jb) - &jb;
        prop_assert!((s.value - ja.value).abs() < 1e-12 && (s.laplacian - ja.laplacian).abs() < 1e-12);
    }

    #[test]
    fn exact_bprime_is_a_difference(n in -3.0f64..3.0, e in -3.0f64..3.0, a in -2.0f64..2.0) {
        for b in [
            NonlinearitySpec::Quadratic(a),
            NonlinearitySpec::Polynomial(vec![a, 0.5, -0.25]),
            NonlinearitySpec::Sinh(a),
            NonlinearitySpec::Exp(a),
        ] {
            let direct = b.eval(n + e) - b.eval(n);
            let got = bprime(&b, BPrimeForm::Exact, n, e);
            prop_assert!((got - direct).abs() <= 1e-12 * (1.0 + b.eval(n + e).abs()), "{}: {got} vs {direct}", b.tag());
            // additivity: B′(n, e₁ + e₂) = B′(n, e₁) + B′(n + e₁, e₂)
            let split = bprime(&b, BPrimeForm::Exact, n, 0.5 * e) + bprime(&b, BPrimeForm::Exact, n + 0.5 * e, 0.5 * e);
            prop_assert!((got - split).abs() <= 1e-11 * (1.0 + got.abs()));
        }
    }

    #[test]
    fn taylor_one_is_linearisation(n in -3.0f64..3.0, e in -1.0f64..1.0) {
        let b = NonlinearitySpec::Sinh(1.0);
        prop_assert!((bprime(&b, BPrimeForm::Taylor(1), n, e) - n.cosh() * e).abs() <= 1e-14 * (1.0 + n.cosh()));
        prop_assert!((bprime_de(&b, BPrimeForm::Taylor(1), n, e) - n.cosh()).abs() <= 1e-14 * n.cosh());
    }

    #[test]
    fn network_is_finite_and_deterministic(seed in any::<u64>(), width in 1usize..12, depth in 1usize..4, x in -5.0f64..5.0) {
        let cfg = NetworkConfig::new(1, 2, width, depth);
        let p = cfg.init(seed);
        prop_assert_eq!(p.len(), cfg.param_count());
        let a = forward_jet(&p, &cfg, &[x]).unwrap();
        let b = forward_jet(&cfg.init(seed), &cfg, &[x]).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.0.iter().all(|j| j.value.is_finite() && j.laplacian.is_finite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loss_is_interior_plus_weighted_boundary(seed in any::<u64>(), lambda in 1e-3f64..1e3) {
        let p = Zoo::ExpSquare.build();
        let net = NetworkConfig::new(2, 1, 4, 2);
        let arch = StageArch::plain(net);
        let params = net.init(seed);
        let mut rng = SampleRng::seed_from_u64(seed);
        let xi = sample_interior(&p.domain, 8, &mut rng);
        let xb = sample_boundary(&p.domain, 8, &mut rng);
        prop_assert!(xb.iter().all(|x| p.domain.on_boundary(x)));
        let l = loss_primary(&p, &arch, &params, &xi, &xb, lambda).unwrap();
        prop_assert!(l.interior >= 0.0 && l.boundary >= 0.0);
        prop_assert!((l.total - (l.interior + lambda * l.boundary)).abs() <= 1e-12 * l.total.max(1.0));
    }
}
