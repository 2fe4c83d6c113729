//! Randomised consistency checks shared by `gradcheck`, `selftest` and the
//! acceptance suite.
//!
//! Derivatives are compared against the fourth-order central stencil
//! `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`. Laplacians are checked
//! by differencing the analytic gradient, which is itself checked against
//! the value, so both links of the chain are covered without the round-off
//! of a second difference.

use nnde_core::expr::{BinOp, UnaryFn};
use nnde_core::model::{CorrectedModel, Stage, StageArch};
use nnde_core::net::forward_jet;
use nnde_core::trainer::{loss_correction, loss_primary, SampleRng};
use nnde_core::{
    bprime, error_residual, manufacture, Activation, BPrimeForm, DomainSpec, Expr, Jet2, LinearOpSpec,
    NetJet, NetworkConfig, NonlinearitySpec, ParameterVector, ProblemSpec, Zoo,
};
use nnde_core::{param_gradient, JetAdjoint};
use rand::{Rng, SeedableRng};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest error seen, in the suite's own measure.
    pub worst: f64,
    pub tolerance: f64,
    /// First failing case, if any.
    pub first_failure: Option<String>,
}

impl CheckResult {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            first_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }

    fn record(&mut self, err: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if err > self.worst || err.is_nan() {
            self.worst = err;
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    /// Relative comparison with an absolute floor for values near zero.
    ///
    /// The recorded error is the difference over `max(scale, floor / tolerance)`,
    /// which stays within the tolerance exactly when the case passes.
    fn compare(&mut self, analytic: f64, reference: f64, abs_floor: f64, describe: impl FnOnce() -> String) {
        let diff = (analytic - reference).abs();
        let scale = analytic.abs().max(reference.abs());
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        let ok = diff <= abs_floor || rel <= self.tolerance;
        let denom = scale.max(abs_floor / self.tolerance);
        let err = if denom > 0.0 { diff / denom } else { diff };
        self.record(err, ok, || format!("{}: analytic {analytic:e}, reference {reference:e}", describe()));
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} cases, {} failures, worst {:.2e} (tolerance {:e}){}",
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.tolerance,
            self.first_failure.as_deref().map(|f| format!("; first failure {f}")).unwrap_or_default()
        )
    }
}

pub fn stencil<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn shifted(x: &[f64], k: usize, t: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[k] = t;
    y
}

/// Random expression tree of at most `depth` levels over `dim` variables.
pub fn random_expr(rng: &mut SampleRng, depth: u32, dim: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.7) {
            Expr::Var(rng.random_range(0..dim))
        } else {
            Expr::Const((rng.random_range(-2.0f64..2.0) * 8.0).round() / 8.0)
        };
    }
    let sub = |rng: &mut SampleRng| Box::new(random_expr(rng, depth - 1, dim));
    match rng.random_range(0..10) {
        0..=3 => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][rng.random_range(0..4)];
            Expr::Binary(op, sub(rng), sub(rng))
        }
        4 => Expr::Pow(sub(rng), rng.random_range(-2..=4)),
        _ => {
            let f = [
                UnaryFn::Neg,
                UnaryFn::Sin,
                UnaryFn::Cos,
                UnaryFn::Tanh,
                UnaryFn::Sinh,
                UnaryFn::Cosh,
                UnaryFn::Exp,
                UnaryFn::Log,
                UnaryFn::Sqrt,
            ][rng.random_range(0..9)];
            Expr::Unary(f, sub(rng))
        }
    }
}

/// Magnitudes beyond this are skipped: the stencil's round-off grows with
/// the size of the function, not with the error of the jet.
const EXPR_RANGE: f64 = 1e4;

/// Jet gradient and Laplacian of random expressions against differences of
/// the value and of the gradient. Expressions that fail to evaluate near the
/// point, or whose values leave `±EXPR_RANGE`, are redrawn.
pub fn expr_jets(cases: usize, seed: u64, tolerance: f64) -> CheckResult {
    let mut res = CheckResult::new("expression jets vs finite differences", tolerance);
    let mut rng = SampleRng::seed_from_u64(seed);
    let h = 1e-4;
    let mut draws = 0;
    while res.cases < cases && draws < 100 * cases {
        draws += 1;
        let dim = rng.random_range(1..=3);
        let e = random_expr(&mut rng, 6, dim);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let Ok(j) = e.eval_jet(&x) else { continue };
        let tame = |v: f64| v.is_finite() && v.abs() < EXPR_RANGE;
        if !tame(j.value) || !tame(j.laplacian) || !j.gradient.iter().all(|g| tame(*g)) {
            continue;
        }
        // every stencil point must evaluate and stay tame too
        let mut fine = true;
        let mut fd_grad = vec![0.0; dim];
        let mut fd_lap = 0.0;
        for k in 0..dim {
            for s in [-2.0, -1.0, 1.0, 2.0] {
                match e.eval_jet(&shifted(&x, k, x[k] + s * h)) {
                    Ok(jj) if tame(jj.value) && jj.gradient.iter().all(|g| tame(*g)) => {}
                    _ => fine = false,
                }
            }
            if !fine {
                break;
            }
            fd_grad[k] = stencil(|t| e.eval(&shifted(&x, k, t)).unwrap(), x[k], h);
            fd_lap += stencil(|t| e.eval_jet(&shifted(&x, k, t)).unwrap().gradient[k], x[k], h);
        }
        if !fine {
            continue;
        }
        let scale = 1.0 + j.value.abs();
        for k in 0..dim {
            res.compare(j.gradient[k], fd_grad[k], 1e-8 * scale, || format!("∂{k} of `{e}` at {x:?}"));
        }
        res.compare(j.laplacian, fd_lap, 1e-8 * scale, || format!("Δ of `{e}` at {x:?}"));
    }
    res
}

fn random_net(rng: &mut SampleRng) -> (NetworkConfig, ParameterVector) {
    let d = rng.random_range(1..=3);
    let out = rng.random_range(1..=2);
    let mut cfg = NetworkConfig::new(d, out, rng.random_range(1..=16), rng.random_range(1..=3));
    if rng.random_bool(0.3) {
        cfg.activation = Activation::Sin;
    }
    let params = cfg.init(rng.random());
    (cfg, params)
}

/// Network jets against differences, over random architectures.
pub fn net_jets(cases: usize, seed: u64, tolerance: f64) -> CheckResult {
    let mut res = CheckResult::new("network jets vs finite differences", tolerance);
    let mut rng = SampleRng::seed_from_u64(seed);
    let h = 1e-4;
    while res.cases < cases {
        let (cfg, params) = random_net(&mut rng);
        let x: Vec<f64> = (0..cfg.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jet = forward_jet(&params, &cfg, &x).expect("finite network");
        let at = |y: &[f64]| forward_jet(&params, &cfg, y).expect("finite network");
        for c in 0..cfg.output_dim {
            let j = &jet.0[c];
            let mut fd_lap = 0.0;
            for k in 0..cfg.input_dim {
                let g = stencil(|t| at(&shifted(&x, k, t)).0[c].value, x[k], h);
                res.compare(j.gradient[k], g, 1e-9, || format!("{cfg:?} ∂{k} output {c} at {x:?}"));
                fd_lap += stencil(|t| at(&shifted(&x, k, t)).0[c].gradient[k], x[k], h);
            }
            res.compare(j.laplacian, fd_lap, 1e-9, || format!("{cfg:?} Δ output {c} at {x:?}"));
        }
    }
    res
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

fn pairing(a: &JetAdjoint, j: &NetJet) -> f64 {
    a.0.iter()
        .zip(&j.0)
        .map(|(a, j)| {
            a.value * j.value
                + a.gradient.iter().zip(&j.gradient).map(|(p, q)| p * q).sum::<f64>()
                + a.laplacian * j.laplacian
        })
        .sum()
}

fn param_stencil<F: Fn(&ParameterVector) -> f64>(f: F, p: &ParameterVector, k: usize, h: f64) -> f64 {
    stencil(
        |t| {
            let mut q = p.clone();
            q.0[k] = t;
            f(&q)
        },
        p.0[k],
        h,
    )
}

/// Reverse-mode parameter gradients of `⟨adjoint, jet⟩` over random nets.
pub fn param_gradients(nets: usize, seed: u64, tolerance: f64) -> CheckResult {
    let mut res = CheckResult::new("parameter gradients vs finite differences", tolerance);
    let mut rng = SampleRng::seed_from_u64(seed);
    for _ in 0..nets {
        let (cfg, params) = random_net(&mut rng);
        let batch: Vec<(Vec<f64>, JetAdjoint)> = (0..3)
            .map(|_| {
                let x = (0..cfg.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, random_adjoint(&mut rng, cfg.output_dim, cfg.input_dim))
            })
            .collect();
        let grad = param_gradient(&params, &cfg, &batch).expect("finite network");
        let objective = |q: &ParameterVector| -> f64 {
            batch.iter().map(|(x, a)| pairing(a, &forward_jet(q, &cfg, x).unwrap())).sum()
        };
        for k in 0..params.len() {
            let fd = param_stencil(objective, &params, k, 1e-4);
            res.compare(grad[k], fd, 1e-9, || format!("{cfg:?} parameter {k}"));
        }
    }
    res
}

/// Gradients of both losses on a problem, for random small networks.
pub fn loss_gradients(p: &ProblemSpec, net: NetworkConfig, seed: u64, tolerance: f64) -> CheckResult {
    let mut res = CheckResult::new("loss gradients vs finite differences", tolerance);
    let mut rng = SampleRng::seed_from_u64(seed);
    let interior = nnde_core::sample_interior(&p.domain, 6, &mut rng);
    let boundary = nnde_core::sample_boundary(&p.domain, 4, &mut rng);
    let lambda = rng.random_range(0.5..2.0);
    let h = 1e-4;

    let arch = match nnde_core::trainer::primary_arch(p, net) {
        Ok(a) => a,
        Err(e) => {
            res.record(f64::NAN, false, || format!("cannot build network: {e}"));
            return res;
        }
    };
    let params = net.init(rng.random());
    let Ok(eval) = loss_primary(p, &arch, &params, &interior, &boundary, lambda) else {
        res.record(f64::NAN, false, || "primary loss failed to evaluate".into());
        return res;
    };
    let f = |q: &ParameterVector| loss_primary(p, &arch, q, &interior, &boundary, lambda).map_or(f64::NAN, |l| l.total);
    let floor = 1e-10 * (1.0 + eval.total);
    for k in 0..params.len() {
        res.compare(eval.grad[k], param_stencil(f, &params, k, h), floor, || format!("primary parameter {k}"));
    }

    let frozen = CorrectedModel::new(Stage { arch, params });
    let scale = rng.random_range(0.05..1.0);
    let Ok(corr_arch) = nnde_core::trainer::correction_arch(p, net, scale) else {
        res.record(f64::NAN, false, || "cannot build correction network".into());
        return res;
    };
    let cparams = net.init(rng.random());
    for form in [BPrimeForm::Exact, BPrimeForm::Taylor(2)] {
        let Ok(eval) = loss_correction(p, &frozen, &corr_arch, &cparams, form, &interior, &boundary, lambda) else {
            res.record(f64::NAN, false, || "correction loss failed to evaluate".into());
            return res;
        };
        let f = |q: &ParameterVector| {
            loss_correction(p, &frozen, &corr_arch, q, form, &interior, &boundary, lambda).map_or(f64::NAN, |l| l.total)
        };
        let floor = 1e-10 * (1.0 + eval.total);
        for k in 0..cparams.len() {
            res.compare(eval.grad[k], param_stencil(f, &cparams, k, h), floor, || {
                format!("correction ({form}) parameter {k}")
            });
        }
    }
    res
}

/// Loss gradients on every zoo problem with random small networks.
pub fn zoo_loss_gradients(seed: u64, tolerance: f64) -> Vec<CheckResult> {
    let mut rng = SampleRng::seed_from_u64(seed);
    Zoo::ALL
        .into_iter()
        .map(|z| {
            let p = z.build();
            let mut net = NetworkConfig::new(p.dim(), p.output_dim, rng.random_range(2..=6), rng.random_range(1..=2));
            if rng.random_bool(0.5) {
                net.activation = Activation::Sin;
            }
            let mut r = loss_gradients(&p, net, rng.random(), tolerance);
            r.name = format!("{} on {}", r.name, z.name());
            r
        })
        .collect()
}

pub fn nonlinearity_variants() -> Vec<NonlinearitySpec> {
    vec![
        NonlinearitySpec::Zero,
        NonlinearitySpec::Quadratic(1.3),
        NonlinearitySpec::Polynomial(vec![0.5, -1.0, 0.25]),
        NonlinearitySpec::Sinh(0.8),
        NonlinearitySpec::Exp(-1.2),
    ]
}

/// Exact `B′(n, e)` against `b(n + e) − b(n)` for random pairs in `[−3, 3]²`.
pub fn bprime_identity(pairs: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = SampleRng::seed_from_u64(seed);
    nonlinearity_variants()
        .into_iter()
        .map(|b| {
            let mut res = CheckResult::new(format!("exact B′ identity for {}", b.tag()), 1e-12);
            for _ in 0..pairs {
                let n = rng.random_range(-3.0..3.0);
                let e = rng.random_range(-3.0..3.0);
                let direct = b.eval(n + e) - b.eval(n);
                let err = (bprime(&b, BPrimeForm::Exact, n, e) - direct).abs() / (1.0 + b.eval(n + e).abs());
                res.record(err, err <= 1e-12, || format!("n = {n}, e = {e}"));
            }
            res
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-log slope of `|Exact − Taylor(K)|` against `|e|` for `e` from `1e-3`
/// to `1e-1`, which should be `K + 1`.
pub fn taylor_order(b: &NonlinearitySpec, k: u32, n: f64) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=16)
        .map(|i| {
            let e = 10f64.powf(-3.0 + 2.0 * i as f64 / 16.0);
            let gap = (bprime(b, BPrimeForm::Exact, n, e) - bprime(b, BPrimeForm::Taylor(k), n, e)).abs();
            (e.ln(), gap.ln())
        })
        .unzip();
    slope(&xs, &ys)
}

pub fn taylor_orders() -> Vec<CheckResult> {
    let mut out = Vec::new();
    for b in [NonlinearitySpec::Sinh(1.0), NonlinearitySpec::Exp(1.0)] {
        let mut res = CheckResult::new(format!("Taylor truncation order for {}", b.tag()), 0.25);
        for k in 1..=3 {
            for n in [-0.9, 0.4, 1.3] {
                let s = taylor_order(&b, k, n);
                let err = (s - (k + 1) as f64).abs();
                res.record(err, err <= 0.25, || format!("K = {k}, n = {n}: slope {s}"));
            }
        }
        out.push(res);
    }
    out
}

/// `A[Φ − N] + B′(N, Φ − N) + F[N]` with the exact transform, at random
/// points for a random network `N`.
pub fn error_identity(p: &ProblemSpec, points: usize, seed: u64, tolerance: f64) -> CheckResult {
    let mut res = CheckResult::new("error-equation identity", tolerance);
    let mut rng = SampleRng::seed_from_u64(seed);
    let net = NetworkConfig::new(p.dim(), p.output_dim, 8, 2);
    let params = net.init(rng.random());
    let arch = StageArch::plain(net);
    let xs = nnde_core::sample_interior(&p.domain, points, &mut rng);
    for x in &xs {
        let n = arch.jet(&params, x).expect("finite network");
        let Some(Ok(mut e)) = p.solution_jet(x) else {
            res.record(f64::NAN, false, || "problem has no evaluable solution".into());
            return res;
        };
        e.add_scaled(-1.0, &n);
        let r = error_residual(p, &n, &e, BPrimeForm::Exact, x).expect("problem terms evaluate");
        for v in r {
            res.record(v.abs(), v.abs() <= tolerance, || format!("x = {x:?}: {v:e}"));
        }
    }
    res
}

/// Manufactured linear problems with variable coefficients.
pub fn linear_problems() -> Vec<ProblemSpec> {
    let parse = |s: &str, d| Expr::parse(s, d).expect("valid expression");
    vec![
        manufacture(
            vec![parse("sin(pi*x)", 1)],
            LinearOpSpec::laplacian(1),
            NonlinearitySpec::Zero,
            DomainSpec::unit(1),
        ),
        manufacture(
            vec![parse("exp(-x)*cos(2*y)", 2)],
            LinearOpSpec {
                c0: parse("1 + x*y", 2),
                c1: vec![parse("y", 2), parse("-1", 2)],
                c2: parse("0.5", 2),
            },
            NonlinearitySpec::Zero,
            DomainSpec::new(vec![-1.0, 0.0], vec![1.0, 2.0]).expect("valid box"),
        ),
    ]
    .into_iter()
    .map(|p| p.expect("well-defined problem"))
    .collect()
}

/// With `b ≡ 0`, `A[Φ − N] = −F[N]` pointwise.
pub fn linear_exactness(points: usize, seed: u64, tolerance: f64) -> Vec<CheckResult> {
    linear_problems()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut res = CheckResult::new(format!("linear error equation, problem {i}"), tolerance);
            let mut rng = SampleRng::seed_from_u64(seed + i as u64);
            let net = NetworkConfig::new(p.dim(), 1, 8, 2);
            let params = net.init(rng.random());
            for x in nnde_core::sample_interior(&p.domain, points, &mut rng) {
                let n = forward_jet(&params, &net, &x).expect("finite network");
                let Some(Ok(mut e)) = p.solution_jet(&x) else { unreachable!("manufactured") };
                e.add_scaled(-1.0, &n);
                let lhs = p.linear.apply(&e.0[0], &x).expect("coefficients evaluate");
                let f = p.residual(&n, &x).expect("residual evaluates")[0];
                let err = (lhs + f).abs();
                res.record(err, err <= tolerance, || format!("x = {x:?}: A[e] = {lhs:e}, F[N] = {f:e}"));
            }
            res
        })
        .collect()
}

/// Parser and evaluator sanity: documented examples and error offsets.
pub fn expression_examples() -> CheckResult {
    let mut res = CheckResult::new("expression language examples", 1e-12);
    let value_cases: [(&str, usize, &[f64], f64); 5] = [
        ("sin(pi*x)", 1, &[0.5], 1.0),
        ("x0^2 + x1^2", 2, &[3.0, 4.0], 25.0),
        ("exp(-x)*y", 2, &[0.0, 2.0], 2.0),
        ("2^-2", 1, &[0.0], 0.25),
        ("sqrt(x*x)", 1, &[-3.0], 3.0),
    ];
    for (text, dim, x, want) in value_cases {
        let got = Expr::parse(text, dim).and_then(|e| e.eval(x));
        let err = got.as_ref().map_or(f64::INFINITY, |g| (g - want).abs());
        res.record(err, err <= 1e-12, || format!("`{text}` gave {got:?}, expected {want}"));
    }
    for (text, dim) in [("x +", 1), ("foo(x)", 1), ("x3", 2), ("x^1.5", 1), ("(x", 1)] {
        let ok = Expr::parse(text, dim).is_err();
        res.record(if ok { 0.0 } else { 1.0 }, ok, || format!("`{text}` should not parse"));
    }
    for text in ["sin(pi*x)*exp(-y)/(1 + x^2)", "-(x - y)^3 + log(2 + cos(x))"] {
        let e = Expr::parse(text, 2).expect("valid");
        let ok = Expr::parse(&e.to_string(), 2).as_ref() == Ok(&e);
        res.record(if ok { 0.0 } else { 1.0 }, ok, || format!("`{text}` does not round-trip"));
    }
    res
}
