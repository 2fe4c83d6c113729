//! Rewriting the residual explicitly in terms of the error.
//!
//! With `Φ = N + e`, `b(Φ) = b(N) + B′(N, e)`, and the residual of a frozen
//! estimate satisfies `F[N] = −A[e] − B′(N, e)`. Hence the true error solves
//! the error equation
//!
//! ```text
//! A[e] + B′(N, e) + F[N] = 0
//! ```
//!
//! which is what a correction network is trained against.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math;
use crate::model::Predictor;
use crate::net::NetJet;
use crate::problem::{NonlinearitySpec, ProblemSpec};

/// How `B′(n, e) = b(n + e) − b(n)` is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BPrimeForm {
    /// Closed-form addition formula.
    #[default]
    Exact,
    /// `Σ_{i=1..K} b^{(i)}(n) e^i / i!`. `Taylor(1)` is the linearised regime.
    Taylor(u32),
}

impl fmt::Display for BPrimeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BPrimeForm::Exact => f.write_str("exact"),
            BPrimeForm::Taylor(k) => write!(f, "taylor:{k}"),
        }
    }
}

impl FromStr for BPrimeForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bprime must be `exact` or `taylor:K` with K >= 1, got `{s}`"));
        match s.trim() {
            "exact" => Ok(BPrimeForm::Exact),
            other => {
                let k: u32 = other
                    .strip_prefix("taylor:")
                    .and_then(|k| k.trim().parse().ok())
                    .ok_or_else(bad)?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(BPrimeForm::Taylor(k))
            }
        }
    }
}

fn binomial(k: u32, j: u32) -> f64 {
    (1..=j).fold(1.0, |acc, i| acc * (k - j + i) as f64 / i as f64)
}

fn factorial(i: u32) -> f64 {
    (1..=i).map(|m| m as f64).product()
}

/// `B′(n, e)`, the change in `b` when its argument moves from `n` to `n + e`.
pub fn bprime(b: &NonlinearitySpec, form: BPrimeForm, n: f64, e: f64) -> f64 {
    match form {
        BPrimeForm::Exact => match b {
            NonlinearitySpec::Zero => 0.0,
            NonlinearitySpec::Quadratic(a) => a * e * (e + 2.0 * n),
            NonlinearitySpec::Polynomial(coeffs) => coeffs
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let k = i as u32 + 2;
                    // (n+e)^k − n^k without the cancelling n^k terms
                    let s: f64 = (1..=k)
                        .map(|j| {
                            binomial(k, j) * math::powi(n, (k - j) as i32) * math::powi(e, j as i32)
                        })
                        .sum();
                    a * s
                })
                .sum(),
            NonlinearitySpec::Sinh(a) => {
                // cosh(e) − 1 = 2 sinh²(e/2)
                let half = math::sinh(0.5 * e);
                a * (math::cosh(n) * math::sinh(e) + math::sinh(n) * 2.0 * half * half)
            }
            NonlinearitySpec::Exp(a) => a * math::exp(n) * math::expm1(e),
        },
        BPrimeForm::Taylor(k) => {
            let mut power = 1.0;
            let mut sum = 0.0;
            for i in 1..=k {
                power *= e;
                sum += b.derivative(n, i) * power / factorial(i);
            }
            sum
        }
    }
}

/// `∂B′(n, e)/∂e`.
pub fn bprime_de(b: &NonlinearitySpec, form: BPrimeForm, n: f64, e: f64) -> f64 {
    match form {
        BPrimeForm::Exact => b.derivative(n + e, 1),
        BPrimeForm::Taylor(k) => {
            let mut power = 1.0;
            let mut sum = 0.0;
            for i in 1..=k {
                sum += b.derivative(n, i) * power / factorial(i - 1);
                power *= e;
            }
            sum
        }
    }
}

/// `A[ê] + B′(N, ê) + F[N]` per component at `x`.
pub fn error_residual(
    p: &ProblemSpec,
    frozen: &NetJet,
    candidate: &NetJet,
    form: BPrimeForm,
    x: &[f64],
) -> Result<Vec<f64>> {
    let terms = p.point_terms(x)?;
    let f_n = p.residual_with(&terms, frozen);
    Ok(candidate
        .0
        .iter()
        .zip(&frozen.0)
        .zip(f_n)
        .map(|((e, n), f)| {
            terms.coeffs.apply(e) + bprime(&p.nonlinearity, form, n.value, e.value) + f
        })
        .collect())
}

/// Mean of `|F[N](x)|` over `sample`, averaged across components.
///
/// Once `‖e‖ ≪ ‖N‖` the error equation is approximately linear in `e`, so the
/// mean residual tracks the mean error magnitude up to the size of the
/// linearised operator.
pub fn linear_indicator(
    p: &ProblemSpec,
    model: &dyn Predictor,
    sample: &[Vec<f64>],
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut total = 0.0;
    for x in sample {
        let r = p.residual(&model.primary_jet(x)?, x)?;
        total += r.iter().map(|v| math::abs(*v)).sum::<f64>() / r.len() as f64;
    }
    Ok(total / sample.len() as f64)
}

/// Short description used in diagnostics.
pub fn describe(b: &NonlinearitySpec, form: BPrimeForm) -> String {
    format!("{} / {form}", b.tag())
}
