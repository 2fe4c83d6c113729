//! Differential equations `F[u] = A[u] + b(u) + g = 0` on a box.
//!
//! `A` is linear with coefficient fields (`c0·u + c1·∇u + c2·Δu`), `b` acts
//! pointwise on the solution value, and `g` does not depend on `u`. Systems
//! (`D > 1`) apply `A` and `b` componentwise.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::Jet2;
use crate::math;
use crate::net::NetJet;

/// `A[u](x) = c0(x)·u + Σ_i c1_i(x)·∂_i u + c2(x)·Δu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOpSpec {
    pub c0: Expr,
    pub c1: Vec<Expr>,
    pub c2: Expr,
}

/// Coefficients of a [`LinearOpSpec`] evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoeffs {
    pub c0: f64,
    pub c1: Vec<f64>,
    pub c2: f64,
}

impl LinearCoeffs {
    pub fn apply(&self, j: &Jet2) -> f64 {
        let drift: f64 = self.c1.iter().zip(&j.gradient).map(|(c, g)| c * g).sum();
        self.c0 * j.value + drift + self.c2 * j.laplacian
    }
}

impl LinearOpSpec {
    /// Pure Laplacian in `dim` dimensions.
    pub fn laplacian(dim: usize) -> Self {
        Self {
            c0: Expr::Const(0.0),
            c1: vec![Expr::Const(0.0); dim],
            c2: Expr::Const(1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.c1.len()
    }

    pub fn coefficients(&self, x: &[f64]) -> Result<LinearCoeffs> {
        let eval = |e: &Expr| match e {
            Expr::Const(c) => Ok(*c),
            _ => e.eval(x),
        };
        Ok(LinearCoeffs {
            c0: eval(&self.c0)?,
            c1: self.c1.iter().map(eval).collect::<Result<_>>()?,
            c2: eval(&self.c2)?,
        })
    }

    pub fn apply(&self, j: &Jet2, x: &[f64]) -> Result<f64> {
        Ok(self.coefficients(x)?.apply(j))
    }
}

/// Pointwise nonlinearity `b(u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearitySpec {
    Zero,
    /// `a·u²`
    Quadratic(f64),
    /// `Σ_{k≥2} a_k u^k`; element `i` holds `a_{i+2}`.
    Polynomial(Vec<f64>),
    /// `a·sinh(u)`
    Sinh(f64),
    /// `a·exp(u)`
    Exp(f64),
}

impl NonlinearitySpec {
    pub fn tag(&self) -> &'static str {
        match self {
            NonlinearitySpec::Zero => "zero",
            NonlinearitySpec::Quadratic(_) => "quadratic",
            NonlinearitySpec::Polynomial(_) => "polynomial",
            NonlinearitySpec::Sinh(_) => "sinh",
            NonlinearitySpec::Exp(_) => "exp",
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.derivative(u, 0)
    }

    /// `b^{(order)}(u)`; order 0 is `b` itself.
    pub fn derivative(&self, u: f64, order: u32) -> f64 {
        match self {
            NonlinearitySpec::Zero => 0.0,
            NonlinearitySpec::Quadratic(a) => match order {
                0 => a * u * u,
                1 => 2.0 * a * u,
                2 => 2.0 * a,
                _ => 0.0,
            },
            NonlinearitySpec::Polynomial(coeffs) => coeffs
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let k = i as u32 + 2;
                    if order > k {
                        return 0.0;
                    }
                    let falling: f64 = (k - order + 1..=k).map(|m| m as f64).product();
                    a * falling * math::powi(u, (k - order) as i32)
                })
                .sum(),
            NonlinearitySpec::Sinh(a) => {
                if order % 2 == 0 {
                    a * math::sinh(u)
                } else {
                    a * math::cosh(u)
                }
            }
            NonlinearitySpec::Exp(a) => a * math::exp(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// `g(x)` per output component.
    Explicit(Vec<Expr>),
    /// `g(x) := −A[Φ](x) − b(Φ(x))` for the given solution components.
    Manufactured(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Config(format!(
                "bounds must be nonempty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Config("every lower bound must be below its upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// True when `x` lies in the box with at least one coordinate on a bound.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.contains(x)
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .any(|(v, (l, u))| v == l || v == u)
    }
}

/// Where the constraint data lives and how it is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Dirichlet data on every face, penalised in the loss.
    #[default]
    Soft,
    /// Initial-value problem: data on the slice `x_{d-1} = lower`, built into
    /// the model so it holds exactly.
    Hard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub linear: LinearOpSpec,
    pub nonlinearity: NonlinearitySpec,
    pub source: SourceSpec,
    /// Dirichlet values per output component.
    pub boundary: Vec<Expr>,
    /// Known solution per output component, when available.
    pub solution: Option<Vec<Expr>>,
    pub output_dim: usize,
    pub mode: BoundaryMode,
}

/// Problem data evaluated once at a collocation point.
#[derive(Debug, Clone)]
pub struct PointTerms {
    pub coeffs: LinearCoeffs,
    /// Source term per component.
    pub source: Vec<f64>,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Structural checks: dimensions agree and expressions stay in range.
    pub fn check(&self) -> Result<()> {
        let d = self.dim();
        let fail = |m: String| Err(Error::Config(m));
        if self.linear.dim() != d {
            return fail(format!("c1 has {} entries, domain has dimension {d}", self.linear.dim()));
        }
        if self.output_dim == 0 || self.boundary.len() != self.output_dim {
            return fail(format!(
                "expected {} boundary expressions, got {}",
                self.output_dim,
                self.boundary.len()
            ));
        }
        let sources = match &self.source {
            SourceSpec::Explicit(g) | SourceSpec::Manufactured(g) => g,
        };
        if sources.len() != self.output_dim {
            return fail(format!("expected {} source expressions", self.output_dim));
        }
        if let Some(phi) = &self.solution {
            if phi.len() != self.output_dim {
                return fail(format!("expected {} solution expressions", self.output_dim));
            }
        }
        let mut all = self
            .boundary
            .iter()
            .chain(sources)
            .chain(self.solution.iter().flatten())
            .chain(&self.linear.c1)
            .chain([&self.linear.c0, &self.linear.c2]);
        if let Some(e) = all.find(|e| e.arity() > d) {
            return fail(format!("expression `{e}` uses a variable beyond dimension {d}"));
        }
        if let NonlinearitySpec::Polynomial(c) = &self.nonlinearity {
            if c.is_empty() {
                return fail("polynomial nonlinearity needs at least one coefficient".into());
            }
        }
        Ok(())
    }

    pub fn point_terms(&self, x: &[f64]) -> Result<PointTerms> {
        let coeffs = self.linear.coefficients(x)?;
        let source = match &self.source {
            SourceSpec::Explicit(g) => g.iter().map(|e| e.eval(x)).collect::<Result<_>>()?,
            SourceSpec::Manufactured(phi) => phi
                .iter()
                .map(|e| {
                    let j = e.eval_jet(x)?;
                    Ok(-coeffs.apply(&j) - self.nonlinearity.eval(j.value))
                })
                .collect::<Result<_>>()?,
        };
        Ok(PointTerms { coeffs, source })
    }

    /// `g(x)` per component.
    pub fn source_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.point_terms(x)?.source)
    }

    /// `F[N](x) = A[N] + b(N) + g` per component.
    pub fn residual(&self, nj: &NetJet, x: &[f64]) -> Result<Vec<f64>> {
        let terms = self.point_terms(x)?;
        Ok(self.residual_with(&terms, nj))
    }

    pub fn residual_with(&self, terms: &PointTerms, nj: &NetJet) -> Vec<f64> {
        nj.0.iter()
            .zip(&terms.source)
            .map(|(j, g)| terms.coeffs.apply(j) + self.nonlinearity.eval(j.value) + g)
            .collect()
    }

    pub fn boundary_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.boundary.iter().map(|e| e.eval(x)).collect()
    }

    pub fn solution_jet(&self, x: &[f64]) -> Option<Result<NetJet>> {
        self.solution.as_ref().map(|phi| {
            phi.iter()
                .map(|e| e.eval_jet(x))
                .collect::<Result<Vec<_>>>()
                .map(NetJet)
        })
    }

    pub fn solution_values(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.solution
            .as_ref()
            .map(|phi| phi.iter().map(|e| e.eval(x)).collect())
    }

    /// Axis treated as time in [`BoundaryMode::Hard`].
    pub fn time_axis(&self) -> usize {
        self.dim() - 1
    }
}

/// Builds a problem whose exact solution is `phi`: the source is chosen so
/// that `F[phi] = 0`, and the boundary data is `phi` itself.
pub fn manufacture(
    phi: Vec<Expr>,
    linear: LinearOpSpec,
    nonlinearity: NonlinearitySpec,
    domain: DomainSpec,
) -> Result<ProblemSpec> {
    let output_dim = phi.len();
    let centre: Vec<f64> = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    for e in &phi {
        e.eval_jet(&centre)?;
        for corner in [&domain.lower, &domain.upper] {
            e.eval_jet(corner)?;
        }
    }
    let p = ProblemSpec {
        domain,
        linear,
        nonlinearity,
        source: SourceSpec::Manufactured(phi.clone()),
        boundary: phi.clone(),
        solution: Some(phi),
        output_dim,
        mode: BoundaryMode::Soft,
    };
    p.check()?;
    Ok(p)
}

/// Built-in manufactured test problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zoo {
    /// 1D `u″ + sinh(u) + g = 0` on `[0,1]`, `Φ = sin(πx)`.
    SinhLine,
    /// 1D `u′ − u + u² + g = 0` on `[0,1]`, logistic `Φ`.
    Logistic,
    /// 3D `Δu + sinh(u) + g = 0` on `[0,1]³`, `Φ = sin(πx)sin(πy)sin(πz)`.
    SinhCube,
    /// 2D `Δu + exp(u) + g = 0` on `[0,1]²`, `Φ = xy(1−x)(1−y)`.
    ExpSquare,
}

impl Zoo {
    pub const ALL: [Zoo; 4] = [Zoo::SinhLine, Zoo::Logistic, Zoo::SinhCube, Zoo::ExpSquare];

    pub fn name(self) -> &'static str {
        match self {
            Zoo::SinhLine => "z1",
            Zoo::Logistic => "z2",
            Zoo::SinhCube => "z3",
            Zoo::ExpSquare => "z4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Zoo::ALL.into_iter().find(|z| z.name() == name)
    }

    pub fn build(self) -> ProblemSpec {
        let parse = |s: &str, d| Expr::parse(s, d).expect("zoo expression parses");
        let (phi, linear, b, d) = match self {
            Zoo::SinhLine => (
                "sin(pi*x)",
                LinearOpSpec::laplacian(1),
                NonlinearitySpec::Sinh(1.0),
                1,
            ),
            Zoo::Logistic => (
                "1/(1 + exp(-4*(x - 0.5)))",
                LinearOpSpec {
                    c0: Expr::Const(-1.0),
                    c1: vec![Expr::Const(1.0)],
                    c2: Expr::Const(0.0),
                },
                NonlinearitySpec::Quadratic(1.0),
                1,
            ),
            Zoo::SinhCube => (
                "sin(pi*x)*sin(pi*y)*sin(pi*z)",
                LinearOpSpec::laplacian(3),
                NonlinearitySpec::Sinh(1.0),
                3,
            ),
            Zoo::ExpSquare => (
                "x*y*(1 - x)*(1 - y)",
                LinearOpSpec::laplacian(2),
                NonlinearitySpec::Exp(1.0),
                2,
            ),
        };
        manufacture(vec![parse(phi, d)], linear, b, DomainSpec::unit(d))
            .expect("zoo problems are well defined")
    }
}
