//! Trainable stages and the corrected model built from them.

use alloc::vec;
use alloc::vec::Vec;

use crate::correction::BPrimeForm;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::Jet2;
use crate::math;
use crate::net::{self, JetAdjoint, NetJet, NetworkConfig, ParameterVector, Tape};
use crate::problem::{BoundaryMode, ProblemSpec};

/// Anything that yields jets of a (possibly multi-stage) solution estimate.
///
/// Stage 0 is the primary estimate `N`; later stages are corrections. The
/// prediction is the sum of all stages.
pub trait Predictor {
    fn stage_jets(&self, x: &[f64]) -> Result<Vec<NetJet>>;

    fn primary_jet(&self, x: &[f64]) -> Result<NetJet> {
        Ok(self.stage_jets(x)?.swap_remove(0))
    }

    fn jet(&self, x: &[f64]) -> Result<NetJet> {
        let mut stages = self.stage_jets(x)?.into_iter();
        let mut sum = stages.next().expect("at least one stage");
        for s in stages {
            sum.add_scaled(1.0, &s);
        }
        Ok(sum)
    }
}

/// Closed-form expressions used as a single-stage model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprModel {
    components: Vec<Expr>,
}

impl ExprModel {
    pub fn new(components: Vec<Expr>) -> Self {
        Self { components }
    }
}

impl Predictor for ExprModel {
    fn stage_jets(&self, x: &[f64]) -> Result<Vec<NetJet>> {
        let jets = self
            .components
            .iter()
            .map(|e| e.eval_jet(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(vec![NetJet(jets)])
    }
}

/// `N(x) = anchor(x₂) + (1 − e^{−(t − t₀)})·N₀(x)`, where `x₂` is `x`
/// projected onto the initial slice `t = t₀` and `t` is the last coordinate.
///
/// The model equals the anchor on the slice whatever `N₀` is.
#[derive(Debug, Clone, PartialEq)]
pub struct HardConstraint {
    pub time_axis: usize,
    pub t0: f64,
    /// Slice data with the time variable already fixed to `t0`.
    pub anchor: Vec<Expr>,
}

impl HardConstraint {
    /// Wrap reproducing the problem's initial data.
    pub fn for_problem(p: &ProblemSpec) -> Result<Self> {
        if p.mode != BoundaryMode::Hard {
            return Err(Error::Config(
                "hard-constraint wrapping needs an initial-value (hard mode) problem".into(),
            ));
        }
        let axis = p.time_axis();
        let t0 = p.domain.lower[axis];
        Ok(Self {
            time_axis: axis,
            t0,
            anchor: p.boundary.iter().map(|e| e.substitute(axis, t0)).collect(),
        })
    }

    /// Wrap vanishing on the slice, for correction stages of a hard-mode run.
    pub fn homogeneous(p: &ProblemSpec) -> Result<Self> {
        let mut h = Self::for_problem(p)?;
        h.anchor = vec![Expr::Const(0.0); p.output_dim];
        Ok(h)
    }

    /// `(dist, ∂dist/∂t, Δdist)` at `x`.
    pub fn distance(&self, x: &[f64]) -> (f64, f64, f64) {
        let s = x[self.time_axis] - self.t0;
        let decay = math::exp(-s);
        (-math::expm1(-s), decay, -decay)
    }

    fn distance_jet(&self, x: &[f64]) -> Jet2 {
        let (v, dt, lap) = self.distance(x);
        let mut gradient = vec![0.0; x.len()];
        gradient[self.time_axis] = dt;
        Jet2 {
            value: v,
            gradient,
            laplacian: lap,
        }
    }

    pub fn wrap(&self, core: &NetJet, x: &[f64]) -> Result<NetJet> {
        let dist = self.distance_jet(x);
        core.0
            .iter()
            .zip(&self.anchor)
            .map(|(c, a)| {
                let mut out = if a.is_zero_constant() {
                    Jet2::zero(x.len())
                } else {
                    a.eval_jet(x)?
                };
                out.add_scaled(1.0, &(&dist * c));
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
            .map(NetJet)
    }

    /// Maps an adjoint on the wrapped model to one on the core network.
    pub fn pull_back(&self, adjoint: &JetAdjoint, x: &[f64]) -> JetAdjoint {
        let dist = self.distance_jet(x);
        JetAdjoint(
            adjoint
                .0
                .iter()
                .map(|a| {
                    let dot: f64 = a.gradient.iter().zip(&dist.gradient).map(|(p, q)| p * q).sum();
                    Jet2 {
                        value: a.value * dist.value + dot + a.laplacian * dist.laplacian,
                        gradient: a
                            .gradient
                            .iter()
                            .zip(&dist.gradient)
                            .map(|(g, dg)| g * dist.value + 2.0 * a.laplacian * dg)
                            .collect(),
                        laplacian: a.laplacian * dist.value,
                    }
                })
                .collect(),
        )
    }
}

/// Network architecture of one stage: `scale · net(x)`, optionally inside a
/// hard-constraint wrap.
#[derive(Debug, Clone, PartialEq)]
pub struct StageArch {
    pub net: NetworkConfig,
    /// Fixed output multiplier, 1 for primary stages.
    pub scale: f64,
    pub wrap: Option<HardConstraint>,
}

/// Tape of one stage evaluation.
#[derive(Debug, Clone)]
pub struct StageTape {
    tape: Tape,
    x: Vec<f64>,
}

impl StageArch {
    pub fn plain(net: NetworkConfig) -> Self {
        Self {
            net,
            scale: 1.0,
            wrap: None,
        }
    }

    fn finish(&self, mut core: NetJet, x: &[f64]) -> Result<NetJet> {
        if self.scale != 1.0 {
            core.0.iter_mut().for_each(|j| *j = j.scale(self.scale));
        }
        match &self.wrap {
            Some(w) => w.wrap(&core, x),
            None => Ok(core),
        }
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn jet(&self, params: &ParameterVector, x: &[f64]) -> Result<NetJet> {
        let core = net::forward_jet(params, &self.net, x)?;
        self.finish(core, x)
    }

    pub fn jet_with_tape(&self, params: &ParameterVector, x: &[f64]) -> Result<(NetJet, StageTape)> {
        let (core, tape) = net::forward_tape(params, &self.net, x)?;
        let jet = self.finish(core, x)?;
        Ok((jet, StageTape { tape, x: x.to_vec() }))
    }

    pub fn backprop(
        &self,
        params: &ParameterVector,
        tape: &StageTape,
        adjoint: &JetAdjoint,
        grad: &mut [f64],
    ) -> Result<()> {
        let mut pulled = match &self.wrap {
            Some(w) => w.pull_back(adjoint, &tape.x),
            None => adjoint.clone(),
        };
        if self.scale != 1.0 {
            pulled.0.iter_mut().for_each(|j| *j = j.scale(self.scale));
        }
        tape.tape.backprop(params, &self.net, &pulled, grad)
    }
}

/// A stage with frozen parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub arch: StageArch,
    pub params: ParameterVector,
}

impl Stage {
    pub fn jet(&self, x: &[f64]) -> Result<NetJet> {
        self.arch.jet(&self.params, x)
    }
}

impl Predictor for Stage {
    fn stage_jets(&self, x: &[f64]) -> Result<Vec<NetJet>> {
        Ok(vec![self.jet(x)?])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub stage: Stage,
    pub form: BPrimeForm,
}

/// Frozen primary estimate plus an ordered list of frozen corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedModel {
    primary: Stage,
    corrections: Vec<Correction>,
}

impl CorrectedModel {
    pub fn new(primary: Stage) -> Self {
        Self {
            primary,
            corrections: Vec::new(),
        }
    }

    pub fn primary(&self) -> &Stage {
        &self.primary
    }

    pub fn corrections(&self) -> &[Correction] {
        &self.corrections
    }

    pub fn n_corrections(&self) -> usize {
        self.corrections.len()
    }

    /// Appends a correction; earlier stages are never touched.
    pub fn push(&mut self, correction: Correction) {
        self.corrections.push(correction);
    }

    /// The model with only its first `n` corrections.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            primary: self.primary.clone(),
            corrections: self.corrections[..n.min(self.corrections.len())].to_vec(),
        }
    }
}

impl Predictor for CorrectedModel {
    fn stage_jets(&self, x: &[f64]) -> Result<Vec<NetJet>> {
        let mut jets = Vec::with_capacity(1 + self.corrections.len());
        jets.push(self.primary.jet(x)?);
        for c in &self.corrections {
            jets.push(c.stage.jet(x)?);
        }
        Ok(jets)
    }
}
