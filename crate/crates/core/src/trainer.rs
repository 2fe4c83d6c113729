//! Collocation losses, Adam, and the estimate-then-correct driver.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::correction::{bprime, bprime_de, BPrimeForm};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::math;
use crate::model::{CorrectedModel, Correction, HardConstraint, Predictor, Stage, StageArch};
use crate::net::{JetAdjoint, NetworkConfig, ParameterVector};
use crate::problem::{BoundaryMode, DomainSpec, ProblemSpec};

/// Collocation RNG.
pub type SampleRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub max_iters: usize,
    /// Window length of the stopping rule.
    pub stop_window: usize,
    /// Minimum relative improvement between consecutive windows.
    pub stop_ratio: f64,
    pub resample_every: usize,
    pub seed: u64,
    /// Weight of the boundary term in the total loss.
    pub boundary_weight: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            n_interior: 128,
            n_boundary: 16,
            max_iters: 5000,
            stop_window: 500,
            stop_ratio: 1e-3,
            resample_every: 1,
            seed: 0,
            boundary_weight: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.learning_rate,
            self.epsilon,
            self.boundary_weight,
        ];
        let ok = positive.iter().all(|v| *v > 0.0 && v.is_finite())
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.stop_ratio > 0.0
            && self.stop_ratio < 1.0
            && self.n_interior > 0
            && self.n_boundary > 0
            && self.stop_window > 0
            && self.resample_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("invalid optimizer settings: {self:?}")))
        }
    }
}

/// `n` i.i.d. uniform points strictly inside the box.
pub fn sample_interior(dom: &DomainSpec, n: usize, rng: &mut SampleRng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dom.dim())
                .map(|k| loop {
                    let v = dom.lower[k] + rng.random::<f64>() * dom.extent(k);
                    if v > dom.lower[k] && v < dom.upper[k] {
                        break v;
                    }
                })
                .collect()
        })
        .collect()
}

/// `n` points on the faces: a face is picked with probability proportional
/// to its measure, then a point uniformly on it.
pub fn sample_boundary(dom: &DomainSpec, n: usize, rng: &mut SampleRng) -> Vec<Vec<f64>> {
    let d = dom.dim();
    let measures: Vec<f64> = (0..d)
        .map(|axis| (0..d).filter(|&k| k != axis).map(|k| dom.extent(k)).product())
        .collect();
    let total: f64 = 2.0 * measures.iter().sum::<f64>();
    (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut face = 2 * d - 1;
            for f in 0..2 * d {
                let m = measures[f / 2];
                if pick < m {
                    face = f;
                    break;
                }
                pick -= m;
            }
            let axis = face / 2;
            (0..d)
                .map(|k| {
                    if k == axis {
                        if face % 2 == 0 {
                            dom.lower[k]
                        } else {
                            dom.upper[k]
                        }
                    } else {
                        dom.lower[k] + rng.random::<f64>() * dom.extent(k)
                    }
                })
                .collect()
        })
        .collect()
}

/// Loss value split into its terms, plus the parameter gradient of the total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub interior: f64,
    pub boundary: f64,
    pub total: f64,
    pub grad: Vec<f64>,
}

fn check_points(interior: &[Vec<f64>], boundary: &[Vec<f64>], mode: BoundaryMode) -> Result<()> {
    if interior.is_empty() || (mode == BoundaryMode::Soft && boundary.is_empty()) {
        return Err(Error::EmptySample);
    }
    Ok(())
}

/// Mean squared residual plus weighted mean squared boundary mismatch.
///
/// In hard mode the boundary term is identically zero and `boundary` is
/// ignored.
pub fn loss_primary(
    p: &ProblemSpec,
    arch: &StageArch,
    params: &ParameterVector,
    interior: &[Vec<f64>],
    boundary: &[Vec<f64>],
    boundary_weight: f64,
) -> Result<LossEval> {
    check_points(interior, boundary, p.mode)?;
    let mut grad = vec![0.0; arch.param_count()];
    let scale = 2.0 / interior.len() as f64;
    let mut interior_sum = 0.0;
    for x in interior {
        let (nj, tape) = arch.jet_with_tape(params, x)?;
        let terms = p.point_terms(x)?;
        let r = p.residual_with(&terms, &nj);
        interior_sum += r.iter().map(|v| v * v).sum::<f64>();
        let adjoint = JetAdjoint(
            nj.0.iter()
                .zip(&r)
                .map(|(j, &rc)| {
                    let k = scale * rc;
                    Jet2 {
                        value: k * (terms.coeffs.c0 + p.nonlinearity.derivative(j.value, 1)),
                        gradient: terms.coeffs.c1.iter().map(|c| k * c).collect(),
                        laplacian: k * terms.coeffs.c2,
                    }
                })
                .collect(),
        );
        arch.backprop(params, &tape, &adjoint, &mut grad)?;
    }

    let mut boundary_mean = 0.0;
    if p.mode == BoundaryMode::Soft {
        let scale = 2.0 * boundary_weight / boundary.len() as f64;
        let mut sum = 0.0;
        for x in boundary {
            let (nj, tape) = arch.jet_with_tape(params, x)?;
            let target = p.boundary_values(x)?;
            let adjoint = value_adjoint(&nj.values(), &target, scale, x.len(), &mut sum);
            arch.backprop(params, &tape, &adjoint, &mut grad)?;
        }
        boundary_mean = sum / boundary.len() as f64;
    }
    let interior_mean = interior_sum / interior.len() as f64;
    Ok(LossEval {
        interior: interior_mean,
        boundary: boundary_mean,
        total: interior_mean + boundary_weight * boundary_mean,
        grad,
    })
}

// Adjoint of k/2·Σ(value − target)², accumulating Σ(value − target)² into `sum`.
fn value_adjoint(values: &[f64], target: &[f64], k: f64, dim: usize, sum: &mut f64) -> JetAdjoint {
    JetAdjoint(
        values
            .iter()
            .zip(target)
            .map(|(v, t)| {
                let diff = v - t;
                *sum += diff * diff;
                Jet2 {
                    value: k * diff,
                    gradient: vec![0.0; dim],
                    laplacian: 0.0,
                }
            })
            .collect(),
    )
}

/// Loss of a correction stage against the error equation of the frozen
/// model `frozen`:
/// `mean ‖A[ê] + B′(N, ê) + F[N]‖² + λ·mean ‖ê − (g_∂ − N)‖²`.
#[allow(clippy::too_many_arguments)]
pub fn loss_correction(
    p: &ProblemSpec,
    frozen: &dyn Predictor,
    arch: &StageArch,
    params: &ParameterVector,
    form: BPrimeForm,
    interior: &[Vec<f64>],
    boundary: &[Vec<f64>],
    boundary_weight: f64,
) -> Result<LossEval> {
    check_points(interior, boundary, p.mode)?;
    let mut grad = vec![0.0; arch.param_count()];
    let scale = 2.0 / interior.len() as f64;
    let mut interior_sum = 0.0;
    for x in interior {
        let n = frozen.jet(x)?;
        let (e, tape) = arch.jet_with_tape(params, x)?;
        let terms = p.point_terms(x)?;
        let f_n = p.residual_with(&terms, &n);
        let adjoint = JetAdjoint(
            e.0.iter()
                .zip(&n.0)
                .zip(&f_n)
                .map(|((ej, nj), f)| {
                    let r = terms.coeffs.apply(ej) + bprime(&p.nonlinearity, form, nj.value, ej.value) + f;
                    interior_sum += r * r;
                    let k = scale * r;
                    Jet2 {
                        value: k * (terms.coeffs.c0 + bprime_de(&p.nonlinearity, form, nj.value, ej.value)),
                        gradient: terms.coeffs.c1.iter().map(|c| k * c).collect(),
                        laplacian: k * terms.coeffs.c2,
                    }
                })
                .collect(),
        );
        arch.backprop(params, &tape, &adjoint, &mut grad)?;
    }

    let mut boundary_mean = 0.0;
    if p.mode == BoundaryMode::Soft {
        let scale = 2.0 * boundary_weight / boundary.len() as f64;
        let mut sum = 0.0;
        for x in boundary {
            let n = frozen.jet(x)?;
            let (e, tape) = arch.jet_with_tape(params, x)?;
            let target: Vec<f64> = p
                .boundary_values(x)?
                .iter()
                .zip(&n.0)
                .map(|(g, nj)| g - nj.value)
                .collect();
            let adjoint = value_adjoint(&e.values(), &target, scale, x.len(), &mut sum);
            arch.backprop(params, &tape, &adjoint, &mut grad)?;
        }
        boundary_mean = sum / boundary.len() as f64;
    }
    let interior_mean = interior_sum / interior.len() as f64;
    Ok(LossEval {
        interior: interior_mean,
        boundary: boundary_mean,
        total: interior_mean + boundary_weight * boundary_mean,
        grad,
    })
}

/// Which loss a training run minimises.
#[derive(Clone, Copy)]
pub enum Objective<'a> {
    Primary {
        problem: &'a ProblemSpec,
        arch: &'a StageArch,
    },
    Correction {
        problem: &'a ProblemSpec,
        frozen: &'a CorrectedModel,
        arch: &'a StageArch,
        form: BPrimeForm,
    },
}

impl Objective<'_> {
    fn problem(&self) -> &ProblemSpec {
        match self {
            Objective::Primary { problem, .. } | Objective::Correction { problem, .. } => problem,
        }
    }

    pub fn evaluate(
        &self,
        params: &ParameterVector,
        interior: &[Vec<f64>],
        boundary: &[Vec<f64>],
        boundary_weight: f64,
    ) -> Result<LossEval> {
        match *self {
            Objective::Primary { problem, arch } => {
                loss_primary(problem, arch, params, interior, boundary, boundary_weight)
            }
            Objective::Correction {
                problem,
                frozen,
                arch,
                form,
            } => loss_correction(
                problem,
                frozen,
                arch,
                params,
                form,
                interior,
                boundary,
                boundary_weight,
            ),
        }
    }
}

/// Millisecond clock for the training log. Runs that must be reproducible
/// byte for byte use [`NoClock`].
pub trait Clock {
    fn now_ms(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iter: usize,
    pub loss_interior: f64,
    pub loss_boundary: f64,
    pub loss_total: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
    Aborted,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
            StopReason::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
    pub stop: StopReason,
    /// Lowest total loss seen; the returned parameters are the ones that
    /// produced it.
    pub final_loss: f64,
}

/// A run that hit a non-finite loss, with the log up to that point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: Error,
    pub report: TrainReport,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &OptimizerConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - math::powi(cfg.beta1, self.t);
        let c2 = 1.0 - math::powi(cfg.beta2, self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / (math::sqrt(*v / c2) + cfg.epsilon);
        }
    }
}

/// True when the last window failed to improve on the one before it by the
/// required ratio.
fn plateaued(prefix: &[f64], window: usize, ratio: f64) -> bool {
    let n = prefix.len() - 1;
    if n < 2 * window {
        return false;
    }
    let recent = (prefix[n] - prefix[n - window]) / window as f64;
    let before = (prefix[n - window] - prefix[n - 2 * window]) / window as f64;
    recent > (1.0 - ratio) * before
}

/// Adam on `objective`, starting from `init`.
///
/// Collocation points are redrawn every `resample_every` steps. Training ends
/// when the windowed stopping rule fires or after `max_iters` steps; the
/// parameters with the lowest recorded loss are returned.
pub fn train(
    objective: Objective<'_>,
    init: ParameterVector,
    cfg: &OptimizerConfig,
    clock: &dyn Clock,
) -> core::result::Result<(ParameterVector, TrainReport), TrainFailure> {
    let problem = objective.problem();
    let dom = &problem.domain;
    let mut rng = SampleRng::seed_from_u64(cfg.seed);
    let mut params = init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut adam = Adam::new(params.len());
    let mut records = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut prefix = vec![0.0];
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let start = clock.now_ms();
    let mut stop = StopReason::MaxIters;

    for iter in 0..cfg.max_iters {
        if iter % cfg.resample_every == 0 {
            interior = sample_interior(dom, cfg.n_interior, &mut rng);
            if problem.mode == BoundaryMode::Soft {
                boundary = sample_boundary(dom, cfg.n_boundary, &mut rng);
            }
        }
        let fail = |error: Error, records: Vec<TrainRecord>| TrainFailure {
            error,
            report: TrainReport {
                records,
                stop: StopReason::Aborted,
                final_loss: best_loss,
            },
        };
        let eval = match objective.evaluate(&params, &interior, &boundary, cfg.boundary_weight) {
            Ok(e) => e,
            Err(error) => return Err(fail(error, records)),
        };
        let grad_norm = math::sqrt(eval.grad.iter().map(|g| g * g).sum());
        records.push(TrainRecord {
            iter,
            loss_interior: eval.interior,
            loss_boundary: eval.boundary,
            loss_total: eval.total,
            grad_norm,
            wall_ms: clock.now_ms() - start,
        });
        if !eval.total.is_finite() || !grad_norm.is_finite() {
            return Err(fail(Error::NonFiniteLoss { iter }, records));
        }
        if eval.total < best_loss {
            best_loss = eval.total;
            best.clone_from(&params);
        }
        prefix.push(prefix[iter] + eval.total);
        if plateaued(&prefix, cfg.stop_window, cfg.stop_ratio) {
            stop = StopReason::Converged;
            break;
        }
        adam.step(cfg, &mut params.0, &eval.grad);
    }

    let final_loss = if records.is_empty() { f64::NAN } else { best_loss };
    if records.is_empty() {
        best = params;
    }
    Ok((
        best,
        TrainReport {
            records,
            stop,
            final_loss,
        },
    ))
}

/// Stage architecture for the primary network of `p`.
pub fn primary_arch(p: &ProblemSpec, net: NetworkConfig) -> Result<StageArch> {
    Ok(StageArch {
        net,
        scale: 1.0,
        wrap: match p.mode {
            BoundaryMode::Soft => None,
            BoundaryMode::Hard => Some(HardConstraint::for_problem(p)?),
        },
    })
}

/// Stage architecture for a correction network of `p`. In hard mode the
/// frozen model already matches the slice data, so the correction vanishes
/// there.
pub fn correction_arch(p: &ProblemSpec, net: NetworkConfig, scale: f64) -> Result<StageArch> {
    Ok(StageArch {
        net,
        scale,
        wrap: match p.mode {
            BoundaryMode::Soft => None,
            BoundaryMode::Hard => Some(HardConstraint::homogeneous(p)?),
        },
    })
}

fn check_net(p: &ProblemSpec, net: &NetworkConfig) -> Result<()> {
    net.validate()?;
    if net.input_dim != p.dim() || net.output_dim != p.output_dim {
        return Err(Error::Config(alloc::format!(
            "network maps R^{} -> R^{}, problem needs R^{} -> R^{}",
            net.input_dim,
            net.output_dim,
            p.dim(),
            p.output_dim
        )));
    }
    Ok(())
}

fn config_failure(error: Error) -> TrainFailure {
    TrainFailure {
        error,
        report: TrainReport {
            records: Vec::new(),
            stop: StopReason::Aborted,
            final_loss: f64::NAN,
        },
    }
}

/// Trains the primary estimate `N`.
pub fn train_primary(
    p: &ProblemSpec,
    net: NetworkConfig,
    opt: &OptimizerConfig,
    clock: &dyn Clock,
) -> core::result::Result<(Stage, TrainReport), TrainFailure> {
    let arch = check_net(p, &net)
        .and_then(|_| opt.validate())
        .and_then(|_| primary_arch(p, net))
        .map_err(config_failure)?;
    let init = net.init(net.seed);
    let (params, report) = train(Objective::Primary { problem: p, arch: &arch }, init, opt, clock)?;
    Ok((Stage { arch, params }, report))
}

/// Output multiplier of a correction network.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CorrectionScale {
    /// Root of the frozen model's own loss on a fresh sample (see
    /// [`residual_scale`]).
    #[default]
    Auto,
    Fixed(f64),
}

/// `sqrt(mean ‖F[N]‖² + mean ‖N − g_∂‖²)` for the frozen model `N`, on a
/// sample drawn with the optimizer's sizes and seed. The residual and
/// boundary mismatch are the solver's own measures of how far `N` is from
/// the solution, so they set the magnitude a correction should start at.
/// Falls back to 1 when the model is exact on the sample.
pub fn residual_scale(p: &ProblemSpec, model: &dyn Predictor, opt: &OptimizerConfig) -> Result<f64> {
    let mut rng = SampleRng::seed_from_u64(opt.seed ^ 0x5ca1e);
    let interior = sample_interior(&p.domain, opt.n_interior, &mut rng);
    let mut sum = 0.0;
    for x in &interior {
        sum += p.residual(&model.jet(x)?, x)?.iter().map(|r| r * r).sum::<f64>();
    }
    let mut total = sum / interior.len() as f64;
    if p.mode == BoundaryMode::Soft {
        let boundary = sample_boundary(&p.domain, opt.n_boundary, &mut rng);
        let mut sum = 0.0;
        for x in &boundary {
            let n = model.jet(x)?;
            let g = p.boundary_values(x)?;
            sum += n.0.iter().zip(&g).map(|(j, g)| (j.value - g) * (j.value - g)).sum::<f64>();
        }
        total += sum / boundary.len() as f64;
    }
    let s = math::sqrt(total);
    Ok(if s > 0.0 && s.is_finite() { s } else { 1.0 })
}

/// Trains one more correction of `model` against its error equation.
/// Glorot initialisation with the output layer zeroed, so that training
/// starts from `ê ≡ 0`, i.e. from the frozen model itself.
pub fn correction_init(net: &NetworkConfig) -> ParameterVector {
    let mut init = net.init(net.seed);
    let (fan_in, fan_out) = *net.layer_shapes().last().expect("at least the output layer");
    let n = init.len();
    init.0[n - fan_in * fan_out - fan_out..].iter_mut().for_each(|v| *v = 0.0);
    init
}

pub fn train_correction(
    p: &ProblemSpec,
    model: &CorrectedModel,
    net: NetworkConfig,
    opt: &OptimizerConfig,
    form: BPrimeForm,
    scale: CorrectionScale,
    clock: &dyn Clock,
) -> core::result::Result<(Correction, TrainReport), TrainFailure> {
    let arch = check_net(p, &net)
        .and_then(|_| opt.validate())
        .and_then(|_| match scale {
            CorrectionScale::Auto => residual_scale(p, model, opt),
            CorrectionScale::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
            CorrectionScale::Fixed(s) => Err(Error::Config(alloc::format!(
                "correction scale must be positive, got {s}"
            ))),
        })
        .and_then(|s| correction_arch(p, net, s))
        .map_err(config_failure)?;
    let init = correction_init(&net);
    let objective = Objective::Correction {
        problem: p,
        frozen: model,
        arch: &arch,
        form,
    };
    let (params, report) = train(objective, init, opt, clock)?;
    Ok((
        Correction {
            stage: Stage { arch, params },
            form,
        },
        report,
    ))
}

/// Settings of the estimate-then-correct procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveAndCorrectConfig {
    pub primary_net: NetworkConfig,
    pub correction_net: NetworkConfig,
    pub primary_opt: OptimizerConfig,
    pub correction_opt: OptimizerConfig,
    pub n_corrections: usize,
    pub form: BPrimeForm,
    pub scale: CorrectionScale,
}

impl SolveAndCorrectConfig {
    /// Network and optimizer settings of correction `j` (1-based): seeds are
    /// offset by `j − 1` so successive corrections start differently.
    pub fn correction_stage(&self, j: usize) -> (NetworkConfig, OptimizerConfig) {
        let offset = (j - 1) as u64;
        let mut net = self.correction_net;
        net.seed = net.seed.wrapping_add(offset);
        let mut opt = self.correction_opt.clone();
        opt.seed = opt.seed.wrapping_add(offset);
        (net, opt)
    }
}

#[derive(Debug, Clone)]
pub struct SolveAndCorrectOutcome {
    /// All stages that finished; `None` only when the primary stage failed.
    pub model: Option<CorrectedModel>,
    /// One report per attempted stage, primary first.
    pub reports: Vec<TrainReport>,
    pub error: Option<Error>,
}

/// Train `N`, freeze it, then train `n_corrections` corrections in turn, each
/// against the error equation of the running sum of everything before it.
pub fn solve_and_correct(p: &ProblemSpec, cfg: &SolveAndCorrectConfig, clock: &dyn Clock) -> SolveAndCorrectOutcome {
    let mut reports = Vec::with_capacity(1 + cfg.n_corrections);
    let mut model = match train_primary(p, cfg.primary_net, &cfg.primary_opt, clock) {
        Ok((stage, report)) => {
            reports.push(report);
            CorrectedModel::new(stage)
        }
        Err(f) => {
            reports.push(f.report);
            return SolveAndCorrectOutcome {
                model: None,
                reports,
                error: Some(f.error),
            };
        }
    };
    for j in 1..=cfg.n_corrections {
        let (net, opt) = cfg.correction_stage(j);
        match train_correction(p, &model, net, &opt, cfg.form, cfg.scale, clock) {
            Ok((correction, report)) => {
                reports.push(report);
                model.push(correction);
            }
            Err(f) => {
                reports.push(f.report);
                return SolveAndCorrectOutcome {
                    model: Some(model),
                    reports,
                    error: Some(f.error),
                };
            }
        }
    }
    SolveAndCorrectOutcome {
        model: Some(model),
        reports,
        error: None,
    }
}
