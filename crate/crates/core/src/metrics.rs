//! External validation against a known solution.
//!
//! None of this is available to the solver itself: it needs the true
//! solution to measure the error of the primary and corrected estimates, and
//! to check how well the residual tracks the error.

use alloc::vec::Vec;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::math;
pub use crate::model::Predictor;
use crate::problem::ProblemSpec;
use crate::trainer::{sample_interior, SampleRng};

/// Per-point values; vectors hold one entry per output component.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub x: Vec<f64>,
    /// Primary estimate `N(x)`.
    pub n_value: Vec<f64>,
    /// Value of each correction stage, in order.
    pub corrections: Vec<Vec<f64>>,
    /// `N + Σ corrections`.
    pub corr_sum: Vec<f64>,
    pub phi: Option<Vec<f64>>,
    /// `Φ − N`.
    pub true_err: Option<Vec<f64>>,
    /// `Σ corrections`, the estimate of `Φ − N`.
    pub est_err: Vec<f64>,
    /// `|F[N](x)|`.
    pub abs_residual: Vec<f64>,
}

/// Summary over one point set. Error fields are `None` without a known
/// solution. Ratios with a zero denominator and zero numerator are 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorStats {
    pub points: usize,
    pub l2_primary: Option<f64>,
    pub l2_corrected: Option<f64>,
    pub linf_primary: Option<f64>,
    pub linf_corrected: Option<f64>,
    /// `l2_corrected / l2_primary`.
    pub improvement_ratio: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub mean_abs_residual: f64,
    /// `mean |Φ − N| / mean |F[N]|`.
    pub indicator_ratio: Option<f64>,
    /// Pearson correlation of `|Φ − N|` and `|F[N]|`; 0 when either is constant.
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pub rows: Vec<MetricsRow>,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    /// Fresh uniform interior sample.
    pub sample: ValidationSet,
    /// Regular grid over the closed box, boundary included.
    pub grid: ValidationSet,
}

/// `res` points per axis over the closed box, last axis fastest.
pub fn regular_grid(p: &ProblemSpec, res: usize) -> Vec<Vec<f64>> {
    let d = p.dim();
    let axis = |k: usize, i: usize| {
        if res == 1 {
            0.5 * (p.domain.lower[k] + p.domain.upper[k])
        } else {
            p.domain.lower[k] + p.domain.extent(k) * i as f64 / (res - 1) as f64
        }
    };
    let total = res.pow(d as u32);
    (0..total)
        .map(|mut flat| {
            let mut x = alloc::vec![0.0; d];
            for k in (0..d).rev() {
                x[k] = axis(k, flat % res);
                flat /= res;
            }
            x
        })
        .collect()
}

pub fn metrics_rows(model: &dyn Predictor, p: &ProblemSpec, points: &[Vec<f64>]) -> Result<Vec<MetricsRow>> {
    points
        .iter()
        .map(|x| {
            let stages = model.stage_jets(x)?;
            let n = &stages[0];
            let n_value = n.values();
            let corrections: Vec<Vec<f64>> = stages[1..].iter().map(|s| s.values()).collect();
            let est_err: Vec<f64> = (0..n_value.len())
                .map(|c| corrections.iter().map(|v| v[c]).sum())
                .collect();
            let corr_sum: Vec<f64> = n_value.iter().zip(&est_err).map(|(a, b)| a + b).collect();
            let phi = p.solution_values(x).transpose()?;
            let true_err = phi
                .as_ref()
                .map(|phi| phi.iter().zip(&n_value).map(|(f, v)| f - v).collect());
            let abs_residual = p.residual(n, x)?.into_iter().map(math::abs).collect();
            Ok(MetricsRow {
                x: x.clone(),
                n_value,
                corrections,
                corr_sum,
                phi,
                true_err,
                est_err,
                abs_residual,
            })
        })
        .collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / math::sqrt(saa * sbb)
    }
}

/// Statistics over all rows and components. L2 errors are root mean squares.
pub fn summarize(rows: &[MetricsRow]) -> Result<ErrorStats> {
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let residuals: Vec<f64> = rows.iter().flat_map(|r| r.abs_residual.iter().copied()).collect();
    let mean_abs_residual = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let mut stats = ErrorStats {
        points: rows.len(),
        mean_abs_residual,
        ..Default::default()
    };
    if rows.iter().all(|r| r.phi.is_some()) {
        let mut primary = Vec::new();
        let mut corrected = Vec::new();
        for r in rows {
            let phi = r.phi.as_ref().expect("checked");
            primary.extend(phi.iter().zip(&r.n_value).map(|(f, v)| f - v));
            corrected.extend(phi.iter().zip(&r.corr_sum).map(|(f, v)| f - v));
        }
        let rms = |v: &[f64]| math::sqrt(v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64);
        let max = |v: &[f64]| v.iter().fold(0.0f64, |m, e| m.max(math::abs(*e)));
        let abs_err: Vec<f64> = primary.iter().map(|e| math::abs(*e)).collect();
        let mean_abs_error = abs_err.iter().sum::<f64>() / abs_err.len() as f64;
        let (l2p, l2c) = (rms(&primary), rms(&corrected));
        stats.l2_primary = Some(l2p);
        stats.l2_corrected = Some(l2c);
        stats.linf_primary = Some(max(&primary));
        stats.linf_corrected = Some(max(&corrected));
        stats.improvement_ratio = Some(ratio(l2c, l2p));
        stats.mean_abs_error = Some(mean_abs_error);
        stats.indicator_ratio = Some(ratio(mean_abs_error, mean_abs_residual));
        stats.correlation = Some(pearson(&abs_err, &residuals));
    }
    Ok(stats)
}

/// Evaluates `model` on `n_points` fresh interior points and on a regular
/// grid with `grid_res` points per axis.
pub fn validate(
    model: &dyn Predictor,
    p: &ProblemSpec,
    n_points: usize,
    grid_res: usize,
    seed: u64,
) -> Result<ValidationSummary> {
    let mut rng = SampleRng::seed_from_u64(seed);
    let sample_pts = sample_interior(&p.domain, n_points, &mut rng);
    let grid_pts = regular_grid(p, grid_res);
    let set = |pts: &[Vec<f64>]| -> Result<ValidationSet> {
        let rows = metrics_rows(model, p, pts)?;
        let stats = summarize(&rows)?;
        Ok(ValidationSet { rows, stats })
    };
    Ok(ValidationSummary {
        sample: set(&sample_pts)?,
        grid: set(&grid_pts)?,
    })
}
