//! The two CSV schemas.
//!
//! Training logs have the columns
//! `iter,loss_interior,loss_boundary,loss_total,grad_norm,wall_ms`.
//! Metrics files have `x0..x{d-1}` followed by
//! `n_value,corr_sum,phi,true_err,est_err,abs_residual`. With more than one
//! output component each of the latter six becomes `name_0, name_1, ...`.
//! Without a known solution the `phi` and `true_err` cells are empty.
//! Numbers print in Rust's shortest round-trip form.

use std::io::Write;

use nnde_core::metrics::MetricsRow;
use nnde_core::TrainRecord;

pub const TRAINING_HEADER: [&str; 6] = ["iter", "loss_interior", "loss_boundary", "loss_total", "grad_norm", "wall_ms"];
pub const METRIC_COLUMNS: [&str; 6] = ["n_value", "corr_sum", "phi", "true_err", "est_err", "abs_residual"];

pub fn write_training<W: Write>(out: W, records: &[TrainRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAINING_HEADER)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.loss_interior.to_string(),
            r.loss_boundary.to_string(),
            r.loss_total.to_string(),
            r.grad_norm.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_header(dim: usize, output_dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
    for name in METRIC_COLUMNS {
        if output_dim == 1 {
            h.push(name.to_string());
        } else {
            h.extend((0..output_dim).map(|c| format!("{name}_{c}")));
        }
    }
    h
}

pub fn write_metrics<W: Write>(out: W, dim: usize, output_dim: usize, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metrics_header(dim, output_dim))?;
    let nums = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>();
    let maybe = |v: &Option<Vec<f64>>| match v {
        Some(v) => nums(v),
        None => vec![String::new(); output_dim],
    };
    for r in rows {
        let mut rec = nums(&r.x);
        rec.extend(nums(&r.n_value));
        rec.extend(nums(&r.corr_sum));
        rec.extend(maybe(&r.phi));
        rec.extend(maybe(&r.true_err));
        rec.extend(nums(&r.est_err));
        rec.extend(nums(&r.abs_residual));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers() {
        assert_eq!(
            metrics_header(1, 1).join(","),
            "x0,n_value,corr_sum,phi,true_err,est_err,abs_residual"
        );
        assert_eq!(
            metrics_header(3, 1).join(","),
            "x0,x1,x2,n_value,corr_sum,phi,true_err,est_err,abs_residual"
        );
        assert_eq!(metrics_header(2, 2)[2..4], ["n_value_0", "n_value_1"]);
    }

    #[test]
    fn training_rows() {
        let r = TrainRecord {
            iter: 3,
            loss_interior: 0.5,
            loss_boundary: 0.25,
            loss_total: 0.75,
            grad_norm: 1e-3,
            wall_ms: 0.0,
        };
        let mut buf = Vec::new();
        write_training(&mut buf, &[r]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iter,loss_interior,loss_boundary,loss_total,grad_norm,wall_ms\n3,0.5,0.25,0.75,0.001,0\n"
        );
    }

    #[test]
    fn missing_solution_leaves_cells_empty() {
        let row = MetricsRow {
            x: vec![0.5],
            n_value: vec![1.0],
            corrections: vec![],
            corr_sum: vec![1.0],
            phi: None,
            true_err: None,
            est_err: vec![0.0],
            abs_residual: vec![2.0],
        };
        let mut buf = Vec::new();
        write_metrics(&mut buf, 1, 1, &[row]).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("\n0.5,1,1,,,0,2\n"));
    }
}
