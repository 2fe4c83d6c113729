//! Trains a primary network on z1, then one or more corrections, and prints
//! the true error of each successive estimate.
//!
//! ```sh
//! cargo run --release -p nnde-core --example correct_z1 -- [seed] [n_corr] [iters]
//! ```

use nnde_core::metrics::validate;
use nnde_core::trainer::{solve_and_correct, SolveAndCorrectConfig, NoClock, OptimizerConfig};
use nnde_core::{BPrimeForm, NetworkConfig, Zoo};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let n_corr: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let iters: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);

    let p = Zoo::SinhLine.build();
    let mut net = NetworkConfig::new(1, 1, 16, 2);
    net.seed = seed;
    let opt = OptimizerConfig {
        max_iters: iters,
        seed,
        ..Default::default()
    };
    let cfg = SolveAndCorrectConfig {
        primary_net: net,
        correction_net: net,
        primary_opt: opt.clone(),
        // The boundary mismatch of a trained network is tiny next to its
        // residual, so the correction's boundary term is weighted up.
        correction_opt: OptimizerConfig {
            boundary_weight: 100.0,
            ..opt
        },
        n_corrections: n_corr,
        form: BPrimeForm::Exact,
        scale: Default::default(),
    };
    let t = std::time::Instant::now();
    let out = solve_and_correct(&p, &cfg, &NoClock);
    let model = out.model.expect("primary stage trained");
    for (i, r) in out.reports.iter().enumerate() {
        println!(
            "stage {i}: {} iters, stop {:?}, best loss {:.3e}",
            r.records.len(),
            r.stop,
            r.final_loss
        );
    }
    for k in 0..=model.n_corrections() {
        let v = validate(&model.truncated(k), &p, 1000, 201, 99).unwrap();
        let s = &v.sample.stats;
        println!(
            "{k} corrections: L2 {:.3e} -> {:.3e} (ratio {:.3}), mean|e| / mean|F| = {:.3}, corr = {:.3}",
            s.l2_primary.unwrap(),
            s.l2_corrected.unwrap(),
            s.improvement_ratio.unwrap(),
            s.indicator_ratio.unwrap(),
            s.correlation.unwrap()
        );
    }
    println!("elapsed {:.1?}", t.elapsed());
}
