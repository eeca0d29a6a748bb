//! Full benchmark at the default seed: error curves and timing.

use cophik::branin::{run_benchmark, BenchmarkConfig};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let report = run_benchmark(&BenchmarkConfig::with_seed(0)).unwrap();
    println!("total: {:?}", t0.elapsed());
    println!("ensemble mean error: {:.4}", report.ensemble_mean_error);
    for run in &report.runs {
        print!("{:>14}: ", run.name);
        for (n, e) in run.trajectory.error_curve() {
            print!("{n}:{e:.4} ");
        }
        println!();
        if let Some(f) = &run.trajectory.failure {
            println!("   FAILED: {f}");
        }
    }
}
