//! Scratch check of the benchmark bands.

use cophik::active::{fit_learner, FitContext, LearnerKind};
use cophik::branin::*;
use cophik::cophik::RhoSearchConfig;
use cophik::grid::relative_error;
use cophik::kriging::OptimizerConfig;
use cophik::linalg::NuggetPolicy;
use cophik::obs::ObservationSet;
use std::time::Instant;

fn main() {
    let grid = default_grid();
    let reference = branin_reference(&grid).unwrap();

    let t0 = Instant::now();
    for seed in 0..5u64 {
        let ens = generate_ensemble(&grid, 300, seed).unwrap();
        let err = relative_error(ens.mean_field(), &reference).unwrap();
        println!("seed {seed}: ensemble mean error = {err:.4}");
    }
    println!("ensemble gen x5: {:?}", t0.elapsed());

    let ens = generate_ensemble(&grid, 300, 0).unwrap();
    // std field max location
    let std = ens.std_field();
    let mut best = 0;
    for i in 0..grid.num_nodes() {
        if std.value(i) > std.value(best) {
            best = i;
        }
    }
    let p = grid.node_point(best);
    println!("max std at {:?}", p.coords);

    let t0 = Instant::now();
    for seed in 0..10u64 {
        let nodes = draw_observation_nodes(&grid, 8, seed).unwrap();
        let values: Vec<f64> = nodes.iter().map(|&i| reference.value(i)).collect();
        let obs = ObservationSet::from_grid_nodes(&grid, &nodes, &values).unwrap();
        let ctx = FitContext { grid: &grid, ensemble: Some(&ens), policy: NuggetPolicy::default() };
        let opt = OptimizerConfig { seed, ..Default::default() };
        let mut errs = Vec::new();
        for kind in [
            LearnerKind::OrdinaryKriging { opt: opt.clone() },
            LearnerKind::Phik,
            LearnerKind::ModifiedPhik,
            LearnerKind::Cophik { rho: RhoSearchConfig::default(), opt: opt.clone() },
        ] {
            let f = fit_learner(&kind, &ctx, &obs).unwrap();
            let (mean, _) = f.predict_fields(&grid);
            errs.push((kind.name(), relative_error(&mean, &reference).unwrap()));
        }
        println!("seed {seed}: {errs:?}");
    }
    println!("10 seeds x 4 learners: {:?}", t0.elapsed());
}
