//! Median error of the ensemble-prior posterior under different seed
//! protocols.

use cophik::branin::*;
use cophik::grid::relative_error;
use cophik::linalg::NuggetPolicy;
use cophik::phik::PhikModel;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
}

fn main() {
    let grid = default_grid();
    let reference = branin_reference(&grid).unwrap();
    let policy = NuggetPolicy::default();

    for ens_seed in 0..5u64 {
        let ens = generate_ensemble(&grid, 300, ens_seed).unwrap();
        let errs: Vec<f64> = (0..10u64)
            .map(|seed| {
                let nodes = draw_observation_nodes(&grid, 8, seed).unwrap();
                let values: Vec<f64> = nodes.iter().map(|&i| reference.value(i)).collect();
                let model =
                    PhikModel::fit_at_nodes(&ens, &nodes, &values, &policy, cophik::phik::MeanShift::None).unwrap();
                let (mean, _) = model.predict_field();
                relative_error(&mean, &reference).unwrap()
            })
            .collect();
        println!("ens seed {ens_seed}: median {:.3}", median(errs));
    }

    // paired protocol: one seed drives ensemble and observation draw
    let errs: Vec<f64> = (0..10u64)
        .map(|seed| {
            let ens = generate_ensemble(&grid, 300, seed).unwrap();
            let nodes = draw_observation_nodes(&grid, 8, seed).unwrap();
            let values: Vec<f64> = nodes.iter().map(|&i| reference.value(i)).collect();
            let model = PhikModel::fit_at_nodes(&ens, &nodes, &values, &policy, cophik::phik::MeanShift::None).unwrap();
            let (mean, _) = model.predict_field();
            relative_error(&mean, &reference).unwrap()
        })
        .collect();
    println!("paired protocol: median {:.3}  values {:?}", median(errs.clone()), errs);
}
