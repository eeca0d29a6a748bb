//! Distribution of the ensemble-prior posterior error across observation
//! seeds, plus a hand-spread location set.

use cophik::branin::*;
use cophik::grid::{relative_error, Point};
use cophik::linalg::NuggetPolicy;
use cophik::phik::PhikModel;

fn main() {
    let grid = default_grid();
    let reference = branin_reference(&grid).unwrap();
    let ens = generate_ensemble(&grid, 300, 0).unwrap();
    let policy = NuggetPolicy::default();

    let mut errs = Vec::new();
    for seed in 0..40u64 {
        let nodes = draw_observation_nodes(&grid, 8, seed).unwrap();
        let values: Vec<f64> = nodes.iter().map(|&i| reference.value(i)).collect();
        let model = PhikModel::fit_at_nodes(&ens, &nodes, &values, &policy, cophik::phik::MeanShift::None).unwrap();
        let (mean, _) = model.predict_field();
        errs.push(relative_error(&mean, &reference).unwrap());
    }
    let mut sorted = errs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("plain prior posterior over 40 seeds:");
    println!("  min {:.3} q25 {:.3} median {:.3} q75 {:.3} max {:.3}",
        sorted[0], sorted[10], (sorted[19] + sorted[20]) / 2.0, sorted[30], sorted[39]);
    println!("  first 10 медиан: {:?}", &errs[..10]);

    // well-spread set
    let spread = [
        (0.15, 0.2), (0.8, 0.15), (0.5, 0.45), (0.2, 0.65),
        (0.55, 0.75), (0.85, 0.85), (0.35, 0.9), (0.7, 0.35),
    ];
    let nodes: Vec<usize> = spread
        .iter()
        .map(|&(x, y)| grid.nearest_node(&Point::new(vec![x, y])).unwrap().0)
        .collect();
    let values: Vec<f64> = nodes.iter().map(|&i| reference.value(i)).collect();
    let model = PhikModel::fit_at_nodes(&ens, &nodes, &values, &policy, cophik::phik::MeanShift::None).unwrap();
    let (mean, _) = model.predict_field();
    println!("spread set error: {:.4}", relative_error(&mean, &reference).unwrap());
    let modified = PhikModel::fit_at_nodes(&ens, &nodes, &values, &policy, cophik::phik::MeanShift::Fitted).unwrap();
    let (mean, _) = modified.predict_field();
    println!("spread set error (shifted mean): {:.4}", relative_error(&mean, &reference).unwrap());
}
