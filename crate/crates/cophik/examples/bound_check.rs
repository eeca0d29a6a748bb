//! Bound reports on the Branin ensemble with the x-derivative operator.

use cophik::branin::*;
use cophik::constraint::*;
use cophik::cophik::{CophikModel, RhoSearchConfig};
use cophik::kriging::OptimizerConfig;
use cophik::linalg::NuggetPolicy;
use cophik::obs::ObservationSet;
use cophik::phik::{MeanShift, PhikModel};

fn main() {
    let grid = default_grid();
    let reference = branin_reference(&grid).unwrap();
    let ens = generate_ensemble(&grid, 300, 0).unwrap();
    let nodes = draw_observation_nodes(&grid, 8, 0).unwrap();
    let values: Vec<f64> = nodes.iter().map(|&i| reference.value(i)).collect();
    let obs = ObservationSet::from_grid_nodes(&grid, &nodes, &values).unwrap();
    let policy = NuggetPolicy::default();
    let op = LinearOperatorSpec::Derivative { axis: 0 };
    let cdata = ConstraintData::from_operator(&ens, &op).unwrap();

    // theorem 1 with the fitted shift
    let model = PhikModel::fit_at_nodes(
        &ens,
        &nodes,
        &values,
        &policy,
        MeanShift::Fitted,
    )
    .unwrap();
    let report = theorem1_bound(&ens, &obs, model.delta_mu(), &op, &cdata, &policy).unwrap();
    println!(
        "thm1: pass={} lhs={:.4e} rhs={:.4e} eps={:.1e} spread={:.4e} opmean={:.4e} (delta_mu={:.4})",
        report.pass, report.lhs, report.rhs, report.eps_term, report.spread_term,
        report.operator_mean_term, model.delta_mu()
    );

    // theorem 2 with a full fit
    let cmodel = CophikModel::fit_at_nodes(
        &ens,
        &nodes,
        &values,
        &RhoSearchConfig::default(),
        &OptimizerConfig { seed: 0, ..Default::default() },
        &policy,
    )
    .unwrap();
    println!("fitted rho = {}, y_l source = {}", cmodel.rho(), cmodel.y_l_source());
    let report = theorem2_bound(&cmodel, &op, &cdata).unwrap();
    println!(
        "thm2: pass={} lhs={:.4e} rhs={:.4e} terms: eps={:.3e} gap={:.3e} spread={:.3e} opmean={:.3e} kd={:.3e} flag={}",
        report.pass, report.lhs, report.rhs, report.eps_term, report.mean_gap_term,
        report.spread_term, report.operator_mean_term, report.kd_term, report.rho_above_one
    );
}
