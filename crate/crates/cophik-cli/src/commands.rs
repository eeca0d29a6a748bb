//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use cophik::active::{active_learn, fit_learner, FitContext, FittedLearner, LearnerKind};
use cophik::branin::{self, BenchmarkConfig, GENERATOR_ID};
use cophik::constraint::{
    theorem1_bound, theorem2_bound, ConstraintData, LinearOperatorSpec,
};
use cophik::cophik::CophikModel;
use cophik::grid::{Field, Grid};
use cophik::obs::ObservationSet;
use cophik::phik::{Ensemble, MeanShift, PhikModel};

use crate::formats::{
    bound_report_to_string, grid_spec_string, read_ensemble, read_field, read_observations,
    trajectory_to_string, write_ensemble, write_field, write_observations, RunConfig,
};

pub fn parse_learner(name: &str, cfg: &RunConfig, seed: u64) -> Result<LearnerKind> {
    match name {
        "ordinary-kriging" | "kriging" => {
            Ok(LearnerKind::OrdinaryKriging { opt: cfg.optimizer(seed) })
        }
        "phik" => Ok(LearnerKind::Phik),
        "modified-phik" => Ok(LearnerKind::ModifiedPhik),
        "cophik" => Ok(LearnerKind::Cophik { rho: cfg.rho(), opt: cfg.optimizer(seed) }),
        other => bail!(
            "unknown learner `{other}`; expected ordinary-kriging, phik, modified-phik, or cophik"
        ),
    }
}

/// Move every observation onto its nearest grid node. Nonzero snap
/// distances are reported on stderr and in the returned log lines.
pub fn snap_observations(
    obs: &ObservationSet,
    grid: &Grid,
) -> Result<(ObservationSet, Vec<String>)> {
    let mut nodes = Vec::with_capacity(obs.len());
    let mut log = Vec::new();
    for (p, v) in obs.locations().iter().zip(obs.values()) {
        let (node, dist) = grid.nearest_node(p)?;
        let h = grid
            .axes()
            .iter()
            .map(|a| a.spacing())
            .fold(f64::INFINITY, f64::min);
        if dist > 1e-9 * h {
            let target = grid.node_point(node);
            let line = format!(
                "snapped observation at {:?} to node {:?} (distance {dist:e})",
                p.coords, target.coords
            );
            eprintln!("warning: {line}");
            log.push(line);
        }
        nodes.push((node, *v));
    }
    let values: Vec<f64> = nodes.iter().map(|&(_, v)| v).collect();
    let node_ids: Vec<usize> = nodes.iter().map(|&(n, _)| n).collect();
    let snapped = ObservationSet::from_grid_nodes(grid, &node_ids, &values)
        .context("observations collide after snapping to grid nodes")?;
    Ok((snapped, log))
}

pub struct EnsembleGenArgs<'a> {
    pub cfg: RunConfig,
    pub grid_spec: Option<String>,
    pub seed: Option<u64>,
    pub members: Option<usize>,
    pub out: &'a Path,
}

pub fn cmd_ensemble_gen(args: EnsembleGenArgs<'_>) -> Result<()> {
    let seed = args.seed.unwrap_or(args.cfg.seed);
    let members = args.members.unwrap_or(args.cfg.ensemble_size);
    let grid = match args.grid_spec.as_deref().or(args.cfg.grid.as_deref()) {
        Some(spec) => crate::formats::parse_grid_spec(spec)?,
        None => branin::default_grid(),
    };
    let ens = branin::generate_ensemble(&grid, members, seed)?;
    write_ensemble(args.out, &ens, GENERATOR_ID, seed)?;
    println!("wrote {} members to {}", members, args.out.display());
    Ok(())
}

pub struct FitArgs<'a> {
    pub cfg: RunConfig,
    pub learner: String,
    pub obs_path: &'a Path,
    pub grid_spec: Option<String>,
    pub ensemble_dir: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
    /// also write the fit report
    pub with_report: bool,
}

pub fn cmd_fit_predict(args: FitArgs<'_>) -> Result<()> {
    let seed = args.seed.unwrap_or(args.cfg.seed);
    let kind = parse_learner(&args.learner, &args.cfg, seed)?;
    let obs = read_observations(args.obs_path)?;
    let policy = args.cfg.nugget();

    let loaded = match (kind.needs_ensemble(), args.ensemble_dir) {
        (true, Some(dir)) => Some(read_ensemble(dir)?),
        (true, None) => bail!("{} requires --ensemble", kind.name()),
        (false, Some(_)) => bail!("{} does not take an ensemble", kind.name()),
        (false, None) => None,
    };

    let grid = match (&loaded, args.grid_spec.as_deref().or(args.cfg.grid.as_deref())) {
        (Some(l), Some(spec)) => {
            let g = crate::formats::parse_grid_spec(spec)?;
            if &g != l.ensemble.grid() {
                bail!("--grid does not match the ensemble grid");
            }
            g
        }
        (Some(l), None) => l.ensemble.grid().clone(),
        (None, Some(spec)) => crate::formats::parse_grid_spec(spec)?,
        (None, None) => bail!("kriging needs --grid to define the prediction nodes"),
    };

    let (obs, snap_log) = if kind.needs_ensemble() {
        snap_observations(&obs, &grid)?
    } else {
        obs.validate_in_domain(&grid)?;
        (obs, Vec::new())
    };

    let ctx = FitContext { grid: &grid, ensemble: loaded.as_ref().map(|l| &l.ensemble), policy };
    let fitted = fit_learner(&kind, &ctx, &obs)?;
    let (mean, variance) = fitted.predict_fields(&grid);
    let rmse = Field::new(grid.clone(), variance.values().iter().map(|v| v.sqrt()).collect())?;

    fs::create_dir_all(args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_field(&args.out.join("mean.fld"), &mean)?;
    write_field(&args.out.join("rmse.fld"), &rmse)?;
    if args.with_report {
        let mut report = String::new();
        writeln!(report, "learner = {}", kind.name()).unwrap();
        writeln!(report, "observations = {}", obs.len()).unwrap();
        writeln!(report, "grid = {}", grid_spec_string(&grid)).unwrap();
        writeln!(report, "seed = {seed}").unwrap();
        if let Some(l) = &loaded {
            writeln!(report, "ensemble_members = {}", l.ensemble.size()).unwrap();
            writeln!(report, "ensemble_generator = {}", l.generator).unwrap();
            if let Some(s) = l.seed {
                writeln!(report, "ensemble_seed = {s}").unwrap();
            }
        }
        match &fitted {
            FittedLearner::Kriging(m) => {
                writeln!(report, "mu = {}", m.mu_hat()).unwrap();
                writeln!(report, "sigma2 = {}", m.sigma2_hat()).unwrap();
                let lengths =
                    m.lengths().iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",");
                writeln!(report, "lengths = {lengths}").unwrap();
                writeln!(report, "log_likelihood = {}", m.log_likelihood()).unwrap();
                writeln!(report, "nugget = {}", m.nugget()).unwrap();
            }
            FittedLearner::Phik(m) => {
                writeln!(report, "delta_mu = {}", m.delta_mu()).unwrap();
                writeln!(report, "nugget = {}", m.factorization().alpha()).unwrap();
            }
            FittedLearner::Cophik(m) => {
                writeln!(report, "rho = {}", m.rho()).unwrap();
                writeln!(report, "mu_d = {}", m.mu_d()).unwrap();
                writeln!(report, "sigma2_d = {}", m.sigma2_d_raw()).unwrap();
                let lengths = m
                    .discrepancy_lengths()
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                writeln!(report, "discrepancy_lengths = {lengths}").unwrap();
                writeln!(report, "y_l_source = {}", m.y_l_source()).unwrap();
                writeln!(report, "nugget_c1 = {}", m.c1_factorization().alpha()).unwrap();
                writeln!(report, "nugget_c2 = {}", m.c2_factorization().alpha()).unwrap();
            }
        }
        for line in &snap_log {
            writeln!(report, "snap = {line}").unwrap();
        }
        fs::write(args.out.join("fit_report.txt"), report)?;
    }
    println!("wrote posterior fields to {}", args.out.display());
    Ok(())
}

pub struct ActiveLearnArgs<'a> {
    pub cfg: RunConfig,
    pub learner: String,
    pub oracle_path: &'a Path,
    pub obs_path: &'a Path,
    pub n_max: Option<usize>,
    pub ensemble_dir: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

pub fn cmd_active_learn(args: ActiveLearnArgs<'_>) -> Result<()> {
    let seed = args.seed.unwrap_or(args.cfg.seed);
    let n_max = args.n_max.unwrap_or(args.cfg.n_max);
    let kind = parse_learner(&args.learner, &args.cfg, seed)?;
    let oracle = read_field(args.oracle_path)?;
    let grid = oracle.grid().clone();
    let obs = read_observations(args.obs_path)?;
    let (obs, _snap_log) = snap_observations(&obs, &grid)?;

    let loaded = match (kind.needs_ensemble(), args.ensemble_dir) {
        (true, Some(dir)) => Some(read_ensemble(dir)?),
        (true, None) => bail!("{} requires --ensemble", kind.name()),
        (false, _) => None,
    };
    if let Some(l) = &loaded {
        if l.ensemble.grid() != &grid {
            bail!("ensemble grid does not match the oracle field grid");
        }
    }

    let ctx = FitContext {
        grid: &grid,
        ensemble: loaded.as_ref().map(|l| &l.ensemble),
        policy: args.cfg.nugget(),
    };
    let trajectory = active_learn(&kind, &ctx, &oracle, &oracle, &obs, n_max)?;

    fs::create_dir_all(args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(
        args.out.join("trajectory.csv"),
        trajectory_to_string(&grid, &trajectory.steps),
    )?;
    let mut summary = String::new();
    writeln!(summary, "learner = {}", kind.name()).unwrap();
    writeln!(summary, "initial_observations = {}", obs.len()).unwrap();
    writeln!(summary, "n_max = {n_max}").unwrap();
    writeln!(summary, "seed = {seed}").unwrap();
    writeln!(summary, "steps = {}", trajectory.steps.len()).unwrap();
    if let Some(final_fit) = &trajectory.final_fit {
        let rmse = Field::new(
            grid.clone(),
            final_fit.variance.values().iter().map(|v| v.sqrt()).collect(),
        )?;
        write_field(&args.out.join("final_mean.fld"), &final_fit.mean)?;
        write_field(&args.out.join("final_rmse.fld"), &rmse)?;
        writeln!(summary, "final_rel_error = {}", final_fit.rel_error).unwrap();
    }
    if let Some(failure) = &trajectory.failure {
        writeln!(summary, "failure = {failure}").unwrap();
    }
    fs::write(args.out.join("summary.txt"), summary)?;

    if let Some(failure) = &trajectory.failure {
        bail!(cophik::CophikError::OptimizationFailed(format!(
            "active learning aborted: {failure}"
        )));
    }
    println!("wrote trajectory and final fields to {}", args.out.display());
    Ok(())
}

pub fn parse_operator(spec: &str) -> Result<LinearOperatorSpec> {
    if spec == "laplacian" {
        return Ok(LinearOperatorSpec::Laplacian);
    }
    if let Some(axis) = spec.strip_prefix("ddx:") {
        return Ok(LinearOperatorSpec::Derivative {
            axis: axis.parse().with_context(|| format!("bad axis `{axis}`"))?,
        });
    }
    if let Some(nodes) = spec.strip_prefix("point:") {
        let nodes = nodes
            .split(',')
            .map(|s| s.parse::<usize>().with_context(|| format!("bad node index `{s}`")))
            .collect::<Result<Vec<_>>>()?;
        return Ok(LinearOperatorSpec::PointEvaluation { nodes });
    }
    bail!("unknown operator `{spec}`; expected ddx:<axis>, laplacian, or point:<i,j,...>")
}

pub struct VerifyBoundArgs<'a> {
    pub cfg: RunConfig,
    pub ensemble_dir: &'a Path,
    pub obs_path: &'a Path,
    pub operator: String,
    pub theorem: u8,
    pub g_dir: Option<&'a Path>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

fn load_constraint_data(
    ens: &Ensemble,
    op: &LinearOperatorSpec,
    g_dir: Option<&Path>,
    epsilon: Option<f64>,
) -> Result<ConstraintData> {
    let mut cdata = match g_dir {
        None => ConstraintData::from_operator(ens, op)?,
        Some(dir) => {
            if matches!(op, LinearOperatorSpec::PointEvaluation { .. }) {
                bail!("--g-dir expects field-valued operators (ddx or laplacian)");
            }
            let g_members = (0..ens.size())
                .map(|i| {
                    let f = read_field(&dir.join(format!("member_{i:04}.fld")))?;
                    if f.grid() != ens.grid() {
                        bail!("constraint field {i} is on a different grid");
                    }
                    Ok(f.values().to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            ConstraintData { g_members, epsilon: None }
        }
    };
    cdata.epsilon = epsilon;
    Ok(cdata)
}

pub fn cmd_verify_bound(args: VerifyBoundArgs<'_>) -> Result<()> {
    let seed = args.seed.unwrap_or(args.cfg.seed);
    let loaded = read_ensemble(args.ensemble_dir)?;
    let ens = &loaded.ensemble;
    let op = parse_operator(&args.operator)?;
    op.validate(ens.grid()).map_err(|e| anyhow!(e))?;
    let obs = read_observations(args.obs_path)?;
    let (obs, _log) = snap_observations(&obs, ens.grid())?;
    let cdata = load_constraint_data(ens, &op, args.g_dir, args.epsilon)?;
    let policy = args.cfg.nugget();

    let report = match args.theorem {
        1 => {
            let nodes = obs.node_indices(ens.grid())?;
            let model =
                PhikModel::fit_at_nodes(ens, &nodes, obs.values(), &policy, MeanShift::Fitted)?;
            theorem1_bound(ens, &obs, model.delta_mu(), &op, &cdata, &policy)?
        }
        2 => {
            let model = CophikModel::fit(ens, &obs, &args.cfg.rho(), &args.cfg.optimizer(seed), &policy)?;
            theorem2_bound(&model, &op, &cdata)?
        }
        other => bail!("--theorem must be 1 or 2, got {other}"),
    };

    fs::create_dir_all(args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let text = bound_report_to_string(&report);
    fs::write(args.out.join("bound_report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub struct BenchArgs<'a> {
    pub cfg: RunConfig,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

pub fn cmd_bench_branin(args: BenchArgs<'_>) -> Result<()> {
    let seed = args.seed.unwrap_or(args.cfg.seed);
    let mut bench = BenchmarkConfig::with_seed(seed);
    bench.ensemble_size = args.cfg.ensemble_size;
    bench.initial_observations = args.cfg.initial_observations;
    bench.max_observations = args.cfg.n_max;
    bench.policy = args.cfg.nugget();
    bench.learners = vec![
        LearnerKind::OrdinaryKriging { opt: args.cfg.optimizer(seed) },
        LearnerKind::Phik,
        LearnerKind::ModifiedPhik,
        LearnerKind::Cophik { rho: args.cfg.rho(), opt: args.cfg.optimizer(seed) },
    ];
    let report = branin::run_benchmark(&bench)?;
    let grid = report.reference.grid().clone();

    fs::create_dir_all(args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_field(&args.out.join("reference.fld"), &report.reference)?;
    write_ensemble(&args.out.join("ensemble"), &report.ensemble, GENERATOR_ID, seed)?;

    // initial observation table
    let values: Vec<f64> = report.initial_nodes.iter().map(|&i| report.reference.value(i)).collect();
    let obs0 = ObservationSet::from_grid_nodes(&grid, &report.initial_nodes, &values)?;
    write_observations(&args.out.join("initial_observations.csv"), &obs0)?;

    let mut curve = String::from("learner,n_obs,rel_error\n");
    for (name, n, e) in report.error_rows() {
        writeln!(curve, "{name},{n},{e}").unwrap();
    }
    fs::write(args.out.join("error_curve.csv"), curve)?;

    let mut manifest = String::new();
    writeln!(manifest, "#branin-benchmark v1").unwrap();
    writeln!(manifest, "seed = {seed}").unwrap();
    writeln!(manifest, "generator = {GENERATOR_ID}").unwrap();
    writeln!(manifest, "grid = {}", grid_spec_string(&grid)).unwrap();
    writeln!(manifest, "ensemble_size = {}", bench.ensemble_size).unwrap();
    writeln!(manifest, "initial_observations = {}", bench.initial_observations).unwrap();
    writeln!(manifest, "max_observations = {}", bench.max_observations).unwrap();
    writeln!(manifest, "ensemble_mean_error = {}", report.ensemble_mean_error).unwrap();
    let nodes = report
        .initial_nodes
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",");
    writeln!(manifest, "initial_nodes = {nodes}").unwrap();

    let mut failed = Vec::new();
    for run in &report.runs {
        fs::write(
            args.out.join(format!("{}_trajectory.csv", run.name)),
            trajectory_to_string(&grid, &run.trajectory.steps),
        )?;
        if let Some(final_fit) = &run.trajectory.final_fit {
            let rmse = Field::new(
                grid.clone(),
                final_fit.variance.values().iter().map(|v| v.sqrt()).collect(),
            )?;
            write_field(&args.out.join(format!("{}_mean.fld", run.name)), &final_fit.mean)?;
            write_field(&args.out.join(format!("{}_rmse.fld", run.name)), &rmse)?;
            writeln!(manifest, "final_error_{} = {}", run.name, final_fit.rel_error).unwrap();
        }
        if let Some(failure) = &run.trajectory.failure {
            writeln!(manifest, "failure_{} = {failure}", run.name).unwrap();
            failed.push(run.name.clone());
        }
    }
    fs::write(args.out.join("manifest.txt"), manifest)?;
    if !failed.is_empty() {
        bail!(cophik::CophikError::OptimizationFailed(format!(
            "learners failed during the benchmark: {}",
            failed.join(", ")
        )));
    }
    println!("benchmark complete; outputs in {}", args.out.display());
    Ok(())
}
