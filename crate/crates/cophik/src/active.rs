//! Greedy active learning: refit the learner, place the next observation
//! at the grid node with the largest posterior MSE, query the ground
//! truth there, repeat until the observation budget is spent.

use std::collections::HashSet;

use crate::cophik::{CophikModel, RhoSearchConfig};
use crate::error::{CophikError, Result};
use crate::grid::{relative_error, Field, Grid};
use crate::kriging::{fit_hyperparameters, OptimizerConfig, OrdinaryKrigingModel};
use crate::linalg::NuggetPolicy;
use crate::obs::ObservationSet;
use crate::phik::{Ensemble, PhikModel};

/// Something that can be observed at any grid node.
pub trait GroundTruth {
    fn value_at(&self, node: usize) -> f64;
}

impl GroundTruth for Field {
    fn value_at(&self, node: usize) -> f64 {
        self.value(node)
    }
}

impl<F: Fn(usize) -> f64> GroundTruth for F {
    fn value_at(&self, node: usize) -> f64 {
        self(node)
    }
}

/// Which regression method drives the loop, with its configuration.
#[derive(Debug, Clone)]
pub enum LearnerKind {
    OrdinaryKriging { opt: OptimizerConfig },
    Phik,
    ModifiedPhik,
    Cophik { rho: RhoSearchConfig, opt: OptimizerConfig },
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::OrdinaryKriging { .. } => "kriging",
            LearnerKind::Phik => "phik",
            LearnerKind::ModifiedPhik => "modified-phik",
            LearnerKind::Cophik { .. } => "cophik",
        }
    }

    pub fn needs_ensemble(&self) -> bool {
        !matches!(self, LearnerKind::OrdinaryKriging { .. })
    }
}

/// Shared fitting inputs.
pub struct FitContext<'a> {
    pub grid: &'a Grid,
    pub ensemble: Option<&'a Ensemble>,
    pub policy: NuggetPolicy,
}

/// A fitted learner able to predict on grid nodes.
pub enum FittedLearner<'a> {
    Kriging(Box<OrdinaryKrigingModel>),
    Phik(PhikModel<'a>),
    Cophik(Box<CophikModel<'a>>),
}

impl FittedLearner<'_> {
    /// Posterior (mean, variance) at a grid node.
    pub fn predict_node(&self, grid: &Grid, node: usize) -> (f64, f64) {
        match self {
            FittedLearner::Kriging(m) => m
                .predict(&grid.node_point(node))
                .expect("grid point has the model dimension"),
            FittedLearner::Phik(m) => m.predict_node(node),
            FittedLearner::Cophik(m) => m.predict_node(node),
        }
    }

    /// Posterior mean and variance fields over the whole grid.
    pub fn predict_fields(&self, grid: &Grid) -> (Field, Field) {
        match self {
            FittedLearner::Phik(m) => m.predict_field(),
            FittedLearner::Cophik(m) => m.predict_field(),
            FittedLearner::Kriging(m) => {
                use rayon::prelude::*;
                let results: Vec<(f64, f64)> = (0..grid.num_nodes())
                    .into_par_iter()
                    .map(|i| {
                        m.predict(&grid.node_point(i)).expect("grid point has the model dimension")
                    })
                    .collect();
                let mean =
                    Field::new(grid.clone(), results.iter().map(|r| r.0).collect()).expect("finite");
                let var =
                    Field::new(grid.clone(), results.iter().map(|r| r.1).collect()).expect("finite");
                (mean, var)
            }
        }
    }

    /// Prior variance at a node, for interpolation diagnostics.
    pub fn prior_variance(&self, node: usize) -> f64 {
        match self {
            FittedLearner::Kriging(m) => m.sigma2_hat(),
            FittedLearner::Phik(m) => m.ensemble().variance_at(node),
            FittedLearner::Cophik(m) => m.prior_variance(node),
        }
    }
}

/// Fit the requested learner on observations sitting on grid nodes.
pub fn fit_learner<'a>(
    kind: &LearnerKind,
    ctx: &FitContext<'a>,
    obs: &ObservationSet,
) -> Result<FittedLearner<'a>> {
    if kind.needs_ensemble() && ctx.ensemble.is_none() {
        return Err(CophikError::InvalidArgument(format!(
            "{} requires an ensemble",
            kind.name()
        )));
    }
    match kind {
        LearnerKind::OrdinaryKriging { opt } => Ok(FittedLearner::Kriging(Box::new(
            fit_hyperparameters(obs, opt, &ctx.policy)?,
        ))),
        LearnerKind::Phik => Ok(FittedLearner::Phik(PhikModel::fit(
            ctx.ensemble.unwrap(),
            obs,
            &ctx.policy,
        )?)),
        LearnerKind::ModifiedPhik => Ok(FittedLearner::Phik(PhikModel::fit_modified(
            ctx.ensemble.unwrap(),
            obs,
            &ctx.policy,
        )?)),
        LearnerKind::Cophik { rho, opt } => Ok(FittedLearner::Cophik(Box::new(CophikModel::fit(
            ctx.ensemble.unwrap(),
            obs,
            rho,
            opt,
            &ctx.policy,
        )?))),
    }
}

/// Node with the largest MSE among the non-excluded nodes; ties go to the
/// lowest row-major index.
pub fn argmax_mse(mse: &Field, excluded: &HashSet<usize>) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in mse.values().iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                if *v > mse.value(b) {
                    best = Some(i);
                }
            }
        }
    }
    best.ok_or_else(|| CophikError::NoCandidates("every grid node is excluded".into()))
}

/// One accepted observation during the loop. `n_obs` and `rel_error`
/// describe the fit that chose the node, before the observation was
/// added.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub n_obs: usize,
    pub chosen_node: usize,
    pub observed_value: f64,
    pub max_mse: f64,
    pub rel_error: f64,
}

/// The fit on the full observation budget.
#[derive(Debug, Clone)]
pub struct FinalFit {
    pub n_obs: usize,
    pub mean: Field,
    pub variance: Field,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct LearningTrajectory {
    pub steps: Vec<StepRecord>,
    pub final_fit: Option<FinalFit>,
    /// set when a learner fit failed; the trajectory up to that point is
    /// kept
    pub failure: Option<String>,
}

impl LearningTrajectory {
    /// (observation count, relative error) pairs including the final fit.
    pub fn error_curve(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> =
            self.steps.iter().map(|s| (s.n_obs, s.rel_error)).collect();
        if let Some(f) = &self.final_fit {
            out.push((f.n_obs, f.rel_error));
        }
        out
    }
}

/// Greedy loop: fit, sweep the posterior MSE over the grid, observe at
/// its maximizer (already-observed nodes excluded), repeat until `n_max`
/// observations, then fit once more on the full set.
pub fn active_learn(
    kind: &LearnerKind,
    ctx: &FitContext<'_>,
    oracle: &dyn GroundTruth,
    reference: &Field,
    obs0: &ObservationSet,
    n_max: usize,
) -> Result<LearningTrajectory> {
    if n_max < obs0.len() {
        return Err(CophikError::InvalidArgument(format!(
            "observation budget {n_max} below the initial count {}",
            obs0.len()
        )));
    }
    if reference.grid() != ctx.grid {
        return Err(CophikError::GridMismatch("reference field on a different grid".into()));
    }
    let mut obs = obs0.clone();
    let mut excluded: HashSet<usize> = obs.node_indices(ctx.grid)?.into_iter().collect();

    let mut steps = Vec::with_capacity(n_max - obs0.len());
    loop {
        let fitted = match fit_learner(kind, ctx, &obs) {
            Ok(f) => f,
            Err(e) => {
                return Ok(LearningTrajectory {
                    steps,
                    final_fit: None,
                    failure: Some(e.to_string()),
                });
            }
        };
        let (mean, variance) = fitted.predict_fields(ctx.grid);
        let rel_error = relative_error(&mean, reference)?;
        if obs.len() >= n_max {
            return Ok(LearningTrajectory {
                steps,
                final_fit: Some(FinalFit { n_obs: obs.len(), mean, variance, rel_error }),
                failure: None,
            });
        }
        let node = argmax_mse(&variance, &excluded)?;
        let value = oracle.value_at(node);
        steps.push(StepRecord {
            n_obs: obs.len(),
            chosen_node: node,
            observed_value: value,
            max_mse: variance.value(node),
            rel_error,
        });
        obs = obs.with_observation(ctx.grid.node_point(node), value)?;
        excluded.insert(node);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn grid_1d(n: usize) -> Grid {
        Grid::uniform(&[(0.0, 1.0)], &[n]).unwrap()
    }

    #[test]
    fn argmax_scans_in_row_major_order() {
        let g = grid_1d(5);
        // single candidate
        let f = Field::new(g.clone(), vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let excluded: HashSet<usize> = [0, 1, 2, 4].into_iter().collect();
        assert_eq!(argmax_mse(&f, &excluded).unwrap(), 3);
        // uniform field: lowest index wins
        let f = Field::new(g.clone(), vec![1.0; 5]).unwrap();
        assert_eq!(argmax_mse(&f, &HashSet::new()).unwrap(), 0);
        // all excluded is an error
        let everything: HashSet<usize> = (0..5).collect();
        assert!(argmax_mse(&f, &everything).is_err());
        // random field against a linear scan oracle
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let f = Field::new(g.clone(), vals.clone()).unwrap();
            let mut best = 0;
            for i in 1..5 {
                if vals[i] > vals[best] {
                    best = i;
                }
            }
            assert_eq!(argmax_mse(&f, &HashSet::new()).unwrap(), best);
        }
    }

    #[test]
    fn zero_budget_returns_initial_fit_only() {
        let g = grid_1d(9);
        let truth = Field::from_fn(g.clone(), |p| (4.0 * p.coords[0]).sin() + 2.0).unwrap();
        let obs = ObservationSet::from_grid_nodes(&g, &[0, 8], &[truth.value(0), truth.value(8)])
            .unwrap();
        let ctx = FitContext { grid: &g, ensemble: None, policy: NuggetPolicy::default() };
        let kind = LearnerKind::OrdinaryKriging { opt: OptimizerConfig::default() };
        let traj = active_learn(&kind, &ctx, &truth, &truth, &obs, 2).unwrap();
        assert!(traj.steps.is_empty());
        assert!(traj.failure.is_none());
        let final_fit = traj.final_fit.unwrap();
        assert_eq!(final_fit.n_obs, 2);
        // budget below the initial count errors out
        assert!(active_learn(&kind, &ctx, &truth, &truth, &obs, 1).is_err());
    }

    #[test]
    fn one_step_picks_the_exhaustive_scan_maximizer() {
        // ordinary Kriging in 1-D with the two end observations: the next
        // node must match an exhaustive sweep of the fitted MSE
        let g = grid_1d(21);
        let truth = Field::from_fn(g.clone(), |p| (3.0 * p.coords[0]).sin()).unwrap();
        let obs = ObservationSet::from_grid_nodes(&g, &[0, 20], &[truth.value(0), truth.value(20)])
            .unwrap();
        let ctx = FitContext { grid: &g, ensemble: None, policy: NuggetPolicy::default() };
        let opt = OptimizerConfig { seed: 3, ..Default::default() };
        let kind = LearnerKind::OrdinaryKriging { opt: opt.clone() };
        let traj = active_learn(&kind, &ctx, &truth, &truth, &obs, 3).unwrap();
        assert_eq!(traj.steps.len(), 1);
        let chosen = traj.steps[0].chosen_node;
        assert!(chosen != 0 && chosen != 20, "must be an interior node");

        // independent scan with a freshly fitted model
        let model = fit_hyperparameters(&obs, &opt, &NuggetPolicy::default()).unwrap();
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..21 {
            if i == 0 || i == 20 {
                continue;
            }
            let (_, var) = model.predict(&g.node_point(i)).unwrap();
            if var > best.0 {
                best = (var, i);
            }
        }
        assert_eq!(chosen, best.1);
        assert_relative_eq!(traj.steps[0].max_mse, best.0, max_relative = 1e-12);
    }

    #[test]
    fn never_observes_a_node_twice_and_counts_monotonically() {
        let g = grid_1d(15);
        let truth = Field::from_fn(g.clone(), |p| (5.0 * p.coords[0]).cos()).unwrap();
        let obs = ObservationSet::from_grid_nodes(&g, &[7], &[truth.value(7)]).unwrap();
        let ctx = FitContext { grid: &g, ensemble: None, policy: NuggetPolicy::default() };
        let kind = LearnerKind::OrdinaryKriging { opt: OptimizerConfig::default() };
        let traj = active_learn(&kind, &ctx, &truth, &truth, &obs, 7).unwrap();
        assert_eq!(traj.steps.len(), 6);
        let mut seen: HashSet<usize> = [7].into_iter().collect();
        for (k, s) in traj.steps.iter().enumerate() {
            assert_eq!(s.n_obs, 1 + k);
            assert!(seen.insert(s.chosen_node), "node {} reused", s.chosen_node);
            assert!(s.rel_error.is_finite());
        }
    }

    #[test]
    fn observed_nodes_have_negligible_mse_after_refit() {
        let g = grid_1d(13);
        let truth = Field::from_fn(g.clone(), |p| (2.0 * p.coords[0]).exp()).unwrap();
        let obs = ObservationSet::from_grid_nodes(&g, &[0, 12], &[truth.value(0), truth.value(12)])
            .unwrap();
        let ctx = FitContext { grid: &g, ensemble: None, policy: NuggetPolicy::default() };
        let kind = LearnerKind::OrdinaryKriging { opt: OptimizerConfig { seed: 5, ..Default::default() } };
        let traj = active_learn(&kind, &ctx, &truth, &truth, &obs, 6).unwrap();
        let final_fit = traj.final_fit.unwrap();
        let mut nodes: Vec<usize> = vec![0, 12];
        nodes.extend(traj.steps.iter().map(|s| s.chosen_node));
        for n in nodes {
            // tolerance scales with the prior variance of the final fit
            assert!(final_fit.variance.value(n) <= 1e-8 * final_fit.mean.value(n).abs().max(1.0).powi(2) + 1e-8);
        }
    }

    #[test]
    fn deterministic_trajectories_for_fixed_inputs() {
        let g = grid_1d(11);
        let truth = Field::from_fn(g.clone(), |p| p.coords[0] * p.coords[0]).unwrap();
        let obs = ObservationSet::from_grid_nodes(&g, &[0, 10], &[truth.value(0), truth.value(10)])
            .unwrap();
        let ctx = FitContext { grid: &g, ensemble: None, policy: NuggetPolicy::default() };
        let kind = LearnerKind::OrdinaryKriging { opt: OptimizerConfig { seed: 11, ..Default::default() } };
        let a = active_learn(&kind, &ctx, &truth, &truth, &obs, 6).unwrap();
        let b = active_learn(&kind, &ctx, &truth, &truth, &obs, 6).unwrap();
        assert_eq!(a.steps.len(), b.steps.len());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.chosen_node, y.chosen_node);
            assert_eq!(x.observed_value, y.observed_value);
            assert_eq!(x.max_mse, y.max_mse);
            assert_eq!(x.rel_error, y.rel_error);
        }
    }

    #[test]
    fn ensemble_learners_require_an_ensemble() {
        let g = grid_1d(5);
        let truth = Field::from_fn(g.clone(), |p| p.coords[0]).unwrap();
        let obs = ObservationSet::new(vec![Point::new(vec![0.0])], vec![0.0]).unwrap();
        let ctx = FitContext { grid: &g, ensemble: None, policy: NuggetPolicy::default() };
        for kind in [
            LearnerKind::Phik,
            LearnerKind::ModifiedPhik,
            LearnerKind::Cophik { rho: RhoSearchConfig::default(), opt: OptimizerConfig::default() },
        ] {
            assert!(fit_learner(&kind, &ctx, &obs).is_err());
            // active_learn reports the failure in the trajectory
            let traj = active_learn(&kind, &ctx, &truth, &truth, &obs, 2).unwrap();
            assert!(traj.failure.is_some());
            assert!(traj.final_fit.is_none());
        }
    }
}
