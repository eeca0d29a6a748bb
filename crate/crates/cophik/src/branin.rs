//! Self-contained benchmark on a modified Branin function: a fixed
//! reference field on the unit square, a stochastic variant with random
//! series coefficients as the simulation model, and the full
//! learner-comparison experiment with active learning.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand::RngCore;
use rayon::prelude::*;

use crate::active::{active_learn, FitContext, LearnerKind, LearningTrajectory};
use crate::cophik::RhoSearchConfig;
use crate::error::{CophikError, Result};
pub use crate::grid::relative_error;
use crate::grid::{Field, Grid};
use crate::kriging::OptimizerConfig;
use crate::linalg::NuggetPolicy;
use crate::obs::ObservationSet;
use crate::phik::Ensemble;

use std::f64::consts::PI;

/// Identity string for the normal generator, recorded in ensemble
/// manifests: ChaCha12 keyed by the seed, one stream per member, 53-bit
/// uniforms through the Box-Muller transform.
pub const GENERATOR_ID: &str = "chacha12-boxmuller-v1";

const A: f64 = 1.0;
const C: f64 = 5.0 / PI;
const R: f64 = 6.0;
const G: f64 = 10.0;
const Q: f64 = 5.0;
/// the deliberately wrong additive constant of the stochastic variant
const G_HAT: f64 = 20.0;

fn b_const() -> f64 {
    5.1 / (4.0 * PI * PI)
}

fn p_const() -> f64 {
    1.0 / (8.0 * PI)
}

/// The fixed reference surface on [0, 1]^2.
pub fn branin_value(x: f64, y: f64) -> f64 {
    let xb = 15.0 * x - 5.0;
    let yb = 15.0 * y;
    let inner = yb - b_const() * xb * xb + C * xb - R;
    A * inner * inner + G * (1.0 - p_const()) * xb.cos() + G + Q * x
}

/// Random series factor multiplying the quadratic coefficient; linear in
/// the twelve draws.
pub fn b_hat(x: f64, y: f64, xi: &[f64]) -> f64 {
    let mut series = 0.0;
    for i in 1..=3usize {
        let fi = i as f64;
        series += ((2.0 * fi - 0.5) * PI * x).sin() * xi[2 * i - 2] / (4.0 * fi - 1.0);
        series += ((2.0 * fi + 0.5) * PI * y).sin() * xi[2 * i - 1] / (4.0 * fi + 1.0);
    }
    b_const() * (0.9 + 0.2 / PI * series)
}

/// Random series factor multiplying the linear coefficient.
pub fn q_hat(x: f64, y: f64, xi: &[f64]) -> f64 {
    let mut series = 0.0;
    for i in 1..=3usize {
        let fi = i as f64;
        series += ((2.0 * fi - 1.5) * PI * x).cos() * xi[2 * i + 4] / (4.0 * fi - 3.0);
        series += ((2.0 * fi - 0.5) * PI * y).cos() * xi[2 * i + 5] / (4.0 * fi - 1.0);
    }
    Q * (1.0 + 0.6 / PI * series)
}

/// One realization of the stochastic variant at a point.
pub fn branin_realization_value(x: f64, y: f64, xi: &[f64]) -> f64 {
    let xb = 15.0 * x - 5.0;
    let yb = 15.0 * y;
    let inner = yb - b_hat(x, y, xi) * xb * xb + C * xb - R;
    A * inner * inner + G * (1.0 - p_const()) * xb.cos() + G_HAT + q_hat(x, y, xi) * x
}

/// Default benchmark grid: 41 x 41 uniform nodes on the unit square.
pub fn default_grid() -> Grid {
    Grid::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[41, 41]).expect("static grid parameters")
}

/// Reference surface evaluated on a grid.
pub fn branin_reference(grid: &Grid) -> Result<Field> {
    if grid.dim() != 2 {
        return Err(CophikError::DimensionMismatch { expected: 2, got: grid.dim() });
    }
    Field::from_fn(grid.clone(), |p| branin_value(p.coords[0], p.coords[1]))
}

/// Stochastic variant evaluated on a grid for fixed draws.
pub fn branin_realization(grid: &Grid, xi: &[f64]) -> Result<Field> {
    if grid.dim() != 2 {
        return Err(CophikError::DimensionMismatch { expected: 2, got: grid.dim() });
    }
    if xi.len() != 12 {
        return Err(CophikError::DimensionMismatch { expected: 12, got: xi.len() });
    }
    Field::from_fn(grid.clone(), |p| branin_realization_value(p.coords[0], p.coords[1], xi))
}

/// `count` standard-normal draws from the stream `stream` of the ChaCha12
/// generator keyed by `seed`. Pure integer/float arithmetic, so the byte
/// stream is identical on every platform.
pub fn standard_normals(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let uniform = |r: &mut ChaCha12Rng| ((r.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u1 = uniform(&mut rng);
        let u2 = uniform(&mut rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * PI * u2;
        out.push(radius * angle.cos());
        if out.len() < count {
            out.push(radius * angle.sin());
        }
    }
    out
}

/// M seeded realizations of the stochastic variant. Member m draws its
/// twelve coefficients from stream m + 1, so generation parallelizes
/// without changing the output.
pub fn generate_ensemble(grid: &Grid, m: usize, seed: u64) -> Result<Ensemble> {
    let members = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = standard_normals(seed, i as u64 + 1, 12);
            branin_realization(grid, &xi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// Distinct grid nodes drawn uniformly for the initial observation set,
/// from stream 0 of the seeded generator.
pub fn draw_observation_nodes(grid: &Grid, count: usize, seed: u64) -> Result<Vec<usize>> {
    let total = grid.num_nodes();
    if count > total {
        return Err(CophikError::InvalidArgument(format!(
            "cannot draw {count} distinct nodes from a grid of {total}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut chosen = Vec::with_capacity(count);
    while chosen.len() < count {
        let node = (rng.next_u64() % total as u64) as usize;
        if !chosen.contains(&node) {
            chosen.push(node);
        }
    }
    Ok(chosen)
}

/// Benchmark configuration; the defaults reproduce the full experiment.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub axis_nodes: usize,
    pub ensemble_size: usize,
    pub initial_observations: usize,
    pub max_observations: usize,
    pub seed: u64,
    pub learners: Vec<LearnerKind>,
    pub policy: NuggetPolicy,
}

impl BenchmarkConfig {
    pub fn with_seed(seed: u64) -> Self {
        let opt = OptimizerConfig { seed, ..Default::default() };
        BenchmarkConfig {
            axis_nodes: 41,
            ensemble_size: 300,
            initial_observations: 8,
            max_observations: 24,
            seed,
            learners: vec![
                LearnerKind::OrdinaryKriging { opt: opt.clone() },
                LearnerKind::Phik,
                LearnerKind::ModifiedPhik,
                LearnerKind::Cophik { rho: RhoSearchConfig::default(), opt },
            ],
            policy: NuggetPolicy::default(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[self.axis_nodes, self.axis_nodes])
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_observations == 0 || self.max_observations < self.initial_observations {
            return Err(CophikError::InvalidArgument(
                "need at least one initial observation and a budget at least as large".into(),
            ));
        }
        if self.ensemble_size < 2 {
            return Err(CophikError::EnsembleTooSmall(self.ensemble_size));
        }
        Ok(())
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig::with_seed(0)
    }
}

/// One learner's results.
#[derive(Debug, Clone)]
pub struct LearnerRun {
    pub name: String,
    pub trajectory: LearningTrajectory,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub reference: Field,
    pub ensemble: Ensemble,
    pub ensemble_mean_error: f64,
    pub initial_nodes: Vec<usize>,
    pub runs: Vec<LearnerRun>,
}

impl BenchmarkReport {
    /// Rows (learner, n_obs, rel_error) for the error-curve table.
    pub fn error_rows(&self) -> Vec<(String, usize, f64)> {
        let mut rows = Vec::new();
        for run in &self.runs {
            for (n, e) in run.trajectory.error_curve() {
                rows.push((run.name.clone(), n, e));
            }
        }
        rows
    }
}

/// Run the full experiment: build the reference and the ensemble, draw
/// the initial observations, then run active learning for every learner.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let reference = branin_reference(&grid)?;
    let ensemble = generate_ensemble(&grid, cfg.ensemble_size, cfg.seed)?;
    let ensemble_mean_error = relative_error(ensemble.mean_field(), &reference)?;
    let initial_nodes = draw_observation_nodes(&grid, cfg.initial_observations, cfg.seed)?;
    let values: Vec<f64> = initial_nodes.iter().map(|&i| reference.value(i)).collect();
    let obs0 = ObservationSet::from_grid_nodes(&grid, &initial_nodes, &values)?;

    let ctx = FitContext { grid: &grid, ensemble: Some(&ensemble), policy: cfg.policy.clone() };
    let mut runs = Vec::with_capacity(cfg.learners.len());
    for kind in &cfg.learners {
        let trajectory =
            active_learn(kind, &ctx, &reference, &reference, &obs0, cfg.max_observations)?;
        runs.push(LearnerRun { name: kind.name().to_string(), trajectory });
    }
    Ok(BenchmarkReport {
        reference,
        ensemble,
        ensemble_mean_error,
        initial_nodes,
        runs,
    })
}
