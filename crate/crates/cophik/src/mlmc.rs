//! Two-level Monte Carlo estimators for the ensemble mean and covariance:
//! many cheap coarse-grid realizations plus a few paired fine/coarse
//! corrections. The estimators keep the linear-combination structure, so
//! the resulting GP prior can be conditioned exactly like a single-level
//! ensemble prior.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{CophikError, Result};
use crate::grid::{Field, Grid};
use crate::linalg::{spd_factorize, NuggetPolicy};
use crate::phik::Ensemble;

/// Coarse realizations plus paired fine/coarse corrections. Coarse
/// members are resampled onto the fine grid by multilinear interpolation
/// at construction; corrections are fine-member minus interpolated
/// coarse partner.
#[derive(Debug, Clone)]
pub struct TwoLevelEnsemble {
    coarse_grid: Grid,
    /// coarse members interpolated onto the fine grid
    coarse_on_fine: Vec<Field>,
    /// u_fine - u_coarse for each pair, on the fine grid
    corrections: Vec<Field>,
    fine_grid: Grid,
    mean: Field,
    /// mean of the coarse level on the fine grid
    coarse_mean: Vec<f64>,
    /// mean of the corrections
    correction_mean: Vec<f64>,
}

impl TwoLevelEnsemble {
    /// `coarse`: M_L realizations on the coarse grid. `pairs`: M_H
    /// (fine, coarse) realization pairs; the fine partner lives on the
    /// fine grid, the coarse partner on the coarse grid.
    pub fn new(coarse: Vec<Field>, pairs: Vec<(Field, Field)>) -> Result<Self> {
        if coarse.len() < 2 {
            return Err(CophikError::EnsembleTooSmall(coarse.len()));
        }
        if pairs.len() < 2 {
            return Err(CophikError::EnsembleTooSmall(pairs.len()));
        }
        let coarse_grid = coarse[0].grid().clone();
        for f in &coarse {
            if f.grid() != &coarse_grid {
                return Err(CophikError::GridMismatch("coarse members on different grids".into()));
            }
        }
        let fine_grid = pairs[0].0.grid().clone();
        for (hi, lo) in &pairs {
            if hi.grid() != &fine_grid {
                return Err(CophikError::GridMismatch("fine members on different grids".into()));
            }
            if lo.grid() != &coarse_grid {
                return Err(CophikError::GridMismatch(
                    "coarse partners must live on the coarse grid".into(),
                ));
            }
        }
        if fine_grid.dim() != coarse_grid.dim() {
            return Err(CophikError::GridMismatch("level dimensions differ".into()));
        }

        let coarse_on_fine = coarse
            .iter()
            .map(|f| f.resample(&fine_grid))
            .collect::<Result<Vec<_>>>()?;
        let corrections = pairs
            .iter()
            .map(|(hi, lo)| {
                let lo_fine = lo.resample(&fine_grid)?;
                Field::new(
                    fine_grid.clone(),
                    hi.values()
                        .iter()
                        .zip(lo_fine.values())
                        .map(|(a, b)| a - b)
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let nn = fine_grid.num_nodes();
        let ml = coarse_on_fine.len() as f64;
        let mh = corrections.len() as f64;
        let mut coarse_mean = vec![0.0; nn];
        for f in &coarse_on_fine {
            for (acc, v) in coarse_mean.iter_mut().zip(f.values()) {
                *acc += v / ml;
            }
        }
        let mut correction_mean = vec![0.0; nn];
        for f in &corrections {
            for (acc, v) in correction_mean.iter_mut().zip(f.values()) {
                *acc += v / mh;
            }
        }
        let mean = Field::new(
            fine_grid.clone(),
            coarse_mean
                .iter()
                .zip(&correction_mean)
                .map(|(a, b)| a + b)
                .collect(),
        )?;
        Ok(TwoLevelEnsemble {
            coarse_grid,
            coarse_on_fine,
            corrections,
            fine_grid,
            mean,
            coarse_mean,
            correction_mean,
        })
    }

    pub fn coarse_grid(&self) -> &Grid {
        &self.coarse_grid
    }

    pub fn fine_grid(&self) -> &Grid {
        &self.fine_grid
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_on_fine.len()
    }

    pub fn correction_count(&self) -> usize {
        self.corrections.len()
    }

    /// Two-level mean estimate at a fine-grid node: coarse-level sample
    /// mean plus correction-level sample mean.
    pub fn mean(&self, node: usize) -> f64 {
        self.mean.value(node)
    }

    pub fn mean_field(&self) -> &Field {
        &self.mean
    }

    /// Two-level covariance estimate between fine-grid nodes: sum of the
    /// coarse-level and correction-level sample covariances, each with
    /// its own 1/(M-1) divisor.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for f in &self.coarse_on_fine {
            acc += (f.value(i) - self.coarse_mean[i]) * (f.value(j) - self.coarse_mean[j]);
        }
        let mut total = acc / (self.coarse_count() as f64 - 1.0);
        acc = 0.0;
        for f in &self.corrections {
            acc += (f.value(i) - self.correction_mean[i]) * (f.value(j) - self.correction_mean[j]);
        }
        total += acc / (self.correction_count() as f64 - 1.0);
        total
    }

    pub fn variance_at(&self, node: usize) -> f64 {
        self.covariance(node, node)
    }

    pub fn cov_matrix(&self, nodes: &[usize]) -> Array2<f64> {
        let n = nodes.len();
        let mut c = Array2::zeros((n, n));
        for a in 0..n {
            for b in a..n {
                let v = self.covariance(nodes[a], nodes[b]);
                c[[a, b]] = v;
                c[[b, a]] = v;
            }
        }
        c
    }
}

/// A GP conditioned on observations with the two-level prior.
#[derive(Debug, Clone)]
pub struct MlmcModel<'a> {
    tle: &'a TwoLevelEnsemble,
    obs_nodes: Vec<usize>,
    fact: crate::linalg::SpdFactorization,
    weights: Array1<f64>,
}

impl<'a> MlmcModel<'a> {
    pub fn fit_at_nodes(
        tle: &'a TwoLevelEnsemble,
        obs_nodes: &[usize],
        values: &[f64],
        policy: &NuggetPolicy,
    ) -> Result<Self> {
        if obs_nodes.len() != values.len() {
            return Err(CophikError::DimensionMismatch {
                expected: obs_nodes.len(),
                got: values.len(),
            });
        }
        if obs_nodes.is_empty() {
            return Err(CophikError::InvalidArgument("no observations".into()));
        }
        let c = tle.cov_matrix(obs_nodes);
        let fact = spd_factorize(&c, policy)?;
        let y = Array1::from_vec(values.to_vec());
        let mu: Array1<f64> = obs_nodes.iter().map(|&i| tle.mean(i)).collect();
        let weights = fact.solve(&(&y - &mu));
        Ok(MlmcModel { tle, obs_nodes: obs_nodes.to_vec(), fact, weights })
    }

    pub fn factorization(&self) -> &crate::linalg::SpdFactorization {
        &self.fact
    }

    pub fn predict_node(&self, node: usize) -> (f64, f64) {
        let c: Array1<f64> = self
            .obs_nodes
            .iter()
            .map(|&i| self.tle.covariance(i, node))
            .collect();
        let mean = self.tle.mean(node) + c.dot(&self.weights);
        let var = self.tle.variance_at(node) - self.fact.quad_form(&c);
        (mean, var.max(0.0))
    }

    pub fn predict_field(&self) -> (Field, Field) {
        let grid = self.tle.fine_grid();
        let results: Vec<(f64, f64)> = (0..grid.num_nodes())
            .into_par_iter()
            .map(|i| self.predict_node(i))
            .collect();
        let mean = Field::new(grid.clone(), results.iter().map(|r| r.0).collect()).expect("finite");
        let var = Field::new(grid.clone(), results.iter().map(|r| r.1).collect()).expect("finite");
        (mean, var)
    }
}

/// Posterior with the two-level prior at a fine-grid node given
/// observations on fine-grid nodes.
pub fn mlmc_predict(
    tle: &TwoLevelEnsemble,
    obs_nodes: &[usize],
    values: &[f64],
    policy: &NuggetPolicy,
    node: usize,
) -> Result<(f64, f64)> {
    Ok(MlmcModel::fit_at_nodes(tle, obs_nodes, values, policy)?.predict_node(node))
}

/// Single-level view of a two-level ensemble whose corrections vanish;
/// used to compare against plain ensemble statistics.
pub fn coarse_as_ensemble(tle: &TwoLevelEnsemble) -> Result<Ensemble> {
    Ensemble::new(tle.coarse_on_fine.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn grid(n: usize) -> Grid {
        Grid::uniform(&[(0.0, 1.0)], &[n]).unwrap()
    }

    fn random_field(g: &Grid, rng: &mut ChaCha12Rng) -> Field {
        Field::new(g.clone(), (0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn two_level_fixture(seed: u64) -> TwoLevelEnsemble {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let gc = grid(5);
        let gf = grid(9);
        let coarse: Vec<Field> = (0..4).map(|_| random_field(&gc, &mut rng)).collect();
        let pairs: Vec<(Field, Field)> = (0..3)
            .map(|_| (random_field(&gf, &mut rng), random_field(&gc, &mut rng)))
            .collect();
        TwoLevelEnsemble::new(coarse, pairs).unwrap()
    }

    #[test]
    fn zero_corrections_reduce_to_coarse_statistics() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let gc = grid(5);
        let gf = grid(9);
        let coarse: Vec<Field> = (0..4).map(|_| random_field(&gc, &mut rng)).collect();
        // pairs whose fine member is exactly the interpolated coarse member
        let pairs: Vec<(Field, Field)> = (0..3)
            .map(|_| {
                let lo = random_field(&gc, &mut rng);
                (lo.resample(&gf).unwrap(), lo)
            })
            .collect();
        let tle = TwoLevelEnsemble::new(coarse.clone(), pairs).unwrap();
        let ens = Ensemble::new(coarse.iter().map(|f| f.resample(&gf).unwrap()).collect()).unwrap();
        for i in 0..gf.num_nodes() {
            assert_relative_eq!(tle.mean(i), ens.mean_at(i), epsilon = 1e-13);
            for j in 0..gf.num_nodes() {
                assert_relative_eq!(tle.covariance(i, j), ens.covariance(i, j), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn identical_coarse_members_leave_only_corrections() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let gc = grid(5);
        let gf = grid(9);
        let shared = random_field(&gc, &mut rng);
        let coarse = vec![shared.clone(), shared.clone(), shared.clone()];
        let pairs: Vec<(Field, Field)> = (0..3)
            .map(|_| (random_field(&gf, &mut rng), random_field(&gc, &mut rng)))
            .collect();
        let corrections: Vec<Field> = pairs
            .iter()
            .map(|(hi, lo)| {
                let lo_fine = lo.resample(&gf).unwrap();
                Field::new(
                    gf.clone(),
                    hi.values().iter().zip(lo_fine.values()).map(|(a, b)| a - b).collect(),
                )
                .unwrap()
            })
            .collect();
        let corr_ens = Ensemble::new(corrections).unwrap();
        let tle = TwoLevelEnsemble::new(coarse, pairs).unwrap();
        for i in 0..gf.num_nodes() {
            for j in 0..gf.num_nodes() {
                assert_relative_eq!(tle.covariance(i, j), corr_ens.covariance(i, j), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn paired_identical_levels_reproduce_single_level_statistics() {
        // same grid on both levels, fine member equals its coarse partner:
        // the estimators telescope to plain sample statistics of the fine
        // members
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let g = grid(7);
        let members: Vec<Field> = (0..4).map(|_| random_field(&g, &mut rng)).collect();
        let tle = TwoLevelEnsemble::new(
            members.clone(),
            members.iter().map(|f| (f.clone(), f.clone())).collect(),
        )
        .unwrap();
        let ens = Ensemble::new(members).unwrap();
        for i in 0..g.num_nodes() {
            assert!((tle.mean(i) - ens.mean_at(i)).abs() <= 1e-12);
            for j in 0..g.num_nodes() {
                assert!((tle.covariance(i, j) - ens.covariance(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn estimators_match_direct_sum_oracle() {
        let tle = two_level_fixture(4);
        let gf = tle.fine_grid().clone();
        let ml = tle.coarse_count() as f64;
        let mh = tle.correction_count() as f64;
        for i in 0..gf.num_nodes() {
            // direct sums over both levels
            let mean_l: f64 =
                tle.coarse_on_fine.iter().map(|f| f.value(i)).sum::<f64>() / ml;
            let mean_h: f64 = tle.corrections.iter().map(|f| f.value(i)).sum::<f64>() / mh;
            assert!((tle.mean(i) - (mean_l + mean_h)).abs() <= 1e-12);
            for j in 0..gf.num_nodes() {
                let mean_lj: f64 =
                    tle.coarse_on_fine.iter().map(|f| f.value(j)).sum::<f64>() / ml;
                let mean_hj: f64 =
                    tle.corrections.iter().map(|f| f.value(j)).sum::<f64>() / mh;
                let mut cov = tle
                    .coarse_on_fine
                    .iter()
                    .map(|f| (f.value(i) - mean_l) * (f.value(j) - mean_lj))
                    .sum::<f64>()
                    / (ml - 1.0);
                cov += tle
                    .corrections
                    .iter()
                    .map(|f| (f.value(i) - mean_h) * (f.value(j) - mean_hj))
                    .sum::<f64>()
                    / (mh - 1.0);
                assert!((tle.covariance(i, j) - cov).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_corrections_match_single_level_posterior() {
        // corrections identically zero: predictions equal the plain
        // ensemble posterior on the interpolated coarse members
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let gc = grid(5);
        let gf = grid(9);
        let coarse: Vec<Field> = (0..5).map(|_| random_field(&gc, &mut rng)).collect();
        let pairs: Vec<(Field, Field)> = coarse
            .iter()
            .take(3)
            .map(|lo| (lo.resample(&gf).unwrap(), lo.clone()))
            .collect();
        let tle = TwoLevelEnsemble::new(coarse, pairs).unwrap();
        let ens = coarse_as_ensemble(&tle).unwrap();

        let nodes = [1usize, 6];
        let values = [0.4, -0.2];
        let policy = NuggetPolicy::default();
        let model = MlmcModel::fit_at_nodes(&tle, &nodes, &values, &policy).unwrap();
        let single = crate::phik::PhikModel::fit_at_nodes(&ens, &nodes, &values, &policy, crate::phik::MeanShift::None)
            .unwrap();
        for i in 0..gf.num_nodes() {
            let (m1, v1) = model.predict_node(i);
            let (m2, v2) = single.predict_node(i);
            assert_relative_eq!(m1, m2, max_relative = 1e-10, epsilon = 1e-12);
            assert_relative_eq!(v1, v2, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn posterior_interpolates_and_matches_dense_oracle() {
        let tle = two_level_fixture(6);
        let nodes = [2usize, 7];
        let values = [0.9, -0.5];
        let policy = NuggetPolicy::default();
        let model = MlmcModel::fit_at_nodes(&tle, &nodes, &values, &policy).unwrap();
        if model.factorization().alpha() == 0.0 {
            for (&n, &v) in nodes.iter().zip(&values) {
                let (mean, var) = model.predict_node(n);
                assert_relative_eq!(mean, v, max_relative = 1e-8);
                assert!(var <= 1e-8 * tle.variance_at(n).max(1.0));
            }
        }
        // dense 2x2 oracle
        let c = tle.cov_matrix(&nodes);
        let det = c[[0, 0]] * c[[1, 1]] - c[[0, 1]] * c[[1, 0]];
        let y = ndarray::array![values[0], values[1]];
        let mu = ndarray::array![tle.mean(nodes[0]), tle.mean(nodes[1])];
        let inv = ndarray::array![
            [c[[1, 1]] / det, -c[[0, 1]] / det],
            [-c[[1, 0]] / det, c[[0, 0]] / det]
        ];
        for star in 0..tle.fine_grid().num_nodes() {
            let cv = ndarray::array![
                tle.covariance(nodes[0], star),
                tle.covariance(nodes[1], star)
            ];
            let expect = tle.mean(star) + cv.dot(&inv.dot(&(&y - &mu)));
            let (mean, _) = model.predict_node(star);
            assert_relative_eq!(mean, expect, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn requires_two_members_per_level() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let gc = grid(4);
        let gf = grid(7);
        let one_coarse = vec![random_field(&gc, &mut rng)];
        let pairs: Vec<(Field, Field)> = (0..2)
            .map(|_| (random_field(&gf, &mut rng), random_field(&gc, &mut rng)))
            .collect();
        assert!(TwoLevelEnsemble::new(one_coarse, pairs.clone()).is_err());
        let coarse: Vec<Field> = (0..2).map(|_| random_field(&gc, &mut rng)).collect();
        assert!(TwoLevelEnsemble::new(coarse.clone(), pairs[..1].to_vec()).is_err());
        assert!(TwoLevelEnsemble::new(coarse, pairs).is_ok());
    }
}
