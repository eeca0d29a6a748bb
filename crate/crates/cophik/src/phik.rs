//! Ensemble-informed Kriging: the GP prior mean and covariance are the
//! sample statistics of an ensemble of stochastic-model realizations, so
//! no kernel hyperparameters are estimated. Includes the mean-shifted
//! variant that adds the likelihood-maximizing constant to the prior
//! mean.
//!
//! Observations must sit on grid nodes: the ensemble defines the prior
//! only where realizations are known.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{CophikError, Result};
use crate::grid::{Field, Grid, Point};
use crate::linalg::{spd_factorize, NuggetPolicy, SpdFactorization};
use crate::obs::ObservationSet;

/// M realizations of a stochastic model on a common grid, with their
/// sample mean and standard deviation fields.
#[derive(Debug, Clone)]
pub struct Ensemble {
    grid: Grid,
    members: Vec<Field>,
    mean: Field,
    std: Field,
}

impl Ensemble {
    pub fn new(members: Vec<Field>) -> Result<Self> {
        if members.len() < 2 {
            return Err(CophikError::EnsembleTooSmall(members.len()));
        }
        let grid = members[0].grid().clone();
        for m in &members {
            if m.grid() != &grid {
                return Err(CophikError::GridMismatch("ensemble members on different grids".into()));
            }
        }
        let n = grid.num_nodes();
        let mf = members.len() as f64;
        let mut mean = vec![0.0; n];
        for m in &members {
            for (acc, v) in mean.iter_mut().zip(m.values()) {
                *acc += v / mf;
            }
        }
        let mut var = vec![0.0; n];
        for m in &members {
            for ((acc, v), mu) in var.iter_mut().zip(m.values()).zip(&mean) {
                let d = v - mu;
                *acc += d * d / (mf - 1.0);
            }
        }
        let mean = Field::new(grid.clone(), mean)?;
        let std = Field::new(grid.clone(), var.into_iter().map(f64::sqrt).collect())?;
        Ok(Ensemble { grid, members, mean, std })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn members(&self) -> &[Field] {
        &self.members
    }

    pub fn member(&self, m: usize) -> &Field {
        &self.members[m]
    }

    /// Sample mean field of the members.
    pub fn mean_field(&self) -> &Field {
        &self.mean
    }

    /// Sample standard deviation field (1/(M-1) divisor).
    pub fn std_field(&self) -> &Field {
        &self.std
    }

    pub fn mean_at(&self, node: usize) -> f64 {
        self.mean.value(node)
    }

    /// Sample variance at a node, the prior variance of the GP there.
    pub fn variance_at(&self, node: usize) -> f64 {
        let s = self.std.value(node);
        s * s
    }

    /// Sample covariance between two nodes, 1/(M-1) divisor.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let mi = self.mean.value(i);
        let mj = self.mean.value(j);
        let mut acc = 0.0;
        for m in &self.members {
            acc += (m.value(i) - mi) * (m.value(j) - mj);
        }
        acc / (self.size() as f64 - 1.0)
    }

    /// Covariance matrix restricted to a node set. Rank is at most M-1,
    /// so factorization of large node sets relies on the nugget ladder.
    pub fn cov_matrix(&self, nodes: &[usize]) -> Array2<f64> {
        let res = self.residual_matrix(nodes);
        let scale = 1.0 / (self.size() as f64 - 1.0);
        let n = nodes.len();
        let mut c = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = res.row(i).dot(&res.row(j)) * scale;
                c[[i, j]] = v;
                c[[j, i]] = v;
            }
        }
        c
    }

    /// Covariance vector between a node set and a single node.
    pub fn cov_vector(&self, nodes: &[usize], node: usize) -> Array1<f64> {
        Array1::from_iter(nodes.iter().map(|&i| self.covariance(i, node)))
    }

    /// Member deviations from the mean at the given nodes, one row per
    /// node, one column per member.
    fn residual_matrix(&self, nodes: &[usize]) -> Array2<f64> {
        let m = self.size();
        let mut r = Array2::zeros((nodes.len(), m));
        for (row, &i) in nodes.iter().enumerate() {
            let mu = self.mean.value(i);
            for (col, member) in self.members.iter().enumerate() {
                r[[row, col]] = member.value(i) - mu;
            }
        }
        r
    }

    /// Values of one member at a node set.
    pub fn member_values(&self, m: usize, nodes: &[usize]) -> Array1<f64> {
        Array1::from_iter(nodes.iter().map(|&i| self.members[m].value(i)))
    }
}

/// Ensemble mean at node `i` and covariance between nodes `i` and `j`.
pub fn ensemble_mean_cov(ens: &Ensemble, i: usize, j: usize) -> (f64, f64) {
    (ens.mean_at(i), ens.covariance(i, j))
}

/// Likelihood-maximizing constant mean shift:
/// delta_mu = 1^T C^{-1} (y - mu) / (1^T C^{-1} 1).
pub fn modified_delta_mu(
    fact: &SpdFactorization,
    y: &Array1<f64>,
    mu: &Array1<f64>,
) -> Result<f64> {
    let n = fact.n();
    if y.len() != n || mu.len() != n {
        return Err(CophikError::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { mu.len() },
        });
    }
    let ones: Array1<f64> = Array1::ones(n);
    let denom = ones.dot(&fact.solve(&ones));
    if !(denom > 0.0) {
        return Err(CophikError::Degenerate(format!(
            "1^T C^{{-1}} 1 = {denom:.3e} is not positive"
        )));
    }
    Ok(ones.dot(&fact.solve(&(y - mu))) / denom)
}

/// A conditioned ensemble-informed GP. `delta_mu` is zero for the plain
/// method and the closed-form shift for the modified one.
#[derive(Debug, Clone)]
pub struct PhikModel<'a> {
    ens: &'a Ensemble,
    obs_nodes: Vec<usize>,
    y: Array1<f64>,
    delta_mu: f64,
    fact: SpdFactorization,
    /// C^{-1} (y - mu - delta_mu * 1)
    weights: Array1<f64>,
    /// member deviations at the observation nodes, N x M, for fast
    /// covariance-vector assembly
    obs_residuals: Array2<f64>,
}

/// How the constant prior-mean shift is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanShift {
    /// plain conditioning, no shift
    None,
    /// the closed-form likelihood maximizer
    Fitted,
    /// a caller-supplied constant
    Fixed(f64),
}

impl<'a> PhikModel<'a> {
    pub fn fit(ens: &'a Ensemble, obs: &ObservationSet, policy: &NuggetPolicy) -> Result<Self> {
        Self::fit_at_nodes(ens, &obs.node_indices(ens.grid())?, obs.values(), policy, MeanShift::None)
    }

    pub fn fit_modified(
        ens: &'a Ensemble,
        obs: &ObservationSet,
        policy: &NuggetPolicy,
    ) -> Result<Self> {
        Self::fit_at_nodes(
            ens,
            &obs.node_indices(ens.grid())?,
            obs.values(),
            policy,
            MeanShift::Fitted,
        )
    }

    /// Fit from node indices directly.
    pub fn fit_at_nodes(
        ens: &'a Ensemble,
        obs_nodes: &[usize],
        values: &[f64],
        policy: &NuggetPolicy,
        shift: MeanShift,
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
        let nn = ens.grid().num_nodes();
        if let Some(&bad) = obs_nodes.iter().find(|&&i| i >= nn) {
            return Err(CophikError::InvalidArgument(format!(
                "observation node index {bad} out of range ({nn} nodes)"
            )));
        }
        let c = ens.cov_matrix(obs_nodes);
        let fact = spd_factorize(&c, policy)?;
        let y = Array1::from_vec(values.to_vec());
        let mu: Array1<f64> = obs_nodes.iter().map(|&i| ens.mean_at(i)).collect();
        let delta_mu = match shift {
            MeanShift::None => 0.0,
            MeanShift::Fitted => modified_delta_mu(&fact, &y, &mu)?,
            MeanShift::Fixed(v) => v,
        };
        let r = &y - &mu - Array1::from_elem(y.len(), delta_mu);
        let weights = fact.solve(&r);
        let obs_residuals = ens.residual_matrix(obs_nodes);
        Ok(PhikModel {
            ens,
            obs_nodes: obs_nodes.to_vec(),
            y,
            delta_mu,
            fact,
            weights,
            obs_residuals,
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        self.ens
    }

    pub fn observation_nodes(&self) -> &[usize] {
        &self.obs_nodes
    }

    pub fn observed_values(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn delta_mu(&self) -> f64 {
        self.delta_mu
    }

    pub fn factorization(&self) -> &SpdFactorization {
        &self.fact
    }

    /// The conditioning coefficients a with posterior mean
    /// mu(x) + delta_mu + sum_i a_i k(x, x_i).
    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    /// Covariance vector between the observation nodes and `node`.
    pub fn cov_vector(&self, node: usize) -> Array1<f64> {
        let mu = self.ens.mean_at(node);
        let scale = 1.0 / (self.ens.size() as f64 - 1.0);
        let mut c = Array1::zeros(self.obs_nodes.len());
        for (row, cv) in c.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (col, member) in self.ens.members().iter().enumerate() {
                acc += self.obs_residuals[[row, col]] * (member.value(node) - mu);
            }
            *cv = acc * scale;
        }
        c
    }

    /// Posterior mean and variance at a grid node; variance clamped at 0.
    pub fn predict_node(&self, node: usize) -> (f64, f64) {
        let c = self.cov_vector(node);
        let mean = self.ens.mean_at(node) + self.delta_mu + c.dot(&self.weights);
        let var = self.ens.variance_at(node) - self.fact.quad_form(&c);
        (mean, var.max(0.0))
    }

    /// Posterior mean and variance over the whole grid.
    pub fn predict_field(&self) -> (Field, Field) {
        let grid = self.ens.grid();
        let results: Vec<(f64, f64)> = (0..grid.num_nodes())
            .into_par_iter()
            .map(|i| self.predict_node(i))
            .collect();
        let mean = Field::new(grid.clone(), results.iter().map(|r| r.0).collect()).expect("finite");
        let var = Field::new(grid.clone(), results.iter().map(|r| r.1).collect()).expect("finite");
        (mean, var)
    }
}

/// One-shot posterior at a point that must coincide with a grid node.
pub fn phik_predict(
    ens: &Ensemble,
    obs: &ObservationSet,
    policy: &NuggetPolicy,
    xstar: &Point,
) -> Result<(f64, f64)> {
    let model = PhikModel::fit(ens, obs, policy)?;
    let node = ens.grid().node_index_of(xstar)?;
    Ok(model.predict_node(node))
}

/// One-shot mean-shifted posterior at a grid node.
pub fn modified_phik_predict(
    ens: &Ensemble,
    obs: &ObservationSet,
    policy: &NuggetPolicy,
    xstar: &Point,
) -> Result<(f64, f64)> {
    let model = PhikModel::fit_modified(ens, obs, policy)?;
    let node = ens.grid().node_index_of(xstar)?;
    Ok(model.predict_node(node))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{log_marginal_likelihood, symmetric_eigenvalues};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn grid_1d(n: usize) -> Grid {
        Grid::uniform(&[(0.0, 1.0)], &[n]).unwrap()
    }

    fn random_ensemble(grid: &Grid, m: usize, seed: u64) -> Ensemble {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let members = (0..m)
            .map(|_| {
                Field::new(
                    grid.clone(),
                    (0..grid.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        Ensemble::new(members).unwrap()
    }

    #[test]
    fn rejects_single_member_and_grid_mismatch() {
        let g = grid_1d(4);
        let f = Field::new(g.clone(), vec![1.0; 4]).unwrap();
        assert!(matches!(Ensemble::new(vec![f.clone()]), Err(CophikError::EnsembleTooSmall(1))));
        let other = Field::new(grid_1d(5), vec![0.0; 5]).unwrap();
        assert!(Ensemble::new(vec![f, other]).is_err());
    }

    #[test]
    fn identical_members_have_zero_covariance() {
        let g = grid_1d(4);
        let f = Field::new(g.clone(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ens = Ensemble::new(vec![f.clone(), f.clone(), f.clone()]).unwrap();
        for i in 0..4 {
            let (mean, cov) = ensemble_mean_cov(&ens, i, (i + 1) % 4);
            assert_eq!(mean, f.value(i));
            assert_eq!(cov, 0.0);
        }
    }

    #[test]
    fn two_member_symmetric_pair_algebra() {
        // members mu +/- v: cov(x, x') = 2 v(x) v(x')
        let g = grid_1d(3);
        let mu = [1.0, 2.0, 3.0];
        let v = [0.5, -0.2, 0.8];
        let plus = Field::new(g.clone(), mu.iter().zip(&v).map(|(a, b)| a + b).collect()).unwrap();
        let minus = Field::new(g.clone(), mu.iter().zip(&v).map(|(a, b)| a - b).collect()).unwrap();
        let ens = Ensemble::new(vec![plus, minus]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(ens.covariance(i, j), 2.0 * v[i] * v[j], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn covariance_matches_double_loop_oracle() {
        let g = grid_1d(5);
        let ens = random_ensemble(&g, 3, 42);
        let m = ens.size() as f64;
        for i in 0..5 {
            for j in 0..5 {
                // independent double loop over members
                let mean_i: f64 = ens.members().iter().map(|f| f.value(i)).sum::<f64>() / m;
                let mean_j: f64 = ens.members().iter().map(|f| f.value(j)).sum::<f64>() / m;
                let mut acc = 0.0;
                for f in ens.members() {
                    acc += (f.value(i) - mean_i) * (f.value(j) - mean_j);
                }
                acc /= m - 1.0;
                assert_relative_eq!(ens.covariance(i, j), acc, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn cov_matrix_cases() {
        let g = grid_1d(6);
        let ens = random_ensemble(&g, 3, 7);
        // N=1: the ensemble variance at that node
        let c = ens.cov_matrix(&[2]);
        assert_relative_eq!(c[[0, 0]], ens.variance_at(2), max_relative = 1e-14);
        // N=2, M=3 against the outer-product oracle
        let nodes = [1usize, 4];
        let c = ens.cov_matrix(&nodes);
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                assert_relative_eq!(c[[a, b]], ens.covariance(i, j), max_relative = 1e-12, epsilon = 1e-14);
            }
        }
        // N > M-1 is rank deficient: factorization must need a nugget
        let c = ens.cov_matrix(&[0, 1, 2, 3, 4]);
        let fact = spd_factorize(&c, &NuggetPolicy::default()).unwrap();
        assert!(fact.alpha() > 0.0);
    }

    #[test]
    fn cov_matrix_is_positive_semidefinite() {
        let g = grid_1d(8);
        for seed in 0..5 {
            let ens = random_ensemble(&g, 4, seed);
            let nodes: Vec<usize> = (0..8).collect();
            let c = ens.cov_matrix(&nodes);
            let eig = symmetric_eigenvalues(&c).unwrap();
            let trace: f64 = (0..8).map(|i| c[[i, i]]).sum();
            assert!(eig[0] >= -1e-10 * trace / 8.0);
        }
    }

    #[test]
    fn zero_residual_returns_prior_mean_everywhere() {
        let g = grid_1d(6);
        let ens = random_ensemble(&g, 4, 11);
        let nodes = [0usize, 3, 5];
        let values: Vec<f64> = nodes.iter().map(|&i| ens.mean_at(i)).collect();
        let model =
            PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::None).unwrap();
        for i in 0..6 {
            let (mean, _) = model.predict_node(i);
            assert_relative_eq!(mean, ens.mean_at(i), max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolates_observations_when_unregularized() {
        let g = grid_1d(6);
        let ens = random_ensemble(&g, 8, 13);
        let nodes = [1usize, 4];
        let values = [0.7, -0.3];
        let model =
            PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::None).unwrap();
        assert_eq!(model.factorization().alpha(), 0.0);
        for (&n, &v) in nodes.iter().zip(&values) {
            let (mean, var) = model.predict_node(n);
            assert_relative_eq!(mean, v, max_relative = 1e-8);
            assert!(var <= 1e-8 * ens.variance_at(n));
        }
    }

    #[test]
    fn posterior_matches_dense_oracle() {
        // M=3, N=2: assemble everything from the definitions with an
        // explicit 2x2 inverse
        let g = grid_1d(5);
        let ens = random_ensemble(&g, 3, 17);
        let nodes = [1usize, 3];
        let values = [0.4, -0.1];
        let model =
            PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::None).unwrap();
        assert_eq!(model.factorization().alpha(), 0.0);

        let c = ens.cov_matrix(&nodes);
        let det = c[[0, 0]] * c[[1, 1]] - c[[0, 1]] * c[[1, 0]];
        let inv = array![[c[[1, 1]] / det, -c[[0, 1]] / det], [-c[[1, 0]] / det, c[[0, 0]] / det]];
        let y = array![values[0], values[1]];
        let mu = array![ens.mean_at(nodes[0]), ens.mean_at(nodes[1])];
        for star in 0..5 {
            let cv = array![ens.covariance(nodes[0], star), ens.covariance(nodes[1], star)];
            let expect_mean = ens.mean_at(star) + cv.dot(&inv.dot(&(&y - &mu)));
            let expect_var = (ens.variance_at(star) - cv.dot(&inv.dot(&cv))).max(0.0);
            let (mean, var) = model.predict_node(star);
            assert_relative_eq!(mean, expect_mean, max_relative = 1e-10, epsilon = 1e-12);
            assert_relative_eq!(var, expect_var, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn posterior_variance_bounded_by_prior() {
        let g = grid_1d(9);
        let ens = random_ensemble(&g, 6, 19);
        let nodes = [0usize, 4, 8];
        let values = [0.3, 0.1, -0.2];
        let model =
            PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::None).unwrap();
        for i in 0..9 {
            let (_, var) = model.predict_node(i);
            assert!(var <= ens.variance_at(i) + 1e-12);
        }
    }

    #[test]
    fn posterior_mean_field_recomputable_from_weights() {
        let g = grid_1d(7);
        let ens = random_ensemble(&g, 5, 23);
        let nodes = [2usize, 5];
        let values = [1.0, 2.0];
        let model =
            PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::None).unwrap();
        let (mean_field, _) = model.predict_field();
        let w = model.weights();
        for i in 0..7 {
            let recombined: f64 = ens.mean_at(i)
                + nodes
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| w[k] * ens.covariance(i, n))
                    .sum::<f64>();
            assert_relative_eq!(mean_field.value(i), recombined, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn delta_mu_shift_cases() {
        let g = grid_1d(5);
        let ens = random_ensemble(&g, 4, 29);
        let nodes = [0usize, 2, 4];
        let mu: Array1<f64> = nodes.iter().map(|&i| ens.mean_at(i)).collect();
        let c = ens.cov_matrix(&nodes);
        let fact = spd_factorize(&c, &NuggetPolicy::default()).unwrap();
        // y = mu -> 0
        assert_relative_eq!(modified_delta_mu(&fact, &mu, &mu).unwrap(), 0.0, epsilon = 1e-14);
        // y = mu + c_shift -> c_shift
        let shifted = &mu + 0.75;
        assert_relative_eq!(modified_delta_mu(&fact, &shifted, &mu).unwrap(), 0.75, max_relative = 1e-10);
    }

    #[test]
    fn delta_mu_matches_dense_oracle() {
        let a = array![[2.0, 0.3, 0.1], [0.3, 1.5, 0.2], [0.1, 0.2, 1.1]];
        let y = array![1.0, -0.5, 0.7];
        let mu = array![0.2, 0.0, -0.1];
        let fact = spd_factorize(&a, &NuggetPolicy::default()).unwrap();
        let got = modified_delta_mu(&fact, &y, &mu).unwrap();

        // dense 3x3 inverse via cofactors
        let det = a[[0, 0]] * (a[[1, 1]] * a[[2, 2]] - a[[1, 2]] * a[[2, 1]])
            - a[[0, 1]] * (a[[1, 0]] * a[[2, 2]] - a[[1, 2]] * a[[2, 0]])
            + a[[0, 2]] * (a[[1, 0]] * a[[2, 1]] - a[[1, 1]] * a[[2, 0]]);
        let mut inv = Array2::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                let r0 = (i + 1) % 3;
                let r1 = (i + 2) % 3;
                let c0 = (j + 1) % 3;
                let c1 = (j + 2) % 3;
                inv[[j, i]] = (a[[r0, c0]] * a[[r1, c1]] - a[[r0, c1]] * a[[r1, c0]]) / det;
            }
        }
        let ones = array![1.0, 1.0, 1.0];
        let expect = ones.dot(&inv.dot(&(&y - &mu))) / ones.dot(&inv.dot(&ones));
        assert_relative_eq!(got, expect, max_relative = 1e-10);
    }

    #[test]
    fn modified_fit_reduces_to_plain_when_balanced() {
        let g = grid_1d(6);
        let ens = random_ensemble(&g, 5, 31);
        let nodes = [1usize, 4];
        // construct y so that 1^T C^{-1} (y - mu) = 0: the residual is
        // orthogonal to C^{-1} 1
        let mu: Array1<f64> = nodes.iter().map(|&i| ens.mean_at(i)).collect();
        let c = ens.cov_matrix(&nodes);
        let fact = spd_factorize(&c, &NuggetPolicy::default()).unwrap();
        let ones: Array1<f64> = Array1::ones(2);
        let w = fact.solve(&ones);
        let r = array![w[1], -w[0]];
        let y = &mu + &r;
        let plain =
            PhikModel::fit_at_nodes(&ens, &nodes, y.as_slice().unwrap(), &NuggetPolicy::default(), MeanShift::None)
                .unwrap();
        let modified =
            PhikModel::fit_at_nodes(&ens, &nodes, y.as_slice().unwrap(), &NuggetPolicy::default(), MeanShift::Fitted)
                .unwrap();
        assert_relative_eq!(modified.delta_mu(), 0.0, epsilon = 1e-10);
        for i in 0..6 {
            let (m1, v1) = plain.predict_node(i);
            let (m2, v2) = modified.predict_node(i);
            assert_relative_eq!(m1, m2, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(v1, v2, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_shift_absorbed_by_delta_mu() {
        let g = grid_1d(6);
        let ens = random_ensemble(&g, 5, 37);
        let nodes = [0usize, 3, 5];
        let shift = 2.5;
        let values: Vec<f64> = nodes.iter().map(|&i| ens.mean_at(i) + shift).collect();
        let model =
            PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::Fitted).unwrap();
        assert_relative_eq!(model.delta_mu(), shift, max_relative = 1e-8);
        for i in 0..6 {
            let (mean, _) = model.predict_node(i);
            assert_relative_eq!(mean, ens.mean_at(i) + shift, max_relative = 1e-8);
        }
    }

    #[test]
    fn modified_posterior_matches_dense_oracle() {
        let g = grid_1d(5);
        let ens = random_ensemble(&g, 4, 41);
        let nodes = [0usize, 2];
        let values = [0.9, -0.4];
        let model =
            PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::Fitted).unwrap();
        let c = ens.cov_matrix(&nodes);
        let det = c[[0, 0]] * c[[1, 1]] - c[[0, 1]] * c[[1, 0]];
        let inv = array![[c[[1, 1]] / det, -c[[0, 1]] / det], [-c[[1, 0]] / det, c[[0, 0]] / det]];
        let y = array![values[0], values[1]];
        let mu = array![ens.mean_at(nodes[0]), ens.mean_at(nodes[1])];
        let ones = array![1.0, 1.0];
        let dm = ones.dot(&inv.dot(&(&y - &mu))) / ones.dot(&inv.dot(&ones));
        let r = &y - &mu - &(ones * dm);
        for star in 0..5 {
            let cv = array![ens.covariance(nodes[0], star), ens.covariance(nodes[1], star)];
            let expect_mean = ens.mean_at(star) + dm + cv.dot(&inv.dot(&r));
            let (mean, _) = model.predict_node(star);
            assert_relative_eq!(mean, expect_mean, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_shift_does_not_decrease_likelihood() {
        let g = grid_1d(7);
        for seed in [3u64, 5, 8, 13] {
            let ens = random_ensemble(&g, 5, seed);
            let nodes = [0usize, 3, 6];
            let mut rng = ChaCha12Rng::seed_from_u64(seed + 100);
            let values: Vec<f64> = nodes.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let model =
                PhikModel::fit_at_nodes(&ens, &nodes, &values, &NuggetPolicy::default(), MeanShift::Fitted).unwrap();
            let y = Array1::from_vec(values);
            let mu: Array1<f64> = nodes.iter().map(|&i| ens.mean_at(i)).collect();
            let shifted = &mu + model.delta_mu();
            let ll_plain = log_marginal_likelihood(&y, &mu, model.factorization()).unwrap();
            let ll_shifted = log_marginal_likelihood(&y, &shifted, model.factorization()).unwrap();
            assert!(ll_shifted >= ll_plain - 1e-12);
        }
    }

    #[test]
    fn point_api_requires_grid_nodes() {
        let g = grid_1d(5);
        let ens = random_ensemble(&g, 4, 47);
        let obs = ObservationSet::new(
            vec![Point::new(vec![0.0]), Point::new(vec![0.5])],
            vec![0.1, 0.2],
        )
        .unwrap();
        let (mean, _) = phik_predict(&ens, &obs, &NuggetPolicy::default(), &Point::new(vec![0.25]))
            .unwrap();
        assert!(mean.is_finite());
        let off = Point::new(vec![0.3]);
        assert!(matches!(
            phik_predict(&ens, &obs, &NuggetPolicy::default(), &off),
            Err(CophikError::ObservationOffGrid { .. })
        ));
    }
}
