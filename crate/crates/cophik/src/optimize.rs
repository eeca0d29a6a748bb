//! Bounded Nelder-Mead simplex descent with Latin-hypercube multi-start.
//!
//! Used to maximize concentrated log marginal likelihoods over
//! log-correlation-lengths. Starts are independent; the final argmax
//! breaks ties by lowest start index so results do not depend on
//! evaluation order.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Record of one multi-start run.
#[derive(Debug, Clone)]
pub struct StartRecord {
    pub start: Vec<f64>,
    pub start_value: f64,
    pub best: Vec<f64>,
    pub best_value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub best_start_index: usize,
    pub starts: Vec<StartRecord>,
}

/// Latin-hypercube sample of `count` points inside `bounds`.
pub fn latin_hypercube(bounds: &[(f64, f64)], count: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>> {
    let d = bounds.len();
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut perm: Vec<usize> = (0..count).collect();
        // Fisher-Yates with the seeded stream
        for i in (1..count).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        strata.push(perm);
    }
    (0..count)
        .map(|s| {
            (0..d)
                .map(|k| {
                    let (lo, hi) = bounds[k];
                    let cell = strata[k][s] as f64;
                    let u: f64 = rng.gen_range(0.0..1.0);
                    lo + (cell + u) / count as f64 * (hi - lo)
                })
                .collect()
        })
        .collect()
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Single bounded Nelder-Mead run maximizing `f`. Returns the best vertex,
/// its value, and the iteration count.
pub fn nelder_mead_max<F>(
    f: &F,
    start: &[f64],
    bounds: &[(f64, f64)],
    tol: f64,
    max_iters: usize,
) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let d = start.len();
    let (alpha, gamma, beta, delta) = (1.0, 2.0, 0.5, 0.5);

    // initial simplex: start plus a 5%-of-range step along each axis
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut x0 = start.to_vec();
    clamp_into(&mut x0, bounds);
    simplex.push(x0.clone());
    for k in 0..d {
        let (lo, hi) = bounds[k];
        let step = 0.05 * (hi - lo);
        let mut v = x0.clone();
        v[k] = if v[k] + step <= hi { v[k] + step } else { v[k] - step };
        simplex.push(v);
    }
    // minimize -f
    let neg = |x: &[f64]| -f(x);
    let mut values: Vec<f64> = simplex.iter().map(|v| neg(v)).collect();

    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        // order ascending by value (best first); stable sort keeps ties deterministic
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = ordered;
        values = ordered_vals;

        let spread = values[d] - values[0];
        if spread.abs() < tol && values[0].is_finite() {
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; d];
        for v in simplex.iter().take(d) {
            for k in 0..d {
                centroid[k] += v[k] / d as f64;
            }
        }

        let worst = simplex[d].clone();
        let mut reflected: Vec<f64> = (0..d)
            .map(|k| centroid[k] + alpha * (centroid[k] - worst[k]))
            .collect();
        clamp_into(&mut reflected, bounds);
        let fr = neg(&reflected);

        if fr < values[0] {
            // try expansion
            let mut expanded: Vec<f64> = (0..d)
                .map(|k| centroid[k] + gamma * (reflected[k] - centroid[k]))
                .collect();
            clamp_into(&mut expanded, bounds);
            let fe = neg(&expanded);
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
        } else {
            // contraction (outside if reflection improved on the worst)
            let (base, fbase) = if fr < values[d] { (reflected.clone(), fr) } else { (worst.clone(), values[d]) };
            let mut contracted: Vec<f64> = (0..d)
                .map(|k| centroid[k] + beta * (base[k] - centroid[k]))
                .collect();
            clamp_into(&mut contracted, bounds);
            let fc = neg(&contracted);
            if fc < fbase {
                simplex[d] = contracted;
                values[d] = fc;
            } else {
                // shrink toward the best vertex
                for i in 1..=d {
                    for k in 0..d {
                        simplex[i][k] = simplex[0][k] + delta * (simplex[i][k] - simplex[0][k]);
                    }
                    clamp_into(&mut simplex[i], bounds);
                    values[i] = neg(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), -values[best], iters)
}

/// Multi-start maximization: Latin-hypercube starts, one simplex descent
/// each, argmax over starts with ties to the lowest start index.
pub fn multi_start_max<F>(
    f: &F,
    bounds: &[(f64, f64)],
    starts: usize,
    tol: f64,
    max_iters: usize,
    rng: &mut ChaCha12Rng,
) -> MultiStartResult
where
    F: Fn(&[f64]) -> f64,
{
    assert!(starts >= 1, "need at least one start");
    let start_points = latin_hypercube(bounds, starts, rng);
    let mut records = Vec::with_capacity(starts);
    for sp in &start_points {
        let start_value = f(sp);
        let (best, best_value, iterations) = nelder_mead_max(f, sp, bounds, tol, max_iters);
        records.push(StartRecord {
            start: sp.clone(),
            start_value,
            best,
            best_value,
            iterations,
        });
    }
    let mut best_idx = 0;
    for (i, r) in records.iter().enumerate().skip(1) {
        if r.best_value > records[best_idx].best_value {
            best_idx = i;
        }
    }
    MultiStartResult {
        best: records[best_idx].best.clone(),
        best_value: records[best_idx].best_value,
        best_start_index: best_idx,
        starts: records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn latin_hypercube_stratifies_each_axis() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let pts = latin_hypercube(&[(0.0, 10.0), (-1.0, 1.0)], 8, &mut rng);
        assert_eq!(pts.len(), 8);
        for k in 0..2 {
            let (lo, hi) = [(0.0, 10.0), (-1.0, 1.0)][k];
            let mut cells: Vec<usize> = pts
                .iter()
                .map(|p| (((p[k] - lo) / (hi - lo)) * 8.0).floor() as usize)
                .collect();
            cells.sort_unstable();
            assert_eq!(cells, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn finds_quadratic_maximum() {
        let f = |x: &[f64]| -(x[0] - 1.2).powi(2) - 2.0 * (x[1] + 0.3).powi(2);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let res = multi_start_max(&f, &[(-5.0, 5.0), (-5.0, 5.0)], 6, 1e-12, 500, &mut rng);
        assert_relative_eq!(res.best[0], 1.2, epsilon = 1e-4);
        assert_relative_eq!(res.best[1], -0.3, epsilon = 1e-4);
        // returned value dominates every start value
        for r in &res.starts {
            assert!(res.best_value >= r.start_value);
            assert!(res.best_value >= r.best_value);
        }
    }

    #[test]
    fn respects_bounds_when_maximum_outside() {
        let f = |x: &[f64]| x[0]; // maximized at the upper bound
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let res = multi_start_max(&f, &[(0.0, 2.0)], 4, 1e-10, 300, &mut rng);
        assert_relative_eq!(res.best[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let f = |x: &[f64]| -(x[0]).powi(2);
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            multi_start_max(&f, &[(-1.0, 1.0)], 5, 1e-10, 200, &mut rng)
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a.best, b.best);
        assert_eq!(a.best_value, b.best_value);
        assert_eq!(a.best_start_index, b.best_start_index);
    }
}
