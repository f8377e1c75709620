//! Neighbourhood selection: one lasso regression per node on the remaining
//! nodes, all at a shared penalty chosen by cross-validation on the pooled
//! squared prediction error, with OR-rule symmetrization.
//!
//! Regressions are computed in gram form: on standardized data the model has
//! no intercept, so only (1/n)XᵀX enters, and held-out error is evaluated
//! exactly from the held-out gram matrix.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{ExpressionMatrix, UndirectedGraph};

use super::{cv_folds, LambdaGrid};

const MAX_SWEEPS: usize = 1000;
const COEF_TOL: f64 = 1e-9;

/// Uncentered gram matrix (1/|rows|)·XᵀX over the given rows.
fn gram(x: &ExpressionMatrix, rows: &[usize]) -> Array2<f64> {
    let d = x.n_genes();
    let data = x.data();
    let mut g = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        for k in j..d {
            let mut acc = 0.0;
            for &i in rows {
                acc += data[[i, j]] * data[[i, k]];
            }
            let v = acc / rows.len() as f64;
            g[[j, k]] = v;
            g[[k, j]] = v;
        }
    }
    g
}

/// Coordinate descent for min (1/2)βᵀGβ − gᵀβ + λ‖β‖₁ where G and g are the
/// predictor gram block and predictor-target covariances for node `target`
/// (entries at index `target` are ignored). `beta` is the warm start and the
/// result. Produces exact zeros via soft thresholding.
fn lasso_gram(
    g: &Array2<f64>,
    target: usize,
    lambda: f64,
    beta: &mut [f64],
) -> Result<()> {
    let d = g.nrows();
    // residual_k = g_k,target − Σ_l G_kl β_l, maintained incrementally.
    let mut resid: Vec<f64> = (0..d)
        .map(|k| {
            let mut r = g[[k, target]];
            for l in 0..d {
                if l != target && beta[l] != 0.0 {
                    r -= g[[k, l]] * beta[l];
                }
            }
            r
        })
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut max_move = 0.0f64;
        for k in 0..d {
            if k == target {
                continue;
            }
            let gkk = g[[k, k]];
            if !(gkk > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "zero variance for predictor {k} in nodewise regression"
                )));
            }
            let rho = resid[k] + gkk * beta[k];
            let new = soft_threshold(rho, lambda) / gkk;
            let delta = new - beta[k];
            if delta != 0.0 {
                beta[k] = new;
                for l in 0..d {
                    resid[l] -= g[[l, k]] * delta;
                }
                max_move = max_move.max(delta.abs());
            }
        }
        let scale = beta
            .iter()
            .fold(1.0f64, |acc, b| acc.max(b.abs()));
        if max_move <= COEF_TOL * scale {
            return Ok(());
        }
    }
    Err(Error::LassoNonConvergence { iters: MAX_SWEEPS })
}

fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

/// Held-out squared prediction error n_test·(T_jj − 2βᵀt_j + βᵀTβ) for node
/// `target`, from the held-out gram matrix T.
fn holdout_sse(t: &Array2<f64>, target: usize, beta: &[f64], n_test: usize) -> f64 {
    let d = t.nrows();
    let mut quad = 0.0;
    let mut lin = 0.0;
    for k in 0..d {
        if k == target || beta[k] == 0.0 {
            continue;
        }
        lin += beta[k] * t[[k, target]];
        for l in 0..d {
            if l != target && beta[l] != 0.0 {
                quad += beta[k] * t[[k, l]] * beta[l];
            }
        }
    }
    n_test as f64 * (t[[target, target]] - 2.0 * lin + quad)
}

/// Fit the neighbourhood-selection graph. The penalty shared by all node
/// regressions is chosen by `folds`-fold cross-validation on the squared
/// prediction error pooled across nodes; ties break toward the larger
/// penalty. The returned edge set is the OR-rule union of the directed
/// selections.
pub fn mb_fit(
    x: &ExpressionMatrix,
    grid: &LambdaGrid,
    folds: usize,
    rng: &mut impl Rng,
) -> Result<UndirectedGraph> {
    let n = x.n_samples();
    let d = x.n_genes();
    if d < 2 {
        return Err(Error::InvalidInput(
            "neighbourhood selection needs at least 2 genes".into(),
        ));
    }
    if folds < 2 {
        return Err(Error::InvalidInput("cross-validation needs >= 2 folds".into()));
    }
    if n < folds {
        return Err(Error::TooFewSamples {
            context: "mb_fit",
            needed: folds,
            got: n,
        });
    }
    let assignments = cv_folds(n, folds, rng);
    let mut score = vec![0.0f64; grid.len()];
    for test_rows in &assignments {
        let train_rows: Vec<usize> = (0..n).filter(|i| !test_rows.contains(i)).collect();
        let g_train = gram(x, &train_rows);
        let g_test = gram(x, test_rows);
        // Warm starts carry along the descending path, per node.
        let mut betas = vec![vec![0.0f64; d]; d];
        for (li, &lambda) in grid.values().iter().enumerate() {
            for node in 0..d {
                lasso_gram(&g_train, node, lambda, &mut betas[node])?;
                score[li] += holdout_sse(&g_test, node, &betas[node], test_rows.len());
            }
        }
    }
    let mut best = 0usize;
    for li in 1..score.len() {
        if score[li] < score[best] {
            best = li;
        }
    }
    // Refit every node on all data at the winner, walking the path down.
    let g_full = gram(x, &(0..n).collect::<Vec<_>>());
    let mut betas = vec![vec![0.0f64; d]; d];
    for &lambda in grid.values().iter().take(best + 1) {
        for node in 0..d {
            lasso_gram(&g_full, node, lambda, &mut betas[node])?;
        }
    }
    let mut graph = UndirectedGraph::new(d);
    for j in 0..d {
        for k in (j + 1)..d {
            if betas[j][k] != 0.0 || betas[k][j] != 0.0 {
                graph.add_edge(j, k)?;
            }
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ggm::{lambda_grid, sample_covariance, standardize};
    use crate::seed::task_rng;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn independent_data(n: usize, d: usize, seed: u64) -> ExpressionMatrix {
        let mut rng = task_rng(seed, &[1]);
        let mut data = Array2::<f64>::zeros((n, d));
        for v in data.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        ExpressionMatrix::unlabeled(data)
    }

    fn correlated_pair(n: usize, r: f64, seed: u64) -> ExpressionMatrix {
        let mut rng = task_rng(seed, &[2]);
        let mut data = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            data[[i, 0]] = a;
            data[[i, 1]] = r * a + (1.0 - r * r).sqrt() * b;
        }
        ExpressionMatrix::unlabeled(data)
    }

    #[test]
    fn large_lambda_gives_empty_graph() {
        let x = standardize(&independent_data(50, 5, 3)).unwrap();
        // Any lambda at or above max |correlation| zeroes every regression.
        let grid = LambdaGrid::from_values(vec![1.5]).unwrap();
        let g = mb_fit(&x, &grid, 5, &mut task_rng(1, &[0])).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn strong_pair_is_detected() {
        let x = standardize(&correlated_pair(200, 0.9, 4)).unwrap();
        let grid = LambdaGrid::from_values(vec![0.05]).unwrap();
        let g = mb_fit(&x, &grid, 10, &mut task_rng(2, &[0])).unwrap();
        assert!(g.has_edge(0, 1));
        // Closed form for a single predictor at small lambda: the coefficient
        // soft(T_01, λ)/T_00 is nonzero because |sample correlation| ≈ 0.9.
    }

    #[test]
    fn single_predictor_coefficient_matches_closed_form() {
        let x = standardize(&correlated_pair(100, 0.7, 5)).unwrap();
        let rows: Vec<usize> = (0..100).collect();
        let g = gram(&x, &rows);
        let lambda = 0.1;
        let mut beta = vec![0.0f64; 2];
        lasso_gram(&g, 0, lambda, &mut beta).unwrap();
        let want = soft_threshold(g[[1, 0]], lambda) / g[[1, 1]];
        assert!((beta[1] - want).abs() < 1e-12);
    }

    #[test]
    fn relabeling_equivariance() {
        let x = standardize(&independent_data(60, 4, 6)).unwrap();
        let s = sample_covariance(&x).unwrap();
        let grid = lambda_grid(&s, 60, 4).unwrap();
        let g1 = mb_fit(&x, &grid, 5, &mut task_rng(7, &[0])).unwrap();
        // Relabel nodes by reversal; same fold RNG.
        let perm = [3usize, 2, 1, 0];
        let x_perm = x.select_genes(&perm);
        let g2 = mb_fit(&x_perm, &grid, 5, &mut task_rng(7, &[0])).unwrap();
        let g2_back = g2.relabelled(&perm).unwrap();
        assert_eq!(g1, g2_back);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = standardize(&independent_data(40, 5, 8)).unwrap();
        let s = sample_covariance(&x).unwrap();
        let grid = lambda_grid(&s, 40, 5).unwrap();
        let g1 = mb_fit(&x, &grid, 5, &mut task_rng(9, &[0])).unwrap();
        let g2 = mb_fit(&x, &grid, 5, &mut task_rng(9, &[0])).unwrap();
        assert_eq!(g1, g2);
    }
}
