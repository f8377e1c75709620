//! Sparse Gaussian graphical model estimation.
//!
//! A network over genes is the support of the precision (inverse covariance)
//! matrix. Three estimator families are provided: the graphical lasso (with
//! BIC or cross-validated tuning, optionally followed by adaptive
//! thresholding), neighbourhood selection by nodewise lasso regressions, and
//! shrinkage partial correlations. All tuning searches a shared
//! log-equispaced penalty grid.

pub mod glasso;
pub mod mb;
pub mod shrink;

use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::constrained_mle::gaussian_loglik;
use crate::error::{Error, Result};
use crate::types::{CovarianceMatrix, ExpressionMatrix, PrecisionMatrix, UndirectedGraph};

/// Entries of magnitude at most this are treated as structural zeros when a
/// precision matrix is converted to a graph. Coordinate descent produces
/// exact zeros, so this only guards round-off.
pub const ZERO_TOL: f64 = 1e-12;

/// Network inference method identifiers, as accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkInference {
    /// Graphical lasso, cross-validated penalty.
    GlCv,
    /// Graphical lasso, cross-validated penalty, adaptive thresholding.
    GlCvAt,
    /// Graphical lasso, BIC-selected penalty.
    GlBic,
    /// Graphical lasso, BIC-selected penalty, adaptive thresholding.
    GlBicAt,
    /// Neighbourhood selection by nodewise lasso, cross-validated penalty.
    MbCv,
    /// Shrinkage partial correlations with local-fdr edge calls.
    Shrink,
}

impl NetworkInference {
    pub const ALL: [NetworkInference; 6] = [
        NetworkInference::GlCv,
        NetworkInference::GlCvAt,
        NetworkInference::GlBic,
        NetworkInference::GlBicAt,
        NetworkInference::MbCv,
        NetworkInference::Shrink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetworkInference::GlCv => "gl-cv",
            NetworkInference::GlCvAt => "gl-cv-at",
            NetworkInference::GlBic => "gl-bic",
            NetworkInference::GlBicAt => "gl-bic-at",
            NetworkInference::MbCv => "mb-cv",
            NetworkInference::Shrink => "shrink",
        }
    }
}

impl std::fmt::Display for NetworkInference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NetworkInference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NetworkInference::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown network inference method {s:?}; expected one of \
                     gl-cv, gl-cv-at, gl-bic, gl-bic-at, mb-cv, shrink"
                ))
            })
    }
}

/// Descending penalty values for a regularization path.
#[derive(Clone, Debug)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    /// Wrap explicit penalty values (descending, strictly positive).
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty penalty grid".into()));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "penalty grid values must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput(
                "penalty grid must be strictly descending".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Center and scale each column to mean zero and unit variance (n−1 divisor).
pub fn standardize(x: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    let n = x.n_samples();
    if n < 2 {
        return Err(Error::TooFewSamples {
            context: "standardize",
            needed: 2,
            got: n,
        });
    }
    let mut data = x.data().clone();
    for (j, mut col) in data.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ConstantColumn {
                index: j,
                gene: x.gene_ids()[j].clone(),
            });
        }
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    ExpressionMatrix::new(data, x.gene_ids().to_vec())
}

/// Column-centered covariance with the maximum-likelihood divisor 1/n.
pub fn sample_covariance(x: &ExpressionMatrix) -> Result<CovarianceMatrix> {
    let n = x.n_samples();
    if n < 2 {
        return Err(Error::TooFewSamples {
            context: "sample_covariance",
            needed: 2,
            got: n,
        });
    }
    let d = x.n_genes();
    let data = x.data();
    let means: Vec<f64> = (0..d).map(|j| data.column(j).sum() / n as f64).collect();
    let mut s = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        for k in j..d {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (data[[i, j]] - means[j]) * (data[[i, k]] - means[k]);
            }
            let v = acc / n as f64;
            s[[j, k]] = v;
            s[[k, j]] = v;
        }
    }
    validate_covariance_diagonal(&s, x)?;
    CovarianceMatrix::new(s, n)
}

/// Uncentered second moment (1/n)·XᵀX, the covariance MLE when the mean is
/// fixed at zero. Used for all second-half likelihood evaluations, where the
/// model is zero-mean by construction (standardized data).
pub fn second_moment(x: &ExpressionMatrix) -> Result<CovarianceMatrix> {
    let n = x.n_samples();
    if n < 1 {
        return Err(Error::TooFewSamples {
            context: "second_moment",
            needed: 1,
            got: n,
        });
    }
    let d = x.n_genes();
    let data = x.data();
    let mut s = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        for k in j..d {
            let mut acc = 0.0;
            for i in 0..n {
                acc += data[[i, j]] * data[[i, k]];
            }
            let v = acc / n as f64;
            s[[j, k]] = v;
            s[[k, j]] = v;
        }
    }
    validate_covariance_diagonal(&s, x)?;
    CovarianceMatrix::new(s, n)
}

fn validate_covariance_diagonal(s: &Array2<f64>, x: &ExpressionMatrix) -> Result<()> {
    for j in 0..s.nrows() {
        if !(s[[j, j]] > 0.0) {
            return Err(Error::ConstantColumn {
                index: j,
                gene: x.gene_ids()[j].clone(),
            });
        }
    }
    Ok(())
}

/// Twenty log-equispaced penalties from λ_max = max_{j>j'}|S_{jj'}| down to
/// λ_max/100 (d ≥ n) or λ_max/1000 (d < n).
pub fn lambda_grid(s: &CovarianceMatrix, n: usize, d: usize) -> Result<LambdaGrid> {
    if d < 2 {
        return Err(Error::InvalidInput(
            "penalty grid needs at least 2 genes".into(),
        ));
    }
    let values = s.values();
    let mut lambda_max = 0.0f64;
    for j in 0..d {
        for k in (j + 1)..d {
            lambda_max = lambda_max.max(values[[j, k]].abs());
        }
    }
    if lambda_max <= 0.0 {
        return Err(Error::DegenerateGrid);
    }
    let ratio = if d >= n { 100.0 } else { 1000.0 };
    let lambda_min = lambda_max / ratio;
    let count = 20usize;
    let step = (lambda_min / lambda_max).ln() / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count)
        .map(|i| lambda_max * (step * i as f64).exp())
        .collect();
    grid[0] = lambda_max;
    grid[count - 1] = lambda_min;
    LambdaGrid::from_values(grid)
}

/// Graph with an edge wherever |Ω_{jj'}| > zero_tol, j ≠ j'.
pub fn induced_graph(omega: &PrecisionMatrix, zero_tol: f64) -> UndirectedGraph {
    let d = omega.dim();
    let values = omega.values();
    let mut g = UndirectedGraph::new(d);
    for j in 0..d {
        for k in (j + 1)..d {
            if values[[j, k]].abs() > zero_tol {
                g.add_edge(j, k).expect("in-range edge");
            }
        }
    }
    g
}

/// Sparsity index m(G) = 2|E|/(n·d) and its inverse (samples per predictor).
#[derive(Clone, Copy, Debug)]
pub struct SparsityReport {
    pub edge_count: usize,
    pub m: f64,
    /// 1/m; absent for an empty graph.
    pub inverse_m: Option<f64>,
}

pub fn sparsity_index(g: &UndirectedGraph, n: usize) -> SparsityReport {
    assert!(n >= 1, "sparsity index needs n >= 1");
    let e = g.edge_count();
    let m = 2.0 * e as f64 / (n as f64 * g.n_vertices() as f64);
    SparsityReport {
        edge_count: e,
        m,
        inverse_m: if e > 0 { Some(1.0 / m) } else { None },
    }
}

/// Prune the weakest edges of `omega` until the inverse sparsity 1/m reaches
/// `tau` samples per predictor, or no edge remains.
///
/// Partial correlations are computed once from the input and not refit between
/// removals: this is a pruning of the estimate, not a re-estimation; surviving
/// entries keep their values and downstream likelihood evaluation refits by
/// constrained MLE. Ties on |partial correlation| break toward the smaller
/// (j, j') pair.
pub fn adaptive_threshold(
    omega: &PrecisionMatrix,
    n: usize,
    tau: f64,
) -> Result<(PrecisionMatrix, UndirectedGraph)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    if n < 1 {
        return Err(Error::TooFewSamples {
            context: "adaptive_threshold",
            needed: 1,
            got: n,
        });
    }
    let d = omega.dim();
    let mut values = omega.values().clone();
    let pcorr = omega.partial_correlations();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for j in 0..d {
        for k in (j + 1)..d {
            if values[[j, k]].abs() > ZERO_TOL {
                edges.push((j, k));
            }
        }
    }
    edges.sort_by(|&(aj, ak), &(bj, bk)| {
        let ra = pcorr[[aj, ak]].abs();
        let rb = pcorr[[bj, bk]].abs();
        ra.partial_cmp(&rb)
            .expect("finite partial correlations")
            .then((aj, ak).cmp(&(bj, bk)))
    });
    let nd = n as f64 * d as f64;
    let mut remaining = edges.len();
    let mut next_removal = 0usize;
    while remaining > 0 {
        let m = 2.0 * remaining as f64 / nd;
        if 1.0 / m >= tau {
            break;
        }
        let (j, k) = edges[next_removal];
        values[[j, k]] = 0.0;
        values[[k, j]] = 0.0;
        next_removal += 1;
        remaining -= 1;
    }
    let mut g = UndirectedGraph::new(d);
    for &(j, k) in &edges[next_removal..] {
        g.add_edge(j, k).expect("in-range edge");
    }
    let thresholded = PrecisionMatrix::new(values)?;
    Ok((thresholded, g))
}

/// Count of nonzero strictly-upper-triangle entries.
fn upper_nonzero_count(omega: &Array2<f64>) -> usize {
    let d = omega.nrows();
    let mut count = 0;
    for j in 0..d {
        for k in (j + 1)..d {
            if omega[[j, k]].abs() > ZERO_TOL {
                count += 1;
            }
        }
    }
    count
}

/// Path points tolerated past the BIC minimum before the scan stops. BIC
/// along a descending-penalty graphical lasso path falls to its minimum and
/// then climbs as the fit densifies, so once this many consecutive penalties
/// fail to improve, the (expensive, near-dense) remainder of the path cannot
/// win and is skipped.
const BIC_PATIENCE: usize = 3;

/// BIC model selection along the penalty path, warm-starting each fit from
/// the previous (larger) penalty. Ties break toward the larger penalty.
pub fn select_lambda_bic(
    x: &ExpressionMatrix,
    grid: &LambdaGrid,
) -> Result<(f64, PrecisionMatrix)> {
    let s = sample_covariance(x)?;
    select_lambda_bic_cov(&s, grid)
}

/// BIC selection against a precomputed covariance.
pub fn select_lambda_bic_cov(
    s: &CovarianceMatrix,
    grid: &LambdaGrid,
) -> Result<(f64, PrecisionMatrix)> {
    let n = s.n_samples();
    let d = s.dim();
    let log_n = (n as f64).ln();
    let mut warm: Option<Array2<f64>> = None;
    let mut best: Option<(f64, f64, Array2<f64>)> = None;
    let mut since_best = 0usize;
    for &lambda in grid.values() {
        let omega = glasso::glasso_fit_warm(s, lambda, warm.as_ref(), &glasso::GlassoOptions::default())?;
        let ll = gaussian_loglik(&omega, s)?;
        let df = (d + upper_nonzero_count(&omega)) as f64;
        let bic = -2.0 * ll + log_n * df;
        let better = match &best {
            None => true,
            Some((_, best_bic, _)) => bic < *best_bic,
        };
        if better {
            best = Some((lambda, bic, omega.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= BIC_PATIENCE {
                break;
            }
        }
        warm = Some(omega);
    }
    let (lambda, _, omega) = best.expect("non-empty grid");
    Ok((lambda, PrecisionMatrix::new(omega)?))
}

/// Seeded K-fold partition of 0..n: indices are shuffled and dealt
/// round-robin, so fold sizes differ by at most one.
pub(crate) fn cv_folds(n: usize, folds: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut out = vec![Vec::new(); folds];
    for (pos, sample) in idx.into_iter().enumerate() {
        out[pos % folds].push(sample);
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    out
}

/// Mean and covariance of the rows of `x` restricted to `rows`; covariance is
/// centered by `center` (1/n divisor).
fn moments_about(
    x: &ExpressionMatrix,
    rows: &[usize],
    center: &Array1<f64>,
) -> Array2<f64> {
    let d = x.n_genes();
    let data = x.data();
    let mut s = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        for k in j..d {
            let mut acc = 0.0;
            for &i in rows {
                acc += (data[[i, j]] - center[j]) * (data[[i, k]] - center[k]);
            }
            let v = acc / rows.len() as f64;
            s[[j, k]] = v;
            s[[k, j]] = v;
        }
    }
    s
}

fn column_means(x: &ExpressionMatrix, rows: &[usize]) -> Array1<f64> {
    let d = x.n_genes();
    let data = x.data();
    let mut mu = Array1::<f64>::zeros(d);
    for j in 0..d {
        let mut acc = 0.0;
        for &i in rows {
            acc += data[[i, j]];
        }
        mu[j] = acc / rows.len() as f64;
    }
    mu
}

/// Cross-validated penalty selection: fit on each fold's complement, score by
/// held-out negative log-likelihood, refit on all data at the winner.
///
/// Held-out covariances are centered by the training mean (folds may be too
/// small to center by their own), so the score is a genuine out-of-sample
/// evaluation of the training-fold model.
pub fn select_lambda_cv(
    x: &ExpressionMatrix,
    grid: &LambdaGrid,
    folds: usize,
    rng: &mut impl Rng,
) -> Result<(f64, PrecisionMatrix)> {
    let n = x.n_samples();
    if folds < 2 {
        return Err(Error::InvalidInput("cross-validation needs >= 2 folds".into()));
    }
    if n < folds {
        return Err(Error::TooFewSamples {
            context: "select_lambda_cv",
            needed: folds,
            got: n,
        });
    }
    let assignments = cv_folds(n, folds, rng);
    let mut score = vec![0.0f64; grid.len()];
    for test_rows in &assignments {
        let train_rows: Vec<usize> = (0..n).filter(|i| !test_rows.contains(i)).collect();
        if train_rows.len() < 2 {
            return Err(Error::TooFewSamples {
                context: "cross-validation training fold",
                needed: 2,
                got: train_rows.len(),
            });
        }
        let mu = column_means(x, &train_rows);
        let s_train =
            CovarianceMatrix::new(moments_about(x, &train_rows, &mu), train_rows.len())?;
        let s_test =
            CovarianceMatrix::new(moments_about(x, test_rows, &mu), test_rows.len())?;
        let mut warm: Option<Array2<f64>> = None;
        for (li, &lambda) in grid.values().iter().enumerate() {
            let omega = glasso::glasso_fit_warm(
                &s_train,
                lambda,
                warm.as_ref(),
                &glasso::GlassoOptions::default(),
            )?;
            score[li] -= gaussian_loglik(&omega, &s_test)?;
            warm = Some(omega);
        }
    }
    let mut best = 0usize;
    for li in 1..score.len() {
        if score[li] < score[best] {
            best = li;
        }
    }
    let lambda_star = grid.values()[best];
    // Refit on all data, warm-starting down the path to the winner.
    let s_full = sample_covariance(x)?;
    let mut warm: Option<Array2<f64>> = None;
    let mut fit: Option<Array2<f64>> = None;
    for &lambda in grid.values().iter().take(best + 1) {
        let omega = glasso::glasso_fit_warm(
            &s_full,
            lambda,
            warm.as_ref(),
            &glasso::GlassoOptions::default(),
        )?;
        warm = Some(omega.clone());
        fit = Some(omega);
    }
    Ok((lambda_star, PrecisionMatrix::new(fit.expect("non-empty grid"))?))
}
