//! Synthetic data generators and an evaluation harness.
//!
//! Two kinds of scenario are covered: two-sample experiments on a single
//! 50-gene panel (random sparse precision pairs and AR(1) covariance pairs)
//! and a 20-gene-set experiment where three sets carry mean shifts and a
//! controlled amount of network discordance, optionally contaminated with
//! heavy-tailed rows. Likelihood-ratio baselines and a metrics harness
//! (power, screening consistency, sparsity, ROC/FDR/TPR) support method
//! comparisons.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ChiSquared as ChiSquaredDist, ContinuousCDF};

use crate::diffnet::{diffnet_test, NullStrategy, ScreenOptions};
use crate::error::{Error, Result};
use crate::ggm::{standardize, NetworkInference};
use crate::gsa::{
    classic_gsa, combine_min, run_netgsa, run_single_split, GeneSetCollection, NetgsaConfig,
    DEFAULT_MIN_SET_SIZE,
};
use crate::linalg;
use crate::seed::{child_seed, task_rng};
use crate::stats::bh_adjust;
use crate::types::{ExpressionMatrix, UndirectedGraph};

/// Smallest admissible eigenvalue of a generated precision matrix.
const MIN_PRECISION_EIGENVALUE: f64 = 0.1;

/// Scenario families. Sample sizes and dimensions are fixed by the family:
/// the two-sample models use n = 100 per condition and d = 50; the gene-set
/// family uses n = 40 per condition and 20 sets of 20 to 39 genes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimModel {
    /// Sparse precision pair sharing a fraction `alpha` of their support.
    Model1 { alpha: f64 },
    /// AR(1) covariances with parameters 0.7 and `beta`.
    Model2 { beta: f64 },
    /// 20 gene-sets; sets 1-3 carry mean shifts and concordance `alpha`.
    GeneSets { alpha: f64 },
}

/// Replace a fraction of rows with multivariate-t draws of the given degrees
/// of freedom (same scale matrix, same mean).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contamination {
    pub fraction: f64,
    pub t_df: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimScenario {
    pub model: SimModel,
    pub contamination: Option<Contamination>,
    pub seed: u64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        match self.model {
            SimModel::Model1 { alpha } | SimModel::GeneSets { alpha } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidInput(format!(
                        "support concordance alpha must be in [0, 1], got {alpha}"
                    )));
                }
            }
            SimModel::Model2 { beta } => {
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "autocorrelation beta must be in (0, 1), got {beta}"
                    )));
                }
            }
        }
        if let Some(c) = self.contamination {
            if !matches!(self.model, SimModel::GeneSets { .. }) {
                return Err(Error::InvalidInput(
                    "contamination is defined for the gene-set scenario only".into(),
                ));
            }
            if !(0.0..1.0).contains(&c.fraction) {
                return Err(Error::InvalidInput(format!(
                    "contamination fraction must be in [0, 1), got {}",
                    c.fraction
                )));
            }
            if c.t_df == 0 {
                return Err(Error::InvalidInput(
                    "contamination degrees of freedom must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Round a requested shared-support count, logging inexact requests.
fn shared_count(alpha: f64, support: usize) -> usize {
    let exact = alpha * support as f64;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 {
        log::info!("rounding shared support count {exact:.3} to {rounded}");
    }
    rounded as usize
}

/// Magnitude band for precision entries at positions common to both
/// conditions, and for condition-specific positions. Common entries are
/// drawn strong so the half-sample screens recover them reliably: the
/// nested null of the split test needs the three screened graphs to agree
/// on shared structure, and a missed shared edge costs the statistic far
/// more than a spurious one. Specific entries are moderate so power grows
/// gradually with discordance instead of saturating.
pub(crate) const SHARED_MAGNITUDE: (f64, f64) = (0.65, 0.75);
pub(crate) const SPECIFIC_MAGNITUDE: (f64, f64) = (0.40, 0.50);

/// Condition-specific band for the gene-set experiment. Those blocks are
/// dense relative to their size (half as many edges as nodes), so the
/// eigenvalue floor forces the diagonal repair, which dilutes every entry of
/// a block by a common factor. Specific entries are therefore drawn well
/// above the half-sample detection boundary so they stay screenable after
/// dilution. Null sets are all-shared and draw no specific entries, so their
/// generation is unaffected.
pub(crate) const SET_SPECIFIC_MAGNITUDE: (f64, f64) = (0.80, 0.90);

/// Support draws whose normalized precision dips below the eigenvalue floor
/// are redrawn rather than repaired: a diagonal repair dilutes partial
/// correlations, turning reliably screenable edges into marginal ones.
/// Dense supports that cannot satisfy the floor by redrawing (small blocks
/// with many edges) fall back to the diagonal repair after this many tries.
const REDRAW_ATTEMPTS: usize = 50;

/// A pair of sparse precision matrices on d vertices: `support` off-diagonal
/// entries each, of which `shared` sit at common positions with common
/// values drawn from +/-SHARED_MAGNITUDE; the rest are condition-specific
/// with values from +/-SPECIFIC_MAGNITUDE. Both matrices are normalized to a
/// unit-diagonal implied covariance, redrawing (or, for dense supports,
/// repairing) until the smallest eigenvalue clears 0.1.
pub(crate) fn precision_pair(
    d: usize,
    support: usize,
    shared: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, Array2<f64>, UndirectedGraph, UndirectedGraph)> {
    precision_pair_banded(d, support, shared, SPECIFIC_MAGNITUDE, rng)
}

/// As `precision_pair`, with the condition-specific magnitude band supplied
/// by the caller.
pub(crate) fn precision_pair_banded(
    d: usize,
    support: usize,
    shared: usize,
    specific: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, Array2<f64>, UndirectedGraph, UndirectedGraph)> {
    let n_pairs = d * (d - 1) / 2;
    if shared > support || support + (support - shared) > n_pairs {
        return Err(Error::InvalidInput(format!(
            "cannot place {support} edges with {shared} shared on {d} vertices"
        )));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..d {
        for j in (i + 1)..d {
            pairs.push((i, j));
        }
    }

    let mut fallback = None;
    for attempt in 0..=REDRAW_ATTEMPTS {
        let extra = support - shared;
        let picked = index_sample(rng, n_pairs, shared + 2 * extra).into_vec();
        let mut omega_x = Array2::<f64>::eye(d);
        let mut omega_y = Array2::<f64>::eye(d);
        let mut g_x = UndirectedGraph::new(d);
        let mut g_y = UndirectedGraph::new(d);
        let draw = |rng: &mut ChaCha8Rng, band: (f64, f64)| -> f64 {
            let magnitude = rng.random_range(band.0..=band.1);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        };
        for (k, &p) in picked.iter().enumerate() {
            let (i, j) = pairs[p];
            if k < shared {
                let value = draw(rng, SHARED_MAGNITUDE);
                omega_x[[i, j]] = value;
                omega_x[[j, i]] = value;
                omega_y[[i, j]] = value;
                omega_y[[j, i]] = value;
                g_x.add_edge(i, j)?;
                g_y.add_edge(i, j)?;
            } else if k < shared + extra {
                let value = draw(rng, specific);
                omega_x[[i, j]] = value;
                omega_x[[j, i]] = value;
                g_x.add_edge(i, j)?;
            } else {
                let value = draw(rng, specific);
                omega_y[[i, j]] = value;
                omega_y[[j, i]] = value;
                g_y.add_edge(i, j)?;
            }
        }
        if attempt < REDRAW_ATTEMPTS
            && linalg::min_eigenvalue(&omega_x) >= MIN_PRECISION_EIGENVALUE
            && linalg::min_eigenvalue(&omega_y) >= MIN_PRECISION_EIGENVALUE
        {
            normalize_unit_diagonal(&mut omega_x);
            normalize_unit_diagonal(&mut omega_y);
            if linalg::min_eigenvalue(&omega_x) >= MIN_PRECISION_EIGENVALUE
                && linalg::min_eigenvalue(&omega_y) >= MIN_PRECISION_EIGENVALUE
            {
                return Ok((omega_x, omega_y, g_x, g_y));
            }
        } else {
            fallback = Some((omega_x, omega_y, g_x, g_y));
        }
    }
    let (mut omega_x, mut omega_y, g_x, g_y) = fallback.expect("final attempt recorded");
    repair_pd(&mut omega_x);
    repair_pd(&mut omega_y);
    Ok((omega_x, omega_y, g_x, g_y))
}

/// Rescale Ω so its implied covariance Ω⁻¹ has unit diagonal (a congruence
/// by a positive diagonal: partial correlations and support are unchanged).
fn normalize_unit_diagonal(omega: &mut Array2<f64>) {
    let d = omega.nrows();
    let sigma = linalg::sym_inverse(omega).expect("precision matrix is positive definite");
    let scale: Vec<f64> = (0..d).map(|j| sigma[[j, j]].sqrt()).collect();
    for j in 0..d {
        for k in 0..d {
            omega[[j, k]] *= scale[j] * scale[k];
        }
    }
}

/// Normalize to a unit-diagonal implied covariance, shifting the spectrum up
/// to the admissible minimum beforehand when needed; repeat because rescaling
/// moves the spectrum again. Support is unaffected: both steps only scale or
/// shift. The returned matrix always describes variables with unit variance,
/// so simulated margins are standardized in the population.
fn repair_pd(omega: &mut Array2<f64>) {
    let d = omega.nrows();
    for _ in 0..100 {
        let lo = linalg::min_eigenvalue(omega);
        if lo < MIN_PRECISION_EIGENVALUE {
            for j in 0..d {
                omega[[j, j]] += MIN_PRECISION_EIGENVALUE - lo + 1e-9;
            }
        }
        normalize_unit_diagonal(omega);
        if linalg::min_eigenvalue(omega) >= MIN_PRECISION_EIGENVALUE {
            return;
        }
    }
    let lo = linalg::min_eigenvalue(omega);
    if lo < MIN_PRECISION_EIGENVALUE {
        log::warn!("eigenvalue repair did not settle; applying final shift without rescale");
        for j in 0..d {
            omega[[j, j]] += MIN_PRECISION_EIGENVALUE - lo + 1e-9;
        }
    }
}

/// n rows from N(mean, sigma) given a covariance matrix.
fn gaussian_sample(
    n: usize,
    sigma: &Array2<f64>,
    mean: Option<&[f64]>,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    let d = sigma.nrows();
    let l = linalg::cholesky(sigma).ok_or(Error::NotPositiveDefinite {
        context: "simulation covariance",
    })?;
    let mut out = Array2::<f64>::zeros((n, d));
    let mut z = vec![0.0f64; d];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..=j {
                acc += l[[j, k]] * z[k];
            }
            out[[i, j]] = acc + mean.map_or(0.0, |m| m[j]);
        }
    }
    Ok(out)
}

/// Two-sample data from a random sparse precision pair on 50 genes, with
/// `alpha` of the 10 support entries per matrix at shared positions (shared
/// values). The generating covariances have zero mean and unit diagonal, so
/// the output is standardized in the population; samples are left untouched
/// (an in-sample rescale would pin each half's variance and distort the
/// split-based test's null). Returns the support graphs.
pub fn gen_model1(
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(ExpressionMatrix, ExpressionMatrix, UndirectedGraph, UndirectedGraph)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "support concordance alpha must be in [0, 1], got {alpha}"
        )));
    }
    let (d, n, support) = (50, 100, 10);
    let shared = shared_count(alpha, support);
    let (omega_x, omega_y, g_x, g_y) = precision_pair(d, support, shared, rng)?;
    let sigma_x = linalg::sym_inverse(&omega_x).expect("repaired precision is positive definite");
    let sigma_y = linalg::sym_inverse(&omega_y).expect("repaired precision is positive definite");
    let x = gaussian_sample(n, &sigma_x, None, rng)?;
    let y = gaussian_sample(n, &sigma_y, None, rng)?;
    Ok((
        ExpressionMatrix::unlabeled(x),
        ExpressionMatrix::unlabeled(y),
        g_x,
        g_y,
    ))
}

/// Covariance with entries rho^|i-j|.
pub fn ar1_covariance(d: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| {
        rho.powi((i as i32 - j as i32).abs())
    })
}

/// Two-sample data on 50 genes from AR(1) covariances with parameters 0.7
/// (condition x) and `beta` (condition y). AR(1) covariances have unit
/// diagonal, so the output is standardized in the population (samples are
/// left untouched, as in [`gen_model1`]).
pub fn gen_model2(
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(ExpressionMatrix, ExpressionMatrix)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "autocorrelation beta must be in (0, 1), got {beta}"
        )));
    }
    let (d, n) = (50, 100);
    let x = gaussian_sample(n, &ar1_covariance(d, 0.7), None, rng)?;
    let y = gaussian_sample(n, &ar1_covariance(d, beta), None, rng)?;
    Ok((
        ExpressionMatrix::unlabeled(x),
        ExpressionMatrix::unlabeled(y),
    ))
}

/// Output of the gene-set generator. Expression values are raw (means and
/// scales as generated); the testing pipeline standardizes later.
#[derive(Debug, Clone)]
pub struct GeneSetsSim {
    pub x: ExpressionMatrix,
    pub y: ExpressionMatrix,
    pub sets: GeneSetCollection,
    /// True alternatives (the first three sets).
    pub truth: Vec<bool>,
    /// Per-set generating precision matrices, condition x then y.
    pub precision_x: Vec<Array2<f64>>,
    pub precision_y: Vec<Array2<f64>>,
}

/// Mean shift applied to condition y in set `set_index` (0-based) of size d.
pub(crate) fn mean_shift(set_index: usize, d: usize) -> Vec<f64> {
    let half = d.div_ceil(2);
    match set_index {
        0 => vec![0.2; d],
        1 => (0..d).map(|j| if j < half { 0.0 } else { 0.4 }).collect(),
        2 => (0..d).map(|j| if j < half { -0.2 } else { 0.2 }).collect(),
        _ => vec![0.0; d],
    }
}

/// The 20-gene-set experiment: disjoint consecutive blocks of 20 to 39 genes,
/// n = 40 samples per condition. Sets 1-3 carry mean shifts in condition y
/// and support concordance `alpha`; the rest share identical precision
/// matrices and zero means. Optional contamination replaces the last
/// floor(fraction * n) rows of each condition with multivariate-t draws
/// (one scale draw per row, shared across blocks, means preserved).
pub fn gen_genesets_sim(
    alpha: f64,
    contamination: Option<Contamination>,
    rng: &mut ChaCha8Rng,
) -> Result<GeneSetsSim> {
    let scenario = SimScenario {
        model: SimModel::GeneSets { alpha },
        contamination,
        seed: 0,
    };
    scenario.validate()?;
    let (s_total, n) = (20usize, 40usize);

    let sizes: Vec<usize> = (0..s_total).map(|_| rng.random_range(20..=n - 1)).collect();
    let d_total: usize = sizes.iter().sum();
    let mut starts = Vec::with_capacity(s_total);
    let mut offset = 0;
    for &d in &sizes {
        starts.push(offset);
        offset += d;
    }

    let mut precision_x = Vec::with_capacity(s_total);
    let mut precision_y = Vec::with_capacity(s_total);
    for (s, &d) in sizes.iter().enumerate() {
        let support = d.div_ceil(2);
        let alpha_s = if s < 3 { alpha } else { 1.0 };
        let shared = shared_count(alpha_s, support);
        let (omega_x, omega_y, _, _) =
            precision_pair_banded(d, support, shared, SET_SPECIFIC_MAGNITUDE, rng)?;
        precision_x.push(omega_x);
        precision_y.push(omega_y);
    }
    let sigma_x: Vec<Array2<f64>> = precision_x
        .iter()
        .map(|o| linalg::sym_inverse(o).expect("repaired precision is positive definite"))
        .collect();
    let sigma_y: Vec<Array2<f64>> = precision_y
        .iter()
        .map(|o| linalg::sym_inverse(o).expect("repaired precision is positive definite"))
        .collect();

    let mut x = Array2::<f64>::zeros((n, d_total));
    for (s, sigma) in sigma_x.iter().enumerate() {
        let block = gaussian_sample(n, sigma, None, rng)?;
        x.slice_mut(ndarray::s![.., starts[s]..starts[s] + sizes[s]])
            .assign(&block);
    }
    let mut y = Array2::<f64>::zeros((n, d_total));
    for (s, sigma) in sigma_y.iter().enumerate() {
        let mu = mean_shift(s, sizes[s]);
        let block = gaussian_sample(n, sigma, Some(&mu), rng)?;
        y.slice_mut(ndarray::s![.., starts[s]..starts[s] + sizes[s]])
            .assign(&block);
    }

    if let Some(c) = contamination {
        let replace = (c.fraction * n as f64).floor() as usize;
        let chi = ChiSquared::new(f64::from(c.t_df))
            .map_err(|e| Error::InvalidInput(format!("bad contamination df: {e}")))?;
        let mut contaminate =
            |data: &mut Array2<f64>, sigmas: &[Array2<f64>], shift: bool| -> Result<()> {
                for i in (n - replace)..n {
                    // One mixing draw per row keeps the row jointly
                    // t-distributed across all blocks.
                    let w: f64 = chi.sample(rng);
                    let scale = (f64::from(c.t_df) / w).sqrt();
                    for (s, sigma) in sigmas.iter().enumerate() {
                        let z = gaussian_sample(1, sigma, None, rng)?;
                        let mu = if shift {
                            mean_shift(s, sizes[s])
                        } else {
                            vec![0.0; sizes[s]]
                        };
                        for j in 0..sizes[s] {
                            data[[i, starts[s] + j]] = mu[j] + scale * z[[0, j]];
                        }
                    }
                }
                Ok(())
            };
        contaminate(&mut x, &sigma_x, false)?;
        contaminate(&mut y, &sigma_y, true)?;
    }

    let sets = GeneSetCollection::new(
        (0..s_total)
            .map(|s| {
                (
                    format!("set{:02}", s + 1),
                    (starts[s]..starts[s] + sizes[s]).collect(),
                )
            })
            .collect(),
        d_total,
        DEFAULT_MIN_SET_SIZE,
    )?;
    let truth: Vec<bool> = (0..s_total).map(|s| s < 3).collect();
    Ok(GeneSetsSim {
        x: ExpressionMatrix::unlabeled(x),
        y: ExpressionMatrix::unlabeled(y),
        sets,
        truth,
        precision_x,
        precision_y,
    })
}

/// A likelihood-ratio test outcome.
#[derive(Debug, Clone, Copy)]
pub struct LrtOutcome {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

fn chi2_upper(statistic: f64, df: f64) -> f64 {
    let dist = ChiSquaredDist::new(df).expect("positive degrees of freedom");
    (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0)
}

fn zero_mean_moment(x: &ExpressionMatrix) -> Array2<f64> {
    let (n, d) = (x.n_samples(), x.n_genes());
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
    s
}

/// Two-sample likelihood ratio for equality of unrestricted zero-mean
/// Gaussian covariances, referred to chi-square with d(d+1)/2 degrees of
/// freedom. Requires d < min(n_x, n_y) so the sample covariances are
/// almost surely non-singular.
pub fn lrt_full(x: &ExpressionMatrix, y: &ExpressionMatrix) -> Result<LrtOutcome> {
    let d = x.n_genes();
    if y.n_genes() != d {
        return Err(Error::DimensionMismatch {
            context: "lrt_full gene counts",
            expected: d,
            got: y.n_genes(),
        });
    }
    let (n_x, n_y) = (x.n_samples(), y.n_samples());
    if n_x.min(n_y) <= d {
        return Err(Error::TooFewSamples {
            context: "lrt_full",
            needed: d + 1,
            got: n_x.min(n_y),
        });
    }
    let s_x = zero_mean_moment(x);
    let s_y = zero_mean_moment(y);
    let total = (n_x + n_y) as f64;
    let mut s_p = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        for k in 0..d {
            s_p[[j, k]] = (n_x as f64 * s_x[[j, k]] + n_y as f64 * s_y[[j, k]]) / total;
        }
    }
    let logdet = |s: &Array2<f64>| -> Result<f64> {
        linalg::cholesky(s)
            .map(|l| linalg::logdet_from_cholesky(&l))
            .ok_or(Error::NotPositiveDefinite { context: "lrt_full" })
    };
    let (ld_x, ld_y, ld_p) = (logdet(&s_x)?, logdet(&s_y)?, logdet(&s_p)?);
    let statistic = (n_x as f64 * (ld_p - ld_x) + n_y as f64 * (ld_p - ld_y)).max(0.0);
    let df = (d * (d + 1)) as f64 / 2.0;
    Ok(LrtOutcome {
        statistic,
        df,
        p_value: chi2_upper(statistic, df),
    })
}

/// Two-sample likelihood ratio restricted to diagonal covariances: the sum of
/// d scalar variance tests, referred to chi-square with d degrees of freedom.
pub fn lrt_diag(x: &ExpressionMatrix, y: &ExpressionMatrix) -> Result<LrtOutcome> {
    let d = x.n_genes();
    if y.n_genes() != d {
        return Err(Error::DimensionMismatch {
            context: "lrt_diag gene counts",
            expected: d,
            got: y.n_genes(),
        });
    }
    let (n_x, n_y) = (x.n_samples(), y.n_samples());
    if n_x < 2 || n_y < 2 {
        return Err(Error::TooFewSamples {
            context: "lrt_diag",
            needed: 2,
            got: n_x.min(n_y),
        });
    }
    let mut statistic = 0.0;
    for j in 0..d {
        let sq = |m: &ExpressionMatrix, n: usize| -> f64 {
            m.data().column(j).iter().map(|v| v * v).sum::<f64>() / n as f64
        };
        let (s2_x, s2_y) = (sq(x, n_x), sq(y, n_y));
        if s2_x <= 0.0 || s2_y <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "gene {j} has zero second moment; diagonal likelihood undefined"
            )));
        }
        let pooled = (n_x as f64 * s2_x + n_y as f64 * s2_y) / (n_x + n_y) as f64;
        statistic += n_x as f64 * (pooled / s2_x).ln() + n_y as f64 * (pooled / s2_y).ln();
    }
    let statistic = statistic.max(0.0);
    let df = d as f64;
    Ok(LrtOutcome {
        statistic,
        df,
        p_value: chi2_upper(statistic, df),
    })
}

/// Methods the harness can evaluate. The first three apply to two-sample
/// scenarios, the rest to the gene-set scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMethod {
    /// Single-split network difference test on the whole panel.
    DiffNet(NetworkInference),
    LrtFull,
    LrtDiag,
    /// Multi-split engine over gene-sets.
    NetMulti {
        method: NetworkInference,
        splits: usize,
    },
    /// One shared split over gene-sets.
    NetSingle(NetworkInference),
    /// Mean-shift gene-set analysis.
    Classic,
    /// Minimum combination of Classic and NetMulti.
    ClassicNet {
        method: NetworkInference,
        splits: usize,
    },
    /// Per-set covariance likelihood ratio, BH-adjusted across sets.
    LrtSets,
}

impl EvalMethod {
    pub fn label(&self) -> String {
        match self {
            EvalMethod::DiffNet(ni) => format!("diffnet({ni})"),
            EvalMethod::LrtFull => "lrt-full".into(),
            EvalMethod::LrtDiag => "lrt-diag".into(),
            EvalMethod::NetMulti { method, splits } => {
                format!("net-multi({method},B={splits})")
            }
            EvalMethod::NetSingle(ni) => format!("net-single({ni})"),
            EvalMethod::Classic => "classic".into(),
            EvalMethod::ClassicNet { method, splits } => {
                format!("classic-net({method},B={splits})")
            }
            EvalMethod::LrtSets => "lrt-sets".into(),
        }
    }

    fn is_set_level(&self) -> bool {
        matches!(
            self,
            EvalMethod::NetMulti { .. }
                | EvalMethod::NetSingle(_)
                | EvalMethod::Classic
                | EvalMethod::ClassicNet { .. }
                | EvalMethod::LrtSets
        )
    }
}

/// Aggregated evaluation metrics for one method on one scenario.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub method: String,
    pub runs: usize,
    /// Rejection rate at the 5% level: power under an alternative, type-I
    /// error under the null. Equals `tpr_at_level` for gene-set scenarios.
    pub power: f64,
    /// Fraction of runs where the screened graphs contain the true graphs
    /// (both conditions). Network methods on two-sample scenarios only.
    pub screening_rate: Option<f64>,
    /// Mean sparsity index 2E/(nd) of the screened condition networks.
    pub sparsity_mean: Option<f64>,
    /// Mean wall-clock seconds per run.
    pub cpu_seconds: f64,
    /// Averaged ROC curve over runs (gene-set scenarios).
    pub roc: Option<Vec<(f64, f64)>>,
    pub fdr_at_level: Option<f64>,
    pub tpr_at_level: Option<f64>,
    /// Runs that produced no usable p-value (counted as non-rejections).
    pub failures: usize,
    /// Per-run decisions at the 5% level, one row per run.
    pub rejections: Vec<Vec<bool>>,
    /// Hypothesis truth labels: one entry for two-sample scenarios, one per
    /// set for gene-set scenarios.
    pub truth: Vec<bool>,
}

const EVAL_LEVEL: f64 = 0.05;

#[derive(Default)]
struct Accumulator {
    rejections: Vec<Vec<bool>>,
    pvalues: Vec<Vec<Option<f64>>>,
    sca_hits: usize,
    sca_total: usize,
    sparsity_sum: f64,
    sparsity_n: usize,
    seconds: f64,
    failures: usize,
}

/// Averaged ROC over runs: for each threshold, the mean per-run false and
/// true positive rates of the rule p <= threshold.
fn averaged_roc(pvalues: &[Vec<Option<f64>>], truth: &[bool]) -> Vec<(f64, f64)> {
    let n_alt = truth.iter().filter(|&&t| t).count().max(1);
    let n_null = (truth.len() - truth.iter().filter(|&&t| t).count()).max(1);
    let runs = pvalues.len().max(1);
    let mut thresholds: Vec<f64> = pvalues
        .iter()
        .flatten()
        .filter_map(|p| *p)
        .collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for &t in &thresholds {
        let mut fpr = 0.0;
        let mut tpr = 0.0;
        for run in pvalues {
            let mut fp = 0usize;
            let mut tp = 0usize;
            for (s, p) in run.iter().enumerate() {
                if p.is_some_and(|p| p <= t) {
                    if truth[s] {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            fpr += fp as f64 / n_null as f64;
            tpr += tp as f64 / n_alt as f64;
        }
        points.push((fpr / runs as f64, tpr / runs as f64));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    points
}

fn confusion_rates(rejections: &[Vec<bool>], truth: &[bool]) -> (f64, f64) {
    let n_alt = truth.iter().filter(|&&t| t).count().max(1);
    let runs = rejections.len().max(1);
    let mut fdr = 0.0;
    let mut tpr = 0.0;
    for run in rejections {
        let mut fp = 0usize;
        let mut tp = 0usize;
        for (s, &r) in run.iter().enumerate() {
            if r {
                if truth[s] {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let rejected = fp + tp;
        fdr += fp as f64 / rejected.max(1) as f64;
        tpr += tp as f64 / n_alt as f64;
    }
    (fdr / runs as f64, tpr / runs as f64)
}

fn set_level_pvalues(
    method: &EvalMethod,
    raw_x: &ExpressionMatrix,
    raw_y: &ExpressionMatrix,
    std_x: &ExpressionMatrix,
    std_y: &ExpressionMatrix,
    sets: &GeneSetCollection,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    let config_for = |method: NetworkInference, splits: usize| NetgsaConfig {
        screen: ScreenOptions {
            method,
            ..ScreenOptions::default()
        },
        strategy: NullStrategy::Nested,
        splits,
        level: EVAL_LEVEL,
    };
    let net = |method: NetworkInference, splits: usize, seed: u64| -> Result<Vec<Option<f64>>> {
        let config = config_for(method, splits);
        let out = run_netgsa(std_x, std_y, sets, &config, seed, None)?;
        let mut per_set = vec![None; sets.len()];
        for row in &out.rows {
            let index = sets
                .sets()
                .iter()
                .position(|s| s.name == row.name)
                .expect("row name from collection");
            per_set[index] = row.p_net_median;
        }
        Ok(per_set)
    };
    match method {
        EvalMethod::NetMulti { method, splits } => net(*method, *splits, seed),
        EvalMethod::NetSingle(ni) => {
            run_single_split(std_x, std_y, sets, &config_for(*ni, 1), seed)
        }
        EvalMethod::Classic => {
            Ok(classic_gsa(raw_x, raw_y, sets)?.into_iter().map(Some).collect())
        }
        EvalMethod::ClassicNet { method, splits } => {
            let classic: Vec<Option<f64>> =
                classic_gsa(raw_x, raw_y, sets)?.into_iter().map(Some).collect();
            let network = net(*method, *splits, seed)?;
            combine_min(&classic, &network)
        }
        EvalMethod::LrtSets => {
            let mut raw = Vec::with_capacity(sets.len());
            let mut ok = Vec::with_capacity(sets.len());
            for set in sets.sets() {
                let bx = std_x.select_genes(&set.columns);
                let by = std_y.select_genes(&set.columns);
                match lrt_full(&bx, &by) {
                    Ok(out) => {
                        raw.push(out.p_value);
                        ok.push(true);
                    }
                    Err(err) => {
                        log::warn!("lrt failed on set {}: {err}", set.name);
                        ok.push(false);
                    }
                }
            }
            let adjusted = bh_adjust(&raw)?;
            let mut iter = adjusted.into_iter();
            Ok(ok
                .into_iter()
                .map(|s| s.then(|| iter.next().expect("adjusted count matches")))
                .collect())
        }
        _ => unreachable!("two-sample method routed to set-level evaluation"),
    }
}

/// Evaluate `methods` on `runs` independently generated datasets. Data are
/// generated once per run and shared across methods; method randomness is
/// seeded per (run, method). Failed runs count as non-rejections.
pub fn evaluate(
    scenario: &SimScenario,
    methods: &[EvalMethod],
    runs: usize,
) -> Result<Vec<MetricsReport>> {
    scenario.validate()?;
    if runs == 0 {
        return Err(Error::InvalidInput("evaluation needs runs >= 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods to evaluate".into()));
    }
    let set_scenario = matches!(scenario.model, SimModel::GeneSets { .. });
    for m in methods {
        if m.is_set_level() != set_scenario {
            return Err(Error::InvalidInput(format!(
                "method {} does not apply to this scenario",
                m.label()
            )));
        }
    }

    let mut accs: Vec<Accumulator> = methods.iter().map(|_| Accumulator::default()).collect();
    let mut truth_labels: Vec<bool> = Vec::new();

    for run in 0..runs {
        let run_seed = child_seed(scenario.seed, &[run as u64]);
        let mut gen_rng = task_rng(run_seed, &[0]);
        match scenario.model {
            SimModel::Model1 { alpha } => {
                let (x, y, g_x, g_y) = gen_model1(alpha, &mut gen_rng)?;
                truth_labels = vec![alpha < 1.0];
                run_two_sample(&x, &y, Some((&g_x, &g_y)), methods, &mut accs, run_seed);
            }
            SimModel::Model2 { beta } => {
                let (x, y) = gen_model2(beta, &mut gen_rng)?;
                // The AR(1) precision is tridiagonal: the truth is a chain.
                let mut chain = UndirectedGraph::new(x.n_genes());
                for v in 0..x.n_genes() - 1 {
                    chain.add_edge(v, v + 1)?;
                }
                truth_labels = vec![(beta - 0.7).abs() > 1e-12];
                run_two_sample(&x, &y, Some((&chain, &chain)), methods, &mut accs, run_seed);
            }
            SimModel::GeneSets { alpha } => {
                let sim = gen_genesets_sim(alpha, scenario.contamination, &mut gen_rng)?;
                truth_labels = sim.truth.clone();
                let std_x = standardize(&sim.x)?;
                let std_y = standardize(&sim.y)?;
                for (m, method) in methods.iter().enumerate() {
                    let acc = &mut accs[m];
                    let seed = child_seed(run_seed, &[1 + m as u64]);
                    let start = Instant::now();
                    let pvalues = set_level_pvalues(
                        method, &sim.x, &sim.y, &std_x, &std_y, &sim.sets, seed,
                    );
                    acc.seconds += start.elapsed().as_secs_f64();
                    let pvalues = match pvalues {
                        Ok(p) => p,
                        Err(err) => {
                            log::warn!("{} failed on run {run}: {err}", method.label());
                            acc.failures += 1;
                            vec![None; sim.sets.len()]
                        }
                    };
                    acc.rejections.push(
                        pvalues
                            .iter()
                            .map(|p| p.is_some_and(|p| p < EVAL_LEVEL))
                            .collect(),
                    );
                    acc.pvalues.push(pvalues);
                }
            }
        }
    }

    Ok(methods
        .iter()
        .zip(accs)
        .map(|(method, acc)| {
            let (roc, fdr, tpr, power);
            if set_scenario {
                let (f, t) = confusion_rates(&acc.rejections, &truth_labels);
                roc = Some(averaged_roc(&acc.pvalues, &truth_labels));
                fdr = Some(f);
                tpr = Some(t);
                power = t;
            } else {
                roc = None;
                fdr = None;
                tpr = None;
                power = acc
                    .rejections
                    .iter()
                    .filter(|r| r.iter().any(|&b| b))
                    .count() as f64
                    / runs as f64;
            }
            MetricsReport {
                method: method.label(),
                runs,
                power,
                screening_rate: (acc.sca_total > 0)
                    .then(|| acc.sca_hits as f64 / acc.sca_total as f64),
                sparsity_mean: (acc.sparsity_n > 0)
                    .then(|| acc.sparsity_sum / acc.sparsity_n as f64),
                cpu_seconds: acc.seconds / runs as f64,
                roc,
                fdr_at_level: fdr,
                tpr_at_level: tpr,
                failures: acc.failures,
                rejections: acc.rejections,
                truth: truth_labels.clone(),
            }
        })
        .collect())
}

fn run_two_sample(
    x: &ExpressionMatrix,
    y: &ExpressionMatrix,
    truth_graphs: Option<(&UndirectedGraph, &UndirectedGraph)>,
    methods: &[EvalMethod],
    accs: &mut [Accumulator],
    run_seed: u64,
) {
    for (m, method) in methods.iter().enumerate() {
        let acc = &mut accs[m];
        let seed = child_seed(run_seed, &[1 + m as u64]);
        let start = Instant::now();
        let p = match method {
            EvalMethod::DiffNet(ni) => {
                let opts = ScreenOptions {
                    method: *ni,
                    ..ScreenOptions::default()
                };
                match diffnet_test(x, y, &opts, NullStrategy::Nested, seed) {
                    Ok(out) => {
                        if let Some((t_x, t_y)) = truth_graphs {
                            acc.sca_total += 1;
                            if t_x.is_subgraph_of(&out.screening.g_x)
                                && t_y.is_subgraph_of(&out.screening.g_y)
                            {
                                acc.sca_hits += 1;
                            }
                        }
                        acc.sparsity_sum += 0.5 * (out.sparsity[0].m + out.sparsity[1].m);
                        acc.sparsity_n += 1;
                        Some(out.p_value)
                    }
                    Err(err) => {
                        log::warn!("{} failed: {err}", method.label());
                        None
                    }
                }
            }
            EvalMethod::LrtFull => match lrt_full(x, y) {
                Ok(out) => Some(out.p_value),
                Err(err) => {
                    log::warn!("lrt-full failed: {err}");
                    None
                }
            },
            EvalMethod::LrtDiag => match lrt_diag(x, y) {
                Ok(out) => Some(out.p_value),
                Err(err) => {
                    log::warn!("lrt-diag failed: {err}");
                    None
                }
            },
            _ => unreachable!("set-level method routed to two-sample evaluation"),
        };
        acc.seconds += start.elapsed().as_secs_f64();
        if p.is_none() {
            acc.failures += 1;
        }
        acc.rejections.push(vec![p.is_some_and(|p| p < EVAL_LEVEL)]);
        acc.pvalues.push(vec![p]);
    }
}
