//! Maximum likelihood estimation of a Gaussian concentration matrix under the
//! zero-constraints of a fixed graph, by edgewise iterative proportional
//! fitting.
//!
//! The zero-mean Gaussian MLE under graph G solves the likelihood equations
//! (Ω⁻¹)_jj = S_jj for every vertex and (Ω⁻¹)_jk = S_jk for every edge, with
//! Ω_jk = 0 exactly off the graph. Each IPF step matches one edge's 2x2
//! marginal exactly; isolated vertices get the corresponding 1x1 update.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{CovarianceMatrix, PrecisionMatrix, UndirectedGraph};

/// A graph-constrained maximum likelihood fit.
#[derive(Clone, Debug)]
pub struct GraphConstrainedFit {
    pub omega: PrecisionMatrix,
    pub graph: UndirectedGraph,
    /// Zero-mean Gaussian log-likelihood of the data behind `S` at `omega`.
    pub loglik: f64,
    /// Free parameters: d diagonal entries plus one per edge.
    pub df: usize,
    /// Samples behind the covariance the fit was computed from.
    pub n: usize,
}

/// Zero-mean Gaussian log-likelihood (n/2)(log det Ω − tr(SΩ)) − (nd/2)log 2π.
pub fn gaussian_loglik(omega: &Array2<f64>, s: &CovarianceMatrix) -> Result<f64> {
    let d = s.dim();
    if omega.nrows() != d || omega.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "gaussian_loglik",
            expected: d,
            got: omega.nrows(),
        });
    }
    let l = linalg::cholesky(omega).ok_or(Error::NotPositiveDefinite {
        context: "gaussian_loglik: precision matrix",
    })?;
    let logdet = linalg::logdet_from_cholesky(&l);
    let tr = linalg::trace_product(s.values(), omega);
    let n = s.n_samples() as f64;
    Ok(0.5 * n * (logdet - tr) - 0.5 * n * d as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Model degrees of freedom under graph `g`: d + |E| (zero-mean model).
pub fn model_df(g: &UndirectedGraph) -> usize {
    g.n_vertices() + g.edge_count()
}

/// Invert a symmetric PD 2x2 matrix, or `None` when it is not PD.
fn inv2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0) || !(m[0][0] > 0.0) {
        return None;
    }
    Some([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

/// Fit the graph-constrained MLE by iterative proportional fitting with the
/// default tolerance (1e-8) and iteration cap (5000 sweeps).
pub fn ipf_mle(s: &CovarianceMatrix, g: &UndirectedGraph) -> Result<GraphConstrainedFit> {
    ipf_mle_with(s, g, 1e-8, 5000)
}

pub fn ipf_mle_with(
    s: &CovarianceMatrix,
    g: &UndirectedGraph,
    tol: f64,
    max_iter: usize,
) -> Result<GraphConstrainedFit> {
    let d = s.dim();
    if g.n_vertices() != d {
        return Err(Error::DimensionMismatch {
            context: "ipf_mle graph",
            expected: d,
            got: g.n_vertices(),
        });
    }
    let sv = s.values();
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let isolated = g.isolated_vertices();

    // Every pairwise marginal named by an edge must itself admit an MLE.
    for &(j, k) in &edges {
        if inv2([[sv[[j, j]], sv[[j, k]]], [sv[[j, k]], sv[[k, k]]]]).is_none() {
            return Err(Error::NotPositiveDefinite {
                context: "ipf_mle: singular 2x2 covariance block on an edge",
            });
        }
    }

    let mut omega = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        omega[[j, j]] = 1.0 / sv[[j, j]];
    }
    let mut w = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        w[[j, j]] = sv[[j, j]];
    }

    let mut violation = f64::INFINITY;
    for iter in 0..max_iter {
        for &(j, k) in &edges {
            let s_block = [[sv[[j, j]], sv[[j, k]]], [sv[[j, k]], sv[[k, k]]]];
            let w_block = [[w[[j, j]], w[[j, k]]], [w[[j, k]], w[[k, k]]]];
            let s_inv = inv2(s_block).expect("checked above");
            let w_inv = inv2(w_block).ok_or(Error::IpfNonConvergence {
                iters: iter,
                violation: f64::INFINITY,
            })?;
            let delta = [
                [s_inv[0][0] - w_inv[0][0], s_inv[0][1] - w_inv[0][1]],
                [s_inv[1][0] - w_inv[1][0], s_inv[1][1] - w_inv[1][1]],
            ];
            // W update by Woodbury: W' = W − [w_j w_k] C [w_j w_k]ᵀ with
            // C = (I + Δ·K)⁻¹ Δ, K the current (j,k) block of W.
            let ik = [
                [
                    1.0 + delta[0][0] * w_block[0][0] + delta[0][1] * w_block[1][0],
                    delta[0][0] * w_block[0][1] + delta[0][1] * w_block[1][1],
                ],
                [
                    delta[1][0] * w_block[0][0] + delta[1][1] * w_block[1][0],
                    1.0 + delta[1][0] * w_block[0][1] + delta[1][1] * w_block[1][1],
                ],
            ];
            let det = ik[0][0] * ik[1][1] - ik[0][1] * ik[1][0];
            if !(det > 0.0) || !det.is_finite() {
                return Err(Error::IpfNonConvergence {
                    iters: iter,
                    violation: f64::INFINITY,
                });
            }
            let ik_inv = [
                [ik[1][1] / det, -ik[0][1] / det],
                [-ik[1][0] / det, ik[0][0] / det],
            ];
            let mut c = [
                [
                    ik_inv[0][0] * delta[0][0] + ik_inv[0][1] * delta[1][0],
                    ik_inv[0][0] * delta[0][1] + ik_inv[0][1] * delta[1][1],
                ],
                [
                    ik_inv[1][0] * delta[0][0] + ik_inv[1][1] * delta[1][0],
                    ik_inv[1][0] * delta[0][1] + ik_inv[1][1] * delta[1][1],
                ],
            ];
            // C is symmetric in exact arithmetic; enforce it.
            let off = 0.5 * (c[0][1] + c[1][0]);
            c[0][1] = off;
            c[1][0] = off;
            let col_j: Vec<f64> = (0..d).map(|p| w[[p, j]]).collect();
            let col_k: Vec<f64> = (0..d).map(|p| w[[p, k]]).collect();
            linalg::sym_rank2_downdate(&mut w, &col_j, &col_k, c);
            omega[[j, j]] += delta[0][0];
            omega[[k, k]] += delta[1][1];
            omega[[j, k]] += delta[0][1];
            omega[[k, j]] = omega[[j, k]];
        }
        for &j in &isolated {
            let theta = 1.0 / sv[[j, j]] - 1.0 / w[[j, j]];
            if theta != 0.0 {
                let scale = theta / (1.0 + theta * w[[j, j]]);
                let col: Vec<f64> = (0..d).map(|p| w[[p, j]]).collect();
                linalg::sym_rank1_downdate(&mut w, &col, scale);
                omega[[j, j]] += theta;
            }
        }
        // Refresh W from scratch and measure the likelihood equations.
        w = match linalg::sym_inverse(&omega) {
            Some(m) => m,
            None => {
                return Err(Error::IpfNonConvergence {
                    iters: iter,
                    violation: f64::INFINITY,
                })
            }
        };
        violation = 0.0;
        for j in 0..d {
            violation = violation.max((w[[j, j]] - sv[[j, j]]).abs());
        }
        for &(j, k) in &edges {
            violation = violation.max((w[[j, k]] - sv[[j, k]]).abs());
        }
        if violation < tol {
            let loglik = gaussian_loglik(&omega, s)?;
            return Ok(GraphConstrainedFit {
                omega: PrecisionMatrix::new(omega)?,
                graph: g.clone(),
                loglik,
                df: model_df(g),
                n: s.n_samples(),
            });
        }
    }
    Err(Error::IpfNonConvergence {
        iters: max_iter,
        violation,
    })
}
