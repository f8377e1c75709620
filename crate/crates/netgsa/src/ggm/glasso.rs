//! Graphical lasso: minimize −log det Ω + tr(SΩ) + λ·Σ_{j≠k}|Ω_jk| over
//! positive definite Ω. The diagonal is not penalized (data are standardized,
//! so diagonal shrinkage would only distort well-identified variances).
//!
//! The solver is primal coordinate descent over symmetric entry pairs. Each
//! pair update is an exact one-dimensional minimization with a closed-form
//! solution, and the inverse W = Ω⁻¹ is maintained by rank-one / rank-two
//! updates so that a full sweep costs O(active·d²). Soft-thresholding at the
//! kink produces exact zeros, so the support of the result is unambiguous.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{CovarianceMatrix, PrecisionMatrix};

#[derive(Clone, Copy, Debug)]
pub struct GlassoOptions {
    /// Converged when |duality gap| <= gap_tol_per_dim * d ...
    pub gap_tol_per_dim: f64,
    /// ... and the largest stationarity-condition violation is at most this.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            gap_tol_per_dim: 1e-6,
            kkt_tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

/// Determinant safety floor: candidate steps must keep the 2x2 update
/// determinant above this, which keeps Ω safely inside the PD cone.
const DET_FLOOR: f64 = 1e-12;

/// Duality gap tr(SΩ) + λ‖Ω‖₁,off − d of the off-diagonal-penalized
/// objective, exact when W = Ω⁻¹ is dual feasible.
pub fn duality_gap(s: &CovarianceMatrix, omega: &Array2<f64>, lambda: f64) -> f64 {
    let d = s.dim();
    let mut off_l1 = 0.0;
    for j in 0..d {
        for k in (j + 1)..d {
            off_l1 += omega[[j, k]].abs();
        }
    }
    linalg::trace_product(s.values(), omega) + 2.0 * lambda * off_l1 - d as f64
}

/// Largest stationarity-condition violation of `omega` for the penalized
/// objective: |W_jj − S_jj| on the diagonal; |W_jk − S_jk − λ·sign(Ω_jk)| on
/// active entries; max(0, |W_jk − S_jk| − λ) on zero entries.
pub fn kkt_violation(
    s: &CovarianceMatrix,
    lambda: f64,
    omega: &PrecisionMatrix,
) -> Result<f64> {
    let d = s.dim();
    if omega.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "kkt_violation",
            expected: d,
            got: omega.dim(),
        });
    }
    let w = linalg::sym_inverse(omega.values()).ok_or(Error::NotPositiveDefinite {
        context: "kkt_violation: candidate precision matrix",
    })?;
    Ok(stationarity_violation(s.values(), lambda, omega.values(), &w))
}

/// The same violation, against a caller-supplied inverse `w` of `omega`.
fn stationarity_violation(
    sv: &Array2<f64>,
    lambda: f64,
    ov: &Array2<f64>,
    w: &Array2<f64>,
) -> f64 {
    let d = sv.nrows();
    let mut viol = 0.0f64;
    for j in 0..d {
        viol = viol.max((w[[j, j]] - sv[[j, j]]).abs());
        for k in (j + 1)..d {
            let resid = w[[j, k]] - sv[[j, k]];
            if ov[[j, k]].abs() <= super::ZERO_TOL {
                viol = viol.max(resid.abs() - lambda);
            } else {
                viol = viol.max((resid - lambda * ov[[j, k]].signum()).abs());
            }
        }
    }
    viol.max(0.0)
}

/// Fit with default options and no warm start.
pub fn glasso_fit(s: &CovarianceMatrix, lambda: f64) -> Result<PrecisionMatrix> {
    let omega = glasso_fit_warm(s, lambda, None, &GlassoOptions::default())?;
    PrecisionMatrix::new(omega)
}

/// Fit, optionally warm-starting from a previous solution (it must be
/// symmetric positive definite, e.g. the solution at a nearby penalty).
pub fn glasso_fit_warm(
    s: &CovarianceMatrix,
    lambda: f64,
    warm: Option<&Array2<f64>>,
    opts: &GlassoOptions,
) -> Result<Array2<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "glasso penalty must be positive and finite, got {lambda}"
        )));
    }
    let d = s.dim();
    let sv = s.values();

    let mut omega = match warm {
        Some(m) => m.clone(),
        None => {
            let mut m = Array2::<f64>::zeros((d, d));
            for j in 0..d {
                m[[j, j]] = 1.0 / sv[[j, j]];
            }
            m
        }
    };
    let mut w = linalg::sym_inverse(&omega).ok_or(Error::NotPositiveDefinite {
        context: "glasso warm start",
    })?;

    let gap_tol = opts.gap_tol_per_dim * d as f64;
    let mut gap = duality_gap(s, &omega, lambda);
    let mut buf_j = vec![0.0f64; d];
    let mut buf_k = vec![0.0f64; d];
    for _sweep in 0..opts.max_sweeps {
        for j in 0..d {
            let theta = 1.0 / sv[[j, j]] - 1.0 / w[[j, j]];
            if theta.abs() > 0.0 {
                // Ω_jj += θ keeps PD automatically: 1 + θ·W_jj = W_jj/S_jj > 0.
                let scale = theta / (1.0 + theta * w[[j, j]]);
                for p in 0..d {
                    buf_j[p] = w[[p, j]];
                }
                linalg::sym_rank1_downdate(&mut w, &buf_j, scale);
                omega[[j, j]] += theta;
            }
        }
        for j in 0..d {
            for k in (j + 1)..d {
                pair_update(&mut omega, &mut w, sv, lambda, j, k, &mut buf_j, &mut buf_k);
            }
        }
        // Refresh the inverse each sweep: cheap relative to the sweep itself
        // and prevents accumulation of low-rank update round-off.
        w = linalg::sym_inverse(&omega).ok_or(Error::NotPositiveDefinite {
            context: "glasso inverse refresh",
        })?;
        gap = duality_gap(s, &omega, lambda);
        if gap.abs() <= gap_tol
            && stationarity_violation(sv, lambda, &omega, &w) <= opts.kkt_tol
        {
            return Ok(omega);
        }
    }
    Err(Error::GlassoNonConvergence {
        sweeps: opts.max_sweeps,
        gap,
    })
}

/// Exact minimization of the objective over the symmetric pair (j, k),
/// holding all other entries fixed. Returns |step| (0 when the entry is
/// already optimal). Updates both Ω and W; `buf_j`/`buf_k` are scratch.
#[allow(clippy::too_many_arguments)]
fn pair_update(
    omega: &mut Array2<f64>,
    w: &mut Array2<f64>,
    sv: &Array2<f64>,
    lambda: f64,
    j: usize,
    k: usize,
    buf_j: &mut [f64],
    buf_k: &mut [f64],
) -> f64 {
    let wjj = w[[j, j]];
    let wkk = w[[k, k]];
    let b = w[[j, k]];
    let sjk = sv[[j, k]];
    let current = omega[[j, k]];

    // O(1) skip: a zero entry is optimal iff |S_jk − W_jk| <= λ (its KKT
    // condition); most pairs of a sparse solution exit here.
    if current == 0.0 && (sjk - b).abs() <= lambda {
        return 0.0;
    }

    // Along Ω' = Ω + θ(e_j e_kᵀ + e_k e_jᵀ):
    //   det Ω'/det Ω = D(θ) = 1 + 2bθ + aθ²,  a = b² − W_jj·W_kk < 0,
    //   φ(θ) = −ln D(θ) + 2 S_jk θ + 2λ(|ω+θ| − |ω|),   strictly convex.
    let a = b * b - wjj * wkk;
    let eval = |theta: f64| -> Option<f64> {
        let det = 1.0 + 2.0 * b * theta + a * theta * theta;
        if det <= DET_FLOOR {
            return None;
        }
        Some(-det.ln() + 2.0 * sjk * theta + 2.0 * lambda * ((current + theta).abs() - current.abs()))
    };

    let mut best_theta = 0.0f64;
    let mut best_phi = 0.0f64;
    let mut best_is_kink = false;
    let consider = |theta: f64, is_kink: bool, best_theta: &mut f64, best_phi: &mut f64, best_is_kink: &mut bool| {
        if let Some(phi) = eval(theta) {
            if phi < *best_phi {
                *best_theta = theta;
                *best_phi = phi;
                *best_is_kink = is_kink;
            }
        }
    };

    // Kink candidate: land exactly on zero.
    if current != 0.0 {
        consider(-current, true, &mut best_theta, &mut best_phi, &mut best_is_kink);
    }
    // Smooth stationary points on each sign piece: D'(θ) = c·D(θ) with
    // c = 2 S_jk + 2λs gives c·a·θ² + 2(cb − a)θ + (c − 2b) = 0.
    for sign in [1.0f64, -1.0] {
        let c = 2.0 * sjk + 2.0 * lambda * sign;
        let qa = c * a;
        let qb = 2.0 * (c * b - a);
        let qc = c - 2.0 * b;
        let mut roots = [f64::NAN; 2];
        if qa.abs() < 1e-300 {
            if qb.abs() > 0.0 {
                roots[0] = -qc / qb;
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let q = -0.5 * (qb + qb.signum() * sq);
                if q != 0.0 {
                    roots[0] = q / qa;
                    roots[1] = qc / q;
                } else {
                    // qb == 0: symmetric roots.
                    roots[0] = (sq / (2.0 * qa)).abs();
                    roots[1] = -roots[0];
                }
            }
        }
        for theta in roots {
            if theta.is_finite() && (current + theta) * sign > 0.0 {
                consider(theta, false, &mut best_theta, &mut best_phi, &mut best_is_kink);
            }
        }
    }

    if best_theta == 0.0 {
        return 0.0;
    }
    let theta = best_theta;
    let det = 1.0 + 2.0 * b * theta + a * theta * theta;
    // Rank-two update of W for Ω' = Ω + θ(e_j e_kᵀ + e_k e_jᵀ):
    //   W' = W − [w_j w_k] C [w_j w_k]ᵀ,
    //   C = (θ/D) [[−θW_kk, 1+θb], [1+θb, −θW_jj]].
    let f = theta / det;
    let c2 = [
        [-f * theta * wkk, f * (1.0 + theta * b)],
        [f * (1.0 + theta * b), -f * theta * wjj],
    ];
    let d = omega.nrows();
    for p in 0..d {
        buf_j[p] = w[[p, j]];
        buf_k[p] = w[[p, k]];
    }
    linalg::sym_rank2_downdate(w, buf_j, buf_k, c2);
    let new_value = if best_is_kink { 0.0 } else { current + theta };
    omega[[j, k]] = new_value;
    omega[[k, j]] = new_value;
    theta.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ggm::{induced_graph, lambda_grid, sample_covariance, ZERO_TOL};
    use crate::seed::task_rng;
    use crate::types::ExpressionMatrix;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_covariance(n: usize, d: usize, seed: u64) -> CovarianceMatrix {
        let mut rng = task_rng(seed, &[7]);
        let mut data = Array2::<f64>::zeros((n, d));
        for v in data.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        sample_covariance(&ExpressionMatrix::unlabeled(data)).unwrap()
    }

    /// Brute-force grid search for the 2x2 problem, refined around the best
    /// point; independent of the coordinate-descent solution path.
    fn grid_search_2x2(s: &CovarianceMatrix, lambda: f64) -> [f64; 3] {
        let sv = s.values();
        let objective = |x: f64, y: f64, z: f64| -> f64 {
            let det = x * y - z * z;
            if det <= 0.0 || x <= 0.0 {
                return f64::INFINITY;
            }
            -det.ln() + sv[[0, 0]] * x + sv[[1, 1]] * y + 2.0 * sv[[0, 1]] * z
                + 2.0 * lambda * z.abs()
        };
        let (mut cx, mut cy, mut cz) = (1.5, 1.5, 0.0);
        let mut half = 1.4f64;
        for _ in 0..14 {
            let mut best = (f64::INFINITY, cx, cy, cz);
            let steps = 20;
            for ix in 0..=steps {
                let x = cx - half + 2.0 * half * ix as f64 / steps as f64;
                for iy in 0..=steps {
                    let y = cy - half + 2.0 * half * iy as f64 / steps as f64;
                    for iz in 0..=steps {
                        let z = cz - half + 2.0 * half * iz as f64 / steps as f64;
                        let v = objective(x, y, z);
                        if v < best.0 {
                            best = (v, x, y, z);
                        }
                    }
                }
            }
            cx = best.1;
            cy = best.2;
            cz = best.3;
            half *= 0.35;
        }
        [cx, cy, cz]
    }

    #[test]
    fn two_by_two_matches_grid_search_oracle() {
        let s = CovarianceMatrix::new(array![[1.0, 0.5], [0.5, 1.0]], 100).unwrap();
        let lambda = 0.2;
        let fit = glasso_fit(&s, lambda).unwrap();
        let oracle = grid_search_2x2(&s, lambda);
        assert!((fit.values()[[0, 0]] - oracle[0]).abs() < 1e-5);
        assert!((fit.values()[[1, 1]] - oracle[1]).abs() < 1e-5);
        assert!((fit.values()[[0, 1]] - oracle[2]).abs() < 1e-5);
        // The unpenalized diagonal pins W_jj = S_jj, so here the solution has
        // the closed form W = [[1, 0.3], [0.3, 1]].
        let w = linalg::sym_inverse(fit.values()).unwrap();
        assert!((w[[0, 0]] - 1.0).abs() < 1e-8);
        assert!((w[[0, 1]] - 0.3).abs() < 1e-8);
        assert!(kkt_violation(&s, lambda, &fit).unwrap() < 1e-6);
    }

    #[test]
    fn oracle_agreement_on_random_2x2_instances() {
        for seed in 0..5u64 {
            let s = random_covariance(30, 2, 40 + seed);
            let lmax = s.values()[[0, 1]].abs();
            if lmax < 1e-3 {
                continue;
            }
            let lambda = 0.4 * lmax;
            let fit = glasso_fit(&s, lambda).unwrap();
            let oracle = grid_search_2x2(&s, lambda);
            for (got, want) in [
                (fit.values()[[0, 0]], oracle[0]),
                (fit.values()[[1, 1]], oracle[1]),
                (fit.values()[[0, 1]], oracle[2]),
            ] {
                assert!(
                    (got - want).abs() < 1e-4,
                    "seed {seed}: got {got}, oracle {want}"
                );
            }
        }
    }

    #[test]
    fn large_lambda_gives_unpenalized_diagonal_solution() {
        let s = random_covariance(25, 5, 1);
        let sv = s.values();
        let mut lmax = 0.0f64;
        for j in 0..5 {
            for k in (j + 1)..5 {
                lmax = lmax.max(sv[[j, k]].abs());
            }
        }
        let lambda = lmax * 1.01;
        let fit = glasso_fit(&s, lambda).unwrap();
        for j in 0..5 {
            for k in 0..5 {
                let want = if j == k { 1.0 / sv[[j, j]] } else { 0.0 };
                assert!((fit.values()[[j, k]] - want).abs() < 1e-10);
            }
        }
        assert!(kkt_violation(&s, lambda, &fit).unwrap() < 1e-6);
    }

    #[test]
    fn tiny_lambda_recovers_inverse_covariance() {
        let s = random_covariance(50, 4, 2);
        let fit = glasso_fit(&s, 1e-8).unwrap();
        let direct = linalg::sym_inverse(s.values()).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                assert!(
                    (fit.values()[[j, k]] - direct[[j, k]]).abs() < 1e-4,
                    "entry ({j},{k})"
                );
            }
        }
    }

    #[test]
    fn kkt_certified_on_random_instances() {
        let mut rng = task_rng(99, &[0]);
        for trial in 0..20u64 {
            let d = 2 + (trial % 9) as usize;
            let s = random_covariance(d + 10, d, 100 + trial);
            let sv = s.values();
            let mut lmax = 0.0f64;
            for j in 0..d {
                for k in (j + 1)..d {
                    lmax = lmax.max(sv[[j, k]].abs());
                }
            }
            let lambda = lmax * rng.random_range(0.2..0.8);
            let fit = glasso_fit(&s, lambda).unwrap();
            let viol = kkt_violation(&s, lambda, &fit).unwrap();
            assert!(viol < 1e-6, "trial {trial}: violation {viol}");
            assert!(duality_gap(&s, fit.values(), lambda).abs() <= 1e-6 * d as f64);
        }
    }

    #[test]
    fn sparsity_monotone_along_grid() {
        for seed in 0..5u64 {
            let d = 6;
            let s = random_covariance(20, d, 300 + seed);
            let grid = lambda_grid(&s, 20, d).unwrap();
            let mut warm: Option<Array2<f64>> = None;
            let mut prev_edges: Option<usize> = None;
            for &lambda in grid.values() {
                let omega =
                    glasso_fit_warm(&s, lambda, warm.as_ref(), &GlassoOptions::default()).unwrap();
                let edges = induced_graph(&PrecisionMatrix::new(omega.clone()).unwrap(), ZERO_TOL)
                    .edge_count();
                if let Some(prev) = prev_edges {
                    // Descending lambda: support should only grow, up to one
                    // edge of slack for near-threshold flips.
                    assert!(edges + 1 >= prev, "edges {edges} after {prev}");
                }
                prev_edges = Some(edges);
                warm = Some(omega);
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let d = 6;
        let s = random_covariance(30, d, 4).values().clone();
        let perm: Vec<usize> = vec![4, 2, 0, 5, 1, 3];
        let mut sp = Array2::<f64>::zeros((d, d));
        for j in 0..d {
            for k in 0..d {
                sp[[perm[j], perm[k]]] = s[[j, k]];
            }
        }
        let lambda = 0.15;
        let fit =
            glasso_fit(&CovarianceMatrix::new(s, 30).unwrap(), lambda).unwrap();
        let fit_p =
            glasso_fit(&CovarianceMatrix::new(sp, 30).unwrap(), lambda).unwrap();
        for j in 0..d {
            for k in 0..d {
                let a = fit.values()[[j, k]];
                let b = fit_p.values()[[perm[j], perm[k]]];
                assert!((a - b).abs() < 1e-8, "entry ({j},{k}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let s = random_covariance(30, 5, 6);
        let grid = lambda_grid(&s, 30, 5).unwrap();
        let l_hi = grid.values()[3];
        let l_lo = grid.values()[8];
        let cold = glasso_fit(&s, l_lo).unwrap();
        let first = glasso_fit_warm(&s, l_hi, None, &GlassoOptions::default()).unwrap();
        let warm =
            glasso_fit_warm(&s, l_lo, Some(&first), &GlassoOptions::default()).unwrap();
        for j in 0..5 {
            for k in 0..5 {
                assert!((cold.values()[[j, k]] - warm[[j, k]]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn zeros_are_bitwise_exact() {
        let s = random_covariance(40, 6, 8);
        let sv = s.values();
        let mut lmax = 0.0f64;
        for j in 0..6 {
            for k in (j + 1)..6 {
                lmax = lmax.max(sv[[j, k]].abs());
            }
        }
        let fit = glasso_fit(&s, 0.6 * lmax).unwrap();
        let mut zero_count = 0;
        for j in 0..6 {
            for k in (j + 1)..6 {
                if fit.values()[[j, k]] == 0.0 {
                    zero_count += 1;
                }
            }
        }
        assert!(zero_count > 0, "expected exact zeros at a moderate penalty");
    }

    #[test]
    fn works_on_singular_covariance() {
        // d > n makes S rank deficient; the penalized problem is still well
        // posed and must produce a PD solution.
        let s = random_covariance(4, 8, 10);
        let sv = s.values();
        let mut lmax = 0.0f64;
        for j in 0..8 {
            for k in (j + 1)..8 {
                lmax = lmax.max(sv[[j, k]].abs());
            }
        }
        let fit = glasso_fit(&s, 0.5 * lmax).unwrap();
        assert!(linalg::cholesky(fit.values()).is_some());
        assert!(kkt_violation(&s, 0.5 * lmax, &fit).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_bad_penalty() {
        let s = random_covariance(10, 3, 12);
        assert!(glasso_fit(&s, 0.0).is_err());
        assert!(glasso_fit(&s, -1.0).is_err());
        assert!(glasso_fit(&s, f64::NAN).is_err());
    }
}
