//! Dense symmetric linear algebra on small matrices.
//!
//! Gene-set problems are low-dimensional (tens to low hundreds of genes), so
//! straightforward O(d^3) routines are fast and keep the crate free of BLAS
//! linkage. All routines assume (and some verify) symmetric input.

use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a non-positive pivot is encountered.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    debug_assert_eq!(d, a.ncols());
    let mut l = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..d {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / ljj;
        }
    }
    Some(l)
}

/// log(det A) given the lower Cholesky factor of A.
pub fn logdet_from_cholesky(l: &Array2<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>() * 2.0
}

/// Solve A x = b given the lower Cholesky factor of A.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let d = l.nrows();
    let mut y = b.clone();
    for i in 0..d {
        let mut v = y[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    for i in (0..d).rev() {
        let mut v = y[i];
        for k in (i + 1)..d {
            v -= l[[k, i]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    y
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn inverse_from_cholesky(l: &Array2<f64>) -> Array2<f64> {
    let d = l.nrows();
    // Invert L in place into `inv_l` (lower triangular), then A^-1 = L^-T L^-1.
    let mut inv_l = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        inv_l[[j, j]] = 1.0 / l[[j, j]];
        for i in (j + 1)..d {
            let mut v = 0.0;
            for k in j..i {
                v -= l[[i, k]] * inv_l[[k, j]];
            }
            inv_l[[i, j]] = v / l[[i, i]];
        }
    }
    let mut out = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut v = 0.0;
            for k in i..d {
                v += inv_l[[k, i]] * inv_l[[k, j]];
            }
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Inverse of a symmetric positive definite matrix, or `None` if not PD.
pub fn sym_inverse(a: &Array2<f64>) -> Option<Array2<f64>> {
    cholesky(a).map(|l| inverse_from_cholesky(&l))
}

/// Whether max_ij |A_ij - A_ji| <= tol.
pub fn is_symmetric(a: &Array2<f64>, tol: f64) -> bool {
    let d = a.nrows();
    if d != a.ncols() {
        return false;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if (a[[i, j]] - a[[j, i]]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Replace A by (A + A^T)/2, removing round-off asymmetry.
pub fn symmetrize(a: &mut Array2<f64>) {
    let d = a.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// tr(A B) for symmetric A, B of equal dimension.
pub fn trace_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (sa, sb) = (a.as_slice().unwrap(), b.as_slice().unwrap());
    sa.iter().zip(sb).map(|(x, y)| x * y).sum()
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, ascending.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let d = a.nrows();
    let mut m = a.clone();
    symmetrize(&mut m);
    let scale: f64 = trace_product(&m, &m).sqrt().max(1.0);
    for _ in 0..100 {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                // Stable rotation: t = sign(theta) / (|theta| + sqrt(theta^2 + 1)).
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..d).map(|i| m[[i, i]]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Array2<f64>) -> f64 {
    sym_eigenvalues(a)[0]
}

/// Symmetric rank-one downdate W <- W - scale * v v^T.
pub fn sym_rank1_downdate(w: &mut Array2<f64>, v: &[f64], scale: f64) {
    let d = w.nrows();
    for p in 0..d {
        let vp = scale * v[p];
        for q in p..d {
            let delta = vp * v[q];
            w[[p, q]] -= delta;
            if q != p {
                w[[q, p]] = w[[p, q]];
            }
        }
    }
}

/// Symmetric two-column downdate W <- W - [wj wk] C [wj wk]^T for a symmetric
/// 2x2 matrix C and saved copies `wj`, `wk` of columns j and k of W.
pub fn sym_rank2_downdate(w: &mut Array2<f64>, wj: &[f64], wk: &[f64], c: [[f64; 2]; 2]) {
    let d = w.nrows();
    for p in 0..d {
        let up = wj[p];
        let vp = wk[p];
        // Row p of [wj wk] C.
        let r0 = up * c[0][0] + vp * c[1][0];
        let r1 = up * c[0][1] + vp * c[1][1];
        for q in p..d {
            let delta = r0 * wj[q] + r1 * wk[q];
            w[[p, q]] -= delta;
            if q != p {
                w[[q, p]] = w[[p, q]];
            }
        }
    }
}
