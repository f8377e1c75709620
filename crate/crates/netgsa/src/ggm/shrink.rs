//! Shrinkage partial-correlation networks.
//!
//! The sample correlation matrix is shrunk toward the identity with the
//! analytic (variance-minimizing) intensity, inverted, and converted to
//! partial correlations. Edges are the entries whose estimated probability of
//! being real exceeds a threshold, under a two-component mixture: a null
//! density of sample partial correlations at n − d − 1 effective degrees of
//! freedom (clamped below at 3) and a uniform alternative.

use ndarray::Array2;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{ExpressionMatrix, UndirectedGraph};

/// Fit with the conventional edge-probability threshold 0.8.
pub fn shrinkage_fit(x: &ExpressionMatrix, edge_threshold: f64) -> Result<UndirectedGraph> {
    let n = x.n_samples();
    let d = x.n_genes();
    if n < 3 {
        return Err(Error::TooFewSamples {
            context: "shrinkage_fit",
            needed: 3,
            got: n,
        });
    }
    if !(0.0..=1.0).contains(&edge_threshold) {
        return Err(Error::InvalidInput(
            "edge threshold must lie in [0, 1]".into(),
        ));
    }

    // Z-scores with the n−1 variance divisor; constant columns are an error.
    let data = x.data();
    let mut z = Array2::<f64>::zeros((n, d));
    for j in 0..d {
        let mean = data.column(j).sum() / n as f64;
        let ss: f64 = data.column(j).iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ConstantColumn {
                index: j,
                gene: x.gene_ids()[j].clone(),
            });
        }
        for i in 0..n {
            z[[i, j]] = (data[[i, j]] - mean) / sd;
        }
    }

    // Sample correlations r_jk = Σ z_j z_k / (n−1), and the analytic shrinkage
    // intensity  w = Σ Var(r_jk) / Σ r_jk²  with
    // Var(r_jk) = n/(n−1)³ · Σ_i (z_ij z_ik − mean)².
    let mut sum_var = 0.0;
    let mut sum_r2 = 0.0;
    let mut r = Array2::<f64>::eye(d);
    for j in 0..d {
        for k in (j + 1)..d {
            let mut s1 = 0.0;
            for i in 0..n {
                s1 += z[[i, j]] * z[[i, k]];
            }
            let wbar = s1 / n as f64;
            let rjk = s1 / (n - 1) as f64;
            let mut s2 = 0.0;
            for i in 0..n {
                let dev = z[[i, j]] * z[[i, k]] - wbar;
                s2 += dev * dev;
            }
            sum_var += s2 * n as f64 / ((n - 1) as f64).powi(3);
            sum_r2 += rjk * rjk;
            r[[j, k]] = rjk;
            r[[k, j]] = rjk;
        }
    }
    let intensity = if sum_r2 > 0.0 {
        (sum_var / sum_r2).clamp(0.0, 1.0)
    } else {
        1.0
    };
    for j in 0..d {
        for k in 0..d {
            if j != k {
                r[[j, k]] *= 1.0 - intensity;
            }
        }
    }

    let omega = linalg::sym_inverse(&r).ok_or(Error::NotPositiveDefinite {
        context: "shrinkage_fit: shrunk correlation matrix",
    })?;
    let mut pcorr = Vec::with_capacity(d * (d - 1) / 2);
    for j in 0..d {
        for k in (j + 1)..d {
            let rho = -omega[[j, k]] / (omega[[j, j]] * omega[[k, k]]).sqrt();
            pcorr.push((j, k, rho.clamp(-1.0 + 1e-12, 1.0 - 1e-12)));
        }
    }

    // Null density of a sample partial correlation under independence:
    // f0(ρ; κ) ∝ (1−ρ²)^{(κ−3)/2} on [−1, 1], κ = n − d − 1 clamped at 3.
    let kappa = ((n as i64 - d as i64 - 1).max(3)) as f64;
    let log_norm =
        ln_gamma(kappa / 2.0) - 0.5 * std::f64::consts::PI.ln() - ln_gamma((kappa - 1.0) / 2.0);
    let f0: Vec<f64> = pcorr
        .iter()
        .map(|&(_, _, rho)| (log_norm + 0.5 * (kappa - 3.0) * (1.0 - rho * rho).ln()).exp())
        .collect();

    // Mixture f = η f0 + (1−η)/2; the likelihood is concave in η, so golden
    // section on [0, 1] finds the deterministic MLE.
    let loglik = |eta: f64| -> f64 {
        f0.iter()
            .map(|&v| (eta * v + (1.0 - eta) * 0.5).max(1e-300).ln())
            .sum()
    };
    let eta = golden_section_max(loglik, 0.0, 1.0, 200);

    let mut graph = UndirectedGraph::new(d);
    for (idx, &(j, k, _)) in pcorr.iter().enumerate() {
        let null_part = eta * f0[idx];
        let lfdr = null_part / (null_part + (1.0 - eta) * 0.5);
        if 1.0 - lfdr > edge_threshold {
            graph.add_edge(j, k)?;
        }
    }
    Ok(graph)
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}
