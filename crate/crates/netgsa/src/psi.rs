//! Distribution function of a shifted weighted sum of chi-squares:
//! Ψ(t; ν, δ) = P(Σ_i ν_i Z_i² − δ ≤ t) with Z_i i.i.d. standard normal.
//!
//! Evaluated by numerical inversion of the characteristic function
//! (Imhof's formula): with x = t + δ,
//!   P(Q > x) = 1/2 + (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du,
//!   θ(u) = ½ Σ arctan(ν_r u) − ½ x u,
//!   ρ(u) = Π (1 + ν_r² u²)^{1/4}.
//! θ is concave with θ(0) = 0, so the integrand oscillates with sign changes
//! exactly where θ crosses a multiple of π. The integral is accumulated lobe
//! by lobe (Gauss–Legendre on monotone sub-segments, bisection for lobe
//! boundaries) and the alternating lobe series is accelerated by iterated
//! averaging of partial sums.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Absolute accuracy target for the returned probability.
const ACCURACY: f64 = 1e-8;
const MIN_LOBES: usize = 8;
const MAX_LOBES: usize = 50_000;

pub fn psi_cdf(t: f64, nu: &[f64], delta: f64) -> Result<f64> {
    if nu.is_empty() {
        return Err(Error::InvalidInput("psi_cdf: empty weight vector".into()));
    }
    if nu.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "psi_cdf: weights must be positive and finite".into(),
        ));
    }
    if !t.is_finite() || !delta.is_finite() {
        return Err(Error::InvalidInput("psi_cdf: non-finite argument".into()));
    }
    let x = t + delta;
    if x <= 0.0 {
        // Q = Σ ν Z² is almost surely positive.
        return Ok(0.0);
    }
    let upper = imhof_upper_tail(x, nu)?;
    Ok((1.0 - upper).clamp(0.0, 1.0))
}

fn theta(u: f64, x: f64, nu: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in nu {
        s += (v * u).atan();
    }
    0.5 * s - 0.5 * x * u
}

fn theta_deriv(u: f64, x: f64, nu: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in nu {
        s += v / (1.0 + v * v * u * u);
    }
    0.5 * s - 0.5 * x
}

/// sin θ(u) / (u ρ(u)), with ρ evaluated in log space.
fn integrand(u: f64, x: f64, nu: &[f64]) -> f64 {
    let mut th = 0.0;
    let mut log_rho = 0.0;
    for &v in nu {
        let vu = v * u;
        th += vu.atan();
        log_rho += 0.25 * (vu * vu).ln_1p();
    }
    th = 0.5 * th - 0.5 * x * u;
    th.sin() * (-log_rho).exp() / u
}

/// P(Q > x) by lobewise integration of Imhof's formula.
fn imhof_upper_tail(x: f64, nu: &[f64]) -> Result<f64> {
    let sum_nu: f64 = nu.iter().sum();

    let mut u = 0.0f64;
    let mut th_u = 0.0f64;
    let mut step = std::f64::consts::PI / (sum_nu + x + 1.0);
    let mut lobe_acc = 0.0f64;
    let mut partials: Vec<f64> = Vec::new();
    let mut cumulative = 0.0f64;
    let mut last_estimate = f64::NAN;
    let mut last_checked = 0usize;
    let mut lobes = 0usize;

    while lobes < MAX_LOBES {
        let mut v = u + step;
        let mut th_v = theta(v, x, nu);
        let mut shrink_guard = 0;
        while (th_v - th_u).abs() > 1.4 {
            step *= 0.5;
            v = u + step;
            th_v = theta(v, x, nu);
            shrink_guard += 1;
            if shrink_guard > 200 {
                return Err(Error::Integration {
                    detail: "step control failed".into(),
                });
            }
        }

        // Split at the peak of θ if the derivative changes sign inside.
        let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(2);
        let d_u = theta_deriv(u, x, nu);
        let d_v = theta_deriv(v, x, nu);
        if d_u > 0.0 && d_v < 0.0 {
            let peak = bisect(|z| theta_deriv(z, x, nu), u, v);
            let th_peak = theta(peak, x, nu);
            pieces.push((u, peak, th_u, th_peak));
            pieces.push((peak, v, th_peak, th_v));
        } else {
            pieces.push((u, v, th_u, th_v));
        }

        for (a, b, th_a, th_b) in pieces {
            // θ is monotone on (a, b); find a crossing of a multiple of π.
            let (lo, hi) = if th_a < th_b { (th_a, th_b) } else { (th_b, th_a) };
            let level = (lo / std::f64::consts::PI).floor() + 1.0;
            let level = level * std::f64::consts::PI;
            if level > lo && level < hi {
                let cross = bisect(|z| theta(z, x, nu) - level, a, b);
                lobe_acc += gauss_legendre(|z| integrand(z, x, nu), a, cross);
                cumulative += lobe_acc;
                partials.push(cumulative);
                lobes += 1;
                lobe_acc = gauss_legendre(|z| integrand(z, x, nu), cross, b);
            } else {
                lobe_acc += gauss_legendre(|z| integrand(z, x, nu), a, b);
            }
        }

        let swept = (th_v - th_u).abs();
        u = v;
        th_u = th_v;
        if swept < 0.5 {
            step *= 1.6;
        }

        // Only judge convergence when a new lobe has closed; between
        // closures the estimate is unchanged and would compare equal.
        if partials.len() >= MIN_LOBES && partials.len() > last_checked {
            last_checked = partials.len();
            let estimate = euler_average(&partials);
            let tail = partials[partials.len() - 1] - partials[partials.len() - 2];
            if (estimate - last_estimate).abs() < ACCURACY * 0.1
                || tail.abs() < ACCURACY * 1e-4
            {
                return Ok(0.5 + estimate / std::f64::consts::PI);
            }
            last_estimate = estimate;
        }
    }
    Err(Error::Integration {
        detail: format!("lobe budget exhausted at u = {u:.3e}"),
    })
}

/// Iterated averaging of the last partial sums of an alternating series.
fn euler_average(partials: &[f64]) -> f64 {
    let k = partials.len().min(12);
    let mut row: Vec<f64> = partials[partials.len() - k..].to_vec();
    while row.len() > 1 {
        for i in 0..row.len() - 1 {
            row[i] = 0.5 * (row[i] + row[i + 1]);
        }
        row.pop();
    }
    row[0]
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// 15-point Gauss–Legendre quadrature on [a, b].
fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let rule = gl15_rule();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for &(node, weight) in rule {
        acc += weight * f(mid + half * node);
    }
    acc * half
}

/// Nodes and weights computed once by Newton iteration on P₁₅.
fn gl15_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 15usize;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                // Legendre recurrence for P_n(z) and P_{n-1}(z).
                let mut p0 = 1.0f64;
                let mut p1 = 0.0f64;
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
                }
                let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let delta = p0 / dp;
                z -= delta;
                if delta.abs() < 1e-15 {
                    break;
                }
            }
            // Recompute derivative at the converged root for the weight.
            let mut p0 = 1.0f64;
            let mut p1 = 0.0f64;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            out.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::task_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn gl15_integrates_polynomials_exactly() {
        // Degree up to 2n−1 = 29 is exact; check x^8 on [0, 1].
        let got = gauss_legendre(|x| x.powi(8), 0.0, 1.0);
        assert!((got - 1.0 / 9.0).abs() < 1e-14);
        let got = gauss_legendre(|x| (3.0 * x).sin(), 0.0, 2.0);
        let want = (1.0 - (6.0f64).cos()) / 3.0;
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn matches_exponential_closed_form_for_two_unit_weights() {
        // Two unit weights give Q = Z₁² + Z₂² ~ χ²₂ with CDF 1 − exp(−x/2).
        for &x in &[0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let got = psi_cdf(x, &[1.0, 1.0], 0.0).unwrap();
            let want = 1.0 - (-x / 2.0f64).exp();
            assert!((got - want).abs() < 1e-7, "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn matches_scaled_exponential() {
        // Q = 3(Z₁² + Z₂²) ~ 3·χ²₂: CDF = 1 − exp(−x/6).
        for &x in &[0.5, 2.0, 6.0, 12.0] {
            let got = psi_cdf(x, &[3.0, 3.0], 0.0).unwrap();
            let want = 1.0 - (-x / 6.0f64).exp();
            assert!((got - want).abs() < 1e-7, "x = {x}");
        }
    }

    #[test]
    fn matches_monte_carlo_for_mixed_weights() {
        let nu = [2.0, 0.5];
        let delta = 1.0;
        let draws = 1_000_000usize;
        let mut rng = task_rng(42, &[0]);
        let thresholds = [-0.5, 0.0, 0.5, 1.5, 3.0, 6.0];
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let q = 2.0 * z1 * z1 + 0.5 * z2 * z2 - delta;
            for (ti, &t) in thresholds.iter().enumerate() {
                if q <= t {
                    counts[ti] += 1;
                }
            }
        }
        for (ti, &t) in thresholds.iter().enumerate() {
            let mc = counts[ti] as f64 / draws as f64;
            let got = psi_cdf(t, &nu, delta).unwrap();
            let se = (mc * (1.0 - mc) / draws as f64).sqrt().max(1e-6);
            assert!(
                (got - mc).abs() < 4.0 * se,
                "t = {t}: psi {got}, mc {mc}, se {se}"
            );
        }
    }

    #[test]
    fn shift_moves_the_distribution() {
        // P(Q − δ ≤ t) = P(Q ≤ t + δ).
        let a = psi_cdf(1.0, &[1.0, 2.0], 3.0).unwrap();
        let b = psi_cdf(4.0, &[1.0, 2.0], 0.0).unwrap();
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn extreme_tails_saturate() {
        let nu = vec![1.0; 5];
        let sum: f64 = nu.iter().sum();
        let delta = 10.0;
        assert_eq!(psi_cdf(-delta - 10.0 * sum, &nu, delta).unwrap(), 0.0);
        let hi = psi_cdf(sum * 1e3, &nu, delta).unwrap();
        assert!(hi > 1.0 - 1e-6);
    }

    #[test]
    fn monotone_in_t() {
        let nu = [0.3, 1.0, 2.5];
        let mut prev = -1.0;
        for i in 0..60 {
            let t = -2.0 + i as f64 * 0.5;
            let p = psi_cdf(t, &nu, 1.0).unwrap();
            assert!(p >= prev - 1e-9, "t = {t}");
            prev = p;
        }
    }

    #[test]
    fn rejects_invalid_weights() {
        assert!(psi_cdf(1.0, &[], 0.0).is_err());
        assert!(psi_cdf(1.0, &[1.0, -1.0], 0.0).is_err());
        assert!(psi_cdf(1.0, &[0.0], 0.0).is_err());
        assert!(psi_cdf(f64::NAN, &[1.0], 0.0).is_err());
    }

    #[test]
    fn single_weight_matches_normal_square() {
        // P(Z² ≤ x) = 2Φ(√x) − 1.
        use statrs::distribution::{ContinuousCDF, Normal};
        let normal = Normal::new(0.0, 1.0).unwrap();
        for &x in &[0.2, 1.0, 2.5, 7.0] {
            let got = psi_cdf(x, &[1.0], 0.0).unwrap();
            let want = 2.0 * normal.cdf(x.sqrt()) - 1.0;
            assert!((got - want).abs() < 1e-7, "x = {x}");
        }
    }
}
