//! Shared statistical utilities: Benjamini–Hochberg adjustment, medians,
//! and the Shapiro–Wilk normality test (Royston's approximation).

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Benjamini–Hochberg step-up adjustment, returned in the original order.
/// Adjusted value for the i-th order statistic is min over j ≥ i of
/// min(1, S·p_(j)/j).
pub fn bh_adjust(p: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidPValue { index, value });
        }
    }
    let s = p.len();
    if s == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let mut adjusted = vec![0.0; s];
    let mut running = 1.0f64;
    for rank in (0..s).rev() {
        let i = order[rank];
        let value = (p[i] * s as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(value);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// Median; an even count averages the two central order statistics.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        Some(sorted[n / 2])
    } else {
        Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2]))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShapiroWilk {
    pub statistic: f64,
    pub p_value: f64,
}

/// Shapiro–Wilk test of normality for 3 ≤ n ≤ 5000, following Royston's
/// approximation to the weights and the normalizing transformations of W.
pub fn shapiro_wilk(sample: &[f64]) -> Result<ShapiroWilk> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::TooFewSamples {
            context: "shapiro_wilk (valid for 3..=5000)",
            needed: 3,
            got: n,
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "shapiro_wilk: non-finite sample value".into(),
        ));
    }
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if x[n - 1] - x[0] <= 0.0 {
        return Err(Error::InvalidInput(
            "shapiro_wilk: sample has zero range".into(),
        ));
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let nf = n as f64;

    // Expected normal order statistics via the Blom-type approximation,
    // then Royston's polynomial-corrected weights.
    let mut m = vec![0.0f64; n];
    for (i, mi) in m.iter_mut().enumerate() {
        *mi = normal.inverse_cdf((i as f64 + 1.0 - 0.375) / (nf + 0.25));
    }
    let ssq_m: f64 = m.iter().map(|v| v * v).sum();
    let rsqrt_ssq = 1.0 / ssq_m.sqrt();

    let mut a = vec![0.0f64; n];
    if n == 3 {
        let w = 0.5f64.sqrt();
        a[0] = -w;
        a[2] = w;
    } else {
        let u = 1.0 / nf.sqrt();
        let a_n = m[n - 1] * rsqrt_ssq + u * (0.221157
            + u * (-0.147981 + u * (-2.071190 + u * (4.434685 + u * -2.706056))));
        if n <= 5 {
            let phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * a_n * a_n);
            let scale = 1.0 / phi.sqrt();
            for i in 1..n - 1 {
                a[i] = m[i] * scale;
            }
        } else {
            let a_n1 = m[n - 2] * rsqrt_ssq + u * (0.042981
                + u * (-0.293762 + u * (-1.752461 + u * (5.682633 + u * -3.582633))));
            let phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2])
                / (1.0 - 2.0 * a_n * a_n - 2.0 * a_n1 * a_n1);
            let scale = 1.0 / phi.sqrt();
            for i in 2..n - 2 {
                a[i] = m[i] * scale;
            }
            a[n - 2] = a_n1;
            a[1] = -a_n1;
        }
        a[n - 1] = a_n;
        a[0] = -a_n;
    }

    let mean = x.iter().sum::<f64>() / nf;
    let ssd: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let num: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let w = (num * num / ssd).clamp(0.0, 1.0);

    let p_value = if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - 0.75f64.sqrt().asin());
        p.clamp(0.0, 1.0)
    } else {
        let ln1w = (1.0 - w).ln();
        let z = if n <= 11 {
            let g = -2.273 + 0.459 * nf;
            let mu = 0.5440 + nf * (-0.39978 + nf * (0.025054 + nf * -0.0006714));
            let sigma =
                (1.3822 + nf * (-0.77857 + nf * (0.062767 + nf * -0.0020322))).exp();
            let arg = g - ln1w;
            if arg <= 0.0 {
                // W too small for the transform's domain: overwhelming evidence
                // against normality.
                f64::INFINITY
            } else {
                (-arg.ln() - mu) / sigma
            }
        } else {
            let ln_n = nf.ln();
            let mu = -1.5861 + ln_n * (-0.31082 + ln_n * (-0.083751 + ln_n * 0.0038915));
            let sigma = (-0.4803 + ln_n * (-0.082676 + ln_n * 0.0030302)).exp();
            (ln1w - mu) / sigma
        };
        if z.is_infinite() {
            0.0
        } else {
            (1.0 - normal.cdf(z)).clamp(0.0, 1.0)
        }
    };

    Ok(ShapiroWilk {
        statistic: w,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::task_rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn brute_force_bh(p: &[f64]) -> Vec<f64> {
        let s = p.len();
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
        let mut adjusted = vec![0.0; s];
        for rank in 0..s {
            let mut best = f64::INFINITY;
            for later in rank..s {
                let candidate = (p[order[later]] * s as f64 / (later + 1) as f64).min(1.0);
                best = best.min(candidate);
            }
            adjusted[order[rank]] = best;
        }
        adjusted
    }

    #[test]
    fn bh_worked_example() {
        let adjusted = bh_adjust(&[0.01, 0.04, 0.03, 0.005]).unwrap();
        let want = [0.02, 0.04, 0.04, 0.02];
        for (got, want) in adjusted.iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bh_all_ones_and_single() {
        assert_eq!(bh_adjust(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(bh_adjust(&[0.37]).unwrap(), vec![0.37]);
        assert!(bh_adjust(&[]).unwrap().is_empty());
    }

    #[test]
    fn bh_matches_brute_force_on_random_vectors() {
        let mut rng = task_rng(7, &[0]);
        for trial in 0..1000 {
            let len = rng.random_range(1..40);
            let p: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
            let fast = bh_adjust(&p).unwrap();
            let slow = brute_force_bh(&p);
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).abs() < 1e-15, "trial {trial}");
            }
        }
    }

    #[test]
    fn bh_is_monotone_in_ranks() {
        let mut rng = task_rng(8, &[0]);
        let p: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..1.0)).collect();
        let adjusted = bh_adjust(&p).unwrap();
        let mut pairs: Vec<(f64, f64)> = p.iter().copied().zip(adjusted).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for win in pairs.windows(2) {
            assert!(win[1].1 >= win[0].1 - 1e-15);
        }
    }

    #[test]
    fn bh_rejects_out_of_range() {
        assert!(bh_adjust(&[0.5, 1.2]).is_err());
        assert!(bh_adjust(&[-0.1]).is_err());
        assert!(bh_adjust(&[f64::NAN]).is_err());
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[0.2, 0.4, 0.6]).unwrap(), 0.4);
        assert!((median(&[0.4, 0.2]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn shapiro_wilk_matches_reference_values() {
        // Reference statistics and p-values computed with an independent
        // implementation of the same approximation (scipy.stats.shapiro).
        let x1: Vec<f64> = vec![
            0.8797, -0.2806, 1.4768, -0.5602, 0.1259, -1.2378, 0.4747, 2.0098,
            -0.9403, 0.0332,
        ];
        let got = shapiro_wilk(&x1).unwrap();
        assert!((got.statistic - 0.9722329662).abs() < 1e-6, "{}", got.statistic);
        assert!((got.p_value - 0.9107410623).abs() < 1e-5, "{}", got.p_value);

        let x2: Vec<f64> = (0..20).map(|i| ((i + 1) as f64).powi(2)).collect();
        let got = shapiro_wilk(&x2).unwrap();
        assert!((got.statistic - 0.9061306286).abs() < 1e-6, "{}", got.statistic);
        assert!((got.p_value - 0.0538095891).abs() < 1e-5, "{}", got.p_value);
    }

    #[test]
    fn shapiro_wilk_nominal_level_on_normal_data() {
        let mut rejections = 0;
        for seed in 0..200u64 {
            let mut rng = task_rng(600 + seed, &[0]);
            let x: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
            let test = shapiro_wilk(&x).unwrap();
            if test.p_value < 0.05 {
                rejections += 1;
            }
        }
        // Binomial(200, 0.05) is within [1, 25] with overwhelming probability.
        assert!((1..=25).contains(&rejections), "rejections = {rejections}");
    }

    #[test]
    fn shapiro_wilk_rejects_skewed_data() {
        let mut power = 0;
        for seed in 0..50u64 {
            let mut rng = task_rng(900 + seed, &[0]);
            let x: Vec<f64> = (0..100)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * z
                })
                .collect();
            if shapiro_wilk(&x).unwrap().p_value < 0.05 {
                power += 1;
            }
        }
        assert!(power >= 48, "power = {power}/50");
    }

    #[test]
    fn shapiro_wilk_perfect_quantiles_retained() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..40)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / 40.0))
            .collect();
        let test = shapiro_wilk(&x).unwrap();
        assert!(test.p_value > 0.5, "p = {}", test.p_value);
    }

    #[test]
    fn shapiro_wilk_input_validation() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[3.0; 10]).is_err());
        assert!(shapiro_wilk(&[1.0, f64::NAN, 2.0, 3.0]).is_err());
    }
}
