//! Shapiro-Wilk W with Royston's (1995) polynomial approximations for the
//! coefficients and the null distribution of W.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub n: usize,
    pub w: f64,
    pub p: f64,
}

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Coefficients for the lower half of the order statistics (positive, applied
/// to `x[n-1-i] - x[i]`).
fn coefficients(n: usize, std_normal: &Normal) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half)
        .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (start, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in start..half {
        a[i] = -m[i] / fac;
    }
    a
}

fn p_value(n: usize, w: f64, std_normal: &Normal) -> f64 {
    if n == 3 {
        // Exact null distribution for three observations.
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::PI / 3.0);
        return p.clamp(0.0, 1.0);
    }
    let mut y = (1.0 - w).ln();
    let an = n as f64;
    let (mean, sd) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return 1e-99;
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let xx = an.ln();
        (poly(&C5, xx), poly(&C6, xx).exp())
    };
    if y == f64::NEG_INFINITY {
        return 1.0;
    }
    std_normal.sf((y - mean) / sd)
}

/// Shapiro-Wilk normality test for 3 to 5000 values.
pub fn shapiro_wilk(values: &[f64]) -> Result<ShapiroWilk> {
    let n = values.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "Shapiro-Wilk needs between 3 and 5000 values, got {n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "Shapiro-Wilk input contains non-finite values".into(),
        ));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] < 1e-19 * x[0].abs().max(1.0) {
        return Err(Error::InvalidArgument(
            "Shapiro-Wilk is undefined for constant data".into(),
        ));
    }
    let std_normal = Normal::standard();
    let a = coefficients(n, &std_normal);
    let mean = x.iter().sum::<f64>() / n as f64;
    let ssq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let num: f64 = a
        .iter()
        .enumerate()
        .map(|(i, ai)| ai * (x[n - 1 - i] - x[i]))
        .sum();
    let w = (num * num / ssq).min(1.0);
    Ok(ShapiroWilk {
        n,
        w,
        p: p_value(n, w, &std_normal),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn size_limits() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[2.0; 10]).is_err());
        assert!(shapiro_wilk(&vec![0.5; 5001]).is_err());
    }

    #[test]
    fn three_equally_spaced_points_are_perfectly_normal() {
        let r = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.w - 1.0).abs() < 1e-12);
        assert!((r.p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_samples_rarely_rejected() {
        let mut rejected = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
            if shapiro_wilk(&xs).unwrap().p <= 0.05 {
                rejected += 1;
            }
        }
        assert!(rejected <= 2, "{rejected} of 20 rejected");
    }

    #[test]
    fn skewed_sample_rejected() {
        let xs: Vec<f64> = (1..=60).map(|i| (i as f64 / 8.0).exp()).collect();
        assert!(shapiro_wilk(&xs).unwrap().p < 1e-4);
    }
}
