use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Combined sample sizes up to this use exact enumeration for the p value.
pub const DEFAULT_EXACT_THRESHOLD: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub n_a: usize,
    pub n_b: usize,
    /// U of the first group, `R_a - n_a(n_a+1)/2`.
    pub u_a: f64,
    pub u_b: f64,
    pub u_min: f64,
    /// Continuity-corrected normal score of `u_a`.
    pub z: f64,
    /// Two-sided p value actually reported (exact when `exact`).
    pub p: f64,
    pub p_normal: f64,
    pub p_exact: Option<f64>,
    pub exact: bool,
}

/// Midranks (1-based) of `values` plus the tie term `sum(t^3 - t)`.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; n];
    let mut ties = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Two-sided exact p: share of all ways to pick `n_a` of the pooled ranks
/// whose U is at least as far from its mean as the observed one.
fn exact_p(ranks: &[f64], n_a: usize, u_obs: f64) -> f64 {
    let n = ranks.len();
    let mu = (n_a * (n - n_a)) as f64 / 2.0;
    let dev = (u_obs - mu).abs() - 1e-9;
    let offset = (n_a * (n_a + 1)) as f64 / 2.0;
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != n_a {
            continue;
        }
        let r: f64 = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        total += 1;
        if (r - offset - mu).abs() >= dev {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Mann-Whitney U test. The p value uses the tie-corrected normal
/// approximation with a 0.5 continuity correction, or exact enumeration when
/// `n_a + n_b <= exact_threshold`.
pub fn mann_whitney_u(a: &[f64], b: &[f64], exact_threshold: usize) -> Result<MannWhitney> {
    let (n_a, n_b) = (a.len(), b.len());
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidArgument(
            "Mann-Whitney needs two nonempty groups".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "Mann-Whitney input contains non-finite values".into(),
        ));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let (ranks, ties) = midranks(&pooled);
    let r_a: f64 = ranks[..n_a].iter().sum();
    let u_a = r_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let nn = (n_a * n_b) as f64;
    let u_b = nn - u_a;
    let mu = nn / 2.0;
    let nf = n as f64;
    let var = nn / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    let (z, p_normal) = if var > 0.0 {
        let sd = var.sqrt();
        let d = u_a - mu;
        let zc = (d.abs() - 0.5) / sd;
        let p = (2.0 * Normal::standard().sf(zc)).min(1.0);
        (d.signum() * zc.max(0.0), p)
    } else {
        (0.0, 1.0)
    };
    let p_exact = (n <= exact_threshold && n <= 30).then(|| exact_p(&ranks, n_a, u_a));
    Ok(MannWhitney {
        n_a,
        n_b,
        u_a,
        u_b,
        u_min: u_a.min(u_b),
        z,
        p: p_exact.unwrap_or(p_normal),
        p_normal,
        p_exact,
        exact: p_exact.is_some(),
    })
}

/// Absolute rank-biserial correlation `|1 - 2U / (n_a n_b)|`; the same for
/// either orientation of U.
pub fn effect_size_r(u: f64, n_a: usize, n_b: usize) -> Result<f64> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidArgument(
            "group sizes must be positive".into(),
        ));
    }
    let nn = (n_a * n_b) as f64;
    if !(0.0..=nn).contains(&u) {
        return Err(Error::InvalidArgument(format!("U = {u} outside [0, {nn}]")));
    }
    Ok((1.0 - 2.0 * u / nn).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fully_separated_triplets() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 12).unwrap();
        assert_eq!(r.u_a, 0.0);
        assert!(r.exact);
        assert!((r.p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let r = mann_whitney_u(&xs, &xs, 0).unwrap();
        assert_eq!(r.u_a, 24.5);
        assert_eq!(r.p, 1.0);
        let flat = mann_whitney_u(&[2.0; 4], &[2.0; 5], 0).unwrap();
        assert_eq!((flat.z, flat.p), (0.0, 1.0));
    }

    #[test]
    fn effect_size_bounds() {
        assert_eq!(effect_size_r(8.0, 4, 4).unwrap(), 0.0);
        assert!(effect_size_r(17.0, 4, 4).is_err());
        assert!((effect_size_r(481.5, 89, 16).unwrap() - 0.324).abs() < 1e-3);
    }

    #[test]
    fn exact_matches_brute_force_with_ties() {
        // Enumerate assignments of labelled values directly.
        let a = [1.0, 2.0, 2.0];
        let b = [2.0, 3.0, 5.0, 5.0];
        let r = mann_whitney_u(&a, &b, 12).unwrap();
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        let u_of = |ga: &[f64], gb: &[f64]| -> f64 {
            ga.iter()
                .flat_map(|x| {
                    gb.iter().map(move |y| {
                        if x > y {
                            1.0
                        } else if x == y {
                            0.5
                        } else {
                            0.0
                        }
                    })
                })
                .sum()
        };
        assert_eq!(u_of(&a, &b), r.u_a);
        let mu = 6.0;
        let (mut hit, mut tot) = (0, 0);
        for mask in 0u32..128 {
            if mask.count_ones() != 3 {
                continue;
            }
            let ga: Vec<f64> = (0..7)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| pooled[i])
                .collect();
            let gb: Vec<f64> = (0..7)
                .filter(|i| mask >> i & 1 == 0)
                .map(|i| pooled[i])
                .collect();
            tot += 1;
            if (u_of(&ga, &gb) - mu).abs() >= (r.u_a - mu).abs() - 1e-9 {
                hit += 1;
            }
        }
        assert!((r.p - hit as f64 / tot as f64).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn u_orientations_sum(a in prop::collection::vec(0u8..20, 1..15), b in prop::collection::vec(0u8..20, 1..15)) {
            let fa: Vec<f64> = a.iter().map(|&x| x as f64).collect();
            let fb: Vec<f64> = b.iter().map(|&x| x as f64).collect();
            let r = mann_whitney_u(&fa, &fb, 12).unwrap();
            prop_assert_eq!(r.u_a + r.u_b, (a.len() * b.len()) as f64);
            prop_assert!((0.0..=1.0).contains(&r.p));
            let swapped = mann_whitney_u(&fb, &fa, 12).unwrap();
            prop_assert!((effect_size_r(r.u_a, r.n_a, r.n_b).unwrap() - effect_size_r(swapped.u_a, r.n_b, r.n_a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_keeps_p(a in prop::collection::vec(-5.0f64..5.0, 2..20), b in prop::collection::vec(-5.0f64..5.0, 2..20)) {
            let f = |x: &f64| x.exp() * 3.0 + 1.0;
            let r = mann_whitney_u(&a, &b, 12).unwrap();
            let t = mann_whitney_u(&a.iter().map(f).collect::<Vec<_>>(), &b.iter().map(f).collect::<Vec<_>>(), 12).unwrap();
            prop_assert_eq!(r.p, t.p);
        }
    }
}
