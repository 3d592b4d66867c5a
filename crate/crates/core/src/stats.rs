//! Goodness-of-fit tests and moment estimators used by the verifications.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use crate::error::{Error, Result};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;

/// Outcome of a hypothesis test; `pass` means the null was not rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: Vec<usize>,
    pub pass: bool,
    pub significance: f64,
    pub seed: Option<u64>,
}

impl TestReport {
    fn new(test_name: &str, statistic: f64, p_value: f64, n: Vec<usize>) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestReport {
            test_name: test_name.to_string(),
            statistic,
            p_value,
            n,
            pass: p_value > DEFAULT_SIGNIFICANCE,
            significance: DEFAULT_SIGNIFICANCE,
            seed: None,
        }
    }

    pub fn with_significance(mut self, significance: f64) -> Self {
        self.significance = significance;
        self.pass = self.p_value > significance;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.test_name = name.to_string();
        self
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form of the CDF, fast for small λ.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            let term = (c * j * j).exp();
            cdf += term;
            if term < 1e-17 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf).clamp(0.0, 1.0)
    } else {
        let mut sf = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sf += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sf).clamp(0.0, 1.0)
    }
}

fn sorted_finite(samples: &[f64], what: &str) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Precondition(format!("{what} contains NaN")));
    }
    let mut v = samples.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport> {
    if samples.len() < 20 {
        return Err(Error::Precondition(format!(
            "KS test needs at least 20 samples, got {}",
            samples.len()
        )));
    }
    let xs = sorted_finite(samples, "sample")?;
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(TestReport::new(
        "ks_one_sample",
        d,
        kolmogorov_sf(n.sqrt() * d),
        vec![xs.len()],
    ))
}

/// Two-sample Kolmogorov–Smirnov test with effective size `nm/(n+m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.len() < 20 || b.len() < 20 {
        return Err(Error::Precondition(format!(
            "two-sample KS needs at least 20 samples each, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let xs = sorted_finite(a, "first sample")?;
    let ys = sorted_finite(b, "second sample")?;
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let effective = (n * m) as f64 / (n + m) as f64;
    Ok(TestReport::new(
        "ks_two_sample",
        d,
        kolmogorov_sf(effective.sqrt() * d),
        vec![n, m],
    ))
}

fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(statistic)
}

/// `(low, high, observed, expected)`; `high = None` marks the open tail bin.
pub type PoissonBin = (u64, Option<u64>, u64, f64);

/// Bins used by [`poisson_gof`].
pub fn poisson_bins(counts: &[u64], lambda: f64) -> Result<Vec<PoissonBin>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let dist = Poisson::new(lambda).map_err(|e| Error::Domain(e.to_string()))?;
    let total = counts.len() as f64;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0u64; max as usize + 1];
    for &c in counts {
        observed[c as usize] += 1;
    }
    let obs = |k: u64| observed.get(k as usize).copied().unwrap_or(0);
    let obs_above = |k: u64| counts.iter().filter(|&&c| c > k).count() as u64;

    let mut bins: Vec<(u64, Option<u64>, u64, f64)> = Vec::new();
    let (mut lo, mut o, mut e) = (0u64, 0u64, 0.0f64);
    let mut k = 0u64;
    loop {
        o += obs(k);
        e += total * dist.pmf(k);
        let tail = total * dist.sf(k);
        if tail < 5.0 {
            o += obs_above(k);
            e += tail;
            if e < 5.0 {
                if let Some(last) = bins.last_mut() {
                    last.1 = None;
                    last.2 += o;
                    last.3 += e;
                    break;
                }
            }
            bins.push((lo, None, o, e));
            break;
        }
        if e >= 5.0 {
            bins.push((lo, Some(k), o, e));
            lo = k + 1;
            o = 0;
            e = 0.0;
        }
        k += 1;
    }
    Ok(bins)
}

/// Chi-square goodness of fit of non-negative integer counts to
/// Poisson(`lambda`), with bins merged so every expected count is >= 5.
pub fn poisson_gof(counts: &[u64], lambda: f64) -> Result<TestReport> {
    if counts.len() < 100 {
        return Err(Error::Precondition(format!(
            "Poisson goodness of fit needs at least 100 counts, got {}",
            counts.len()
        )));
    }
    if counts.iter().all(|&c| c == counts[0]) {
        return Err(Error::Precondition("all counts are equal".into()));
    }
    let bins = poisson_bins(counts, lambda)?;
    if bins.len() < 2 {
        return Err(Error::Precondition(
            "fewer than two bins after merging".into(),
        ));
    }
    let stat: f64 = bins
        .iter()
        .map(|&(_, _, o, e)| (o as f64 - e).powi(2) / e)
        .sum();
    let p = chi_square_sf(stat, bins.len() - 1);
    Ok(TestReport::new(
        "poisson_chi_square",
        stat,
        p,
        vec![counts.len()],
    ))
}

/// Chi-square test that two samples of non-negative integers share one
/// distribution. Adjacent values are pooled until every expected cell
/// count is >= 5.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<TestReport> {
    if a.len() < 20 || b.len() < 20 {
        return Err(Error::Precondition(
            "homogeneity test needs at least 20 values per sample".into(),
        ));
    }
    let max = a.iter().chain(b).copied().max().unwrap_or(0) as usize;
    let mut ca = vec![0u64; max + 1];
    let mut cb = vec![0u64; max + 1];
    a.iter().for_each(|&x| ca[x as usize] += 1);
    b.iter().for_each(|&x| cb[x as usize] += 1);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let expected = |oa: u64, ob: u64| {
        let pooled = (oa + ob) as f64;
        (na * pooled / total, nb * pooled / total)
    };

    let mut cells: Vec<(u64, u64)> = Vec::new();
    let (mut oa, mut ob) = (0u64, 0u64);
    for v in 0..=max {
        oa += ca[v];
        ob += cb[v];
        let (ea, eb) = expected(oa, ob);
        if ea >= 5.0 && eb >= 5.0 {
            cells.push((oa, ob));
            oa = 0;
            ob = 0;
        }
    }
    if oa + ob > 0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += oa;
                last.1 += ob;
            }
            None => cells.push((oa, ob)),
        }
    }
    if cells.len() < 2 {
        return Ok(TestReport::new(
            "chi_square_homogeneity",
            0.0,
            1.0,
            vec![a.len(), b.len()],
        ));
    }
    let stat: f64 = cells
        .iter()
        .map(|&(oa, ob)| {
            let (ea, eb) = expected(oa, ob);
            (oa as f64 - ea).powi(2) / ea + (ob as f64 - eb).powi(2) / eb
        })
        .sum();
    let p = chi_square_sf(stat, cells.len() - 1);
    Ok(TestReport::new(
        "chi_square_homogeneity",
        stat,
        p,
        vec![a.len(), b.len()],
    ))
}

/// Sample mean and its standard error `s / sqrt(n)`.
pub fn mean_se(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

/// Sample mean of `x^p` with plug-in standard error.
pub fn empirical_moment(samples: &[f64], p: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Precondition("empty sample".into()));
    }
    if !(p > 0.0) {
        return Err(Error::Domain(format!(
            "moment order must be positive, got {p}"
        )));
    }
    if samples.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Precondition(
            "moments need non-negative samples".into(),
        ));
    }
    let powered: Vec<f64> = samples.iter().map(|x| x.powf(p)).collect();
    if powered.len() == 1 {
        return Ok((powered[0], 0.0));
    }
    mean_se(&powered)
}

pub fn median(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Precondition("median of empty sample".into()));
    }
    let mut v = sorted_finite(samples, "sample")?;
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        let hi = v.swap_remove(n / 2);
        0.5 * (v[n / 2 - 1] + hi)
    })
}

/// Bootstrap standard error of the sample median.
pub fn bootstrap_median_se(samples: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if samples.len() < 2 || resamples < 2 {
        return Err(Error::Precondition(
            "bootstrap needs >= 2 samples and resamples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = samples[rng.random_range(0..n)];
            }
            median(&buf).expect("non-empty")
        })
        .collect();
    Ok(mean_se(&medians)?.1 * (resamples as f64).sqrt())
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(samples: &[f64]) -> Result<f64> {
    let (mean, _) = mean_se(samples)?;
    let denom: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::Precondition("constant sample".into()));
    }
    let num: f64 = samples
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    Ok(num / denom)
}

/// CDF of the mean-one exponential law.
pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Exp, Exp1};

    fn exp_samples(n: usize, rate: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Exp::new(rate).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn kolmogorov_sf_reference_values() {
        // Standard tabulated quantiles of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(1.2238) - 0.10).abs() < 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        // both branches agree at the switch point
        let a = kolmogorov_sf(1.18 - 1e-12);
        let b = kolmogorov_sf(1.18);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ks_perfect_fit() {
        let n = 100;
        let xs: Vec<f64> = (1..=n)
            .map(|i| -(1.0 - (i as f64 - 0.5) / n as f64).ln())
            .collect();
        let r = ks_one_sample(&xs, exp1_cdf).unwrap();
        assert!(r.statistic <= 0.005 + 1e-12);
        assert!(r.p_value > 0.999);
    }

    #[test]
    fn ks_rejects_wrong_scale() {
        let xs = exp_samples(10_000, 2.0, 1);
        let r = ks_one_sample(&xs, exp1_cdf).unwrap();
        assert!(r.p_value < 1e-6);
        assert!(!r.pass);
    }

    #[test]
    fn ks_precondition() {
        assert!(ks_one_sample(&[1.0; 10], exp1_cdf).is_err());
        assert!(ks_two_sample(&[1.0; 10], &[1.0; 30]).is_err());
        assert!(ks_one_sample(&[f64::NAN; 30], exp1_cdf).is_err());
    }

    #[test]
    fn ks_two_sample_identical() {
        let xs = exp_samples(500, 1.0, 2);
        let r = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_two_sample_hand_computed() {
        // D by hand: after 1.0, F_a = 0.5 and F_b = 0.75 -> 0.25.
        let a: Vec<f64> = [1.0, 1.0, 4.0, 4.0].repeat(10);
        let b: Vec<f64> = [1.0, 1.0, 1.0, 4.0].repeat(10);
        assert!((ks_two_sample(&a, &b).unwrap().statistic - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ks_two_sample_null_rate() {
        let passes = (0..40)
            .filter(|&t| {
                let a = exp_samples(10_000, 1.0, 100 + 2 * t);
                let b = exp_samples(10_000, 1.0, 101 + 2 * t);
                ks_two_sample(&a, &b).unwrap().pass
            })
            .count();
        assert!(passes >= 38, "{passes}/40");
    }

    #[test]
    fn ks_one_sample_calibration() {
        let rejections = (0..200)
            .filter(|&t| {
                !ks_one_sample(&exp_samples(1000, 1.0, 5000 + t), exp1_cdf)
                    .unwrap()
                    .pass
            })
            .count();
        assert!(rejections as f64 / 200.0 <= 0.05, "{rejections}");
    }

    #[test]
    fn ks_p_value_monotone_in_statistic() {
        let mut last = 1.0;
        for i in 0..400 {
            let p = kolmogorov_sf(i as f64 * 0.01);
            assert!(p <= last + 1e-15);
            last = p;
        }
    }

    #[test]
    fn poisson_gof_perfect_quantiles() {
        let dist = Poisson::new(3.0).unwrap();
        let n = 10_000;
        let counts: Vec<u64> = (0..n)
            .map(|i| dist.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect();
        let r = poisson_gof(&counts, 3.0).unwrap();
        assert!(r.p_value > 0.99, "{r:?}");
    }

    #[test]
    fn poisson_gof_rejects_geometric() {
        // Geometric on {0,1,...} with mean 3.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: f64 = 0.25;
        let counts: Vec<u64> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random();
                ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64
            })
            .collect();
        assert!(poisson_gof(&counts, 3.0).unwrap().p_value < 1e-6);
    }

    #[test]
    fn poisson_bins_have_expected_at_least_five() {
        for &lambda in &[0.05, 0.5, 3.0, 20.0] {
            for &n in &[100usize, 1000, 10_000] {
                let counts: Vec<u64> = (0..n as u64).map(|i| i % 7).collect();
                let bins = poisson_bins(&counts, lambda).unwrap();
                assert!(bins.iter().all(|b| b.3 >= 5.0), "{lambda} {n} {bins:?}");
                let total_obs: u64 = bins.iter().map(|b| b.2).sum();
                let total_exp: f64 = bins.iter().map(|b| b.3).sum();
                assert_eq!(total_obs, n as u64);
                assert!((total_exp - n as f64).abs() < 1e-6 * n as f64);
            }
        }
    }

    #[test]
    fn poisson_gof_preconditions() {
        assert!(poisson_gof(&[1; 50], 1.0).is_err());
        assert!(poisson_gof(&[2; 200], 1.0).is_err());
        let c: Vec<u64> = (0..200).map(|i| i % 3).collect();
        assert!(poisson_gof(&c, 0.0).is_err());
    }

    #[test]
    fn homogeneity_detects_shift() {
        let a: Vec<u64> = (0..5000).map(|i| i % 5).collect();
        let b: Vec<u64> = (0..5000).map(|i| i % 6).collect();
        assert!(chi_square_homogeneity(&a, &b).unwrap().p_value < 1e-6);
        assert_eq!(chi_square_homogeneity(&a, &a).unwrap().p_value, 1.0);
        let z = vec![0u64; 100];
        assert_eq!(chi_square_homogeneity(&z, &z).unwrap().p_value, 1.0);
    }

    #[test]
    fn mean_se_examples() {
        assert_eq!(mean_se(&[1.0, 1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        assert_eq!(mean_se(&[0.0, 2.0]).unwrap(), (1.0, 1.0));
        assert!(mean_se(&[1.0]).is_err());
    }

    #[test]
    fn empirical_moment_examples() {
        assert_eq!(empirical_moment(&[1.0, 1.0, 1.0], 2.0).unwrap(), (1.0, 0.0));
        assert!(empirical_moment(&[], 2.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..10_000).map(|_| Exp1.sample(&mut rng)).collect();
        let (m, se) = empirical_moment(&xs, 2.0).unwrap();
        assert!((m - 2.0).abs() < 3.0 * se, "{m} {se}");
    }

    #[test]
    fn median_and_bootstrap() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        let xs = exp_samples(2000, 1.0, 3);
        let se = bootstrap_median_se(&xs, 200, 1).unwrap();
        // asymptotic SE of the Exp(1) median: 1 / (2 f(ln 2) sqrt(n)) = 1/sqrt(n)
        let expect = 1.0 / (2000f64).sqrt();
        assert!(se > 0.6 * expect && se < 1.5 * expect, "{se} vs {expect}");
    }

    #[test]
    fn report_serializes() {
        let r = TestReport::new("x", 0.1, 0.5, vec![10]).with_seed(3);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"p_value\":0.5"));
        assert!(json.contains("\"seed\":3"));
        let back: TestReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(!r.clone().with_significance(0.6).pass);
    }
}
