//! Samplers for `A_β(∞)` through the distributional recursion
//! `A = β e^{-(2β-1)T} (A⁺ + A⁻)`, and for the smoothing weight `W_β`.
//!
//! The recursion is unrolled `depth` levels with leaf value 1. Writing
//! `s = β e^{-(2β-1)T} = β U^{2β-1}` with `U` uniform keeps β = 1/2 exact:
//! every factor is exactly 1/2 and every sample exactly 1.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_unit_interval, Error, Result};
use crate::field::{derive_seed, open_unit};
use crate::stats::{self, TestReport};

pub const DEFAULT_DEPTH: u32 = 20;
pub const DEFAULT_POOL: usize = 1 << 17;
/// Upper bound on `n * 2^depth` for [`RecursionMode::Exact`].
pub const DEFAULT_DRAW_BUDGET: u64 = 1 << 28;

const CHUNK: usize = 4096;

/// How the `2^depth`-leaf trees behind each sample are realised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RecursionMode {
    /// One independent full binary tree per sample; `n (2^depth - 1)` draws.
    Exact { draw_budget: u64 },
    /// Population dynamics: a pool of `pool` values is pushed through the
    /// recursion `depth` times, each new value combining two uniformly
    /// chosen members of the previous pool. Costs `depth * pool` draws.
    /// Samples are the first `n` pool members; they are exchangeable but
    /// weakly dependent through shared ancestry.
    Pooled { pool: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecursionConfig {
    pub beta: f64,
    pub depth: u32,
    pub n: usize,
    pub seed: u64,
    pub mode: RecursionMode,
}

impl RecursionConfig {
    pub fn new(beta: f64, depth: u32, n: usize, seed: u64) -> Self {
        RecursionConfig {
            beta,
            depth,
            n,
            seed,
            mode: RecursionMode::Pooled {
                pool: DEFAULT_POOL.max(n),
            },
        }
    }

    pub fn exact(beta: f64, depth: u32, n: usize, seed: u64) -> Self {
        RecursionConfig {
            mode: RecursionMode::Exact {
                draw_budget: DEFAULT_DRAW_BUDGET,
            },
            ..Self::new(beta, depth, n, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        check_unit_interval("beta", self.beta)?;
        if self.depth == 0 || self.n == 0 {
            return Err(Error::Precondition("depth and n must be >= 1".into()));
        }
        match self.mode {
            RecursionMode::Exact { draw_budget } => {
                let draws = if self.depth >= 63 {
                    u64::MAX
                } else {
                    (self.n as u64).saturating_mul(1u64 << self.depth)
                };
                if draws > draw_budget {
                    return Err(Error::Capacity(format!(
                        "{} samples at depth {} need {draws} draws, budget is {draw_budget}",
                        self.n, self.depth
                    )));
                }
            }
            RecursionMode::Pooled { pool } => {
                if pool < self.n {
                    return Err(Error::Precondition(format!(
                        "pool of {pool} cannot supply {} samples",
                        self.n
                    )));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn factor(beta: f64, u: f64) -> f64 {
    beta * u.powf(2.0 * beta - 1.0)
}

/// Samples approximating `A_β(∞)`, deterministic given `cfg`.
pub fn sample_limit_recursive(cfg: &RecursionConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok(match cfg.mode {
        RecursionMode::Exact { .. } => (0..cfg.n as u64)
            .into_par_iter()
            .map(|i| exact_tree(cfg.beta, cfg.depth, derive_seed(cfg.seed, i)))
            .collect(),
        RecursionMode::Pooled { pool } => {
            let mut values = pooled(cfg.beta, cfg.depth, pool, cfg.seed);
            values.truncate(cfg.n);
            values
        }
    })
}

fn exact_tree(beta: f64, depth: u32, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = vec![1.0f64; 1 << depth];
    while level.len() > 1 {
        let half = level.len() / 2;
        for j in 0..half {
            let s = factor(beta, open_unit(rng.next_u64()));
            level[j] = s * (level[2 * j] + level[2 * j + 1]);
        }
        level.truncate(half);
    }
    level[0]
}

fn pooled(beta: f64, depth: u32, pool: usize, seed: u64) -> Vec<f64> {
    let mut current = vec![1.0f64; pool];
    let mut next = vec![0.0f64; pool];
    for level in 0..depth {
        let level_seed = derive_seed(seed, level as u64);
        let prev = &current;
        next.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(level_seed, c as u64));
            for slot in out.iter_mut() {
                let s = factor(beta, open_unit(rng.next_u64()));
                let a = prev[rng.random_range(0..pool)];
                let b = prev[rng.random_range(0..pool)];
                *slot = s * (a + b);
            }
        });
        std::mem::swap(&mut current, &mut next);
    }
    current
}

/// Two-sample KS of the sampler at `cfg` against depth `cfg.depth / 2`
/// (independent seed).
pub fn depth_diagnostic(cfg: &RecursionConfig) -> Result<TestReport> {
    let full = sample_limit_recursive(cfg)?;
    let half = sample_limit_recursive(&RecursionConfig {
        depth: (cfg.depth / 2).max(1),
        seed: derive_seed(cfg.seed, u64::MAX),
        ..cfg.clone()
    })?;
    Ok(stats::ks_two_sample(&full, &half)?
        .named("recursion_depth_convergence")
        .with_seed(cfg.seed))
}

/// Draws of `W_β = 2β e^{-(2β-1)T}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSample {
    pub beta: f64,
    pub values: Vec<f64>,
}

impl WeightSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample mean and standard error of `W ln W`.
    pub fn w_log_w(&self) -> Result<(f64, f64)> {
        let v: Vec<f64> = self.values.iter().map(|w| w * w.ln()).collect();
        stats::mean_se(&v)
    }
}

pub fn sample_w(beta: f64, n: usize, seed: u64) -> Result<WeightSample> {
    check_unit_interval("beta", beta)?;
    let rate = 2.0 * beta - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| {
            let t: f64 = rng.sample(Exp1);
            2.0 * beta * (-rate * t).exp()
        })
        .collect();
    Ok(WeightSample { beta, values })
}

/// Monte Carlo estimate of `E[W_β ln W_β]` with its standard error.
///
/// For β < 1/2 the weight `W = 2β e^{(1-2β)T}` is unbounded and `W ln W`
/// has infinite variance once β <= 1/4, so `T` is drawn from the heavier
/// Exp(λ) law with `λ = 2β` and reweighted by `e^{-T} / (λ e^{-λT})`,
/// which gives a finite-variance estimator. For β >= 1/2 plain draws of
/// [`sample_w`] are used.
pub fn w_log_w_estimate(beta: f64, n: usize, seed: u64) -> Result<(f64, f64)> {
    check_unit_interval("beta", beta)?;
    if beta >= 0.5 {
        return sample_w(beta, n, seed)?.w_log_w();
    }
    let lambda = 2.0 * beta;
    let rate = 2.0 * beta - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            let t = e / lambda;
            let w = 2.0 * beta * (-rate * t).exp();
            w * w.ln() * ((lambda - 1.0) * t).exp() / lambda
        })
        .collect();
    stats::mean_se(&terms)
}

/// `W (X⁺ + X⁻) / 2` with `W` taken in order from `weights` and `X±`
/// resampled uniformly from `limit`. Under the fixed-point law this has
/// the same distribution as `limit`.
pub fn smoothing_resample(limit: &[f64], weights: &WeightSample, seed: u64) -> Result<Vec<f64>> {
    if limit.is_empty() {
        return Err(Error::Precondition("empty limit sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = limit.len();
    Ok(weights
        .values
        .iter()
        .map(|&w| {
            let a = limit[rng.random_range(0..n)];
            let b = limit[rng.random_range(0..n)];
            0.5 * w * (a + b)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::w_loglog_moment;
    use crate::stats::{exp1_cdf, ks_one_sample, mean_se};

    #[test]
    fn half_is_exactly_one() {
        for cfg in [
            RecursionConfig::new(0.5, 12, 500, 1),
            RecursionConfig::exact(0.5, 8, 50, 1),
        ] {
            assert!(sample_limit_recursive(&cfg)
                .unwrap()
                .iter()
                .all(|&x| x == 1.0));
        }
        assert!(sample_w(0.5, 100, 3)
            .unwrap()
            .values
            .iter()
            .all(|&w| w == 1.0));
    }

    #[test]
    fn exact_mode_budget() {
        let cfg = RecursionConfig::exact(1.0, 20, 10_000, 0);
        assert!(matches!(
            sample_limit_recursive(&cfg),
            Err(Error::Capacity(_))
        ));
        let cfg = RecursionConfig::exact(1.0, 10, 20, 0);
        assert_eq!(sample_limit_recursive(&cfg).unwrap().len(), 20);
    }

    #[test]
    fn deterministic() {
        let cfg = RecursionConfig::new(0.8, 10, 1000, 5);
        assert_eq!(
            sample_limit_recursive(&cfg).unwrap(),
            sample_limit_recursive(&cfg).unwrap()
        );
        let cfg = RecursionConfig::exact(0.8, 6, 100, 5);
        assert_eq!(
            sample_limit_recursive(&cfg).unwrap(),
            sample_limit_recursive(&cfg).unwrap()
        );
    }

    #[test]
    fn exact_tree_depth_one() {
        // depth 1: β U^{2β-1} · 2 for the first draw of the stream
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = open_unit(rng.next_u64());
        assert_eq!(exact_tree(0.7, 1, 9), factor(0.7, u) * 2.0);
    }

    #[test]
    fn mean_one_both_modes() {
        for cfg in [
            RecursionConfig::new(0.75, 12, 20_000, 2),
            RecursionConfig::exact(0.75, 10, 4000, 2),
        ] {
            let x = sample_limit_recursive(&cfg).unwrap();
            let (m, se) = mean_se(&x).unwrap();
            assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
        }
    }

    #[test]
    fn kendall_exponential_law() {
        let x = sample_limit_recursive(&RecursionConfig::new(1.0, 20, 5000, 4)).unwrap();
        assert!(ks_one_sample(&x, exp1_cdf).unwrap().p_value > 1e-3);
    }

    #[test]
    fn weights_at_beta_one_are_uniform_on_0_2() {
        let w = sample_w(1.0, 10_000, 8).unwrap();
        assert!(w.values.iter().all(|&x| x > 0.0 && x <= 2.0));
        let halves: Vec<f64> = w.values.iter().map(|x| x / 2.0).collect();
        assert!(
            ks_one_sample(&halves, |u| u.clamp(0.0, 1.0))
                .unwrap()
                .p_value
                > 1e-3
        );
        let (m, se) = w.w_log_w().unwrap();
        assert!((m - w_loglog_moment(1.0).unwrap()).abs() < 4.0 * se);
    }

    #[test]
    fn importance_sampled_w_log_w() {
        for &beta in &[0.15, 0.25, 0.4] {
            let (m, se) = w_log_w_estimate(beta, 100_000, 3).unwrap();
            assert!(
                (m - w_loglog_moment(beta).unwrap()).abs() < 4.0 * se,
                "beta {beta}: {m} ± {se}"
            );
        }
        let direct = sample_w(0.75, 1000, 1).unwrap().w_log_w().unwrap();
        assert_eq!(w_log_w_estimate(0.75, 1000, 1).unwrap(), direct);
    }

    #[test]
    fn weight_support() {
        assert!(sample_w(0.3, 1000, 1)
            .unwrap()
            .values
            .iter()
            .all(|&x| x >= 0.6));
        assert!(sample_w(0.8, 1000, 1)
            .unwrap()
            .values
            .iter()
            .all(|&x| x > 0.0 && x <= 1.6));
    }

    #[test]
    fn resample_of_constant_one() {
        let w = sample_w(0.5, 50, 0).unwrap();
        assert!(smoothing_resample(&[1.0; 10], &w, 1)
            .unwrap()
            .iter()
            .all(|&x| x == 1.0));
        assert!(smoothing_resample(&[], &w, 1).is_err());
    }
}
