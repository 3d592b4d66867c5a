use delayed_yule::analytic::{mgf_solve_ode, second_moment_limit, w_loglog_moment};
use delayed_yule::engine::{
    jump_increments, replicate_profiles, sample_limit_engine, simulate, LimitSamplerConfig,
    ReplicateConfig, SimConfig,
};
use delayed_yule::generator::sample_sequences;
use delayed_yule::limits::{sample_limit_recursive, sample_w, RecursionConfig};
use delayed_yule::stats::{ks_one_sample, ks_two_sample};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Asserts `|mean - target| < 4 SE`.
fn assert_mean(xs: &[f64], target: f64, what: &str) {
    let (m, v) = mean_var(xs);
    let se = (v / xs.len() as f64).sqrt();
    assert!(
        (m - target).abs() < 4.0 * se,
        "{what}: mean {m} vs {target} (SE {se})"
    );
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

#[test]
fn yule_population_mean_is_exponential() {
    let t = 2.0;
    let out = replicate_profiles(&ReplicateConfig::new(1.0, t, 4000, 21)).unwrap();
    let sizes: Vec<f64> = out.iter().map(|o| o.population() as f64).collect();
    assert_mean(&sizes, t.exp(), "E #V(t)");
}

#[test]
fn yule_generation_means() {
    // Each generation-k particle splits at rate 1 into two of generation k+1,
    // so E n_k(t) = (2t)^k e^{-t} / k!.
    let t = 1.5;
    let out = replicate_profiles(&ReplicateConfig::new(1.0, t, 8000, 22)).unwrap();
    for k in 0..5u32 {
        let xs: Vec<f64> = out
            .iter()
            .map(|o| o.counts.get(k as usize).copied().unwrap_or(0) as f64)
            .collect();
        let target = (2.0 * t).powi(k as i32) * (-t).exp() / factorial(k);
        assert_mean(&xs, target, &format!("E n_{k}"));
    }
}

#[test]
fn half_delay_counts_are_poisson() {
    let t = 2.5;
    let out = replicate_profiles(&ReplicateConfig::new(0.5, t, 6000, 23)).unwrap();
    let jumps: Vec<f64> = out.iter().map(|o| (o.population() - 1) as f64).collect();
    let (_, v) = mean_var(&jumps);
    assert_mean(&jumps, t, "E jumps");
    assert!((v - t).abs() < 0.15 * t, "variance {v} vs {t}");
}

#[test]
fn half_delay_holding_times_are_exp1() {
    let mut inc = Vec::new();
    for i in 0..400 {
        let mut cfg = SimConfig::new(0.5, 1e6, 1000 + i);
        cfg.event_cap = 5;
        inc.extend(jump_increments(&simulate(&cfg).unwrap()));
    }
    assert_eq!(inc.len(), 2000);
    let r = ks_one_sample(&inc, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() }).unwrap();
    assert!(r.p_value > 1e-3, "{r:?}");
}

#[test]
fn engine_and_chain_agree_on_mean_profile() {
    let (alpha, t) = (0.6, 2.0);
    let engine = replicate_profiles(&ReplicateConfig::new(alpha, t, 4000, 31)).unwrap();
    let chain = sample_sequences(alpha, t, 4000, 32).unwrap();
    for k in 0..4 {
        let a: Vec<f64> = engine
            .iter()
            .map(|o| o.counts.get(k).copied().unwrap_or(0) as f64)
            .collect();
        let b: Vec<f64> = chain.iter().map(|s| s.get(k) as f64).collect();
        let ((ma, va), (mb, vb)) = (mean_var(&a), mean_var(&b));
        let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "generation {k}: {ma} vs {mb}");
    }
}

#[test]
fn martingale_limit_has_mean_one_and_second_moment() {
    let beta = 0.75;
    let s = sample_limit_recursive(&RecursionConfig::new(beta, 20, 20_000, 41)).unwrap();
    assert_mean(&s, 1.0, "E A");
    // Oracle for E A^2: A = s(A' + A''), s = β e^{-(2β-1)T}, gives
    // m2 = E s^2 (2 m2 + 2) with E s^2 = β^2 / (1 + 2(2β-1)).
    let c2 = beta * beta / (1.0 + 2.0 * (2.0 * beta - 1.0));
    let m2 = 2.0 * c2 / (1.0 - 2.0 * c2);
    assert!((second_moment_limit(beta).unwrap() - m2).abs() < 1e-12);
    let sq: Vec<f64> = s.iter().map(|x| x * x).collect();
    assert_mean(&sq, m2, "E A^2");
}

#[test]
fn engine_and_recursion_agree_at_three_quarters() {
    let beta = 0.75;
    let mut cfg = LimitSamplerConfig::new(beta, 30.0, 2000, 51);
    cfg.stop_population = 1 << 12;
    let e = sample_limit_engine(&cfg).unwrap();
    let r = sample_limit_recursive(&RecursionConfig::new(beta, 20, 2000, 52)).unwrap();
    let report = ks_two_sample(&e.values, &r).unwrap();
    assert!(report.p_value > 1e-3, "{report:?}");
}

#[test]
fn ode_matches_monte_carlo_laplace_transform() {
    let beta = 0.9;
    let grid = mgf_solve_ode(beta, 4.0, 800).unwrap();
    let s = sample_limit_recursive(&RecursionConfig::new(beta, 20, 20_000, 61)).unwrap();
    for r in [0.5, 1.0, 3.0] {
        let xs: Vec<f64> = s.iter().map(|a| (-r * a).exp()).collect();
        assert_mean(&xs, grid.eval(r), &format!("phi({r})"));
    }
}

#[test]
fn smoothing_weight_moments() {
    for beta in [0.6, 0.9] {
        let w = sample_w(beta, 50_000, 71).unwrap();
        assert_mean(&w.values, 1.0, "E W");
        // Oracle by midpoint quadrature of w ln w against the Exp(1) density.
        let steps = 400_000;
        let h = 60.0 / steps as f64;
        let exact: f64 = (0..steps)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                let w = 2.0 * beta * (-(2.0 * beta - 1.0) * t).exp();
                w * w.ln() * (-t).exp() * h
            })
            .sum();
        assert!((w_loglog_moment(beta).unwrap() - exact).abs() < 1e-8);
        let wl: Vec<f64> = w.values.iter().map(|x| x * x.ln()).collect();
        assert_mean(&wl, exact, "E W ln W");
    }
}

#[test]
fn yule_population_is_geometric() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    // P(#V(t) = k) = e^{-t} (1 - e^{-t})^{k-1}, k >= 1.
    let t: f64 = 1.0;
    let n = 10_000;
    let out = replicate_profiles(&ReplicateConfig::new(1.0, t, n, 24)).unwrap();
    let q = 1.0 - (-t).exp();
    let pmf = |k: u64| (1.0 - q) * q.powi(k as i32 - 1);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut tail_p = 1.0;
    let mut k = 1;
    while (n as f64) * pmf(k) >= 5.0 && (n as f64) * (tail_p - pmf(k)) >= 5.0 {
        let observed = out.iter().filter(|o| o.population() == k).count() as f64;
        bins.push((observed, n as f64 * pmf(k)));
        tail_p -= pmf(k);
        k += 1;
    }
    let observed = out.iter().filter(|o| o.population() >= k).count() as f64;
    bins.push((observed, n as f64 * tail_p));
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((bins.len() - 1) as f64).unwrap().cdf(stat);
    assert!(
        p > 1e-3,
        "chi-square {stat} over {} bins, p = {p}",
        bins.len()
    );
}
