//! The acceptance suite: eleven criteria, each a set of named checks.
//!
//! Statistical criteria are attempted with up to three derived seeds and
//! pass when two attempts pass. Every criterion writes its deterministic
//! data (test statistics, samples) to the output directory; wall-clock
//! timings go only into the in-memory report.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{
    beta_critical, critical_equation, mgf_fixed_point, mgf_solve_ode, w_loglog_moment, MgfGrid,
};
use crate::engine::{
    jump_increments, replicate_profiles, sample_limit_engine, simulate, LimitSamplerConfig,
    ReplicateConfig, SimConfig,
};
use crate::error::{Error, Result};
use crate::field::derive_seed;
use crate::generator::{
    bounded_bound_check, eigen_identity_error, enumerate_states, norm_witness, sample_sequences,
    StateFunction,
};
use crate::io::{self, SampleHeader};
use crate::limits::{depth_diagnostic, sample_limit_recursive, w_log_w_estimate, RecursionConfig};
use crate::numeric::relative_error;
use crate::stats::{self, TestReport};
use crate::tree::{gauge_of_profile, is_evolutionary};

/// The printed value of `β_c` the root solver is checked against.
pub const BETA_C_REFERENCE: f64 = 0.1866823;

const ATTEMPTS: u64 = 3;
const REQUIRED_PASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            _ => Err(Error::Parse(format!("unknown level {s:?} (quick|full)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    PoissonCoupling,
    DyadicInvariant,
    BetaC,
    MartingaleMean,
    KendallLimit,
    MgfConsistency,
    SubcriticalDecay,
    SmoothingCriterion,
    GeneratorDichotomy,
    QuotientConsistency,
    Determinism,
}

impl Criterion {
    pub const ALL: [Criterion; 11] = [
        Criterion::PoissonCoupling,
        Criterion::DyadicInvariant,
        Criterion::BetaC,
        Criterion::MartingaleMean,
        Criterion::KendallLimit,
        Criterion::MgfConsistency,
        Criterion::SubcriticalDecay,
        Criterion::SmoothingCriterion,
        Criterion::GeneratorDichotomy,
        Criterion::QuotientConsistency,
        Criterion::Determinism,
    ];

    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("listed") + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::PoissonCoupling => "poisson_coupling",
            Criterion::DyadicInvariant => "dyadic_invariant",
            Criterion::BetaC => "beta_c",
            Criterion::MartingaleMean => "martingale_mean",
            Criterion::KendallLimit => "kendall_limit",
            Criterion::MgfConsistency => "mgf_consistency",
            Criterion::SubcriticalDecay => "subcritical_decay",
            Criterion::SmoothingCriterion => "smoothing_criterion",
            Criterion::GeneratorDichotomy => "generator_dichotomy",
            Criterion::QuotientConsistency => "quotient_consistency",
            Criterion::Determinism => "determinism",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s || c.number().to_string() == s)
            .ok_or_else(|| Error::Parse(format!("unknown criterion {s:?}")))
    }
}

/// One named check with the measured value and the threshold it is held to.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<TestReport>,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, value: f64, threshold: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            value,
            threshold: threshold.into(),
            report: None,
        }
    }

    fn from_report(name: impl Into<String>, report: TestReport) -> Self {
        Check {
            name: name.into(),
            pass: report.pass,
            value: report.p_value,
            threshold: format!("p > {}", report.significance),
            report: Some(report),
        }
    }

    /// `|estimate - target| < 3 se`.
    fn within_3se(name: impl Into<String>, estimate: f64, se: f64, target: f64) -> Self {
        let z = if se > 0.0 {
            (estimate - target).abs() / se
        } else if estimate == target {
            0.0
        } else {
            f64::INFINITY
        };
        Check::new(
            name,
            z < 3.0,
            estimate,
            format!("|x - {target}| < 3 SE (SE = {se:.3e}, z = {z:.3})"),
        )
    }
}

/// A seeded attempt of a statistical criterion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Attempt {
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub number: usize,
    pub pass: bool,
    /// Checks that are deterministic given the suite seed.
    pub checks: Vec<Check>,
    /// Seeded attempts of the statistical part (empty if none).
    pub attempts: Vec<Attempt>,
    /// Wall-clock seconds; never written to the data files.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl CriterionResult {
    /// Names of failed checks, for reporting.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect();
        if !self.attempts.is_empty()
            && self.attempts.iter().filter(|a| a.pass).count() < REQUIRED_PASSES
        {
            out.push(format!(
                "statistical attempts ({} of {} passed)",
                self.attempts.iter().filter(|a| a.pass).count(),
                self.attempts.len()
            ));
        }
        if !self.pass && out.is_empty() {
            out.push(format!("runtime limit ({:.1} s)", self.runtime_secs));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub level: Level,
    pub seed: u64,
    pub results: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn failed(&self) -> Vec<Criterion> {
        self.results
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.criterion)
            .collect()
    }

    /// One `PASS`/`FAIL` line per criterion.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            s.push_str(&format!(
                "{:>2} {:<22} {}  ({:.2} s)",
                r.number,
                r.criterion.name(),
                if r.pass { "PASS" } else { "FAIL" },
                r.runtime_secs
            ));
            let failures = r.failures();
            if !failures.is_empty() {
                s.push_str(&format!("  failed: {}", failures.join("; ")));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub level: Level,
    pub seed: u64,
    /// Directory for data outputs; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Restrict the run to these criteria (all when empty).
    pub only: Vec<Criterion>,
    /// Value the β_c solver is compared against.
    pub beta_c_reference: f64,
}

impl VerifyConfig {
    pub fn new(level: Level, seed: u64) -> Self {
        VerifyConfig {
            level,
            seed,
            out_dir: None,
            only: Vec::new(),
            beta_c_reference: BETA_C_REFERENCE,
        }
    }
}

/// Sample sizes for a level.
#[derive(Clone, Copy, Debug)]
struct Sizes {
    n: usize,
    increments: usize,
    trajectories: usize,
    stop_population: usize,
    weights: usize,
    eigen_trials: usize,
    subcritical_freeze: u8,
}

impl Sizes {
    fn for_level(level: Level) -> Self {
        match level {
            Level::Full => Sizes {
                n: 10_000,
                increments: 10_000,
                trajectories: 10_000,
                stop_population: crate::engine::DEFAULT_STOP_POPULATION,
                weights: 100_000,
                eigen_trials: 1000,
                subcritical_freeze: 12,
            },
            Level::Quick => Sizes {
                n: 2000,
                increments: 2000,
                trajectories: 2000,
                stop_population: 1 << 12,
                weights: 20_000,
                eigen_trials: 1000,
                subcritical_freeze: 12,
            },
        }
    }
}

struct Ctx<'a> {
    cfg: &'a VerifyConfig,
    sizes: Sizes,
    dir: Option<PathBuf>,
}

impl Ctx<'_> {
    fn seed_for(&self, c: Criterion) -> u64 {
        derive_seed(self.cfg.seed, c.number() as u64)
    }

    fn samples(&self, file: &str, header: SampleHeader, values: &[f64]) -> Result<()> {
        if let Some(dir) = &self.dir {
            let w = io::create_file(&dir.join(file))?;
            io::write_samples(&header, values, w)?;
        }
        Ok(())
    }
}

fn statistical(
    seed: u64,
    mut attempt: impl FnMut(u64) -> Result<Vec<Check>>,
) -> Result<Vec<Attempt>> {
    let mut out = Vec::new();
    for i in 0..ATTEMPTS {
        let s = derive_seed(seed, 1000 + i);
        let checks = attempt(s)?;
        let pass = checks.iter().all(|c| c.pass);
        out.push(Attempt {
            seed: s,
            pass,
            checks,
        });
        let passes = out.iter().filter(|a| a.pass).count();
        let fails = out.len() - passes;
        if passes >= REQUIRED_PASSES || fails > (ATTEMPTS as usize - REQUIRED_PASSES) {
            break;
        }
    }
    Ok(out)
}

fn finish(
    criterion: Criterion,
    checks: Vec<Check>,
    attempts: Vec<Attempt>,
    start: Instant,
) -> CriterionResult {
    let stat_ok =
        attempts.is_empty() || attempts.iter().filter(|a| a.pass).count() >= REQUIRED_PASSES;
    CriterionResult {
        criterion,
        number: criterion.number(),
        pass: stat_ok && checks.iter().all(|c| c.pass),
        checks,
        attempts,
        runtime_secs: start.elapsed().as_secs_f64(),
    }
}

/// Runs the selected criteria in order.
pub fn run(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Parse(format!("cannot create {}: {e}", dir.display())))?;
    }
    let ctx = Ctx {
        cfg,
        sizes: Sizes::for_level(cfg.level),
        dir: cfg.out_dir.clone(),
    };
    let selected: Vec<Criterion> = Criterion::ALL
        .iter()
        .copied()
        .filter(|c| cfg.only.is_empty() || cfg.only.contains(c))
        .collect();
    let mut results = Vec::new();
    for c in selected {
        let r = run_one(&ctx, c)?;
        if let Some(dir) = &ctx.dir {
            io::write_json(
                &dir.join(format!("{:02}_{}.json", c.number(), c.name())),
                &r,
            )?;
        }
        results.push(r);
    }
    Ok(VerifyReport {
        schema_version: io::SCHEMA_VERSION,
        level: cfg.level,
        seed: cfg.seed,
        results,
    })
}

fn run_one(ctx: &Ctx, c: Criterion) -> Result<CriterionResult> {
    let start = Instant::now();
    let seed = ctx.seed_for(c);
    let (checks, attempts) = match c {
        Criterion::PoissonCoupling => poisson_coupling(ctx, seed)?,
        Criterion::DyadicInvariant => (dyadic_invariant(ctx, seed)?, vec![]),
        Criterion::BetaC => (beta_c_checks(ctx.cfg.beta_c_reference), vec![]),
        Criterion::MartingaleMean => (vec![], martingale_mean(ctx, seed)?),
        Criterion::KendallLimit => kendall_limit(ctx, seed)?,
        Criterion::MgfConsistency => mgf_consistency(ctx, seed)?,
        Criterion::SubcriticalDecay => (vec![], subcritical_decay(ctx, seed)?),
        Criterion::SmoothingCriterion => (vec![], smoothing_criterion(ctx, seed)?),
        Criterion::GeneratorDichotomy => (generator_dichotomy(ctx, seed)?, vec![]),
        Criterion::QuotientConsistency => (vec![], quotient_consistency(ctx, seed)?),
        Criterion::Determinism => (determinism(ctx)?, vec![]),
    };
    let mut r = finish(c, checks, attempts, start);
    // Runtime bounds are checked but kept out of the data files.
    let limit = match c {
        Criterion::PoissonCoupling => Some(30.0),
        Criterion::KendallLimit => Some(120.0),
        _ => None,
    };
    if let Some(limit) = limit {
        if r.runtime_secs >= limit {
            r.pass = false;
        }
    }
    Ok(r)
}

type Outcome = (Vec<Check>, Vec<Attempt>);

fn poisson_coupling(ctx: &Ctx, seed: u64) -> Result<Outcome> {
    let n = ctx.sizes.n;
    let per_run = 10;
    let runs = ctx.sizes.increments / per_run;
    let attempts = statistical(seed, |s| {
        let rep = replicate_profiles(&ReplicateConfig::new(0.5, 3.0, n, s))?;
        let counts: Vec<u64> = rep.iter().map(|o| o.population() - 1).collect();
        let gof = stats::poisson_gof(&counts, 3.0)?
            .with_seed(s)
            .named("counts_vs_poisson_3");
        // Increments are taken from the first jumps of runs without a
        // binding horizon: increments observed inside a fixed window would
        // be biased towards short gaps.
        let mut inc = Vec::with_capacity(runs * per_run);
        for i in 0..runs {
            let mut sc = SimConfig::new(0.5, 1e6, derive_seed(s, i as u64));
            sc.event_cap = per_run;
            inc.extend(jump_increments(&simulate(&sc)?));
        }
        let ks = stats::ks_one_sample(&inc, stats::exp1_cdf)?
            .with_seed(s)
            .named("increments_vs_exp1");
        let (m, se) = stats::mean_se(&inc)?;
        let rho = stats::lag1_autocorrelation(&inc)?;
        let rho_se = 1.0 / (inc.len() as f64).sqrt();
        Ok(vec![
            Check::from_report("counts_vs_poisson_3", gof),
            Check::from_report("increments_vs_exp1", ks),
            Check::within_3se("increment_mean", m, se, 1.0),
            Check::within_3se("increment_lag1_autocorrelation", rho, rho_se, 0.0),
        ])
    })?;
    Ok((vec![], attempts))
}

fn dyadic_invariant(ctx: &Ctx, seed: u64) -> Result<Vec<Check>> {
    let alphas = [0.25, 0.5, 0.75, 1.0];
    let mut states = 0usize;
    let mut bad = 0usize;
    for i in 0..ctx.sizes.trajectories {
        let alpha = alphas[i % alphas.len()];
        let tr = simulate(&SimConfig::new(alpha, 3.0, derive_seed(seed, i as u64)))?;
        for s in tr.states() {
            states += 1;
            if !is_evolutionary(s.members()) {
                bad += 1;
            }
        }
    }
    Ok(vec![
        Check::new("states_failing_dyadic_mass", bad == 0, bad as f64, "== 0"),
        Check::new("states_checked", states > 0, states as f64, "> 0"),
    ])
}

fn beta_c_checks(reference: f64) -> Vec<Check> {
    let t = Instant::now();
    let b = beta_critical(1e-12);
    let elapsed = t.elapsed().as_secs_f64();
    let b = match b {
        Ok(b) => b,
        Err(e) => {
            return vec![Check::new(
                format!("solver error: {e}"),
                false,
                f64::NAN,
                "",
            )]
        }
    };
    let residual = critical_equation(b).abs();
    let crit = w_loglog_moment(b)
        .map(|w| (w - std::f64::consts::LN_2).abs())
        .unwrap_or(f64::NAN);
    let mut time_check = Check::new("runtime_below_1ms", elapsed < 1e-3, 0.0, "< 1 ms");
    // Timing varies run to run; only the verdict is recorded.
    time_check.value = if elapsed < 1e-3 { 1.0 } else { 0.0 };
    vec![
        Check::new(
            "matches_reference_7_digits",
            (b - reference).abs() < 5e-8,
            b,
            format!("|beta_c - {reference}| < 5e-8"),
        ),
        Check::new("residual", residual < 1e-12, residual, "< 1e-12"),
        Check::new("criterion_equals_ln2", crit < 1e-10, crit, "< 1e-10"),
        time_check,
    ]
}

fn martingale_mean(ctx: &Ctx, seed: u64) -> Result<Vec<Attempt>> {
    let n = ctx.sizes.n;
    statistical(seed, |s| {
        let mut checks = Vec::new();
        for &t in &[1.0, 3.0] {
            let rep =
                replicate_profiles(&ReplicateConfig::new(1.0, t, n, derive_seed(s, t as u64)))?;
            for &beta in &[0.3, 0.75, 1.0] {
                let scale = (-(2.0 * beta - 1.0) * t).exp();
                let a: Vec<f64> = rep
                    .iter()
                    .map(|o| scale * gauge_of_profile(&o.counts, beta))
                    .collect();
                let (m, se) = stats::mean_se(&a)?;
                checks.push(Check::within_3se(format!("mean_A_{beta}_t{t}"), m, se, 1.0));
            }
        }
        Ok(checks)
    })
}

fn kendall_limit(ctx: &Ctx, seed: u64) -> Result<Outcome> {
    let n = ctx.sizes.n;
    let mut first = true;
    let attempts = statistical(seed, |s| {
        let mut ecfg = LimitSamplerConfig::new(1.0, 15.0, n, s);
        ecfg.stop_population = ctx.sizes.stop_population;
        let eng = sample_limit_engine(&ecfg)?;
        let rcfg = RecursionConfig::new(1.0, 20, n, derive_seed(s, 1));
        let rec = sample_limit_recursive(&rcfg)?;
        if first {
            ctx.samples(
                "05_kendall_engine.txt",
                SampleHeader {
                    sampler: "engine".into(),
                    beta: Some(1.0),
                    alpha: Some(1.0),
                    horizon: Some(15.0),
                    seed: s,
                    n,
                    ..Default::default()
                },
                &eng.values,
            )?;
            ctx.samples(
                "05_kendall_recursive.txt",
                SampleHeader {
                    sampler: "recursive".into(),
                    beta: Some(1.0),
                    depth: Some(20),
                    seed: rcfg.seed,
                    n,
                    ..Default::default()
                },
                &rec,
            )?;
            first = false;
        }
        Ok(vec![
            Check::from_report(
                "engine_vs_exp1",
                stats::ks_one_sample(&eng.values, stats::exp1_cdf)?.with_seed(s),
            ),
            Check::from_report(
                "recursive_vs_exp1",
                stats::ks_one_sample(&rec, stats::exp1_cdf)?.with_seed(s),
            ),
            Check::from_report(
                "engine_vs_recursive",
                stats::ks_two_sample(&eng.values, &rec)?.with_seed(s),
            ),
            Check::from_report("recursion_depth_20_vs_10", depth_diagnostic(&rcfg)?),
        ])
    })?;
    Ok((vec![], attempts))
}

fn mgf_consistency(ctx: &Ctx, seed: u64) -> Result<Outcome> {
    let mut checks = Vec::new();
    let ode1 = mgf_solve_ode(1.0, 10.0, 2000)?;
    let dev = ode1.sup_deviation(|r| 1.0 / (1.0 + r), 10.0);
    checks.push(Check::new(
        "ode_beta1_vs_closed_form",
        dev < 1e-6,
        dev,
        "< 1e-6 on [0,10]",
    ));
    let mut ode075: Option<MgfGrid> = None;
    for &beta in &[0.75, 1.0] {
        let ode = mgf_solve_ode(beta, 10.0, 2000)?;
        let fp = mgf_fixed_point(beta, 10.0, 1000, 1000, 1e-8)?;
        let d = fp.sup_distance(&ode, 10.0);
        checks.push(Check::new(
            format!("fixed_point_vs_ode_beta{beta}"),
            d < 1e-3,
            d,
            "< 1e-3 on [0,10]",
        ));
        if beta == 0.75 {
            if let Some(dir) = &ctx.dir {
                io::write_mgf_csv(&ode, io::create_file(&dir.join("06_phi_0.75_ode.csv"))?)?;
                io::write_mgf_csv(
                    &fp,
                    io::create_file(&dir.join("06_phi_0.75_fixed_point.csv"))?,
                )?;
            }
            ode075 = Some(ode);
        }
    }
    let ode = ode075.expect("computed above");
    let n = ctx.sizes.n;
    let attempts = statistical(seed, |s| {
        let x = sample_limit_recursive(&RecursionConfig::new(0.75, 20, n, s))?;
        [0.5, 1.0, 2.0, 5.0]
            .iter()
            .map(|&r| {
                let e: Vec<f64> = x.iter().map(|v| (-r * v).exp()).collect();
                let (m, se) = stats::mean_se(&e)?;
                Ok(Check::within_3se(
                    format!("monte_carlo_mgf_r{r}"),
                    m,
                    se,
                    ode.eval(r),
                ))
            })
            .collect()
    })?;
    Ok((checks, attempts))
}

fn subcritical_decay(ctx: &Ctx, seed: u64) -> Result<Vec<Attempt>> {
    let n = ctx.sizes.n;
    let freeze = ctx.sizes.subcritical_freeze;
    statistical(seed, |s| {
        let mut early = LimitSamplerConfig::new(0.1, 6.0, n, s);
        early.stop_population = usize::MAX;
        let early = sample_limit_engine(&early)?;
        // At t = 12 subtrees rooted at height `freeze` are not expanded; the
        // recorded value bounds the true one from above.
        let mut late = LimitSamplerConfig::new(0.1, 12.0, n, derive_seed(s, 1));
        late.stop_population = usize::MAX;
        late.freeze_height = Some(freeze);
        let late = sample_limit_engine(&late)?;
        let m6 = stats::median(&early.values)?;
        let m12 = stats::median(&late.values)?;
        let se6 = stats::bootstrap_median_se(&early.values, 200, derive_seed(s, 2))?;
        let se12 = stats::bootstrap_median_se(&late.values, 200, derive_seed(s, 3))?;
        let z = (m6 - m12) / (se6 * se6 + se12 * se12).sqrt();
        let max_bound = late.error_bounds.iter().copied().fold(0.0, f64::max);
        Ok(vec![Check::new(
            "median_t12_below_median_t6",
            z > 3.0,
            z,
            format!(
                "separation > 3 SE (median t=6 {m6:.6}, t=12 <= {m12:.6}, pruning error <= {max_bound:.2e})"
            ),
        )])
    })
}

fn smoothing_criterion(ctx: &Ctx, seed: u64) -> Result<Vec<Attempt>> {
    let n = ctx.sizes.weights;
    let ln2 = std::f64::consts::LN_2;
    statistical(seed, |s| {
        let mut checks = Vec::new();
        for (i, &beta) in [0.25, 0.75, 1.0].iter().enumerate() {
            let (m, se) = w_log_w_estimate(beta, n, derive_seed(s, i as u64))?;
            checks.push(Check::within_3se(
                format!("w_log_w_beta{beta}"),
                m,
                se,
                w_loglog_moment(beta)?,
            ));
        }
        for (i, &(beta, above)) in [(0.15, true), (0.25, false)].iter().enumerate() {
            let (m, se) = w_log_w_estimate(beta, n, derive_seed(s, 10 + i as u64))?;
            let z = (m - ln2) / se;
            let exact = w_loglog_moment(beta)? - ln2;
            let ok = if above {
                z > 3.0 && exact > 0.0
            } else {
                z < -3.0 && exact < 0.0
            };
            checks.push(Check::new(
                format!("sign_beta{beta}"),
                ok,
                m - ln2,
                format!(
                    "{} with 3 SE separation (z = {z:.3})",
                    if above { "> 0" } else { "< 0" }
                ),
            ));
        }
        Ok(checks)
    })
}

/// The claimed witness value for α = 1, n = 20.
pub const WITNESS_CLAIM: f64 = 52428.8;

fn generator_dichotomy(ctx: &Ctx, seed: u64) -> Result<Vec<Check>> {
    let eps = f64::EPSILON;
    let w = norm_witness(1.0, 20)?;
    let mut checks = vec![
        Check::new(
            "norm_witness_1_20_equals_52428.8",
            relative_error(w, WITNESS_CLAIM) <= 8.0 * eps,
            w,
            "2^20/20 = 52428.8 within 8 eps",
        ),
        Check::new("norm_witness_1_20_exceeds_100", w > 100.0, w, "> 100"),
        Check::new(
            "norm_witness_0.75_20_exceeds_100",
            norm_witness(0.75, 20)? > 100.0,
            norm_witness(0.75, 20)?,
            "> 100",
        ),
    ];

    let states = enumerate_states(6);
    let mut family: Vec<StateFunction> = states
        .iter()
        .cloned()
        .map(StateFunction::indicator)
        .collect();
    family.push(StateFunction::constant(1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let mut f = StateFunction::constant(rng.random_range(-1.0..1.0));
        for s in &states {
            f.set(s.clone(), rng.random_range(-1.0..1.0));
        }
        family.push(f);
    }
    let mut worst_ratio = 0.0f64;
    let mut violations = 0usize;
    for f in &family {
        let r = bounded_bound_check(f, &[0.25, 0.5], &states)?;
        violations += r.violations.len();
        if r.sup_f > 0.0 {
            worst_ratio = worst_ratio.max(r.max_abs / r.sup_f);
        }
    }
    checks.push(Check::new(
        "bound_violations_alpha_le_half",
        violations == 0,
        violations as f64,
        "== 0",
    ));
    checks.push(Check::new(
        "max_ratio_alpha_le_half",
        worst_ratio <= 2.0,
        worst_ratio,
        "<= 2",
    ));

    let worst = eigen_identity_error(ctx.sizes.eigen_trials, 30, derive_seed(seed, 2))?;
    checks.push(Check::new(
        "eigen_identity_max_rel_error_eps",
        worst <= 8.0,
        worst,
        "<= 8 eps",
    ));
    Ok(checks)
}

fn quotient_consistency(ctx: &Ctx, seed: u64) -> Result<Vec<Attempt>> {
    let n = ctx.sizes.n;
    statistical(seed, |s| {
        let engine = replicate_profiles(&ReplicateConfig::new(0.75, 2.0, n, s))?;
        let chain = sample_sequences(0.75, 2.0, n, derive_seed(s, 1))?;
        (0..=4)
            .map(|k| {
                let a: Vec<u64> = engine
                    .iter()
                    .map(|o| o.counts.get(k).copied().unwrap_or(0))
                    .collect();
                let b: Vec<u64> = chain.iter().map(|q| q.get(k)).collect();
                let r = stats::chi_square_homogeneity(&a, &b)?.with_seed(s);
                Ok(Check::from_report(format!("generation_{k}"), r))
            })
            .collect()
    })
}

fn determinism(ctx: &Ctx) -> Result<Vec<Check>> {
    let base = match &ctx.dir {
        Some(d) => d.join("determinism"),
        None => std::env::temp_dir().join(format!("dyule-determinism-{}", std::process::id())),
    };
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let dir = base.join(name);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::Parse(e.to_string()))?;
        }
        let cfg = VerifyConfig {
            level: Level::Quick,
            seed: ctx.cfg.seed,
            out_dir: Some(dir.clone()),
            only: Criterion::ALL
                .iter()
                .copied()
                .filter(|&c| c != Criterion::Determinism)
                .collect(),
            beta_c_reference: ctx.cfg.beta_c_reference,
        };
        run(&cfg)?;
        dirs.push(dir);
    }
    let (files_a, files_b) = (list_files(&dirs[0])?, list_files(&dirs[1])?);
    let mut differing = 0usize;
    for f in &files_a {
        let a = fs::read(dirs[0].join(f)).map_err(|e| Error::Parse(e.to_string()))?;
        match fs::read(dirs[1].join(f)) {
            Ok(b) if a == b => {}
            _ => differing += 1,
        }
    }
    if ctx.dir.is_none() {
        let _ = fs::remove_dir_all(&base);
    }
    Ok(vec![
        Check::new(
            "same_file_set",
            files_a == files_b,
            files_a.len() as f64,
            "identical file lists",
        ),
        Check::new(
            "differing_files",
            differing == 0 && !files_a.is_empty(),
            differing as f64,
            "== 0",
        ),
    ])
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Parse(e.to_string()))?
        .filter_map(|e| e.ok())
        .map(|e| PathBuf::from(e.file_name()))
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in Criterion::ALL {
            assert_eq!(c.name().parse::<Criterion>().unwrap(), c);
            assert_eq!(c.number().to_string().parse::<Criterion>().unwrap(), c);
        }
        assert!("nope".parse::<Criterion>().is_err());
        assert_eq!("quick".parse::<Level>().unwrap(), Level::Quick);
    }

    #[test]
    fn beta_c_negative_control() {
        assert!(beta_c_checks(BETA_C_REFERENCE)
            .iter()
            .take(3)
            .all(|c| c.pass));
        let wrong = beta_c_checks(0.1876823);
        assert!(!wrong[0].pass);
    }

    #[test]
    fn two_of_three_policy() {
        let mut calls = 0;
        let a = statistical(1, |_| {
            calls += 1;
            Ok(vec![Check::new("x", calls != 1, 0.0, "")])
        })
        .unwrap();
        assert_eq!(a.len(), 3);
        let a = statistical(1, |_| Ok(vec![Check::new("x", true, 0.0, "")])).unwrap();
        assert_eq!(a.len(), 2);
        let a = statistical(1, |_| Ok(vec![Check::new("x", false, 0.0, "")])).unwrap();
        assert_eq!(a.len(), 2);
    }
}
