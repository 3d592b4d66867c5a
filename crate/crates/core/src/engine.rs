//! Event-driven simulation of the α-delayed Yule process `V^(α)(t)`.
//!
//! A particle at vertex `v` is born when its parent branches and lives for
//! `α^-|v| T_v`. The pending branch events sit in a min-heap keyed by
//! `(branch_time, vertex)`; popping the minimum replaces the vertex by its two
//! children. Because `T_v` comes from a [`RandomField`], runs with different
//! α but the same seed consume the identical family `{T_v}`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_unit_interval, Error, Result};
use crate::field::{derive_seed, RandomField};
use crate::stats::{self, TestReport};
use crate::tree::{gauge_of_profile, EvolutionarySet, Vertex, DEPTH_MAX};

pub const DEFAULT_POPULATION_CAP: usize = 2_000_000;
pub const DEFAULT_EVENT_CAP: usize = 10_000_000;
/// Population at which limit sampling stops (see [`LimitSamplerConfig`]).
pub const DEFAULT_STOP_POPULATION: usize = 1 << 14;
/// Largest fraction of truncated replicates a sampling run tolerates.
pub const MAX_TRUNCATED_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub alpha: f64,
    pub horizon: f64,
    pub population_cap: usize,
    pub event_cap: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(alpha: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            alpha,
            horizon,
            population_cap: DEFAULT_POPULATION_CAP,
            event_cap: DEFAULT_EVENT_CAP,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("alpha", self.alpha)?;
        check_horizon(self.horizon)?;
        if self.population_cap == 0 || self.event_cap == 0 {
            return Err(Error::Domain("caps must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )))
    }
}

/// Why a run ended. Anything but `Horizon` marks a truncated run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    PopulationCap,
    EventCap,
    DepthCap,
}

/// Lifetime `α^-|v| T_v` of the particle at `v`.
pub fn lifetime(v: Vertex, alpha: f64, field: &RandomField) -> Result<f64> {
    check_unit_interval("alpha", alpha)?;
    let scale = alpha.powi(-i32::from(v.height()));
    let life = scale * field.exp(v);
    if life.is_finite() {
        Ok(life)
    } else {
        Err(Error::Capacity(format!(
            "alpha^-{} overflows the floating range",
            v.height()
        )))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    vertex: Vertex,
}

impl Eq for Pending {}

impl Ord for Pending {
    // Reversed so that BinaryHeap pops the earliest event; exact ties fall
    // back to canonical vertex order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug)]
struct RunLimits {
    alpha: f64,
    horizon: f64,
    population_cap: usize,
    event_cap: usize,
    freeze_height: Option<u8>,
}

#[derive(Clone, Copy, Debug)]
struct RunEnd {
    stop: StopReason,
    end_time: f64,
}

fn run_events(
    limits: &RunLimits,
    field: &RandomField,
    mut on_jump: impl FnMut(f64, Vertex),
) -> RunEnd {
    let mut heap = BinaryHeap::new();
    let pending = |v: Vertex, birth: f64| {
        if limits.freeze_height.is_some_and(|f| v.height() >= f) {
            return None;
        }
        // An overflowing lifetime exceeds every finite horizon.
        lifetime(v, limits.alpha, field).ok().map(|life| Pending {
            time: birth + life,
            vertex: v,
        })
    };
    heap.extend(pending(Vertex::ROOT, 0.0));
    let mut population = 1usize;
    let mut events = 0usize;
    if population >= limits.population_cap {
        return RunEnd {
            stop: StopReason::PopulationCap,
            end_time: 0.0,
        };
    }
    loop {
        let next = match heap.peek() {
            Some(p) if p.time <= limits.horizon => *p,
            _ => {
                return RunEnd {
                    stop: StopReason::Horizon,
                    end_time: limits.horizon,
                }
            }
        };
        if next.vertex.height() >= DEPTH_MAX {
            return RunEnd {
                stop: StopReason::DepthCap,
                end_time: next.time,
            };
        }
        on_jump(next.time, next.vertex);
        events += 1;
        population += 1;
        let [c1, c2] = next.vertex.children().expect("height checked above");
        // Replacing the top in place costs one sift instead of two.
        let mut top = heap.peek_mut().expect("peeked above");
        match (pending(c1, next.time), pending(c2, next.time)) {
            (Some(a), b) | (b @ None, Some(a)) => {
                *top = a;
                drop(top);
                heap.extend(b);
            }
            (None, None) => {
                std::collections::binary_heap::PeekMut::pop(top);
            }
        }
        if population >= limits.population_cap {
            return RunEnd {
                stop: StopReason::PopulationCap,
                end_time: next.time,
            };
        }
        if events >= limits.event_cap {
            return RunEnd {
                stop: StopReason::EventCap,
                end_time: next.time,
            };
        }
    }
}

/// One run of `V^(α)`: jump times and the vertex branched at each jump.
///
/// State `k` (after `k` jumps) is reconstructed by replaying the first `k`
/// branch operations from `{θ}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub alpha: f64,
    pub horizon: f64,
    pub seed: u64,
    jump_times: Vec<f64>,
    branched: Vec<Vertex>,
    stop: StopReason,
    end_time: f64,
}

impl Trajectory {
    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn branched(&self) -> &[Vertex] {
        &self.branched
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop
    }

    pub fn truncated(&self) -> bool {
        self.stop != StopReason::Horizon
    }

    /// Time at which the final state is observed: the horizon, or the
    /// stopping time if a cap ended the run.
    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// States `V(τ_0), V(τ_1), ...`, with `V(τ_0) = {θ}`.
    pub fn states(&self) -> impl Iterator<Item = EvolutionarySet> + '_ {
        let mut current = Some(EvolutionarySet::root());
        let mut next_jump = 0;
        std::iter::from_fn(move || {
            let out = current.take()?;
            if next_jump < self.branched.len() {
                current = Some(
                    out.branch(self.branched[next_jump])
                        .expect("recorded jumps replay"),
                );
                next_jump += 1;
            }
            Some(out)
        })
    }

    pub fn final_state(&self) -> EvolutionarySet {
        self.states().last().expect("at least the initial state")
    }

    /// Height counts of the final state.
    pub fn final_profile(&self) -> Vec<u64> {
        let mut counts = vec![1u64];
        for v in &self.branched {
            apply_jump(&mut counts, *v);
        }
        counts
    }

    /// Rows `(k, τ_k, #V(τ_k), h(V(τ_k)))`, starting from `k = 0`.
    pub fn summary_rows(&self) -> Vec<(usize, f64, usize, u8)> {
        let mut rows = Vec::with_capacity(self.jumps() + 1);
        rows.push((0, 0.0, 1, 0));
        let mut h = 0u8;
        for (k, (&t, v)) in self.jump_times.iter().zip(&self.branched).enumerate() {
            h = h.max(v.height() + 1);
            rows.push((k + 1, t, k + 2, h));
        }
        rows
    }
}

fn apply_jump(counts: &mut Vec<u64>, v: Vertex) {
    let h = v.height() as usize;
    if counts.len() < h + 2 {
        counts.resize(h + 2, 0);
    }
    counts[h] -= 1;
    counts[h + 1] += 2;
}

/// Runs one realization of `V^(α)` until the horizon or a cap.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let field = RandomField::new(cfg.seed);
    let limits = RunLimits {
        alpha: cfg.alpha,
        horizon: cfg.horizon,
        population_cap: cfg.population_cap,
        event_cap: cfg.event_cap,
        freeze_height: None,
    };
    let mut jump_times = Vec::new();
    let mut branched = Vec::new();
    let end = run_events(&limits, &field, |t, v| {
        jump_times.push(t);
        branched.push(v);
    });
    Ok(Trajectory {
        alpha: cfg.alpha,
        horizon: cfg.horizon,
        seed: cfg.seed,
        jump_times,
        branched,
        stop: end.stop,
        end_time: end.end_time,
    })
}

/// Inter-jump times `τ_k - τ_{k-1}` with `τ_0 = 0`.
pub fn jump_increments(tr: &Trajectory) -> Vec<f64> {
    let mut prev = 0.0;
    tr.jump_times()
        .iter()
        .map(|&t| {
            let d = t - prev;
            prev = t;
            d
        })
        .collect()
}

/// `e^{-rate t} a_β(V(t))` at `t = 0`, at every jump, and at the end time.
///
/// Works for any α; no martingale property is implied unless α = 1 and
/// `rate = 2β - 1` (see [`martingale_path`]).
pub fn gauge_path(tr: &Trajectory, beta: f64, rate: f64) -> Result<Vec<(f64, f64)>> {
    check_unit_interval("beta", beta)?;
    let mut counts = vec![1u64];
    let mut path = Vec::with_capacity(tr.jumps() + 2);
    path.push((0.0, 1.0));
    for (&t, &v) in tr.jump_times.iter().zip(&tr.branched) {
        apply_jump(&mut counts, v);
        path.push((t, (-rate * t).exp() * gauge_of_profile(&counts, beta)));
    }
    let t = tr.end_time;
    path.push((t, (-rate * t).exp() * gauge_of_profile(&counts, beta)));
    Ok(path)
}

/// The gauge martingale `A_β(t) = e^{-(2β-1)t} a_β(V^(1)(t))` along a
/// trajectory of the undelayed (α = 1) process.
pub fn martingale_path(tr: &Trajectory, beta: f64) -> Result<Vec<(f64, f64)>> {
    if tr.alpha != 1.0 {
        return Err(Error::Precondition(format!(
            "gauge martingales are defined for alpha = 1, trajectory has alpha = {}",
            tr.alpha
        )));
    }
    gauge_path(tr, beta, 2.0 * beta - 1.0)
}

/// Settings for running many independent replicates that only need the
/// final generation profile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateConfig {
    pub alpha: f64,
    pub horizon: f64,
    pub n: usize,
    pub seed: u64,
    pub population_cap: usize,
    pub event_cap: usize,
    /// Particles at or above this height are never branched.
    pub freeze_height: Option<u8>,
}

impl ReplicateConfig {
    pub fn new(alpha: f64, horizon: f64, n: usize, seed: u64) -> Self {
        ReplicateConfig {
            alpha,
            horizon,
            n,
            seed,
            population_cap: DEFAULT_POPULATION_CAP,
            event_cap: DEFAULT_EVENT_CAP,
            freeze_height: None,
        }
    }

    fn validate(&self) -> Result<()> {
        check_unit_interval("alpha", self.alpha)?;
        check_horizon(self.horizon)?;
        if self.n == 0 {
            return Err(Error::Precondition("replicate count must be >= 1".into()));
        }
        if self.population_cap == 0 || self.event_cap == 0 {
            return Err(Error::Domain("caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Final state summary of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileOutcome {
    pub counts: Vec<u64>,
    pub end_time: f64,
    pub stop: StopReason,
}

impl ProfileOutcome {
    pub fn population(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Runs replicates `0..n`, replicate `i` using seed `derive_seed(seed, i)`.
/// Output order is by replicate index whatever the thread schedule.
pub fn replicate_profiles(cfg: &ReplicateConfig) -> Result<Vec<ProfileOutcome>> {
    cfg.validate()?;
    let limits = RunLimits {
        alpha: cfg.alpha,
        horizon: cfg.horizon,
        population_cap: cfg.population_cap,
        event_cap: cfg.event_cap,
        freeze_height: cfg.freeze_height,
    };
    Ok((0..cfg.n as u64)
        .into_par_iter()
        .map(|i| {
            let field = RandomField::new(derive_seed(cfg.seed, i));
            let mut counts = vec![1u64];
            let end = run_events(&limits, &field, |_, v| apply_jump(&mut counts, v));
            ProfileOutcome {
                counts,
                end_time: end.end_time,
                stop: end.stop,
            }
        })
        .collect())
}

/// Settings for approximating `A_β(∞)` by the engine.
///
/// Each replicate runs `V^(1)` until `min(horizon, τ_M)`, where `τ_M` is the
/// time the population first reaches `stop_population`, and reports
/// `A_β` at that stopping time. Since the stopping time is bounded, the
/// reported value is still a mean-one approximation of the limit, and the
/// population cap keeps the cost at O(M) events per replicate where the
/// fixed horizon alone would cost `e^horizon`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitSamplerConfig {
    pub beta: f64,
    pub horizon: f64,
    pub n: usize,
    pub seed: u64,
    pub stop_population: usize,
    pub event_cap: usize,
    /// Optional pruning for β ≤ 1/2, see [`EngineSamples::error_bounds`].
    pub freeze_height: Option<u8>,
}

impl LimitSamplerConfig {
    pub fn new(beta: f64, horizon: f64, n: usize, seed: u64) -> Self {
        LimitSamplerConfig {
            beta,
            horizon,
            n,
            seed,
            stop_population: DEFAULT_STOP_POPULATION,
            event_cap: DEFAULT_EVENT_CAP,
            freeze_height: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineSamples {
    pub values: Vec<f64>,
    /// With a freeze height, the true `A_β` of replicate `i` lies in
    /// `[values[i] - error_bounds[i], values[i]]`: every frozen subtree
    /// contributes its root weight `β^h`, an upper bound on its actual gauge
    /// when β ≤ 1/2. Zero without freezing.
    pub error_bounds: Vec<f64>,
    pub end_times: Vec<f64>,
    /// Replicates stopped by the event or depth cap.
    pub truncated: usize,
}

/// Approximate samples of `A_β(∞)` from independent engine replicates.
pub fn sample_limit_engine(cfg: &LimitSamplerConfig) -> Result<EngineSamples> {
    check_unit_interval("beta", cfg.beta)?;
    if cfg.freeze_height.is_some() && cfg.beta > 0.5 {
        return Err(Error::Domain(
            "freezing is only sound for beta <= 1/2 (subtree gauges bounded by one)".into(),
        ));
    }
    let rep = ReplicateConfig {
        alpha: 1.0,
        horizon: cfg.horizon,
        n: cfg.n,
        seed: cfg.seed,
        population_cap: cfg.stop_population,
        event_cap: cfg.event_cap,
        freeze_height: cfg.freeze_height,
    };
    let outcomes = replicate_profiles(&rep)?;
    let rate = 2.0 * cfg.beta - 1.0;
    let mut samples = EngineSamples {
        values: Vec::with_capacity(cfg.n),
        error_bounds: Vec::with_capacity(cfg.n),
        end_times: Vec::with_capacity(cfg.n),
        truncated: 0,
    };
    for o in &outcomes {
        let scale = (-rate * o.end_time).exp();
        samples
            .values
            .push(scale * gauge_of_profile(&o.counts, cfg.beta));
        let bound = match cfg.freeze_height {
            Some(f) if (f as usize) < o.counts.len() => {
                scale * gauge_of_profile(&frozen_only(&o.counts, f as usize), cfg.beta)
            }
            _ => 0.0,
        };
        samples.error_bounds.push(bound);
        samples.end_times.push(o.end_time);
        if matches!(o.stop, StopReason::EventCap | StopReason::DepthCap) {
            samples.truncated += 1;
        }
    }
    if samples.truncated as f64 > MAX_TRUNCATED_FRACTION * cfg.n as f64 {
        return Err(Error::Capacity(format!(
            "{} of {} replicates truncated by the event/depth cap",
            samples.truncated, cfg.n
        )));
    }
    Ok(samples)
}

fn frozen_only(counts: &[u64], from: usize) -> Vec<u64> {
    counts
        .iter()
        .enumerate()
        .map(|(h, &c)| if h >= from { c } else { 0 })
        .collect()
}

/// Two-sample KS comparison of the sampler at `cfg` against the same sampler
/// with horizon and stopping population both halved.
pub fn convergence_diagnostic(cfg: &LimitSamplerConfig) -> Result<TestReport> {
    let full = sample_limit_engine(cfg)?;
    let half_cfg = LimitSamplerConfig {
        horizon: cfg.horizon / 2.0,
        stop_population: (cfg.stop_population / 2).max(1),
        seed: derive_seed(cfg.seed, u64::MAX),
        ..cfg.clone()
    };
    let half = sample_limit_engine(&half_cfg)?;
    let mut report = stats::ks_two_sample(&full.values, &half.values)?;
    report.test_name = "engine_horizon_convergence".into();
    report.seed = Some(cfg.seed);
    Ok(report)
}
