//! The generator `L^(α) f(V) = sum_{v in V} α^|v| (f(V^v) - f(V))` on
//! functions of evolutionary sets, and the induced chain on generation
//! profiles with generator `L̃^(α) f(n) = sum_k n_k α^k (f(n^(k)) - f(n))`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{StopReason, DEFAULT_EVENT_CAP, DEFAULT_POPULATION_CAP};
use crate::error::{check_unit_interval, Error, Result};
use crate::field::derive_seed;
use crate::numeric::compensated_sum;
use crate::tree::{EvolutionarySequence, EvolutionarySet, Vertex};

/// Largest `n` accepted by [`norm_witness`].
pub const WITNESS_DEPTH_CAP: u32 = 24;

/// A real function on evolutionary sets.
pub trait StateFn {
    fn value(&self, state: &EvolutionarySet) -> f64;

    /// `f(V^v) - f(V)`, given `current = f(V)`. Implementations may override
    /// this when the change is cheaper or more accurate to compute directly.
    fn increment(&self, state: &EvolutionarySet, site: Vertex, current: f64) -> Result<f64> {
        Ok(self.value(&state.branch(site)?) - current)
    }
}

/// A compactly supported function: finitely many explicit values and a
/// default elsewhere.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateFunction {
    values: BTreeMap<EvolutionarySet, f64>,
    default: f64,
}

impl StateFunction {
    pub fn constant(c: f64) -> Self {
        StateFunction {
            values: BTreeMap::new(),
            default: c,
        }
    }

    pub fn indicator(state: EvolutionarySet) -> Self {
        let mut f = Self::constant(0.0);
        f.set(state, 1.0);
        f
    }

    pub fn set(&mut self, state: EvolutionarySet, value: f64) {
        self.values.insert(state, value);
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sup |f|` over all of ℰ (the default is attained on infinitely many
    /// states).
    pub fn sup_norm(&self) -> f64 {
        self.values
            .values()
            .fold(self.default.abs(), |m, v| m.max(v.abs()))
    }
}

impl StateFn for StateFunction {
    fn value(&self, state: &EvolutionarySet) -> f64 {
        self.values.get(state).copied().unwrap_or(self.default)
    }
}

/// The gauge `a_β` as a state function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gauge {
    pub beta: f64,
}

impl StateFn for Gauge {
    fn value(&self, state: &EvolutionarySet) -> f64 {
        state
            .gauge(self.beta)
            .expect("beta validated at construction")
    }

    /// Branching `v` swaps `β^|v|` for `2 β^{|v|+1}`: the change is exactly
    /// `(2β - 1) β^|v|`, free of the cancellation in the difference of sums.
    fn increment(&self, _: &EvolutionarySet, site: Vertex, _: f64) -> Result<f64> {
        Ok((2.0 * self.beta - 1.0) * self.beta.powi(site.height() as i32))
    }
}

impl Gauge {
    pub fn new(beta: f64) -> Result<Self> {
        check_unit_interval("beta", beta)?;
        Ok(Gauge { beta })
    }
}

/// `f_n(V) = h(V) 1[h(V) <= n]` with `h` the maximal height.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeightTruncation {
    pub n: u32,
}

impl HeightTruncation {
    fn at_height(&self, h: u32) -> f64 {
        if h <= self.n {
            h as f64
        } else {
            0.0
        }
    }
}

impl StateFn for HeightTruncation {
    fn value(&self, state: &EvolutionarySet) -> f64 {
        self.at_height(state.max_height() as u32)
    }

    fn increment(&self, state: &EvolutionarySet, site: Vertex, current: f64) -> Result<f64> {
        site.children()?;
        let h = (state.max_height() as u32).max(site.height() as u32 + 1);
        Ok(self.at_height(h) - current)
    }
}

/// `L^(α) f(V)`, summed exactly over the members of `V` with compensation.
pub fn apply_generator<F: StateFn + ?Sized>(
    f: &F,
    state: &EvolutionarySet,
    alpha: f64,
) -> Result<f64> {
    check_unit_interval("alpha", alpha)?;
    let current = f.value(state);
    let terms = state
        .iter()
        .map(|v| Ok(alpha.powi(v.height() as i32) * f.increment(state, v, current)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(compensated_sum(terms))
}

/// `|L^(α) f_n(V)| / n` at the full frontier `V` of depth `n`, where `n` is
/// `sup |f_n|`. Every branching pushes `h` above `n`, so each of the `2^n`
/// terms is `-α^n n` and the value is `(2α)^n`.
pub fn norm_witness(alpha: f64, n: u32) -> Result<f64> {
    check_unit_interval("alpha", alpha)?;
    if n == 0 {
        return Err(Error::Precondition("n must be >= 1".into()));
    }
    if n > WITNESS_DEPTH_CAP {
        return Err(Error::Capacity(format!(
            "norm witness depth {n} exceeds cap {WITNESS_DEPTH_CAP}"
        )));
    }
    let frontier = EvolutionarySet::full_frontier(n as u8)?;
    let lf = apply_generator(&HeightTruncation { n }, &frontier, alpha)?;
    Ok(lf.abs() / n as f64)
}

/// Relative slack used by [`bounded_bound_check`].
pub const BOUND_SLACK_EPS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundViolation {
    pub alpha: f64,
    pub state: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub sup_f: f64,
    pub bound: f64,
    /// Largest `|L^(α) f(V)|` seen.
    pub max_abs: f64,
    pub checked: usize,
    /// Alphas above 1/2, where no bound is claimed.
    pub skipped_alphas: Vec<f64>,
    pub violations: Vec<BoundViolation>,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|L^(α) f(V)| <= 2 sup |f|` for each `α <= 1/2` and each state.
pub fn bounded_bound_check(
    f: &StateFunction,
    alphas: &[f64],
    states: &[EvolutionarySet],
) -> Result<BoundReport> {
    let sup_f = f.sup_norm();
    let bound = 2.0 * sup_f;
    let limit = bound * (1.0 + BOUND_SLACK_EPS * f64::EPSILON);
    let mut report = BoundReport {
        sup_f,
        bound,
        max_abs: 0.0,
        checked: 0,
        skipped_alphas: Vec::new(),
        violations: Vec::new(),
    };
    for &alpha in alphas {
        check_unit_interval("alpha", alpha)?;
        if alpha > 0.5 {
            report.skipped_alphas.push(alpha);
            continue;
        }
        for state in states {
            let value = apply_generator(f, state, alpha)?;
            report.checked += 1;
            report.max_abs = report.max_abs.max(value.abs());
            if value.abs() > limit {
                report.violations.push(BoundViolation {
                    alpha,
                    state: state.to_json(),
                    value,
                });
            }
        }
    }
    Ok(report)
}

/// Every evolutionary set with at most `max_leaves` members, in order of
/// size and then canonical order. There are `C_{k-1}` (Catalan) sets with
/// `k` members.
pub fn enumerate_states(max_leaves: usize) -> Vec<EvolutionarySet> {
    let mut out = Vec::new();
    if max_leaves == 0 {
        return out;
    }
    let mut layer = vec![EvolutionarySet::root()];
    while !layer.is_empty() {
        out.extend(layer.iter().cloned());
        if layer[0].len() >= max_leaves {
            break;
        }
        let mut next: Vec<EvolutionarySet> = layer
            .iter()
            .flat_map(|s| s.iter().filter_map(move |v| s.branch(v).ok()))
            .collect();
        next.sort();
        next.dedup();
        layer = next;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceConfig {
    pub alpha: f64,
    pub horizon: f64,
    pub seed: u64,
    pub population_cap: usize,
    pub event_cap: usize,
}

impl SequenceConfig {
    pub fn new(alpha: f64, horizon: f64, seed: u64) -> Self {
        SequenceConfig {
            alpha,
            horizon,
            seed,
            population_cap: DEFAULT_POPULATION_CAP,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    fn validate(&self) -> Result<()> {
        check_unit_interval("alpha", self.alpha)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!(
                "horizon must be finite and >= 0, got {}",
                self.horizon
            )));
        }
        if self.population_cap == 0 || self.event_cap == 0 {
            return Err(Error::Domain("caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// A run of the generation-profile chain: jump times and, for each jump,
/// the generation that fired.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceTrajectory {
    pub alpha: f64,
    pub horizon: f64,
    pub seed: u64,
    jump_times: Vec<f64>,
    fired: Vec<u8>,
    stop: StopReason,
    end_time: f64,
}

impl SequenceTrajectory {
    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn fired(&self) -> &[u8] {
        &self.fired
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// States after each jump, starting from `(1, 0, ...)`.
    pub fn states(&self) -> impl Iterator<Item = EvolutionarySequence> + '_ {
        let mut state = EvolutionarySequence::initial();
        std::iter::once(state.clone()).chain(self.fired.iter().map(move |&k| {
            state
                .apply_move_in_place(k as usize)
                .expect("recorded moves are valid");
            state.clone()
        }))
    }

    pub fn final_state(&self) -> EvolutionarySequence {
        self.states().last().expect("at least the initial state")
    }
}

/// Competing-exponentials simulation: in state `n` the total rate is
/// `sum_k n_k α^k`, and generation `k` fires with probability proportional
/// to `n_k α^k`.
pub fn simulate_sequence(cfg: &SequenceConfig) -> Result<SequenceTrajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = EvolutionarySequence::initial();
    let mut tr = SequenceTrajectory {
        alpha: cfg.alpha,
        horizon: cfg.horizon,
        seed: cfg.seed,
        jump_times: Vec::new(),
        fired: Vec::new(),
        stop: StopReason::Horizon,
        end_time: cfg.horizon,
    };
    let mut t = 0.0;
    let mut rates: Vec<f64> = Vec::new();
    loop {
        rates.clear();
        rates.extend(
            state
                .counts()
                .iter()
                .enumerate()
                .map(|(k, &n)| n as f64 * cfg.alpha.powi(k as i32)),
        );
        let total: f64 = rates.iter().sum();
        let e: f64 = rng.sample(Exp1);
        let next = t + e / total;
        if !(next <= cfg.horizon) {
            break;
        }
        if tr.jumps() >= cfg.event_cap {
            tr.stop = StopReason::EventCap;
            tr.end_time = t;
            break;
        }
        if state.total() as usize >= cfg.population_cap {
            tr.stop = StopReason::PopulationCap;
            tr.end_time = t;
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut k = rates.len() - 1;
        for (j, &r) in rates.iter().enumerate() {
            if u < r {
                k = j;
                break;
            }
            u -= r;
        }
        // Guard against rounding landing on an empty generation.
        while state.get(k) == 0 {
            k -= 1;
        }
        if state.apply_move_in_place(k).is_err() {
            tr.stop = StopReason::DepthCap;
            tr.end_time = t;
            break;
        }
        t = next;
        tr.jump_times.push(t);
        tr.fired.push(k as u8);
    }
    Ok(tr)
}

/// Final states of `n` independent chains, replicate `i` seeded with
/// `derive_seed(seed, i)`, in replicate order.
pub fn sample_sequences(
    alpha: f64,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<EvolutionarySequence>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            Ok(
                simulate_sequence(&SequenceConfig::new(alpha, horizon, derive_seed(seed, i)))?
                    .final_state(),
            )
        })
        .collect()
}

/// Largest relative error, in units of machine epsilon, of the identity
/// `L a_β = (2β - 1) a_(αβ)` over `trials` random states built from at most
/// `max_steps` uniform branchings, with α and β uniform on `[0.01, 1]`.
pub fn eigen_identity_error(trials: usize, max_steps: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut s = EvolutionarySet::root();
        for _ in 0..rng.random_range(0..=max_steps) {
            let v = s.members()[rng.random_range(0..s.len())];
            s = s.branch(v)?;
        }
        let alpha: f64 = rng.random_range(0.01..=1.0);
        let beta: f64 = rng.random_range(0.01..=1.0);
        let lhs = apply_generator(&Gauge::new(beta)?, &s, alpha)?;
        let rhs = (2.0 * beta - 1.0) * s.gauge(alpha * beta)?;
        worst = worst.max(crate::numeric::relative_error(lhs, rhs));
    }
    Ok(worst / f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::relative_error;

    fn random_state(rng: &mut ChaCha8Rng, steps: usize) -> EvolutionarySet {
        let mut s = EvolutionarySet::root();
        for _ in 0..steps {
            let v = s.members()[rng.random_range(0..s.len())];
            s = s.branch(v).unwrap();
        }
        s
    }

    #[test]
    fn catalan_counts() {
        let states = enumerate_states(6);
        assert_eq!(states.len(), 1 + 1 + 2 + 5 + 14 + 42);
        let mut sizes = [0usize; 7];
        for s in &states {
            sizes[s.len()] += 1;
        }
        assert_eq!(sizes, [0, 1, 1, 2, 5, 14, 42]);
        assert!(enumerate_states(0).is_empty());
    }

    #[test]
    fn constants_are_annihilated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = StateFunction::constant(3.5);
        for _ in 0..50 {
            let s = random_state(&mut rng, 12);
            assert_eq!(apply_generator(&f, &s, 0.8).unwrap(), 0.0);
        }
    }

    #[test]
    fn gauge_eigen_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let steps = rng.random_range(0..25);
            let s = random_state(&mut rng, steps);
            let alpha: f64 = rng.random_range(0.01..=1.0);
            let beta: f64 = rng.random_range(0.01..=1.0);
            let lhs = apply_generator(&Gauge::new(beta).unwrap(), &s, alpha).unwrap();
            let rhs = (2.0 * beta - 1.0) * s.gauge(alpha * beta).unwrap();
            assert!(
                relative_error(lhs, rhs) <= 8.0 * f64::EPSILON,
                "{lhs} vs {rhs}"
            );
        }
        let s = random_state(&mut rng, 30);
        assert_eq!(
            apply_generator(&Gauge::new(0.5).unwrap(), &s, 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn gauge_increment_matches_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = random_state(&mut rng, 15);
            let g = Gauge::new(0.7).unwrap();
            let v = s.members()[rng.random_range(0..s.len())];
            let direct = g.value(&s.branch(v).unwrap()) - g.value(&s);
            let exact = g.increment(&s, v, g.value(&s)).unwrap();
            assert!((direct - exact).abs() <= 8.0 * f64::EPSILON * g.value(&s));
        }
    }

    #[test]
    fn witness_values() {
        // brute force on small frontiers via the generic difference
        for n in 1..=6u32 {
            let frontier = EvolutionarySet::full_frontier(n as u8).unwrap();
            let f = HeightTruncation { n };
            for &alpha in &[0.3f64, 0.5, 1.0] {
                let brute: f64 = frontier
                    .iter()
                    .map(|v| {
                        alpha.powi(n as i32)
                            * (f.value(&frontier.branch(v).unwrap()) - f.value(&frontier))
                    })
                    .sum();
                let w = norm_witness(alpha, n).unwrap();
                assert!((w - brute.abs() / n as f64).abs() < 1e-12);
                assert!(relative_error(w, (2.0 * alpha).powi(n as i32)) < 1e-13);
            }
        }
        assert_eq!(norm_witness(0.5, 17).unwrap(), 1.0);
        assert_eq!(norm_witness(1.0, 10).unwrap(), 1024.0);
        assert!(matches!(norm_witness(1.0, 25), Err(Error::Capacity(_))));
        let decaying: Vec<f64> = (1..12).map(|n| norm_witness(0.3, n).unwrap()).collect();
        assert!(decaying.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn bound_holds_below_half() {
        let states = enumerate_states(6);
        let deep = states.last().unwrap().clone();
        let f = StateFunction::indicator(deep);
        let r = bounded_bound_check(&f, &[0.25, 0.5, 0.9], &states).unwrap();
        assert!(r.pass());
        assert_eq!(r.skipped_alphas, vec![0.9]);
        assert_eq!(r.checked, 2 * states.len());
        assert!(r.max_abs <= 2.0);
        let zero = bounded_bound_check(&StateFunction::constant(0.0), &[0.5], &states).unwrap();
        assert_eq!(zero.max_abs, 0.0);
    }

    #[test]
    fn sequence_chain_basics() {
        let tr = simulate_sequence(&SequenceConfig::new(0.75, 3.0, 4)).unwrap();
        for (k, s) in tr.states().enumerate() {
            assert_eq!(s.total(), k as u64 + 1);
            EvolutionarySequence::new(s.counts().to_vec()).unwrap();
        }
        assert!(tr.jump_times().windows(2).all(|w| w[0] < w[1]));
        let again = simulate_sequence(&SequenceConfig::new(0.75, 3.0, 4)).unwrap();
        assert_eq!(tr, again);
        let a = sample_sequences(0.5, 1.0, 10, 3).unwrap();
        assert_eq!(a, sample_sequences(0.5, 1.0, 10, 3).unwrap());
    }
}
