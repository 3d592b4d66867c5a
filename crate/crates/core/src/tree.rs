//! Exact combinatorics of the binary tree `{1,2}*`: vertices, evolutionary
//! sets (reachable leaf sets), gauges and generation profiles.
//!
//! A [`Vertex`] is a path from the root, stored as packed bits plus a height.
//! An [`EvolutionarySet`] is a finite, prefix-free set of vertices whose
//! dyadic mass `sum 2^-|v|` is exactly one; these are precisely the leaf sets
//! reachable from `{θ}` by repeatedly replacing a leaf with its two children.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_unit_interval, Error, Result};
use crate::numeric::compensated_sum;

/// Maximum vertex height representable.
pub const DEPTH_MAX: u8 = 120;

/// A vertex of the binary tree, i.e. a finite word over `{1,2}`.
///
/// Step `j` of the path is bit `height - j` of `bits` (the first step is the
/// most significant), with `0` encoding `1` and `1` encoding `2`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vertex {
    bits: u128,
    height: u8,
}

impl Vertex {
    /// The root θ (empty path).
    pub const ROOT: Vertex = Vertex { bits: 0, height: 0 };

    pub fn height(self) -> u8 {
        self.height
    }

    pub fn bits(self) -> u128 {
        self.bits
    }

    pub fn is_root(self) -> bool {
        self.height == 0
    }

    /// Builds a vertex from its steps, each `1` or `2`.
    pub fn from_steps(steps: &[u8]) -> Result<Vertex> {
        if steps.len() > DEPTH_MAX as usize {
            return Err(Error::Capacity(format!(
                "path of length {} exceeds DEPTH_MAX = {DEPTH_MAX}",
                steps.len()
            )));
        }
        let mut v = Vertex::ROOT;
        for &s in steps {
            v = v.child(s)?;
        }
        Ok(v)
    }

    /// Step `j` (1-based, `1 <= j <= height`), returned as `1` or `2`.
    pub fn step(self, j: u8) -> u8 {
        assert!(j >= 1 && j <= self.height, "step index out of range");
        1 + ((self.bits >> (self.height - j)) & 1) as u8
    }

    pub fn steps(self) -> impl Iterator<Item = u8> {
        (1..=self.height).map(move |j| self.step(j))
    }

    /// The child `<v side>` for `side` in `{1, 2}`.
    pub fn child(self, side: u8) -> Result<Vertex> {
        if side != 1 && side != 2 {
            return Err(Error::Domain(format!(
                "child side must be 1 or 2, got {side}"
            )));
        }
        if self.height >= DEPTH_MAX {
            return Err(Error::Capacity(format!(
                "child of a vertex at height {} exceeds DEPTH_MAX = {DEPTH_MAX}",
                self.height
            )));
        }
        Ok(Vertex {
            bits: (self.bits << 1) | u128::from(side - 1),
            height: self.height + 1,
        })
    }

    pub fn children(self) -> Result<[Vertex; 2]> {
        Ok([self.child(1)?, self.child(2)?])
    }

    /// The restriction `v|j` to the first `j` steps.
    pub fn restrict(self, j: u8) -> Vertex {
        assert!(j <= self.height, "restriction beyond vertex height");
        Vertex {
            bits: self.bits >> (self.height - j),
            height: j,
        }
    }

    pub fn parent(self) -> Option<Vertex> {
        (self.height > 0).then(|| self.restrict(self.height - 1))
    }

    /// Non-strict prefix test: `self` is an ancestor of, or equal to, `other`.
    pub fn is_prefix_of(self, other: Vertex) -> bool {
        self.height <= other.height && other.restrict(self.height) == self
    }

    // Left-aligned path bits; lexicographic order on words is (key, height).
    fn sort_key(self) -> u128 {
        if self.height == 0 {
            0
        } else {
            self.bits << (128 - u32::from(self.height))
        }
    }
}

impl Ord for Vertex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then(self.height.cmp(&other.height))
    }
}

impl PartialOrd for Vertex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.steps() {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vertex(\"{self}\")")
    }
}

impl FromStr for Vertex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Vertex> {
        let steps = s
            .bytes()
            .map(|b| match b {
                b'1' => Ok(1),
                b'2' => Ok(2),
                _ => Err(Error::Parse(format!("invalid vertex string {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Vertex::from_steps(&steps)
    }
}

impl Serialize for Vertex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Vertex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Exact dyadic-mass and prefix-freeness check on an arbitrary vertex set.
///
/// Returns true iff the input is a non-empty, duplicate-free, prefix-free set
/// with `sum 2^-|v| = 1`, evaluated in integer arithmetic over the common
/// denominator `2^h_max`.
pub fn is_evolutionary(members: &[Vertex]) -> bool {
    if members.is_empty() {
        return false;
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    // In lexicographic order a prefix always sorts directly before some
    // extension of it, so checking neighbours suffices.
    if sorted.windows(2).any(|w| w[0].is_prefix_of(w[1])) {
        return false;
    }
    dyadic_mass_is_one(sorted.iter().map(|v| v.height))
}

fn dyadic_mass_is_one(heights: impl Iterator<Item = u8> + Clone) -> bool {
    let Some(h_max) = heights.clone().max() else {
        return false;
    };
    let target = 1u128 << h_max;
    let mut total = 0u128;
    for h in heights {
        match total.checked_add(1u128 << (h_max - h)) {
            Some(t) if t <= target => total = t,
            _ => return false,
        }
    }
    total == target
}

/// A reachable population state: the leaf set of a finite full binary tree.
///
/// Members are kept sorted in lexicographic (canonical) order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EvolutionarySet {
    members: Vec<Vertex>,
    max_height: u8,
}

impl EvolutionarySet {
    /// The initial state `{θ}`.
    pub fn root() -> Self {
        EvolutionarySet {
            members: vec![Vertex::ROOT],
            max_height: 0,
        }
    }

    /// Validates an arbitrary collection of vertices.
    pub fn from_vertices<I: IntoIterator<Item = Vertex>>(vertices: I) -> Result<Self> {
        let mut members: Vec<Vertex> = vertices.into_iter().collect();
        if !is_evolutionary(&members) {
            return Err(Error::Precondition(
                "vertex set is not an evolutionary set (needs prefix-free, dyadic mass 1)".into(),
            ));
        }
        members.sort_unstable();
        let max_height = members.iter().map(|v| v.height).max().unwrap_or(0);
        Ok(EvolutionarySet {
            members,
            max_height,
        })
    }

    /// Parses vertices from their canonical strings.
    pub fn parse<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let vertices = words
            .iter()
            .map(|w| w.as_ref().parse())
            .collect::<Result<Vec<Vertex>>>()?;
        Self::from_vertices(vertices)
    }

    /// All `2^depth` vertices at height `depth`.
    pub fn full_frontier(depth: u8) -> Result<Self> {
        if depth > 30 {
            return Err(Error::Capacity(format!(
                "full frontier at depth {depth} has more than 2^30 members"
            )));
        }
        let members = (0..1u128 << depth)
            .map(|bits| Vertex {
                bits,
                height: depth,
            })
            .collect();
        Ok(EvolutionarySet {
            members,
            max_height: depth,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// Always false: the empty set is not an evolutionary set.
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Vertex] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.members.iter().copied()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    /// `h(V) = max{|v| : v in V}`.
    pub fn max_height(&self) -> u8 {
        self.max_height
    }

    /// `V^v`: removes `v` and adjoins both of its children.
    pub fn branch(&self, v: Vertex) -> Result<Self> {
        let pos = self
            .members
            .binary_search(&v)
            .map_err(|_| Error::Precondition(format!("vertex {v:?} is not a member")))?;
        let [c1, c2] = v.children()?;
        // Prefix-freeness: nothing lies strictly between v and its children.
        let mut members = Vec::with_capacity(self.members.len() + 1);
        members.extend_from_slice(&self.members[..pos]);
        members.push(c1);
        members.push(c2);
        members.extend_from_slice(&self.members[pos + 1..]);
        Ok(EvolutionarySet {
            members,
            max_height: self.max_height.max(c1.height),
        })
    }

    /// Gauge `a_β(V) = sum β^|v|`, summed per height in increasing order.
    pub fn gauge(&self, beta: f64) -> Result<f64> {
        check_unit_interval("beta", beta)?;
        Ok(gauge_of_profile(&self.height_counts(), beta))
    }

    /// `g_k(V)` for `k = 0..=h(V)`.
    pub fn height_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.max_height as usize + 1];
        for v in &self.members {
            counts[v.height as usize] += 1;
        }
        counts
    }

    pub fn generation_profile(&self) -> EvolutionarySequence {
        EvolutionarySequence {
            counts: self.height_counts(),
        }
    }

    /// Canonical encoding: sorted array of vertex strings.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vertex strings always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl fmt::Debug for EvolutionarySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set()
            .entries(self.members.iter().map(|v| v.to_string()))
            .finish()
    }
}

impl Serialize for EvolutionarySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.members.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EvolutionarySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let vertices = Vec::<Vertex>::deserialize(deserializer)?;
        EvolutionarySet::from_vertices(vertices).map_err(serde::de::Error::custom)
    }
}

/// `sum_h counts[h] β^h`, grouped by height in increasing order.
pub fn gauge_of_profile(counts: &[u64], beta: f64) -> f64 {
    compensated_sum(
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(h, &c)| c as f64 * beta.powi(h as i32)),
    )
}

/// Parameters of the gauge family and the delay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeParams {
    beta: f64,
    alpha: f64,
}

impl GaugeParams {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        check_unit_interval("beta", beta)?;
        check_unit_interval("alpha", alpha)?;
        Ok(GaugeParams { beta, alpha })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// A generation-count vector `n = (n_0, n_1, ...)` reachable from `(1, 0, ...)`.
///
/// Trailing zeros are trimmed, so equal sequences compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct EvolutionarySequence {
    counts: Vec<u64>,
}

impl EvolutionarySequence {
    pub fn initial() -> Self {
        EvolutionarySequence { counts: vec![1] }
    }

    /// Validates reachability, which for count vectors is equivalent to
    /// `sum n_k 2^-k = 1` (Kraft equality).
    pub fn new(mut counts: Vec<u64>) -> Result<Self> {
        while counts.len() > 1 && counts.last() == Some(&0) {
            counts.pop();
        }
        if counts.len() > DEPTH_MAX as usize + 1 {
            return Err(Error::Capacity("sequence longer than DEPTH_MAX".into()));
        }
        let h_max = counts.len() - 1;
        let target = 1u128 << h_max;
        let mut total = 0u128;
        for (k, &n) in counts.iter().enumerate() {
            let term = u128::from(n).checked_mul(1u128 << (h_max - k));
            total = match term.and_then(|t| total.checked_add(t)) {
                Some(t) => t,
                None => return Err(Error::Precondition("sequence has dyadic mass > 1".into())),
            };
        }
        if total != target {
            return Err(Error::Precondition(
                "sequence is not reachable from (1,0,...): dyadic mass != 1".into(),
            ));
        }
        Ok(EvolutionarySequence { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `n_k`, zero beyond the stored length.
    pub fn get(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// The move `n -> n^(k)`: one particle at generation `k` is replaced by
    /// two at generation `k + 1`.
    pub fn apply_move(&self, k: usize) -> Result<Self> {
        let mut next = self.clone();
        next.apply_move_in_place(k)?;
        Ok(next)
    }

    pub(crate) fn apply_move_in_place(&mut self, k: usize) -> Result<()> {
        if self.get(k) == 0 {
            return Err(Error::Precondition(format!("n_{k} = 0, cannot branch")));
        }
        if k + 1 > DEPTH_MAX as usize {
            return Err(Error::Capacity("move beyond DEPTH_MAX".into()));
        }
        if self.counts.len() < k + 2 {
            self.counts.resize(k + 2, 0);
        }
        self.counts[k] -= 1;
        self.counts[k + 1] += 2;
        while self.counts.len() > 1 && self.counts.last() == Some(&0) {
            self.counts.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    fn set(words: &[&str]) -> EvolutionarySet {
        EvolutionarySet::parse(words).unwrap()
    }

    #[test]
    fn vertex_encoding_and_navigation() {
        let x = v("212");
        assert_eq!(x.height(), 3);
        assert_eq!(x.steps().collect::<Vec<_>>(), vec![2, 1, 2]);
        assert_eq!(x.restrict(1), v("2"));
        assert_eq!(x.restrict(0), Vertex::ROOT);
        assert_eq!(x.parent(), Some(v("21")));
        assert_eq!(Vertex::ROOT.to_string(), "");
        assert!(v("21").is_prefix_of(x));
        assert!(!v("22").is_prefix_of(x));
        assert!(Vertex::ROOT.is_prefix_of(x));
        assert!("13".parse::<Vertex>().is_err());
    }

    #[test]
    fn vertex_order_is_lexicographic() {
        let mut words = vec!["2", "", "12", "1", "11", "211", "21", "22"];
        let mut vs: Vec<Vertex> = words.iter().map(|w| v(w)).collect();
        vs.sort();
        words.sort();
        let back: Vec<String> = vs.iter().map(|x| x.to_string()).collect();
        assert_eq!(back, words);
    }

    #[test]
    fn depth_limit() {
        let deep = Vertex::from_steps(&[1; DEPTH_MAX as usize]).unwrap();
        assert!(matches!(deep.child(1), Err(Error::Capacity(_))));
        assert!(Vertex::from_steps(&[2; DEPTH_MAX as usize + 1]).is_err());
    }

    #[test]
    fn gauge_examples() {
        assert_eq!(EvolutionarySet::root().gauge(0.3).unwrap(), 1.0);
        let s = set(&["1", "21", "22"]);
        assert_eq!(s.gauge(0.5).unwrap(), 1.0);
        assert_eq!(s.gauge(1.0).unwrap(), 3.0);
        assert!(matches!(s.gauge(0.0), Err(Error::Domain(_))));
        assert!(matches!(s.gauge(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn branch_examples() {
        let r = EvolutionarySet::root();
        assert_eq!(r.branch(Vertex::ROOT).unwrap(), set(&["1", "2"]));
        assert_eq!(
            set(&["1", "2"]).branch(v("2")).unwrap(),
            set(&["1", "21", "22"])
        );
        assert!(matches!(r.branch(v("1")), Err(Error::Precondition(_))));
    }

    #[test]
    fn is_evolutionary_examples() {
        assert!(is_evolutionary(&[Vertex::ROOT]));
        assert!(!is_evolutionary(&[v("1")]));
        assert!(is_evolutionary(&[v("1"), v("21"), v("22")]));
        assert!(!is_evolutionary(&[]));
        assert!(!is_evolutionary(&[v("1"), v("1")]));
    }

    #[test]
    fn prefix_with_unit_mass_is_rejected() {
        // {1, 11, 12} has prefix 1 and mass 1/2 + 1/4 + 1/4 = 1
        assert!(!is_evolutionary(&[v("1"), v("11"), v("12")]));
    }

    // Brute-force oracle: enumerate every subset of vertices of height <= 3
    // with at most three members and compare with the reachable states.
    #[test]
    fn is_evolutionary_matches_enumeration() {
        let mut all = vec![Vertex::ROOT];
        for h in 1..=3u8 {
            for bits in 0..1u128 << h {
                all.push(Vertex { bits, height: h });
            }
        }
        let mut reachable: HashSet<Vec<Vertex>> = HashSet::new();
        let mut frontier = vec![EvolutionarySet::root()];
        while let Some(s) = frontier.pop() {
            if s.len() > 3 || !reachable.insert(s.members().to_vec()) {
                continue;
            }
            for x in s.iter() {
                frontier.push(s.branch(x).unwrap());
            }
        }
        let n = all.len();
        let mut checked = 0;
        for a in 0..n {
            for b in a..n {
                for c in b..n {
                    let mut pick = vec![all[a], all[b], all[c]];
                    pick.sort();
                    pick.dedup();
                    let expect = reachable.contains(&pick);
                    assert_eq!(is_evolutionary(&pick), expect, "{pick:?}");
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 680);
        assert_eq!(reachable.len(), 1 + 1 + 2);
    }

    #[test]
    fn generation_profile_examples() {
        assert_eq!(EvolutionarySet::root().generation_profile().counts(), &[1]);
        assert_eq!(
            set(&["1", "21", "22"]).generation_profile().counts(),
            &[0, 1, 2]
        );
        let full = EvolutionarySet::full_frontier(5).unwrap();
        assert_eq!(full.len(), 32);
        assert_eq!(full.generation_profile().counts(), &[0, 0, 0, 0, 0, 32]);
        assert!(is_evolutionary(full.members()));
    }

    #[test]
    fn json_round_trip() {
        let s = set(&["22", "1", "21"]);
        assert_eq!(s.to_json(), r#"["1","21","22"]"#);
        assert_eq!(EvolutionarySet::from_json(&s.to_json()).unwrap(), s);
        assert_eq!(EvolutionarySet::root().to_json(), r#"[""]"#);
        assert!(EvolutionarySet::from_json(r#"["1"]"#).is_err());
    }

    #[test]
    fn sequence_moves() {
        let n = EvolutionarySequence::initial();
        let m = n.apply_move(0).unwrap().apply_move(1).unwrap();
        assert_eq!(m.counts(), &[0, 1, 2]);
        assert_eq!(m.total(), 3);
        assert!(m.apply_move(0).is_err());
        assert!(EvolutionarySequence::new(vec![0, 1, 2, 0]).is_ok());
        assert!(EvolutionarySequence::new(vec![0, 1, 1]).is_err());
        assert!(EvolutionarySequence::new(vec![0, 3]).is_err());
    }

    #[test]
    fn gauge_params_domain() {
        assert!(GaugeParams::new(0.5, 1.0).is_ok());
        assert!(GaugeParams::new(0.0, 1.0).is_err());
        assert!(GaugeParams::new(0.5, 1.01).is_err());
    }
}
