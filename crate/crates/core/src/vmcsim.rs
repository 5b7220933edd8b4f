//! Coupled simulation of a virtual Markov chain, the staircase
//! decomposition of a simulated prefix, and exact visit classification.
//!
//! Only the top level is simulated; every lower level is its projection, so
//! the output is projective by construction.

use std::collections::VecDeque;

use num_traits::{One, Signed, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::kernels::{validate_compatibility, StochasticLevelMatrix, VidPrefix, VtmPrefix};
use crate::levels::{hitting_index_by, HitResult, LevelPath, State, VirtualPathPrefix};
use crate::rational::{self, Rational};
use crate::rng::replicate_rng;
use crate::simplex::{row_of_vtm, MarginalSequence};

pub const DEFAULT_A: usize = 32;
pub const DEFAULT_KMAX: usize = 8;

/// Draws from a finite distribution with one uniform, never returning a
/// zero-weight index.
#[derive(Debug, Clone)]
struct Cumulative {
    cum: Vec<f64>,
    last_positive: usize,
}

impl Cumulative {
    fn new(weights: &[Rational]) -> Self {
        let mut acc = 0.0;
        let cum = weights
            .iter()
            .map(|w| {
                acc += rational::to_f64(w);
                acc
            })
            .collect();
        let last_positive = weights.iter().rposition(|w| !w.is_zero()).unwrap_or(0);
        Cumulative { cum, last_positive }
    }

    fn draw(&self, u: f64) -> State {
        self.cum.partition_point(|&c| c <= u).min(self.last_positive)
    }
}

/// Simulates the top level of a compatible `(ν, K)` pair.
#[derive(Debug, Clone)]
pub struct VmcSampler {
    level: usize,
    initial: Cumulative,
    rows: Vec<Cumulative>,
}

impl VmcSampler {
    /// Checks compatibility through `level` and prepares the level-`level`
    /// chain.
    pub fn new(nu: &VidPrefix, k: &VtmPrefix, level: usize) -> Result<Self> {
        let nu = nu.truncated(level)?;
        let k = k.truncated(level)?;
        let report = validate_compatibility(&nu, &k)?;
        if let Some(v) = report.violations.first() {
            return Err(VmcError::Incompatible(format!("recursion fails at level {}, state {}", v.level, v.state)));
        }
        let top = k.level(level);
        Ok(VmcSampler {
            level,
            initial: Cumulative::new(nu.level(level).weights()),
            rows: top.rows().iter().map(|r| Cumulative::new(r)).collect(),
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `X_L` for `steps` transitions (so `steps + 1` entries) and every
    /// projection below it. Replicate `r` of seed `s` always gives the same
    /// prefix.
    pub fn sample(&self, steps: usize, seed: u64, replicate: u64) -> Result<VirtualPathPrefix> {
        if steps == 0 {
            return Err(VmcError::ZeroHorizon);
        }
        let mut rng = replicate_rng(seed, replicate);
        let mut x = self.initial.draw(rng.random());
        let mut states = Vec::with_capacity(steps + 1);
        states.push(x);
        while states.len() <= steps && x != 0 {
            x = self.rows[x].draw(rng.random());
            states.push(x);
        }
        VirtualPathPrefix::from_top(LevelPath::new(self.level, states, steps + 1)?)
    }

    pub fn sample_many(&self, steps: usize, count: usize, seed: u64) -> Result<Vec<VirtualPathPrefix>> {
        (0..count as u64).into_par_iter().map(|r| self.sample(steps, seed, r)).collect()
    }
}

/// `sample_vmc`: one coupled prefix of `X_0, ..., X_level`.
pub fn sample_vmc(nu: &VidPrefix, k: &VtmPrefix, level: usize, steps: usize, seed: u64) -> Result<VirtualPathPrefix> {
    VmcSampler::new(nu, k, level)?.sample(steps, seed, 0)
}

/// One entry of a decomposition track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackEntry {
    /// Level below the track's starting level.
    Below,
    /// The horizon does not decide this entry.
    Undetermined,
    State(State),
}

impl TrackEntry {
    pub fn state(self) -> Option<State> {
        match self {
            TrackEntry::State(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TrackEntryJson {
    State(State),
    Mark(String),
}

impl Serialize for TrackEntry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            TrackEntry::Below => TrackEntryJson::Mark("·".into()),
            TrackEntry::Undetermined => TrackEntryJson::Mark("?".into()),
            TrackEntry::State(x) => TrackEntryJson::State(x),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrackEntry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match TrackEntryJson::deserialize(d)? {
            TrackEntryJson::State(x) => Ok(TrackEntry::State(x)),
            TrackEntryJson::Mark(m) if m == "·" => Ok(TrackEntry::Below),
            TrackEntryJson::Mark(m) if m == "?" => Ok(TrackEntry::Undetermined),
            TrackEntryJson::Mark(m) => Err(serde::de::Error::custom(format!("unknown entry marker {m:?}"))),
        }
    }
}

/// Level-indexed values of one decomposition process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StaircaseTrack(pub Vec<TrackEntry>);

impl StaircaseTrack {
    pub fn entry(&self, n: usize) -> TrackEntry {
        self.0[n]
    }

    /// Every pair of adjacent determined entries either holds or jumps to
    /// the new level.
    pub fn satisfies_staircase(&self) -> bool {
        self.0.windows(2).enumerate().all(|(n, w)| match (w[0], w[1]) {
            (TrackEntry::State(x), TrackEntry::State(y)) => x == y || y == n + 1,
            _ => true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub a: State,
    pub k: usize,
    pub entries: StaircaseTrack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitCount {
    pub a: State,
    /// Visits seen by the top-level path.
    pub observed: usize,
    /// More visits may lie beyond the horizon.
    pub saturated: bool,
    /// Visits seen at each level `N ≥ a`, for cross-checking.
    pub per_level: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionPrefix {
    pub top_level: usize,
    pub s0: StaircaseTrack,
    pub components: Vec<Component>,
    pub visit_counts: Vec<VisitCount>,
}

impl DecompositionPrefix {
    pub fn component(&self, a: State, k: usize) -> Option<&StaircaseTrack> {
        self.components.iter().find(|c| c.a == a && c.k == k).map(|c| &c.entries)
    }
}

fn track_entry(path: &LevelPath, i: Option<usize>) -> TrackEntry {
    match i.and_then(|i| path.entry(i)) {
        Some(s) => TrackEntry::State(s),
        None => TrackEntry::Undetermined,
    }
}

/// `S^0` and `S^{a,k}` for `1 ≤ a ≤ max_a` and `k < kmax`.
pub fn staircase_decomposition(vp: &VirtualPathPrefix, max_a: State, kmax: usize) -> DecompositionPrefix {
    let top = vp.top_level();
    let s0 = StaircaseTrack((0..=top).map(|n| track_entry(vp.level(n), Some(0))).collect());
    let mut components = Vec::new();
    let mut visit_counts = Vec::new();
    for a in 1..=max_a {
        for k in 0..kmax {
            let entries = (0..=top)
                .map(|n| {
                    if n < a {
                        return TrackEntry::Below;
                    }
                    let path = vp.level(n);
                    match hitting_index_by(path, |s| s == a, k) {
                        HitResult::FoundAt(i) => track_entry(path, Some(i + 1)),
                        HitResult::ProvablyNever => TrackEntry::State(0),
                        HitResult::UnknownWithinHorizon => TrackEntry::Undetermined,
                    }
                })
                .collect();
            components.push(Component { a, k, entries: StaircaseTrack(entries) });
        }
        let count = |p: &LevelPath| p.determined_states().iter().filter(|&&s| s == a).count();
        visit_counts.push(VisitCount {
            a,
            observed: if a <= top { count(vp.top()) } else { 0 },
            saturated: a <= top && !vp.top().is_absorbed(),
            per_level: (a..=top).map(|n| count(vp.level(n))).collect(),
        });
    }
    DecompositionPrefix { top_level: top, s0, components, visit_counts }
}

/// The law of `S^{a,k}` given `V^a > k`: the extended row `K(a,·)`.
pub fn extend_sak_law(k: &VtmPrefix, a: State) -> Result<MarginalSequence> {
    row_of_vtm(k, a, k.top_level())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VisitVerdict {
    InfinitelyVisited,
    OnceVisited,
    NeverVisited,
    RandomlyVisited,
}

impl VisitVerdict {
    pub fn from_probabilities(q: &Rational, p: &Rational) -> Self {
        if q.is_zero() {
            VisitVerdict::NeverVisited
        } else if q.is_one() && p.is_one() {
            VisitVerdict::InfinitelyVisited
        } else if q.is_one() && p.is_zero() {
            VisitVerdict::OnceVisited
        } else {
            VisitVerdict::RandomlyVisited
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VisitVerdict::InfinitelyVisited => "infinitely-visited",
            VisitVerdict::OnceVisited => "once-visited",
            VisitVerdict::NeverVisited => "never-visited",
            VisitVerdict::RandomlyVisited => "randomly-visited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateClassification {
    pub a: State,
    /// `P(V^a ≥ 1)`.
    #[serde(with = "rational::serde_rational")]
    pub q: Rational,
    /// Probability of returning to `a` after a visit.
    #[serde(with = "rational::serde_rational")]
    pub p: Rational,
    pub verdict: VisitVerdict,
}

impl StateClassification {
    /// `P(V^a > k) = q·p^k`.
    pub fn survival(&self, k: usize) -> Rational {
        &self.q * num_traits::pow(self.p.clone(), k)
    }
}

/// Solves `m·x = b` exactly; `None` if `m` is singular.
fn solve(mut m: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        b.swap(col, pivot);
        let inv = Rational::one() / &m[col][col];
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = &m[r][col] * &inv;
            for c in col..n {
                let d = &f * &m[col][c];
                m[r][c] -= d;
            }
            let d = &f * &b[col];
            b[r] -= d;
        }
    }
    Some((0..n).map(|i| &b[i] / &m[i][i]).collect())
}

/// `h(x) = P_x(hit a)` for the chain `k`, with `h(a) = 1`.
fn hitting_probabilities(k: &StochasticLevelMatrix, a: State) -> Result<Vec<Rational>> {
    let size = k.level() + 1;
    // states that can reach a
    let mut reaches = vec![false; size];
    reaches[a] = true;
    let mut queue = VecDeque::from([a]);
    while let Some(y) = queue.pop_front() {
        for x in 0..size {
            if !reaches[x] && k.get(x, y).is_positive() {
                reaches[x] = true;
                queue.push_back(x);
            }
        }
    }
    let transient: Vec<State> = (0..size).filter(|&x| reaches[x] && x != a).collect();
    let index = |x: State| transient.binary_search(&x).ok();
    let mut m = vec![vec![Rational::zero(); transient.len()]; transient.len()];
    let mut rhs = Vec::with_capacity(transient.len());
    for (i, &x) in transient.iter().enumerate() {
        m[i][i] = Rational::one();
        for (y, w) in k.row(x).iter().enumerate() {
            if let Some(j) = index(y) {
                m[i][j] -= w;
            }
        }
        rhs.push(k.get(x, a).clone());
    }
    let sol = solve(m, rhs).ok_or(VmcError::SingularSystem { state: a })?;
    let mut h = vec![Rational::zero(); size];
    h[a] = Rational::one();
    for (x, v) in transient.into_iter().zip(sol) {
        h[x] = v;
    }
    Ok(h)
}

/// Exact `(q_a, p_a)` from the level-`a` chain.
pub fn classify_state(nu: &VidPrefix, k: &VtmPrefix, a: State) -> Result<StateClassification> {
    if a == 0 {
        return Err(VmcError::ParameterOutOfRange("visit classification needs a ≥ 1".into()));
    }
    if a > nu.top_level() {
        return Err(VmcError::PrefixTooShort { needed: a, available: nu.top_level() });
    }
    k.require(a)?;
    let ka = k.level(a);
    let h = hitting_probabilities(ka, a)?;
    let dot = |w: &[Rational]| w.iter().zip(&h).map(|(x, y)| x * y).sum::<Rational>();
    let q = dot(nu.level(a).weights());
    let p = dot(ka.row(a));
    let verdict = VisitVerdict::from_probabilities(&q, &p);
    Ok(StateClassification { a, q, p, verdict })
}

/// Classifies `1..=max_a` in parallel.
pub fn classify_states(nu: &VidPrefix, k: &VtmPrefix, max_a: State) -> Result<Vec<StateClassification>> {
    (1..=max_a).into_par_iter().map(|a| classify_state(nu, k, a)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelIrreducibility {
    pub level: usize,
    /// `⟦1,N⟧` is strongly connected under the positive entries of `K_N`.
    pub strongly_connected: bool,
    /// No mass leaks from `⟦1,N⟧` to 0.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrreducibilityReport {
    pub levels: Vec<LevelIrreducibility>,
}

impl IrreducibilityReport {
    pub fn irreducible(&self) -> bool {
        self.levels.iter().all(|l| l.strongly_connected)
    }

    /// Irreducible and closed at every level: every `a ≥ 1` is recurrent.
    pub fn recurrent(&self) -> bool {
        self.levels.iter().all(|l| l.strongly_connected && l.closed)
    }
}

fn all_reached(n: usize, edge: impl Fn(State, State) -> bool) -> bool {
    let mut seen = vec![false; n + 1];
    seen[1] = true;
    let mut stack = vec![1];
    let mut count = 1;
    while let Some(x) = stack.pop() {
        for y in 1..=n {
            if !seen[y] && edge(x, y) {
                seen[y] = true;
                count += 1;
                stack.push(y);
            }
        }
    }
    count == n
}

pub fn irreducible(k: &VtmPrefix) -> IrreducibilityReport {
    let levels = k
        .levels()
        .enumerate()
        .map(|(n, m)| {
            let strongly_connected = n == 0
                || (all_reached(n, |x, y| m.get(x, y).is_positive()) && all_reached(n, |x, y| m.get(y, x).is_positive()));
            let closed = (1..=n).all(|a| m.get(a, 0).is_zero());
            LevelIrreducibility { level: n, strongly_connected, closed }
        })
        .collect();
    IrreducibilityReport { levels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Family, LevelDistribution, VtmGenerator};
    use crate::rational::{int, parse_rational, ratio};
    use crate::kernels::Balayage;
    use crate::simplex::delta_point;

    fn clique(top: usize) -> VtmPrefix {
        VtmGenerator::new(Family::InfiniteClique).unwrap().prefix(top).unwrap()
    }

    fn example_prefix() -> VirtualPathPrefix {
        let rows: [&[State]; 6] = [
            &[0],
            &[1, 1, 0],
            &[2, 1, 1, 2, 0],
            &[2, 3, 1, 1, 2, 0],
            &[4, 2, 3, 1, 4, 1, 2, 0],
            &[4, 5, 2, 3, 1, 5, 4, 1, 2, 0],
        ];
        let levels = rows.iter().enumerate().map(|(n, r)| LevelPath::determined(n, r.to_vec()).unwrap()).collect();
        VirtualPathPrefix::new(levels).unwrap()
    }

    fn states(t: &StaircaseTrack) -> Vec<Option<State>> {
        t.0.iter().map(|e| e.state()).collect()
    }

    #[test]
    fn worked_decomposition() {
        let vp = example_prefix();
        assert!(crate::levels::validate_virtual_prefix(&vp).is_empty());
        let d = staircase_decomposition(&vp, 2, 2);
        let s = |v: &[i64]| v.iter().map(|&x| (x >= 0).then_some(x as usize)).collect::<Vec<_>>();
        assert_eq!(states(&d.s0), s(&[0, 1, 2, 2, 4, 4]));
        assert_eq!(states(d.component(1, 0).unwrap()), s(&[-1, 1, 1, 1, 4, 5]));
        assert_eq!(states(d.component(1, 1).unwrap()), s(&[-1, 0, 2, 2, 2, 2]));
        assert_eq!(states(d.component(2, 0).unwrap()), s(&[-1, -1, 1, 3, 3, 3]));
        assert_eq!(states(d.component(2, 1).unwrap()), s(&[-1, -1, 0, 0, 0, 0]));
        assert_eq!(d.component(2, 1).unwrap().entry(1), TrackEntry::Below);
        assert!(d.components.iter().all(|c| c.entries.satisfies_staircase()));
        assert_eq!(d.visit_counts[0].observed, 2);
        assert!(!d.visit_counts[0].saturated);
    }

    #[test]
    fn decomposition_json_mirrors_table() {
        let d = staircase_decomposition(&example_prefix(), 2, 2);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["components"][0]["entries"], serde_json::json!(["·", 1, 1, 1, 4, 5]));
        let back: DecompositionPrefix = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn short_horizon_leaves_entries_undetermined() {
        let top = LevelPath::determined(3, vec![3, 3, 2]).unwrap();
        let d = staircase_decomposition(&VirtualPathPrefix::from_top(top).unwrap(), 1, 1);
        let t = d.component(1, 0).unwrap();
        assert!((1..=3).all(|n| t.entry(n) == TrackEntry::Undetermined));
        assert_eq!(d.s0.entry(1), TrackEntry::Undetermined);
        assert_eq!(d.s0.entry(2), TrackEntry::State(2));
        assert!(d.visit_counts[0].saturated);
    }

    #[test]
    fn zero_prefix_decomposes_to_zeros() {
        let vp = VirtualPathPrefix::from_top(LevelPath::determined(4, vec![0]).unwrap()).unwrap();
        let d = staircase_decomposition(&vp, 4, 3);
        assert!(d.s0.0.iter().all(|e| *e == TrackEntry::State(0)));
        for c in &d.components {
            assert!((c.a..=4).all(|n| c.entries.entry(n) == TrackEntry::State(0)));
        }
    }

    #[test]
    fn decomposition_commutes_with_projection() {
        let k = clique(6);
        let pi = Balayage::of_vtm(&k).unwrap();
        let nu = delta_point(&pi, 1, 6).unwrap().to_vid();
        let sampler = VmcSampler::new(&nu, &k, 6).unwrap();
        for r in 0..30 {
            let vp = sampler.sample(40, 3, r).unwrap();
            let full = staircase_decomposition(&vp, 3, 3);
            for n in 0..6 {
                // the level-n path with its own determined part as the top
                let low = LevelPath::determined(n, vp.level(n).determined_states().to_vec()).unwrap();
                let low = VirtualPathPrefix::from_top(low).unwrap();
                let part = staircase_decomposition(&low, 3, 3);
                for c in &part.components {
                    let whole = full.component(c.a, c.k).unwrap();
                    for m in 0..=n {
                        if let (Some(x), Some(y)) = (c.entries.entry(m).state(), whole.entry(m).state()) {
                            assert_eq!(x, y);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sampler_errors() {
        let k = clique(3);
        let zero = VidPrefix::zero(3);
        let s = VmcSampler::new(&zero, &k, 3).unwrap();
        assert!(matches!(s.sample(0, 0, 0), Err(VmcError::ZeroHorizon)));
        let vp = s.sample(10, 0, 0).unwrap();
        assert!(vp.levels().iter().all(|p| p.entries().all(|e| e == Some(0))));
        // δ_2 at every level is not compatible with the clique
        let bad = VidPrefix::new(vec![
            LevelDistribution::point(0, 0),
            LevelDistribution::point(1, 0),
            LevelDistribution::point(2, 2),
            LevelDistribution::point(3, 2),
        ])
        .unwrap();
        assert!(matches!(VmcSampler::new(&bad, &k, 3), Err(VmcError::Incompatible(_))));
    }

    #[test]
    fn clique_one_step_frequencies() {
        let k = clique(2);
        let nu = delta_point(&Balayage::of_vtm(&k).unwrap(), 1, 2).unwrap().to_vid();
        let vp = VmcSampler::new(&nu, &k, 2).unwrap().sample(100_000, 11, 0).unwrap();
        let path = vp.top().determined_states();
        let (mut from1, mut to2) = (0usize, 0usize);
        for w in path.windows(2).filter(|w| w[0] == 1) {
            from1 += 1;
            to2 += (w[1] == 2) as usize;
        }
        let f = to2 as f64 / from1 as f64;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn classification_examples() {
        let k = clique(8);
        let pi = Balayage::of_vtm(&k).unwrap();
        let nu = delta_point(&pi, 1, 8).unwrap().to_vid();
        for a in 1..=8 {
            let c = classify_state(&nu, &k, a).unwrap();
            assert_eq!((c.q.clone(), c.p.clone(), c.verdict), (int(1), int(1), VisitVerdict::InfinitelyVisited));
        }
        let c = classify_state(&VidPrefix::zero(8), &k, 5).unwrap();
        assert_eq!(c.verdict, VisitVerdict::NeverVisited);

        // 1 -> 2 -> 0 on a classical chain started at 2: state 2 is visited once
        let m = |s: &str| parse_rational(s).unwrap();
        let rows = vec![vec![m("1"), m("0"), m("0")], vec![m("0"), m("0"), m("1")], vec![m("1"), m("0"), m("0")]];
        let kk = VtmGenerator::new(Family::Classical { matrix: rows }).unwrap().prefix(2).unwrap();
        // ν_2 = δ_2 forces ν_1 = π_1 = δ_0
        let nu = VidPrefix::new(vec![
            LevelDistribution::point(0, 0),
            LevelDistribution::point(1, 0),
            LevelDistribution::point(2, 2),
        ])
        .unwrap();
        let c = classify_state(&nu, &kk, 2).unwrap();
        assert_eq!((c.q, c.p, c.verdict), (int(1), int(0), VisitVerdict::OnceVisited));
    }

    #[test]
    fn random_visits_from_a_leaky_chain() {
        let m = |s: &str| parse_rational(s).unwrap();
        // from 1: stay 1/4, die 3/4; start at 1 with probability 1/2
        let rows = vec![vec![m("1"), m("0")], vec![m("3/4"), m("1/4")]];
        let k = VtmGenerator::new(Family::Classical { matrix: rows }).unwrap().prefix(1).unwrap();
        let nu = VidPrefix::new(vec![LevelDistribution::point(0, 0), LevelDistribution::uniform(1, 0, 1)]).unwrap();
        let c = classify_state(&nu, &k, 1).unwrap();
        assert_eq!((c.q.clone(), c.p.clone()), (ratio(1, 2), ratio(1, 4)));
        assert_eq!(c.verdict, VisitVerdict::RandomlyVisited);
        assert_eq!(c.survival(2), ratio(1, 32));
    }

    #[test]
    fn exact_solver() {
        let a = vec![vec![int(2), int(1)], vec![int(1), int(3)]];
        assert_eq!(solve(a, vec![int(3), int(5)]).unwrap(), vec![ratio(4, 5), ratio(7, 5)]);
        assert!(solve(vec![vec![int(1), int(2)], vec![int(2), int(4)]], vec![int(1), int(2)]).is_none());
    }

    #[test]
    fn irreducibility() {
        assert!(irreducible(&clique(10)).recurrent());
        let ladders = VtmGenerator::new(Family::TwoLadders).unwrap().prefix(12).unwrap();
        assert!(irreducible(&ladders).recurrent());
        let m = |s: &str| parse_rational(s).unwrap();
        let rows = vec![
            vec![m("1"), m("0"), m("0")],
            vec![m("0"), m("1"), m("0")],
            vec![m("0"), m("1/2"), m("1/2")],
        ];
        let k = VtmGenerator::new(Family::Classical { matrix: rows }).unwrap().prefix(2).unwrap();
        let rep = irreducible(&k);
        assert!(!rep.irreducible());
        assert!(rep.levels[1].strongly_connected);
        assert!(!rep.levels[2].strongly_connected);
    }

    #[test]
    fn sak_law_rows() {
        let k = clique(6);
        assert_eq!(extend_sak_law(&k, 2).unwrap().levels(), MarginalSequence::virtual_uniform(6).levels());
    }
}
