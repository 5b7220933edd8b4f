//! Virtual initial distributions, virtual transition matrices and balayages.
//!
//! Everything here is exact. A VTM is supplied level by level (by a
//! [`VtmGenerator`] or explicitly) and its projectivity is *checked*, never
//! assumed.

use std::sync::{Arc, RwLock};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::levels::State;
use crate::rational::{self, serde_rational_mat, serde_rational_vec, Rational};

/// An exact probability vector on `⟦0,N⟧`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawVec", into = "RawVec")]
pub struct LevelDistribution {
    weights: Vec<Rational>,
}

#[derive(Serialize, Deserialize)]
struct RawVec(#[serde(with = "serde_rational_vec")] Vec<Rational>);

impl TryFrom<RawVec> for LevelDistribution {
    type Error = VmcError;
    fn try_from(r: RawVec) -> Result<Self> {
        Self::new(r.0)
    }
}

impl From<LevelDistribution> for RawVec {
    fn from(d: LevelDistribution) -> Self {
        RawVec(d.weights)
    }
}

impl LevelDistribution {
    pub fn new(weights: Vec<Rational>) -> Result<Self> {
        if weights.is_empty() {
            return Err(VmcError::InvalidDistribution {
                level: 0,
                reason: "empty weight vector".into(),
            });
        }
        let level = weights.len() - 1;
        if let Some(b) = weights.iter().position(|w| w.is_negative()) {
            return Err(VmcError::InvalidDistribution {
                level,
                reason: format!("negative weight at state {b}"),
            });
        }
        let total: Rational = weights.iter().sum();
        if !total.is_one() {
            return Err(VmcError::InvalidDistribution {
                level,
                reason: format!("weights sum to {total}"),
            });
        }
        Ok(LevelDistribution { weights })
    }

    /// Skips validation; for values produced by exact algebra on valid inputs.
    pub(crate) fn new_unchecked(weights: Vec<Rational>) -> Self {
        debug_assert!(weights.iter().sum::<Rational>().is_one());
        LevelDistribution { weights }
    }

    /// The point mass `δ_a` on `⟦0,level⟧`.
    pub fn point(level: usize, a: State) -> Self {
        assert!(a <= level, "δ_{a} does not live on ⟦0,{level}⟧");
        let mut w = vec![Rational::zero(); level + 1];
        w[a] = Rational::one();
        LevelDistribution { weights: w }
    }

    /// Uniform law on `⟦lo,hi⟧ ⊆ ⟦0,level⟧`.
    pub fn uniform(level: usize, lo: State, hi: State) -> Self {
        assert!(lo <= hi && hi <= level);
        let mass = rational::ratio(1, (hi - lo + 1) as i64);
        let mut w = vec![Rational::zero(); level + 1];
        for x in &mut w[lo..=hi] {
            *x = mass.clone();
        }
        LevelDistribution { weights: w }
    }

    pub fn level(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<Rational> {
        self.weights
    }

    /// `ν(b)`; states above the level carry no mass.
    pub fn weight(&self, b: State) -> Rational {
        self.weights.get(b).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn support(&self) -> Vec<State> {
        (0..self.weights.len()).filter(|&b| !self.weights[b].is_zero()).collect()
    }

    pub fn point_mass(&self) -> Option<State> {
        self.weights.iter().position(|w| w.is_one())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.weights.iter().map(rational::to_f64).collect()
    }
}

/// Total variation distance between two probability vectors (padding the
/// shorter with zeros).
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// A row-stochastic `(N+1)×(N+1)` matrix with 0 absorbing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMat", into = "RawMat")]
pub struct StochasticLevelMatrix {
    rows: Vec<Vec<Rational>>,
}

#[derive(Serialize, Deserialize)]
struct RawMat(#[serde(with = "serde_rational_mat")] Vec<Vec<Rational>>);

impl TryFrom<RawMat> for StochasticLevelMatrix {
    type Error = VmcError;
    fn try_from(r: RawMat) -> Result<Self> {
        Self::new(r.0)
    }
}

impl From<StochasticLevelMatrix> for RawMat {
    fn from(m: StochasticLevelMatrix) -> Self {
        RawMat(m.rows)
    }
}

impl StochasticLevelMatrix {
    pub fn new(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(VmcError::InvalidMatrix { level: 0, reason: "no rows".into() });
        }
        let level = n - 1;
        let bad = |reason: String| Err(VmcError::InvalidMatrix { level, reason });
        for (a, row) in rows.iter().enumerate() {
            if row.len() != n {
                return bad(format!("row {a} has {} entries, expected {n}", row.len()));
            }
            if let Some(b) = row.iter().position(|w| w.is_negative()) {
                return bad(format!("negative entry at ({a},{b})"));
            }
            let total: Rational = row.iter().sum();
            if !total.is_one() {
                return bad(format!("row {a} sums to {total}"));
            }
        }
        if !rows[0][0].is_one() {
            return bad("state 0 is not absorbing".into());
        }
        Ok(StochasticLevelMatrix { rows })
    }

    pub(crate) fn new_unchecked(rows: Vec<Vec<Rational>>) -> Self {
        StochasticLevelMatrix { rows }
    }

    pub fn level(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, a: State, b: State) -> &Rational {
        &self.rows[a][b]
    }

    pub fn row(&self, a: State) -> &[Rational] {
        &self.rows[a]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }
}

/// Projects `K_{N+1}` to level `N` by the block formula: with
/// `p = K(N+1,N+1)`, the `(N+1)`-column mass `u` is spread along the
/// normalised last row when `p < 1`, and sent to 0 when `p = 1`.
pub fn project_matrix(k: &StochasticLevelMatrix) -> Result<StochasticLevelMatrix> {
    let top = k.level();
    if top == 0 {
        return Err(VmcError::InvalidMatrix {
            level: 0,
            reason: "level 0 has no projection".into(),
        });
    }
    let n = top - 1;
    let p = k.get(top, top);
    let mut out = vec![vec![Rational::zero(); n + 1]; n + 1];
    out[0][0] = Rational::one();
    if p.is_one() {
        for a in 1..=n {
            let u = k.get(a, top);
            for b in 0..=n {
                out[a][b] = k.get(a, b).clone();
            }
            out[a][0] += u;
        }
    } else {
        let escape = Rational::one() - p;
        let q = k.get(top, 0) / &escape;
        let v: Vec<Rational> = (1..=n).map(|b| k.get(top, b) / &escape).collect();
        for a in 1..=n {
            let u = k.get(a, top);
            out[a][0] = k.get(a, 0) + &q * u;
            if u.is_zero() {
                out[a][1..=n].clone_from_slice(&k.row(a)[1..=n]);
            } else {
                for b in 1..=n {
                    out[a][b] = k.get(a, b) + u * &v[b - 1];
                }
            }
        }
    }
    Ok(StochasticLevelMatrix::new_unchecked(out))
}

/// `π_N^K` from `K_{N+1}`: where a particle started at `N+1` first lands in
/// `⟦0,N⟧`; a particle trapped at `N+1` is sent to 0.
pub fn balayage_row(k: &StochasticLevelMatrix) -> Result<LevelDistribution> {
    let top = k.level();
    if top == 0 {
        return Err(VmcError::InvalidMatrix {
            level: 0,
            reason: "level 0 defines no balayage row".into(),
        });
    }
    let p = k.get(top, top);
    if p.is_one() {
        return Ok(LevelDistribution::point(top - 1, 0));
    }
    let escape = Rational::one() - p;
    Ok(LevelDistribution::new_unchecked(
        k.row(top)[..top].iter().map(|w| w / &escape).collect(),
    ))
}

/// Finite prefix `K_0, ..., K_L` of a virtual transition matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VtmPrefix {
    levels: Vec<Arc<StochasticLevelMatrix>>,
}

impl VtmPrefix {
    pub fn new(levels: Vec<StochasticLevelMatrix>) -> Result<Self> {
        Self::from_shared(levels.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(levels: Vec<Arc<StochasticLevelMatrix>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(VmcError::InvalidMatrix { level: 0, reason: "empty VTM prefix".into() });
        }
        for (n, m) in levels.iter().enumerate() {
            if m.level() != n {
                return Err(VmcError::InvalidMatrix {
                    level: m.level(),
                    reason: format!("found at position {n} of the prefix"),
                });
            }
        }
        Ok(VtmPrefix { levels })
    }

    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &StochasticLevelMatrix {
        &self.levels[n]
    }

    pub fn levels(&self) -> impl Iterator<Item = &StochasticLevelMatrix> {
        self.levels.iter().map(|m| m.as_ref())
    }

    pub fn truncated(&self, top: usize) -> Result<Self> {
        self.require(top)?;
        Ok(VtmPrefix { levels: self.levels[..=top].to_vec() })
    }

    pub(crate) fn require(&self, level: usize) -> Result<()> {
        if level > self.top_level() {
            Err(VmcError::PrefixTooShort { needed: level, available: self.top_level() })
        } else {
            Ok(())
        }
    }
}

impl Serialize for VtmPrefix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.levels.iter().map(|m| m.as_ref()))
    }
}

impl<'de> Deserialize<'de> for VtmPrefix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let levels = Vec::<StochasticLevelMatrix>::deserialize(d)?;
        VtmPrefix::new(levels).map_err(serde::de::Error::custom)
    }
}

/// Finite prefix `ν_0, ..., ν_L` of a virtual initial distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LevelDistribution>", into = "Vec<LevelDistribution>")]
pub struct VidPrefix {
    levels: Vec<LevelDistribution>,
}

impl VidPrefix {
    /// Checks level indexing and monotonicity `ν_N(a) ≥ ν_{N+1}(a)`.
    pub fn new(levels: Vec<LevelDistribution>) -> Result<Self> {
        check_monotone(&levels)?;
        Ok(VidPrefix { levels })
    }

    /// `𝟎`: all mass at the cemetery.
    pub fn zero(top: usize) -> Self {
        VidPrefix { levels: (0..=top).map(|n| LevelDistribution::point(n, 0)).collect() }
    }

    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &LevelDistribution {
        &self.levels[n]
    }

    pub fn levels(&self) -> &[LevelDistribution] {
        &self.levels
    }

    pub fn truncated(&self, top: usize) -> Result<Self> {
        if top > self.top_level() {
            return Err(VmcError::PrefixTooShort { needed: top, available: self.top_level() });
        }
        Ok(VidPrefix { levels: self.levels[..=top].to_vec() })
    }
}

impl TryFrom<Vec<LevelDistribution>> for VidPrefix {
    type Error = VmcError;
    fn try_from(v: Vec<LevelDistribution>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<VidPrefix> for Vec<LevelDistribution> {
    fn from(v: VidPrefix) -> Self {
        v.levels
    }
}

/// Level indexing plus monotone projectivity; shared by every sequence type.
pub(crate) fn check_monotone(levels: &[LevelDistribution]) -> Result<()> {
    if levels.is_empty() {
        return Err(VmcError::InvalidDistribution { level: 0, reason: "empty sequence".into() });
    }
    for (n, d) in levels.iter().enumerate() {
        if d.level() != n {
            return Err(VmcError::InvalidDistribution {
                level: d.level(),
                reason: format!("found at position {n} of the sequence"),
            });
        }
    }
    for n in 0..levels.len() - 1 {
        for a in 0..=n {
            if levels[n].weights[a] < levels[n + 1].weights[a] {
                return Err(VmcError::InvalidDistribution {
                    level: n,
                    reason: format!("mass at state {a} grows from level {n} to level {}", n + 1),
                });
            }
        }
    }
    Ok(())
}

/// The point-mass balayages with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedBalayage {
    /// `π_N = δ_N`.
    Down,
    /// `π_0 = δ_0`, `π_N = δ_{N-1}`.
    TwoDown,
    /// `π_0 = δ_0`, `π_N = U⟦1,N⟧`.
    Uniform,
}

impl NamedBalayage {
    pub fn row(self, n: usize) -> LevelDistribution {
        match (self, n) {
            (NamedBalayage::Down, _) => LevelDistribution::point(n, n),
            (_, 0) => LevelDistribution::point(0, 0),
            (NamedBalayage::TwoDown, _) => LevelDistribution::point(n, n - 1),
            (NamedBalayage::Uniform, _) => LevelDistribution::uniform(n, 1, n),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedBalayage::Down => "down",
            NamedBalayage::TwoDown => "two_down",
            NamedBalayage::Uniform => "uniform",
        }
    }
}

/// Backward transition laws `π_0, ..., π_{L-1}` (`rows[N]` lives on `⟦0,N⟧`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Balayage {
    rows: Vec<LevelDistribution>,
    sparse: Vec<Vec<(State, Rational)>>,
    runs: Vec<Vec<Run>>,
}

/// A maximal block `lo..=hi` of equal nonzero weight inside one row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Run {
    pub lo: State,
    pub hi: State,
    pub value: Rational,
}

fn runs_of(sparse: &[(State, Rational)]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (b, w) in sparse {
        match runs.last_mut() {
            Some(r) if r.hi + 1 == *b && r.value == *w => r.hi = *b,
            _ => runs.push(Run { lo: *b, hi: *b, value: w.clone() }),
        }
    }
    runs
}

impl Balayage {
    pub fn new(rows: Vec<LevelDistribution>) -> Result<Self> {
        for (n, r) in rows.iter().enumerate() {
            if r.level() != n {
                return Err(VmcError::InvalidDistribution {
                    level: r.level(),
                    reason: format!("balayage row found at position {n}"),
                });
            }
        }
        let sparse: Vec<Vec<(State, Rational)>> = rows
            .iter()
            .map(|r| {
                r.weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| !w.is_zero())
                    .map(|(b, w)| (b, w.clone()))
                    .collect()
            })
            .collect();
        let runs = sparse.iter().map(|s| runs_of(s)).collect();
        Ok(Balayage { rows, sparse, runs })
    }

    /// The first `len` rows of a named balayage.
    pub fn named(kind: NamedBalayage, len: usize) -> Self {
        Self::new((0..len).map(|n| kind.row(n)).collect()).expect("named rows are well formed")
    }

    /// `π^K`, one row per level below the top of the prefix.
    pub fn of_vtm(k: &VtmPrefix) -> Result<Self> {
        let rows = (1..=k.top_level()).map(|n| balayage_row(k.level(n))).collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    /// Number of rows; `π_N` is available for `N < len()`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, n: usize) -> &LevelDistribution {
        &self.rows[n]
    }

    pub fn rows(&self) -> &[LevelDistribution] {
        &self.rows
    }

    /// Nonzero entries of `π_N` in increasing state order.
    pub fn sparse_row(&self, n: usize) -> &[(State, Rational)] {
        &self.sparse[n]
    }

    pub(crate) fn runs(&self, n: usize) -> &[Run] {
        &self.runs[n]
    }

    pub fn truncated(&self, len: usize) -> Result<Self> {
        self.require(len)?;
        Ok(Balayage {
            rows: self.rows[..len].to_vec(),
            sparse: self.sparse[..len].to_vec(),
            runs: self.runs[..len].to_vec(),
        })
    }

    /// Which named balayage agrees with every stored row, if any.
    pub fn recognize(&self) -> Option<NamedBalayage> {
        [NamedBalayage::Down, NamedBalayage::TwoDown, NamedBalayage::Uniform]
            .into_iter()
            .find(|k| self.rows.iter().enumerate().all(|(n, r)| *r == k.row(n)))
    }

    /// Every row is a point mass. Such balayages have a compact (and totally
    /// disconnected) set of extreme points.
    pub fn is_point_mass(&self) -> bool {
        self.sparse.iter().all(|r| r.len() == 1)
    }

    /// Errors unless rows `π_0..π_{len-1}` exist.
    pub(crate) fn require(&self, len: usize) -> Result<()> {
        if len > self.rows.len() {
            Err(VmcError::PrefixTooShort { needed: len, available: self.rows.len() })
        } else {
            Ok(())
        }
    }
}

impl Serialize for Balayage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Balayage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<LevelDistribution>::deserialize(d)?;
        Balayage::new(rows).map_err(serde::de::Error::custom)
    }
}

/// Failure of `P_N(K_{N+1}) = K_N` at entry `(row, col)` of level `level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectivityViolation {
    pub level: usize,
    pub row: State,
    pub col: State,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VtmReport {
    pub checked_levels: usize,
    pub violations: Vec<ProjectivityViolation>,
}

impl VtmReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks projectivity at every level pair, reporting the first bad entry
/// per level.
pub fn validate_vtm(k: &VtmPrefix) -> VtmReport {
    let mut violations = Vec::new();
    for n in 0..k.top_level() {
        let projected = match project_matrix(k.level(n + 1)) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let lower = k.level(n);
        'scan: for a in 0..=n {
            for b in 0..=n {
                if projected.get(a, b) != lower.get(a, b) {
                    violations.push(ProjectivityViolation { level: n, row: a, col: b });
                    break 'scan;
                }
            }
        }
    }
    VtmReport { checked_levels: k.top_level() + 1, violations }
}

/// Failure of `ν_N(a) = ν_{N+1}(a) + ν_{N+1}(N+1)·π_N(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibilityViolation {
    pub level: usize,
    pub state: State,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub checked_levels: usize,
    pub violations: Vec<CompatibilityViolation>,
}

impl CompatibilityReport {
    pub fn is_compatible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the compatibility recursion for every level of `ν`; `K` must reach
/// at least as high.
pub fn validate_compatibility(nu: &VidPrefix, k: &VtmPrefix) -> Result<CompatibilityReport> {
    if k.top_level() < nu.top_level() {
        return Err(VmcError::LengthMismatch(format!(
            "VID reaches level {} but VTM only {}",
            nu.top_level(),
            k.top_level()
        )));
    }
    let mut violations = Vec::new();
    for n in 0..nu.top_level() {
        let pi = balayage_row(k.level(n + 1))?;
        if let Some(state) = first_recursion_violation(nu.level(n), nu.level(n + 1), &pi) {
            violations.push(CompatibilityViolation { level: n, state });
        }
    }
    Ok(CompatibilityReport { checked_levels: nu.top_level() + 1, violations })
}

/// First `a` where `lower(a) ≠ upper(a) + upper(N+1)·π(a)`.
pub(crate) fn first_recursion_violation(
    lower: &LevelDistribution,
    upper: &LevelDistribution,
    pi: &LevelDistribution,
) -> Option<State> {
    let n = lower.level();
    let jump = &upper.weights[n + 1];
    (0..=n).find(|&a| lower.weights[a] != &upper.weights[a] + jump * &pi.weights[a])
}

/// The catalogued VTM families, in their JSON model form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Row 1 jumps to `N`; row `a ≥ 2` steps to `a-1` with probability
    /// `q[a-2]` (the `(a-1)`-th parameter) and jumps to `N` otherwise. The
    /// last listed parameter is reused for all later rows.
    DownFromInfinity {
        #[serde(with = "serde_rational_vec")]
        q: Vec<Rational>,
    },
    TwoLadders,
    InfiniteClique,
    /// A finite chain on `{0, ..., n-1}` with 0 absorbing; higher states are
    /// killed to 0 and never entered.
    Classical {
        #[serde(with = "serde_rational_mat")]
        matrix: Vec<Vec<Rational>>,
    },
    Explicit { levels: Vec<StochasticLevelMatrix> },
}

/// An analytic statement about `K(a,·)` for every `a ≥ from`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowTailFact {
    pub from: State,
    pub extreme: bool,
    pub statement: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyFacts {
    /// `⟦1,N⟧` is a closed communicating class at every level.
    pub irreducible_closed: Option<bool>,
    pub row_tail: Option<RowTailFact>,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::DownFromInfinity { .. } => "down_from_infinity",
            Family::TwoLadders => "two_ladders",
            Family::InfiniteClique => "infinite_clique",
            Family::Classical { .. } => "classical",
            Family::Explicit { .. } => "explicit",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Family::DownFromInfinity { q } => {
                if q.is_empty() {
                    return Err(VmcError::InvalidModel("q must list at least one value".into()));
                }
                if let Some(j) = q.iter().position(|x| x.is_negative() || *x > Rational::one()) {
                    return Err(VmcError::InvalidModel(format!("q_{} = {} not in [0,1]", j + 1, q[j])));
                }
                Ok(())
            }
            Family::Classical { matrix } => {
                StochasticLevelMatrix::new(matrix.clone()).map(|_| ()).map_err(|e| VmcError::InvalidModel(e.to_string()))
            }
            Family::Explicit { levels } => {
                VtmPrefix::new(levels.clone()).map(|_| ()).map_err(|e| VmcError::InvalidModel(e.to_string()))
            }
            Family::TwoLadders | Family::InfiniteClique => Ok(()),
        }
    }

    /// Highest level the family defines, if bounded.
    pub fn max_level(&self) -> Option<usize> {
        match self {
            Family::Explicit { levels } => Some(levels.len() - 1),
            _ => None,
        }
    }

    /// `q_j` (1-based) for the down-from-infinity family.
    fn q(q: &[Rational], j: usize) -> &Rational {
        &q[(j - 1).min(q.len() - 1)]
    }

    pub fn facts(&self) -> FamilyFacts {
        match self {
            Family::DownFromInfinity { q } => {
                let last = q.last().unwrap();
                FamilyFacts {
                    irreducible_closed: Some(q.iter().all(|x| x.is_positive())),
                    row_tail: Some(RowTailFact {
                        from: q.len() + 1,
                        extreme: last.is_one() || last.is_zero(),
                        statement: format!("K(a,·) = {last}·δ_(a-1) + (1-{last})·lim δ_a"),
                    }),
                }
            }
            Family::TwoLadders => FamilyFacts {
                irreducible_closed: Some(true),
                row_tail: Some(RowTailFact {
                    from: 3,
                    extreme: true,
                    statement: "K(a,·) = δ_(a-2)".into(),
                }),
            },
            Family::InfiniteClique => FamilyFacts {
                irreducible_closed: Some(true),
                row_tail: Some(RowTailFact {
                    from: 1,
                    extreme: true,
                    statement: "K(a,·) = U, the virtual uniform distribution".into(),
                }),
            },
            Family::Classical { matrix } => FamilyFacts {
                irreducible_closed: None,
                row_tail: Some(RowTailFact {
                    from: matrix.len(),
                    extreme: true,
                    statement: "states beyond the finite chain are killed: K(a,·) = 0".into(),
                }),
            },
            Family::Explicit { .. } => FamilyFacts::default(),
        }
    }

    /// `K_N` for the closed-form families (not `Classical` below its top).
    fn closed_form(&self, n: usize) -> Option<Vec<Vec<Rational>>> {
        let mut rows = vec![vec![Rational::zero(); n + 1]; n + 1];
        rows[0][0] = Rational::one();
        match self {
            Family::DownFromInfinity { q } => {
                if n >= 1 {
                    rows[1][n] = Rational::one();
                }
                for a in 2..=n {
                    let qa = Self::q(q, a - 1);
                    rows[a][a - 1] = qa.clone();
                    rows[a][n] = Rational::one() - qa;
                }
            }
            Family::TwoLadders => {
                if n == 1 {
                    rows[1][1] = Rational::one();
                }
                if n >= 2 {
                    for row in &mut rows[1..=2] {
                        row[n - 1] = rational::ratio(1, 2);
                        row[n] = rational::ratio(1, 2);
                    }
                }
                for a in 3..=n {
                    rows[a][a - 2] = Rational::one();
                }
            }
            Family::InfiniteClique => {
                if n >= 1 {
                    let w = rational::ratio(1, n as i64);
                    for row in &mut rows[1..] {
                        for x in &mut row[1..] {
                            *x = w.clone();
                        }
                    }
                }
            }
            Family::Classical { matrix } => {
                let size = matrix.len();
                if n + 1 < size {
                    return None;
                }
                for (a, row) in matrix.iter().enumerate() {
                    rows[a][..size].clone_from_slice(row);
                }
                for row in &mut rows[size..] {
                    row[0] = Rational::one();
                }
            }
            Family::Explicit { levels } => return levels.get(n).map(|m| m.rows.clone()),
        }
        Some(rows)
    }
}

/// Produces `K_N` of a [`Family`] on demand, caching validated levels.
///
/// Reads are concurrent; a missing level is computed outside the lock and
/// inserted only if no other thread got there first, so fills are
/// idempotent.
#[derive(Debug)]
pub struct VtmGenerator {
    family: Family,
    cache: RwLock<Vec<Option<Arc<StochasticLevelMatrix>>>>,
}

impl VtmGenerator {
    pub fn new(family: Family) -> Result<Self> {
        family.validate()?;
        Ok(VtmGenerator { family, cache: RwLock::new(Vec::new()) })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    fn cached(&self, n: usize) -> Option<Arc<StochasticLevelMatrix>> {
        self.cache.read().unwrap().get(n).cloned().flatten()
    }

    fn store(&self, n: usize, m: Arc<StochasticLevelMatrix>) -> Arc<StochasticLevelMatrix> {
        let mut cache = self.cache.write().unwrap();
        if cache.len() <= n {
            cache.resize(n + 1, None);
        }
        cache[n].get_or_insert(m).clone()
    }

    pub fn level(&self, n: usize) -> Result<Arc<StochasticLevelMatrix>> {
        if let Some(m) = self.cached(n) {
            return Ok(m);
        }
        if let Some(max) = self.family.max_level() {
            if n > max {
                return Err(VmcError::PrefixTooShort { needed: n, available: max });
            }
        }
        match self.family.closed_form(n) {
            Some(rows) => {
                let m = StochasticLevelMatrix::new(rows).map_err(|e| VmcError::InvalidModel(e.to_string()))?;
                Ok(self.store(n, Arc::new(m)))
            }
            None => {
                // classical chain below its own size: project down from the top
                let Family::Classical { matrix } = &self.family else { unreachable!() };
                let mut cur = self.level(matrix.len() - 1)?;
                for m in (n..matrix.len() - 1).rev() {
                    cur = match self.cached(m) {
                        Some(c) => c,
                        None => self.store(m, Arc::new(project_matrix(&cur)?)),
                    };
                }
                Ok(cur)
            }
        }
    }

    pub fn prefix(&self, top: usize) -> Result<VtmPrefix> {
        let levels = (0..=top).map(|n| self.level(n)).collect::<Result<Vec<_>>>()?;
        VtmPrefix::from_shared(levels)
    }
}
