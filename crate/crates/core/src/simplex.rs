//! Marginal sequences, the simplex `𝒟(π)` of a balayage, delta points,
//! rows of a VTM, extended balayage probabilities and the compactness
//! diagnostics built on them.

use std::collections::HashMap;
use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::kernels::{check_monotone, first_recursion_violation, Balayage, LevelDistribution, VidPrefix, VtmPrefix};
use crate::levels::State;
use crate::rational::{self, serde_rational, Rational};

/// Default truncation bound for extended-balayage tables.
pub const DEFAULT_A_MAX: usize = 256;

/// Symbolic identity of a marginal sequence, when known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceTag {
    DeltaPoint(State),
    Row(State),
    LimitPoint(String),
    Zero,
    Mixture(Vec<TaggedWeight>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedWeight {
    #[serde(with = "serde_rational")]
    pub weight: Rational,
    pub tag: Option<SequenceTag>,
}

/// A monotone sequence `ν_0, ..., ν_L` of level distributions (a prefix of a
/// point of `𝒟`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct MarginalSequence {
    levels: Vec<LevelDistribution>,
    tag: Option<SequenceTag>,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<SequenceTag>,
    levels: Vec<LevelDistribution>,
}

impl TryFrom<RawSequence> for MarginalSequence {
    type Error = VmcError;
    fn try_from(r: RawSequence) -> Result<Self> {
        MarginalSequence::new(r.levels, r.tag)
    }
}

impl From<MarginalSequence> for RawSequence {
    fn from(m: MarginalSequence) -> Self {
        RawSequence { tag: m.tag, levels: m.levels }
    }
}

impl MarginalSequence {
    pub fn new(levels: Vec<LevelDistribution>, tag: Option<SequenceTag>) -> Result<Self> {
        check_monotone(&levels)?;
        Ok(MarginalSequence { levels, tag })
    }

    pub(crate) fn new_unchecked(levels: Vec<LevelDistribution>, tag: Option<SequenceTag>) -> Self {
        MarginalSequence { levels, tag }
    }

    /// `𝟎 = δ_0^π` for every `π`.
    pub fn zero(top: usize) -> Self {
        MarginalSequence {
            levels: (0..=top).map(|n| LevelDistribution::point(n, 0)).collect(),
            tag: Some(SequenceTag::Zero),
        }
    }

    /// `𝐔`: `δ_0` at level 0 and `U⟦1,N⟧` above.
    pub fn virtual_uniform(top: usize) -> Self {
        MarginalSequence {
            levels: (0..=top)
                .map(|n| if n == 0 { LevelDistribution::point(0, 0) } else { LevelDistribution::uniform(n, 1, n) })
                .collect(),
            tag: Some(SequenceTag::LimitPoint("U".into())),
        }
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

    pub fn tag(&self) -> Option<&SequenceTag> {
        self.tag.as_ref()
    }

    pub fn with_tag(mut self, tag: Option<SequenceTag>) -> Self {
        self.tag = tag;
        self
    }

    /// `e_{a,N}(ν) = ν_N(a)`.
    pub fn eval(&self, a: State, n: usize) -> Rational {
        self.levels[n].weight(a)
    }

    pub fn truncated(&self, top: usize) -> Result<Self> {
        if top > self.top_level() {
            return Err(VmcError::PrefixTooShort { needed: top, available: self.top_level() });
        }
        Ok(MarginalSequence { levels: self.levels[..=top].to_vec(), tag: self.tag.clone() })
    }

    /// Exact convex combination; weights must be nonnegative and sum to 1,
    /// and all parts must reach at least the level of the first.
    pub fn mixture(parts: &[(Rational, &MarginalSequence)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(VmcError::InvalidModel("empty mixture".into()));
        }
        let total: Rational = parts.iter().map(|(w, _)| w.clone()).sum();
        if !total.is_one() || parts.iter().any(|(w, _)| w.is_negative()) {
            return Err(VmcError::InvalidModel(format!("mixture weights must be a probability vector (sum {total})")));
        }
        let top = parts.iter().map(|(_, s)| s.top_level()).min().unwrap();
        let levels = (0..=top)
            .map(|n| {
                let mut w = vec![Rational::zero(); n + 1];
                for (p, s) in parts {
                    for (b, x) in s.levels[n].weights().iter().enumerate() {
                        if !x.is_zero() {
                            w[b] += p * x;
                        }
                    }
                }
                LevelDistribution::new_unchecked(w)
            })
            .collect();
        let tag = SequenceTag::Mixture(
            parts.iter().map(|(w, s)| TaggedWeight { weight: w.clone(), tag: s.tag.clone() }).collect(),
        );
        Ok(MarginalSequence { levels, tag: Some(tag) })
    }

    /// Levels `1..=rows` with column 0 dropped, the bracket display form.
    pub fn bracket(&self, rows: usize) -> Vec<Vec<Rational>> {
        self.levels[1..=rows.min(self.top_level())].iter().map(|d| d.weights()[1..].to_vec()).collect()
    }

    pub fn to_vid(&self) -> VidPrefix {
        VidPrefix::new(self.levels.clone()).expect("marginal sequences are monotone")
    }
}

impl From<VidPrefix> for MarginalSequence {
    fn from(v: VidPrefix) -> Self {
        MarginalSequence { levels: v.levels().to_vec(), tag: None }
    }
}

/// Result of checking `ν_N = ν_{N+1} + ν_{N+1}(N+1)·π_N` level by level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    /// `(N, a)` of the first failing coordinate.
    pub first_violation: Option<(usize, State)>,
}

/// Exact membership of the prefix `ν` in `𝒟(π)`; `π` must have a row for
/// every level below the top of `ν`.
pub fn membership(nu: &MarginalSequence, pi: &Balayage) -> Result<Membership> {
    pi.require(nu.top_level())?;
    for n in 0..nu.top_level() {
        if let Some(a) = first_recursion_violation(&nu.levels[n], &nu.levels[n + 1], pi.row(n)) {
            return Ok(Membership { member: false, first_violation: Some((n, a)) });
        }
    }
    Ok(Membership { member: true, first_violation: None })
}

/// Descends a level-`top` distribution through `π_{top-1}, ..., π_0`,
/// returning the levels `0..=keep` (levels above `top` are not produced).
fn descend(start: Vec<Rational>, pi: &Balayage, keep: usize) -> Vec<LevelDistribution> {
    let top = start.len() - 1;
    let mut out = vec![None; keep.min(top) + 1];
    let mut cur = start;
    for n in (0..=top).rev() {
        if n <= keep {
            out[n] = Some(LevelDistribution::new_unchecked(cur.clone()));
        }
        if n == 0 {
            break;
        }
        let jump = cur.pop().unwrap();
        if !jump.is_zero() {
            for (b, w) in pi.sparse_row(n - 1) {
                cur[*b] += &jump * w;
            }
        }
    }
    out.into_iter().map(|d| d.unwrap()).collect()
}

/// The unique prefix of `𝒟(π)` whose top level is `top`.
pub fn descend_from(top: &LevelDistribution, pi: &Balayage) -> Result<MarginalSequence> {
    pi.require(top.level())?;
    let levels = descend(top.weights().to_vec(), pi, top.level());
    Ok(MarginalSequence::new_unchecked(levels, None))
}

/// `δ_a^π` through level `top`: `π_{a,N}` below `a`, `δ_a` from `a` on.
pub fn delta_point(pi: &Balayage, a: State, top: usize) -> Result<MarginalSequence> {
    pi.require(a)?;
    let mut start = vec![Rational::zero(); a + 1];
    start[a] = Rational::one();
    let mut levels = descend(start, pi, top);
    for n in levels.len()..=top {
        levels.push(LevelDistribution::point(n, a));
    }
    Ok(MarginalSequence::new_unchecked(levels, Some(SequenceTag::DeltaPoint(a))))
}

/// `K(a,·)` through level `top`: `K_N(a,·)` for `N ≥ a`, extended below `a`
/// by the balayage of `K`.
pub fn row_of_vtm(k: &VtmPrefix, a: State, top: usize) -> Result<MarginalSequence> {
    if a == 0 {
        return Err(VmcError::ParameterOutOfRange("row 0 is the constant 𝟎; use the zero sequence".into()));
    }
    k.require(a.max(top))?;
    let pi = Balayage::of_vtm(&k.truncated(a)?)?;
    let mut levels = descend(k.level(a).row(a).to_vec(), &pi, top);
    for n in levels.len()..=top {
        levels.push(LevelDistribution::new_unchecked(k.level(n).row(a).to_vec()));
    }
    Ok(MarginalSequence::new_unchecked(levels, Some(SequenceTag::Row(a))))
}

/// Extended balayage probabilities `π_{a,N}` for `a ≤ A_max`, stored through
/// the jump weights `π_{a,N}(N)`.
///
/// For `N < a` one has `π_{a,N} = π_{a,N+1}|_{⟦0,N⟧} + π_{a,N+1}(N+1)·π_N`,
/// so every entry is recovered from the jump weights and the balayage rows.
/// Rows for distinct `a` are independent, which makes the table
/// truncation-stable: a larger `A_max` leaves existing entries untouched.
#[derive(Debug, Clone)]
pub struct ExtendedBalayageTable {
    balayage: Balayage,
    a_max: usize,
    /// `jumps[a][N] = π_{a,N}(N)` for `N ≤ a`.
    jumps: Vec<Vec<Rational>>,
    jumps_fast: Vec<Vec<Option<Small>>>,
}

/// Accumulates range additions and answers suffix sums while scanning
/// levels downward.
struct RangeAdder {
    diff: Vec<Rational>,
}

impl RangeAdder {
    fn new(len: usize) -> Self {
        RangeAdder { diff: vec![Rational::zero(); len] }
    }

    /// Adds `x` to every coordinate in `lo..=hi`.
    fn add(&mut self, lo: usize, hi: usize, x: &Rational) {
        self.diff[hi] += x;
        if lo > 0 {
            self.diff[lo - 1] -= x;
        }
    }
}

impl ExtendedBalayageTable {
    pub fn build(pi: &Balayage, a_max: usize) -> Result<Self> {
        pi.require(a_max)?;
        let balayage = pi.truncated(a_max)?;
        let jumps: Vec<Vec<Rational>> = (0..=a_max).into_par_iter().map(|a| Self::jump_row(&balayage, a)).collect();
        let jumps_fast = jumps.iter().map(|row| row.iter().map(to_small).collect()).collect();
        Ok(ExtendedBalayageTable { balayage, a_max, jumps, jumps_fast })
    }

    fn jump_row(pi: &Balayage, a: State) -> Vec<Rational> {
        let mut row = vec![Rational::zero(); a + 1];
        row[a] = Rational::one();
        let mut acc = RangeAdder::new(a);
        let mut running = Rational::zero();
        for level in (0..a).rev() {
            let w = &row[level + 1];
            if !w.is_zero() {
                let w = w.clone();
                for run in pi.runs(level) {
                    acc.add(run.lo, run.hi, &(&w * &run.value));
                }
            }
            // nothing at or above `level` changes after this step
            running += &acc.diff[level];
            row[level] = running.clone();
        }
        row
    }

    pub fn a_max(&self) -> usize {
        self.a_max
    }

    pub fn balayage(&self) -> &Balayage {
        &self.balayage
    }

    fn guard(&self, a: State) -> Result<()> {
        if a > self.a_max {
            Err(VmcError::ResourceGuard { state: a, bound: self.a_max })
        } else {
            Ok(())
        }
    }

    /// `π_{a,N}(N)`.
    pub fn jump(&self, a: State, n: usize) -> Result<Rational> {
        self.guard(a)?;
        Ok(self.jumps[a].get(n).cloned().unwrap_or_else(Rational::zero))
    }

    pub(crate) fn jump_ref(&self, a: State, n: usize) -> &Rational {
        &self.jumps[a][n]
    }

    /// `π_{a,N}(b)`.
    pub fn entry(&self, a: State, n: usize, b: State) -> Result<Rational> {
        self.guard(a)?;
        if b > n {
            return Ok(Rational::zero());
        }
        if a <= n {
            return Ok(if a == b { Rational::one() } else { Rational::zero() });
        }
        let mut total = Rational::zero();
        for level in b.max(n)..a {
            let w = &self.jumps[a][level + 1];
            if !w.is_zero() {
                let p = self.balayage.row(level).weights()[b].clone();
                if !p.is_zero() {
                    total += w * p;
                }
            }
        }
        Ok(total)
    }

    /// The law `π_{a,N}` on `⟦0,N⟧`.
    pub fn distribution(&self, a: State, n: usize) -> Result<LevelDistribution> {
        self.guard(a)?;
        if a <= n {
            return Ok(LevelDistribution::point(n, a));
        }
        let mut acc = RangeAdder::new(n + 1);
        for level in n..a {
            let w = &self.jumps[a][level + 1];
            if w.is_zero() {
                continue;
            }
            for run in self.balayage.runs(level) {
                if run.lo <= n {
                    acc.add(run.lo, run.hi.min(n), &(w * &run.value));
                }
            }
        }
        let mut out = vec![Rational::zero(); n + 1];
        let mut running = Rational::zero();
        for b in (0..=n).rev() {
            running += &acc.diff[b];
            out[b] = running.clone();
        }
        Ok(LevelDistribution::new_unchecked(out))
    }
}

/// `π_{a,N}` for a single pair, building only what is needed.
pub fn extended_balayage(pi: &Balayage, a: State, n: usize, a_max: usize) -> Result<LevelDistribution> {
    if a > a_max {
        return Err(VmcError::ResourceGuard { state: a, bound: a_max });
    }
    if a <= n {
        return Ok(LevelDistribution::point(n, a));
    }
    pi.require(a)?;
    let mut start = vec![Rational::zero(); a + 1];
    start[a] = Rational::one();
    Ok(descend(start, pi, n).pop().unwrap())
}

/// `π_{a,N}(N)` over a range of `a`; zero for `a < N`.
pub fn k0_sequence(table: &ExtendedBalayageTable, n: usize, a_range: RangeInclusive<State>) -> Result<Vec<(State, Rational)>> {
    a_range.map(|a| Ok((a, table.jump(a, n)?))).collect()
}

/// One cell of the compactness statistic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SternfeldCell {
    pub m: usize,
    pub c: State,
    pub n: usize,
    pub a: State,
    #[serde(with = "serde_rational")]
    pub sum: Rational,
    #[serde(with = "serde_rational")]
    pub target: Rational,
}

impl SternfeldCell {
    pub fn abs_dev(&self) -> Rational {
        rational::abs(&(&self.sum - &self.target))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SternfeldReport {
    pub m: usize,
    pub c: State,
    pub n: usize,
    pub cells: Vec<SternfeldCell>,
    #[serde(with = "serde_rational")]
    pub sup_deviation: Rational,
}

/// Per-`(M,c)` data shared by every `(N,a)` cell:
/// `f(b) = π_{b,M}(c)²` and `g_L = Σ_{b≤L} f(b)π_L(b) − f(L+1)`.
struct SternfeldColumn {
    f: Vec<Rational>,
    g: Vec<Rational>,
    g_fast: Vec<Option<Small>>,
}

/// Machine-word rationals used as a checked fast path in sweeps; any
/// overflow falls back to [`Rational`] without losing exactness.
type Small = Ratio<i128>;

fn to_small(r: &Rational) -> Option<Small> {
    Some(Small::new_raw(r.numer().to_i128()?, r.denom().to_i128()?))
}

fn from_small(r: &Small) -> Rational {
    Rational::new_raw(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Running sum that stays in machine words while it can.
enum Acc {
    Fast(Small),
    Big(Rational),
}

impl Acc {
    fn new(x: &Rational) -> Self {
        to_small(x).map_or_else(|| Acc::Big(x.clone()), Acc::Fast)
    }

    fn add_product(&mut self, w: &Rational, w_fast: Option<&Small>, g: &Rational, g_fast: Option<&Small>) {
        if let (Acc::Fast(s), Some(wf), Some(gf)) = (&*self, w_fast, g_fast) {
            if let Some(next) = wf.checked_mul(gf).and_then(|p| s.checked_add(&p)) {
                *self = Acc::Fast(next);
                return;
            }
        }
        let mut big = self.to_big();
        big += w * g;
        *self = Acc::Big(big);
    }

    fn to_big(&self) -> Rational {
        match self {
            Acc::Fast(s) => from_small(s),
            Acc::Big(b) => b.clone(),
        }
    }
}

impl SternfeldColumn {
    fn new(table: &ExtendedBalayageTable, m: usize, c: State) -> Self {
        let pi = &table.balayage;
        let top = table.a_max;
        // h(b) = π_{b,M}(c) by the first-step recursion, using prefix sums
        // of h over runs of π_{b-1}.
        let mut h = Vec::with_capacity(top + 1);
        let mut h_prefix: Vec<Rational> = Vec::with_capacity(top + 2);
        h_prefix.push(Rational::zero());
        for b in 0..=top {
            let v = if b <= m {
                if b == c { Rational::one() } else { Rational::zero() }
            } else {
                let mut s = Rational::zero();
                for run in pi.runs(b - 1) {
                    let block = &h_prefix[run.hi + 1] - &h_prefix[run.lo];
                    if !block.is_zero() {
                        s += &run.value * block;
                    }
                }
                s
            };
            let next = &h_prefix[b] + &v;
            h_prefix.push(next);
            h.push(v);
        }
        let f: Vec<Rational> = h.iter().map(|x| x * x).collect();
        let mut f_prefix = Vec::with_capacity(top + 2);
        f_prefix.push(Rational::zero());
        for b in 0..=top {
            let next = &f_prefix[b] + &f[b];
            f_prefix.push(next);
        }
        let g: Vec<Rational> = (0..top)
            .map(|level| {
                let mut s = Rational::zero();
                for run in pi.runs(level) {
                    let block = &f_prefix[run.hi + 1] - &f_prefix[run.lo];
                    if !block.is_zero() {
                        s += &run.value * block;
                    }
                }
                s - &f[level + 1]
            })
            .collect();
        let g_fast = g.iter().map(to_small).collect();
        SternfeldColumn { f, g, g_fast }
    }
}

fn check_grid(table: &ExtendedBalayageTable, m: usize, c: State, n_lo: usize) -> Result<()> {
    if c > m {
        return Err(VmcError::ParameterOutOfRange(format!("c = {c} exceeds M = {m}")));
    }
    if m > n_lo {
        return Err(VmcError::ParameterOutOfRange(format!("M = {m} exceeds N = {n_lo}")));
    }
    table.guard(n_lo)
}

/// A borrowed view of one cell, handed to [`sternfeld_sweep`] visitors.
#[derive(Debug, Clone, Copy)]
pub struct SternfeldView<'a> {
    pub m: usize,
    pub c: State,
    pub n: usize,
    pub a: State,
    pub sum: &'a Rational,
    pub target: &'a Rational,
}

impl SternfeldView<'_> {
    pub fn to_cell(&self) -> SternfeldCell {
        SternfeldCell { m: self.m, c: self.c, n: self.n, a: self.a, sum: self.sum.clone(), target: self.target.clone() }
    }
}

/// Visits every cell `(N, a)` with `N` in `n_range` and `N ≤ a ≤ A_max`,
/// for fixed `(M, c)`: `a` ascending, and for each `a` the levels `N`
/// descending. Each `a` costs `O(a - min N)` exact operations.
pub fn sternfeld_sweep(
    table: &ExtendedBalayageTable,
    m: usize,
    c: State,
    n_range: RangeInclusive<usize>,
    mut visit: impl FnMut(SternfeldView<'_>),
) -> Result<()> {
    let (n_lo, n_hi) = (*n_range.start(), *n_range.end());
    check_grid(table, m, c, n_lo)?;
    table.guard(n_hi)?;
    let col = SternfeldColumn::new(table, m, c);
    for a in n_lo..=table.a_max {
        let target = &col.f[a];
        let mut acc = Acc::new(target);
        for n in (n_lo..=a).rev() {
            if n < a {
                let w = table.jump_ref(a, n + 1);
                if !w.is_zero() {
                    acc.add_product(w, table.jumps_fast[a][n + 1].as_ref(), &col.g[n], col.g_fast[n].as_ref());
                }
            }
            if n <= n_hi {
                let sum = acc.to_big();
                visit(SternfeldView { m, c, n, a, sum: &sum, target });
            }
        }
    }
    Ok(())
}

/// `Σ_{b≤N} π_{b,M}(c)²·π_{a,N}(b)` against `π_{a,M}(c)²` for every `a` in
/// `a_range` (clipped below at `N`).
pub fn sternfeld_statistic(
    table: &ExtendedBalayageTable,
    m: usize,
    c: State,
    n: usize,
    a_range: RangeInclusive<State>,
) -> Result<SternfeldReport> {
    check_grid(table, m, c, n)?;
    table.guard(*a_range.end())?;
    let col = SternfeldColumn::new(table, m, c);
    let cells: Vec<SternfeldCell> = (n.max(*a_range.start())..=*a_range.end())
        .into_par_iter()
        .map(|a| {
            let mut acc = Acc::new(&col.f[a]);
            for level in (n..a).rev() {
                let w = table.jump_ref(a, level + 1);
                if !w.is_zero() {
                    acc.add_product(w, table.jumps_fast[a][level + 1].as_ref(), &col.g[level], col.g_fast[level].as_ref());
                }
            }
            SternfeldCell { m, c, n, a, sum: acc.to_big(), target: col.f[a].clone() }
        })
        .collect();
    let sup_deviation = cells.iter().map(|c| c.abs_dev()).max().unwrap_or_else(Rational::zero);
    Ok(SternfeldReport { m, c, n, cells, sup_deviation })
}

/// A set of `a` whose truncated `δ_a^π` coincide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanGroup {
    pub members: Vec<State>,
    pub prefix: MarginalSequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitCandidate {
    pub label: String,
    /// Members lying in the upper half of the scanned range.
    pub tail_members: Vec<State>,
    pub prefix: MarginalSequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitScan {
    pub level: usize,
    pub range: (State, State),
    pub groups: Vec<ScanGroup>,
    pub candidates: Vec<LimitCandidate>,
}

/// Groups `a` by `δ_a^π` truncated to level `L` and reports the groups hit
/// at least twice in the upper half of the range as limit candidates. This
/// is a finite heuristic: candidates are stable within the range only.
pub fn limit_scan(pi: &Balayage, top: usize, a_range: RangeInclusive<State>) -> Result<LimitScan> {
    let (lo, hi) = (*a_range.start(), *a_range.end());
    pi.require(hi)?;
    let points: Vec<MarginalSequence> =
        a_range.clone().into_par_iter().map(|a| delta_point(pi, a, top)).collect::<Result<_>>()?;
    // two points of 𝒟(π) agreeing at level L agree at every lower level
    let mut index: HashMap<&LevelDistribution, usize> = HashMap::new();
    let mut groups: Vec<ScanGroup> = Vec::new();
    for (a, p) in a_range.clone().zip(&points) {
        match index.get(p.level(top)) {
            Some(&g) => groups[g].members.push(a),
            None => {
                index.insert(p.level(top), groups.len());
                groups.push(ScanGroup { members: vec![a], prefix: p.clone() });
            }
        }
    }
    let tail_start = lo + (hi - lo + 1) / 2;
    let mut candidates = Vec::new();
    for g in &groups {
        let tail: Vec<State> = g.members.iter().copied().filter(|&a| a >= tail_start).collect();
        if tail.len() >= 2 {
            let label = format!("lim#{}", candidates.len());
            let prefix = g.prefix.clone().with_tag(Some(SequenceTag::LimitPoint(label.clone())));
            candidates.push(LimitCandidate { label, tail_members: tail, prefix });
        }
    }
    Ok(LimitScan { level: top, range: (lo, hi), groups, candidates })
}

/// JSON description of a marginal sequence, resolved against a balayage
/// (and a VTM for rows).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceModel {
    Explicit { levels: Vec<LevelDistribution> },
    Zero,
    Delta { a: State },
    Row { a: State },
    VirtualUniform,
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureComponent {
    #[serde(with = "serde_rational")]
    pub weight: Rational,
    pub model: SequenceModel,
}

impl SequenceModel {
    /// The levels `0..=top` of the described sequence.
    pub fn resolve(&self, pi: &Balayage, k: Option<&VtmPrefix>, top: usize) -> Result<MarginalSequence> {
        match self {
            SequenceModel::Explicit { levels } => MarginalSequence::new(levels.clone(), None)?.truncated(top),
            SequenceModel::Zero => Ok(MarginalSequence::zero(top)),
            SequenceModel::Delta { a } => delta_point(pi, *a, top),
            SequenceModel::Row { a } => {
                let k = k.ok_or_else(|| VmcError::InvalidModel("a row needs a VTM".into()))?;
                row_of_vtm(k, *a, top)
            }
            SequenceModel::VirtualUniform => Ok(MarginalSequence::virtual_uniform(top)),
            SequenceModel::Mixture { components } => {
                let parts = components
                    .iter()
                    .map(|c| Ok((c.weight.clone(), c.model.resolve(pi, k, top)?)))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<(Rational, &MarginalSequence)> = parts.iter().map(|(w, s)| (w.clone(), s)).collect();
                MarginalSequence::mixture(&refs)
            }
        }
    }

    /// Highest state the description refers to (to size balayage prefixes).
    pub fn max_state(&self) -> State {
        match self {
            SequenceModel::Delta { a } | SequenceModel::Row { a } => *a,
            SequenceModel::Mixture { components } => components.iter().map(|c| c.model.max_state()).max().unwrap_or(0),
            _ => 0,
        }
    }
}
