//! Zero-one law for the tail σ-algebra of a virtual Markov chain.
//!
//! The tail is trivial iff `ν` is extreme in `𝒟(K)`, `K(a,·)` is extreme for
//! every infinitely- or once-visited `a`, and no state is randomly visited.
//! Extremality has no finite decision procedure in general, so every check
//! here works at a stated truncation and may answer `Inconclusive`.

use std::collections::HashMap;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::kernels::{validate_vtm, Balayage, Family, LevelDistribution, NamedBalayage, VidPrefix, VtmPrefix};
use crate::levels::State;
use crate::rational::{serde_rational, Rational};
use crate::simplex::{
    delta_point, descend_from, limit_scan, membership, row_of_vtm, ExtendedBalayageTable, LimitCandidate,
    MarginalSequence, SequenceTag,
};
use crate::vmcsim::{classify_state, irreducible, StateClassification, VisitVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremalityStatus {
    Extreme,
    NotExtreme,
    Inconclusive,
}

/// A member of `𝒟(π)` named in a certificate, identified by its top level
/// (which determines the whole prefix).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedMember {
    pub label: String,
    pub top: LevelDistribution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendColumn {
    pub m: usize,
    pub c: State,
    pub values: Vec<TrendPoint>,
    pub nonincreasing: bool,
}

/// `Σ_b ν_N(b)·π_{b,M}(c)² − ν_M(c)²` at one `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: usize,
    #[serde(with = "serde_rational")]
    pub value: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendReport {
    pub columns: Vec<TrendColumn>,
}

impl TrendReport {
    pub fn nonincreasing(&self) -> bool {
        self.columns.iter().all(|c| c.nonincreasing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtremalityMethod {
    DeltaMatch { a: State },
    LimitMatch { label: String, tail_members: Vec<State> },
    ConvexSplit {
        #[serde(with = "serde_rational")]
        weight: Rational,
        first: NamedMember,
        second: NamedMember,
    },
    CatalogFact { fact: String },
    SecondMomentTrend { data: TrendReport },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremalityEvidence {
    pub subject_tag: Option<SequenceTag>,
    pub subject_top: LevelDistribution,
    pub status: ExtremalityStatus,
    pub method: ExtremalityMethod,
    /// Level through which every equality was checked.
    pub truncation: usize,
    pub a_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremalityOptions {
    /// Largest `a` tried for delta matches.
    pub a_max: usize,
    /// Largest `a` scanned for limit candidates.
    pub scan_max: usize,
}

/// Work shared by all extremality checks against one balayage at one
/// truncation.
pub struct ExtremalityContext {
    pi: Balayage,
    level: usize,
    opts: ExtremalityOptions,
    compact: bool,
    recognized: Option<NamedBalayage>,
    limits: Vec<LimitCandidate>,
}

impl ExtremalityContext {
    pub fn new(pi: &Balayage, level: usize, opts: ExtremalityOptions) -> Result<Self> {
        let scan_max = opts.scan_max.max(level);
        let scan = limit_scan(pi, level, 0..=scan_max)?;
        Ok(ExtremalityContext {
            pi: pi.clone(),
            level,
            opts,
            compact: pi.is_point_mass(),
            recognized: pi.recognize(),
            limits: scan.candidates,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    fn evidence(&self, nu: &MarginalSequence, status: ExtremalityStatus, method: ExtremalityMethod) -> ExtremalityEvidence {
        ExtremalityEvidence {
            subject_tag: nu.tag().cloned(),
            subject_top: nu.level(self.level).clone(),
            status,
            method,
            truncation: self.level,
            a_max: self.opts.a_max,
        }
    }

    /// Decides extremality of the prefix `ν` (which must reach the context
    /// level) by the first strategy that applies.
    pub fn check(&self, nu: &MarginalSequence) -> Result<ExtremalityEvidence> {
        let nu = nu.truncated(self.level)?;
        let m = membership(&nu, &self.pi)?;
        if let Some((level, state)) = m.first_violation {
            return Err(VmcError::MembershipViolation { level, state });
        }
        let top = nu.level(self.level);
        let l = self.level;

        // δ_a^π sits at a from level a on; a = L is left to the limit scan
        if let Some(a) = top.point_mass() {
            if a < l.max(1) && a <= self.opts.a_max && delta_point(&self.pi, a, l)?.levels() == nu.levels() {
                return Ok(self.evidence(&nu, ExtremalityStatus::Extreme, ExtremalityMethod::DeltaMatch { a }));
            }
        }
        if self.compact {
            if let Some(c) = self.limits.iter().find(|c| c.prefix.levels() == nu.levels()) {
                let method = ExtremalityMethod::LimitMatch { label: c.label.clone(), tail_members: c.tail_members.clone() };
                return Ok(self.evidence(&nu, ExtremalityStatus::Extreme, method));
            }
        }
        if let Some((weight, first, second)) = self.convex_split(top) {
            let method = ExtremalityMethod::ConvexSplit { weight, first, second };
            let ev = self.evidence(&nu, ExtremalityStatus::NotExtreme, method);
            if !self.recheck(&nu, &ev)? {
                return Err(VmcError::CertificateRejected("convex split does not reproduce the subject".into()));
            }
            return Ok(ev);
        }
        if self.recognized == Some(NamedBalayage::Uniform) && l >= 1 && top == &LevelDistribution::uniform(l, 1, l) {
            let fact = "U is extreme for the uniform balayage".to_string();
            return Ok(self.evidence(&nu, ExtremalityStatus::Extreme, ExtremalityMethod::CatalogFact { fact }));
        }
        let grid: Vec<(usize, State)> = (1..=2.min(l)).flat_map(|m| (0..=m).map(move |c| (m, c))).collect();
        let start = grid.iter().map(|g| g.0).max().unwrap_or(0);
        let data = tail_second_moment_report(&nu, &self.pi, &grid, start..=l)?;
        Ok(self.evidence(&nu, ExtremalityStatus::Inconclusive, ExtremalityMethod::SecondMomentTrend { data }))
    }

    /// Members of the catalog whose top level fits inside the support of
    /// `top` and differs from it.
    fn split_candidates(&self, top: &LevelDistribution) -> Vec<NamedMember> {
        let l = self.level;
        let inside = |d: &LevelDistribution| d != top && d.weights().iter().zip(top.weights()).all(|(x, y)| x.is_zero() || !y.is_zero());
        let mut out: Vec<NamedMember> = top
            .support()
            .into_iter()
            .filter(|&a| a <= self.opts.a_max)
            .map(|a| NamedMember { label: format!("δ_{a}"), top: LevelDistribution::point(l, a) })
            .filter(|m| inside(&m.top))
            .collect();
        for c in &self.limits {
            let d = c.prefix.level(l);
            if inside(d) && out.iter().all(|m| &m.top != d) {
                out.push(NamedMember { label: c.label.clone(), top: d.clone() });
            }
        }
        out
    }

    /// `top = w·x + (1-w)·y` with `0 < w < 1` over pairs of candidates.
    fn convex_split(&self, top: &LevelDistribution) -> Option<(Rational, NamedMember, NamedMember)> {
        let cands = self.split_candidates(top);
        for (i, x) in cands.iter().enumerate() {
            for y in &cands[i + 1..] {
                let (xw, yw, nw) = (x.top.weights(), y.top.weights(), top.weights());
                let b = (0..xw.len()).find(|&b| xw[b] != yw[b])?;
                let w = (&nw[b] - &yw[b]) / (&xw[b] - &yw[b]);
                if !w.is_positive() || w >= Rational::one() {
                    continue;
                }
                let one_minus = Rational::one() - &w;
                if (0..nw.len()).all(|b| nw[b] == &w * &xw[b] + &one_minus * &yw[b]) {
                    return Some((w, x.clone(), y.clone()));
                }
            }
        }
        None
    }

    /// Re-derives a certificate from scratch.
    pub fn recheck(&self, nu: &MarginalSequence, ev: &ExtremalityEvidence) -> Result<bool> {
        let nu = nu.truncated(self.level)?;
        Ok(match &ev.method {
            ExtremalityMethod::DeltaMatch { a } => delta_point(&self.pi, *a, self.level)?.levels() == nu.levels(),
            ExtremalityMethod::LimitMatch { label, .. } => {
                self.limits.iter().any(|c| &c.label == label && c.prefix.levels() == nu.levels())
            }
            ExtremalityMethod::ConvexSplit { weight, first, second } => {
                let x = descend_from(&first.top, &self.pi)?;
                let y = descend_from(&second.top, &self.pi)?;
                let both_members = membership(&x, &self.pi)?.member && membership(&y, &self.pi)?.member;
                let mix = MarginalSequence::mixture(&[(weight.clone(), &x), (Rational::one() - weight, &y)])?;
                both_members && x.levels() != y.levels() && mix.levels() == nu.levels()
            }
            ExtremalityMethod::CatalogFact { .. } => {
                self.recognized == Some(NamedBalayage::Uniform) && nu.levels() == MarginalSequence::virtual_uniform(self.level).levels()
            }
            ExtremalityMethod::SecondMomentTrend { .. } => true,
        })
    }
}

/// One-off extremality check of `ν` at its own top level.
pub fn extremality(nu: &MarginalSequence, pi: &Balayage, opts: ExtremalityOptions) -> Result<ExtremalityEvidence> {
    ExtremalityContext::new(pi, nu.top_level(), opts)?.check(nu)
}

/// `Σ_b ν_N(b)·π_{b,M}(c)² − ν_M(c)²` for each `(M, c)` in `grid` and each
/// `N` in `n_range`.
pub fn tail_second_moment_report(
    nu: &MarginalSequence,
    pi: &Balayage,
    grid: &[(usize, State)],
    n_range: std::ops::RangeInclusive<usize>,
) -> Result<TrendReport> {
    let (lo, hi) = (*n_range.start(), *n_range.end());
    let nu = nu.truncated(hi)?;
    if let Some((level, state)) = membership(&nu, pi)?.first_violation {
        return Err(VmcError::MembershipViolation { level, state });
    }
    if let Some(&(m, c)) = grid.iter().find(|&&(m, c)| m > lo || c > m) {
        return Err(VmcError::ParameterOutOfRange(format!("(M, c) = ({m}, {c}) needs c ≤ M ≤ {lo}")));
    }
    let table = ExtendedBalayageTable::build(pi, hi)?;
    let columns = grid
        .par_iter()
        .map(|&(m, c)| {
            let f: Vec<Rational> = (0..=hi)
                .map(|b| table.entry(b, m, c).map(|p| &p * &p))
                .collect::<Result<_>>()?;
            let base = nu.eval(c, m);
            let base = &base * &base;
            let values: Vec<TrendPoint> = (lo..=hi)
                .map(|n| {
                    let s: Rational = nu.level(n).weights().iter().zip(&f).map(|(x, y)| x * y).sum();
                    TrendPoint { n, value: s - &base }
                })
                .collect();
            let nonincreasing = values.windows(2).all(|w| w[1].value <= w[0].value);
            Ok(TrendColumn { m, c, values, nonincreasing })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrendReport { columns })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionStatus {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub status: ConditionStatus,
    pub detail: String,
    /// States witnessing a violation or an open case.
    pub witnesses: Vec<State>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Trivial,
    NonTrivial,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Trivial => 0,
            Verdict::NonTrivial => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowEvidence {
    pub a: State,
    pub evidence: ExtremalityEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub a_max: usize,
    /// Truncation level `L` of every extremality certificate.
    pub truncation: usize,
    pub scan_max: usize,
    pub use_irreducible_shortcut: bool,
}

impl EvaluateOptions {
    pub fn new(a_max: usize) -> Self {
        let truncation = a_max + 2;
        EvaluateOptions { a_max, truncation, scan_max: 2 * truncation, use_irreducible_shortcut: true }
    }

    /// Level the VTM prefix must reach.
    pub fn vtm_level(&self) -> usize {
        self.truncation.max(self.scan_max)
    }
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self::new(64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroOneReport {
    pub verdict: Verdict,
    pub options: EvaluateOptions,
    pub family: Option<String>,
    /// `⟦1,N⟧` closed and irreducible at every checked level.
    pub irreducible: bool,
    pub shortcut_used: bool,
    pub nu_extreme: Condition,
    pub rows_extreme: Condition,
    pub no_random_visits: Condition,
    pub nu_evidence: Option<ExtremalityEvidence>,
    pub row_evidence: Vec<RowEvidence>,
    pub classifications: Vec<StateClassification>,
}

fn condition(status: ConditionStatus, detail: impl Into<String>, witnesses: Vec<State>) -> Condition {
    Condition { status, detail: detail.into(), witnesses }
}

fn aggregate(conds: [&Condition; 3]) -> Verdict {
    if conds.iter().any(|c| c.status == ConditionStatus::Violated) {
        Verdict::NonTrivial
    } else if conds.iter().all(|c| c.status == ConditionStatus::Satisfied) {
        Verdict::Trivial
    } else {
        Verdict::Inconclusive
    }
}

/// The classical case: the tail is everything, so it is trivial exactly
/// when the path is deterministic.
fn evaluate_classical(matrix: &[Vec<Rational>], nu: &MarginalSequence, opts: EvaluateOptions) -> Result<ZeroOneReport> {
    let top = matrix.len() - 1;
    let start = nu.level(top.min(nu.top_level()));
    let mut deterministic = start.point_mass().is_some();
    if let Some(x0) = start.point_mass() {
        let mut seen = vec![false; matrix.len()];
        let mut x = x0;
        while !seen[x] {
            seen[x] = true;
            let next: Vec<State> = (0..matrix.len()).filter(|&y| !matrix[x][y].is_zero()).collect();
            if next.len() != 1 {
                deterministic = false;
                break;
            }
            x = next[0];
        }
    }
    let status = if deterministic { ConditionStatus::Satisfied } else { ConditionStatus::Violated };
    let detail = if deterministic {
        "classical chain with a deterministic path"
    } else {
        "classical chain: the tail is the whole σ-algebra and the path is random"
    };
    let c = condition(status, detail, vec![]);
    Ok(ZeroOneReport {
        verdict: if deterministic { Verdict::Trivial } else { Verdict::NonTrivial },
        options: opts,
        family: Some("classical".into()),
        irreducible: false,
        shortcut_used: false,
        nu_extreme: c.clone(),
        rows_extreme: c.clone(),
        no_random_visits: c,
        nu_evidence: None,
        row_evidence: vec![],
        classifications: vec![],
    })
}

/// Assembles the three conditions for `(ν, K)` and aggregates a verdict.
pub fn evaluate(nu: &MarginalSequence, k: &VtmPrefix, family: Option<&Family>, opts: EvaluateOptions) -> Result<ZeroOneReport> {
    if let Some(Family::Classical { matrix }) = family {
        return evaluate_classical(matrix, nu, opts);
    }
    let l = opts.truncation;
    if opts.a_max == 0 || opts.a_max > l {
        return Err(VmcError::ParameterOutOfRange(format!("need 1 ≤ a_max ≤ truncation, got {} and {l}", opts.a_max)));
    }
    let nu = nu.truncated(l)?;
    let k_low = k.truncated(l)?;
    let vtm = validate_vtm(&k_low);
    if let Some(v) = vtm.violations.first() {
        return Err(VmcError::InvalidModel(format!("projectivity fails at level {}, entry ({}, {})", v.level, v.row, v.col)));
    }
    let vid = nu.to_vid();
    let compat = crate::kernels::validate_compatibility(&vid, &k_low)?;
    if let Some(v) = compat.violations.first() {
        return Err(VmcError::Incompatible(format!("recursion fails at level {}, state {}", v.level, v.state)));
    }
    let pi = Balayage::of_vtm(k)?;
    let ctx = ExtremalityContext::new(&pi, l, ExtremalityOptions { a_max: opts.a_max, scan_max: opts.scan_max })?;

    let facts = family.map(|f| f.facts()).unwrap_or_default();
    let irr = irreducible(&k_low).recurrent() && facts.irreducible_closed != Some(false);
    let shortcut = irr && opts.use_irreducible_shortcut;

    let classifications = classify_all(&vid, &k_low, opts.a_max, shortcut)?;

    // (i)
    let nu_ev = ctx.check(&nu)?;
    let nu_cond = match nu_ev.status {
        ExtremalityStatus::Extreme => condition(ConditionStatus::Satisfied, "ν is extreme", vec![]),
        ExtremalityStatus::NotExtreme => condition(ConditionStatus::Violated, "ν splits into two members", vec![]),
        ExtremalityStatus::Inconclusive => condition(ConditionStatus::Inconclusive, "extremality of ν undecided", vec![]),
    };

    // (ii), caching rows by their top level
    let needed: Vec<State> = classifications
        .iter()
        .filter(|c| matches!(c.verdict, VisitVerdict::InfinitelyVisited | VisitVerdict::OnceVisited))
        .map(|c| c.a)
        .collect();
    let rows: Vec<MarginalSequence> = needed.par_iter().map(|&a| row_of_vtm(k, a, l)).collect::<Result<_>>()?;
    let mut cache: HashMap<&LevelDistribution, ExtremalityEvidence> = HashMap::new();
    let mut row_evidence = Vec::with_capacity(needed.len());
    for (&a, row) in needed.iter().zip(&rows) {
        let ev = match cache.get(row.level(l)) {
            Some(ev) => ev.clone(),
            None => {
                let ev = ctx.check(row)?;
                cache.insert(row.level(l), ev.clone());
                ev
            }
        };
        row_evidence.push(RowEvidence { a, evidence: ev });
    }
    let by_status = |s: ExtremalityStatus| -> Vec<State> {
        row_evidence.iter().filter(|r| r.evidence.status == s).map(|r| r.a).collect()
    };
    let (bad_rows, open_rows) = (by_status(ExtremalityStatus::NotExtreme), by_status(ExtremalityStatus::Inconclusive));

    // beyond a_max: ν_a(0) is nonincreasing in a, so ν_L(0) ∈ {0, 1} with
    // ν_{a_max}(0) = ν_L(0) settles every later classification
    let z_amax = nu.level(opts.a_max).weight(0);
    let z_top = nu.level(l).weight(0);
    let settled = z_amax == z_top && (z_top.is_zero() || z_top.is_one());
    let tail_visits = if irr && settled {
        Some(if z_top.is_one() { VisitVerdict::NeverVisited } else { VisitVerdict::InfinitelyVisited })
    } else {
        None
    };
    let row_tail = facts.row_tail.as_ref().filter(|f| f.from <= opts.a_max + 1);

    let rows_cond = if !bad_rows.is_empty() {
        condition(ConditionStatus::Violated, "some K(a,·) splits for a visited a", bad_rows)
    } else if !open_rows.is_empty() {
        condition(ConditionStatus::Inconclusive, "extremality of some K(a,·) undecided", open_rows)
    } else {
        match (tail_visits, row_tail) {
            (Some(VisitVerdict::NeverVisited), _) => {
                condition(ConditionStatus::Satisfied, "rows checked through a_max; later states are never visited", vec![])
            }
            (_, Some(f)) if f.extreme => condition(ConditionStatus::Satisfied, format!("rows checked through a_max; {}", f.statement), vec![]),
            (_, Some(f)) => condition(ConditionStatus::Violated, format!("for a ≥ {}: {}", f.from, f.statement), vec![f.from]),
            _ => condition(ConditionStatus::Inconclusive, "rows beyond a_max are not covered", vec![]),
        }
    };

    let random: Vec<State> =
        classifications.iter().filter(|c| c.verdict == VisitVerdict::RandomlyVisited).map(|c| c.a).collect();
    let visits_cond = if !random.is_empty() {
        condition(ConditionStatus::Violated, "randomly-visited states exist", random)
    } else if tail_visits.is_some() {
        condition(ConditionStatus::Satisfied, "no randomly-visited state", vec![])
    } else {
        condition(ConditionStatus::Inconclusive, "states beyond a_max are not classified", vec![])
    };

    let verdict = aggregate([&nu_cond, &rows_cond, &visits_cond]);
    Ok(ZeroOneReport {
        verdict,
        options: opts,
        family: family.map(|f| f.name().to_string()),
        irreducible: irr,
        shortcut_used: shortcut,
        nu_extreme: nu_cond,
        rows_extreme: rows_cond,
        no_random_visits: visits_cond,
        nu_evidence: Some(nu_ev),
        row_evidence,
        classifications,
    })
}

/// Exact classifications for `1..=a_max`; on a closed irreducible VTM every
/// state reachable from `ν` is hit surely and returned to surely.
fn classify_all(vid: &VidPrefix, k: &VtmPrefix, a_max: State, shortcut: bool) -> Result<Vec<StateClassification>> {
    if !shortcut {
        return crate::vmcsim::classify_states(vid, k, a_max);
    }
    Ok((1..=a_max)
        .map(|a| {
            let q = Rational::one() - vid.level(a).weight(0);
            let p = Rational::one();
            let verdict = VisitVerdict::from_probabilities(&q, &p);
            StateClassification { a, q, p, verdict }
        })
        .collect())
}

/// Checks one shortcut value against the linear solve (used in tests and by
/// callers who want both).
pub fn shortcut_agrees(vid: &VidPrefix, k: &VtmPrefix, a: State) -> Result<bool> {
    let exact = classify_state(vid, k, a)?;
    Ok(exact.q == Rational::one() - vid.level(a).weight(0) && (exact.q.is_zero() || exact.p.is_one()))
}
