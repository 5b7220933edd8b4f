//! Level path primitives.
//!
//! A [`LevelPath`] is a finite window onto a path of the level-`N` chain on
//! `⟦0,N⟧`, where state 0 is absorbing. The window has a determined prefix
//! followed by an undetermined suffix. A path whose determined part reaches 0
//! is *absorbed*: every later entry is known to be 0, however far out one
//! looks, so absorbed paths never carry an undetermined suffix.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};

/// A state of a level chain. State 0 is the absorbing cemetery.
pub type State = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LevelPathJson", into = "LevelPathJson")]
pub struct LevelPath {
    level: usize,
    states: Vec<State>,
    len: usize,
}

impl LevelPath {
    /// Builds a path at `level` whose first `states.len()` entries are
    /// determined and whose nominal length is `len` (the remaining
    /// `len - states.len()` entries are undetermined). Absorbed paths are
    /// completed with determined zeros.
    pub fn new(level: usize, states: Vec<State>, len: usize) -> Result<Self> {
        if let Some(&bad) = states.iter().find(|&&s| s > level) {
            return Err(VmcError::InvalidPath {
                level,
                reason: format!("state {bad} outside ⟦0,{level}⟧"),
            });
        }
        if let Some(first_zero) = states.iter().position(|&s| s == 0) {
            if let Some(off) = states[first_zero..].iter().position(|&s| s != 0) {
                return Err(VmcError::InvalidPath {
                    level,
                    reason: format!(
                        "state {} at index {} follows absorption at index {first_zero}",
                        states[first_zero + off],
                        first_zero + off
                    ),
                });
            }
        }
        let len = len.max(states.len());
        let mut path = LevelPath { level, states, len };
        if path.is_absorbed() {
            path.states.resize(len, 0);
        }
        Ok(path)
    }

    /// A path whose entries are all determined.
    pub fn determined(level: usize, states: Vec<State>) -> Result<Self> {
        let len = states.len();
        Self::new(level, states, len)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Nominal length of the window (determined plus undetermined entries).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn determined_len(&self) -> usize {
        self.states.len()
    }

    pub fn determined_states(&self) -> &[State] {
        &self.states
    }

    /// True once the determined part has reached the cemetery state.
    pub fn is_absorbed(&self) -> bool {
        self.states.last() == Some(&0)
    }

    /// Entry `i`, or `None` when it is undetermined. Absorbed paths answer
    /// `Some(0)` for every index past their window.
    pub fn entry(&self, i: usize) -> Option<State> {
        match self.states.get(i) {
            Some(&s) => Some(s),
            None if self.is_absorbed() => Some(0),
            None => None,
        }
    }

    /// Iterates the window, `None` marking undetermined entries.
    pub fn entries(&self) -> impl Iterator<Item = Option<State>> + '_ {
        (0..self.len).map(move |i| self.entry(i))
    }
}

/// Outcome of searching for the `(k+1)`-th visit to a target set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HitResult {
    FoundAt(usize),
    ProvablyNever,
    UnknownWithinHorizon,
}

/// Index of the `(k+1)`-th visit of `path` to `target` (`k = 0` is the first
/// visit), scanning the determined prefix.
pub fn hitting_index(path: &LevelPath, target: &BTreeSet<State>, k: usize) -> HitResult {
    hitting_index_by(path, |s| target.contains(&s), k)
}

pub(crate) fn hitting_index_by(path: &LevelPath, hit: impl Fn(State) -> bool, k: usize) -> HitResult {
    let mut seen = 0usize;
    for (i, &s) in path.states.iter().enumerate() {
        if hit(s) {
            if seen == k {
                return HitResult::FoundAt(i);
            }
            seen += 1;
        }
    }
    if path.is_absorbed() {
        if hit(0) {
            // every index past the window is another visit to 0
            HitResult::FoundAt(path.states.len() + (k - seen))
        } else {
            HitResult::ProvablyNever
        }
    } else {
        HitResult::UnknownWithinHorizon
    }
}

/// Removes every excursion above `target_level` from `path`.
///
/// The result keeps the nominal length of the source. When the source is
/// absorbed the result is absorbed too; otherwise everything after the last
/// observed visit to `⟦0,target_level⟧` is undetermined.
pub fn project_path(path: &LevelPath, target_level: usize) -> Result<LevelPath> {
    if target_level > path.level {
        return Err(VmcError::LevelTooHigh {
            target: target_level,
            source_level: path.level,
        });
    }
    let kept: Vec<State> = path.states.iter().copied().filter(|&s| s <= target_level).collect();
    LevelPath::new(target_level, kept, path.len)
}

/// A projectively coupled family of level paths `X_0, ..., X_L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LevelPath>", into = "Vec<LevelPath>")]
pub struct VirtualPathPrefix {
    levels: Vec<LevelPath>,
}

impl VirtualPathPrefix {
    /// `levels[N]` must sit at level `N`, and the top path must be fully
    /// determined (it is the simulated or supplied source).
    pub fn new(levels: Vec<LevelPath>) -> Result<Self> {
        if levels.is_empty() {
            return Err(VmcError::InvalidPath {
                level: 0,
                reason: "a virtual path prefix needs at least level 0".into(),
            });
        }
        for (n, p) in levels.iter().enumerate() {
            if p.level != n {
                return Err(VmcError::InvalidPath {
                    level: p.level,
                    reason: format!("found at position {n} of the level table"),
                });
            }
        }
        let top = levels.last().unwrap();
        if top.determined_len() < top.len() {
            return Err(VmcError::InvalidPath {
                level: top.level,
                reason: "top-level path has undetermined entries".into(),
            });
        }
        Ok(VirtualPathPrefix { levels })
    }

    /// Derives every lower level from a fully determined top-level path.
    pub fn from_top(top: LevelPath) -> Result<Self> {
        let mut levels = Vec::with_capacity(top.level + 1);
        for n in 0..top.level {
            levels.push(project_path(&top, n)?);
        }
        levels.push(top);
        Self::new(levels)
    }

    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &LevelPath {
        &self.levels[n]
    }

    pub fn top(&self) -> &LevelPath {
        self.levels.last().unwrap()
    }

    pub fn levels(&self) -> &[LevelPath] {
        &self.levels
    }
}

impl TryFrom<Vec<LevelPath>> for VirtualPathPrefix {
    type Error = VmcError;
    fn try_from(v: Vec<LevelPath>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<VirtualPathPrefix> for Vec<LevelPath> {
    fn from(v: VirtualPathPrefix) -> Self {
        v.levels
    }
}

/// A violated constraint `P_lower(X_upper) = X_lower`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionMismatch {
    pub lower: usize,
    pub upper: usize,
    pub index: usize,
}

/// Checks every adjacent level pair on the entries both sides determine.
pub fn validate_virtual_prefix(vp: &VirtualPathPrefix) -> Vec<ProjectionMismatch> {
    let mut report = Vec::new();
    for n in 0..vp.top_level() {
        let projected = match project_path(vp.level(n + 1), n) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let lower = vp.level(n);
        let horizon = projected.len().max(lower.len());
        let first_bad = (0..horizon).find(|&i| match (projected.entry(i), lower.entry(i)) {
            (Some(a), Some(b)) => a != b,
            _ => false,
        });
        if let Some(index) = first_bad {
            report.push(ProjectionMismatch { lower: n, upper: n + 1, index });
        }
    }
    report
}

#[derive(Serialize, Deserialize)]
struct LevelPathJson {
    level: usize,
    entries: Vec<Option<State>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    determined_len: Option<usize>,
}

impl TryFrom<LevelPathJson> for LevelPath {
    type Error = VmcError;

    fn try_from(j: LevelPathJson) -> Result<Self> {
        let leading = j.entries.iter().take_while(|e| e.is_some()).count();
        let determined = j.determined_len.unwrap_or(leading);
        if determined > leading {
            return Err(VmcError::InvalidPath {
                level: j.level,
                reason: format!("determined_len {determined} but entry {leading} is null"),
            });
        }
        let states = j.entries[..determined].iter().map(|e| e.unwrap()).collect();
        LevelPath::new(j.level, states, j.entries.len())
    }
}

impl From<LevelPath> for LevelPathJson {
    fn from(p: LevelPath) -> Self {
        LevelPathJson {
            level: p.level,
            entries: p.entries().collect(),
            determined_len: Some(p.determined_len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[State]) -> BTreeSet<State> {
        xs.iter().copied().collect()
    }

    fn open(level: usize, states: Vec<State>, len: usize) -> LevelPath {
        LevelPath::new(level, states, len).unwrap()
    }

    #[test]
    fn first_visit_in_worked_example() {
        let x5 = LevelPath::determined(5, vec![4, 5, 2, 3, 1]).unwrap();
        assert_eq!(hitting_index(&x5, &set(&[1]), 0), HitResult::FoundAt(4));
        // the window is not absorbed, so a second visit is unknown
        assert_eq!(hitting_index(&x5, &set(&[1]), 1), HitResult::UnknownWithinHorizon);
    }

    #[test]
    fn absorbed_path_never_hits() {
        let z = LevelPath::determined(3, vec![0, 0, 0]).unwrap();
        assert_eq!(hitting_index(&z, &set(&[3]), 0), HitResult::ProvablyNever);
        assert_eq!(hitting_index(&z, &set(&[0]), 5), HitResult::FoundAt(5));
        let late = LevelPath::determined(3, vec![2, 0]).unwrap();
        assert_eq!(hitting_index(&late, &set(&[0]), 3), HitResult::FoundAt(4));
    }

    #[test]
    fn open_horizon_is_unknown() {
        let p = open(5, vec![4, 5, 2], 6);
        assert_eq!(hitting_index(&p, &set(&[1]), 0), HitResult::UnknownWithinHorizon);
    }

    #[test]
    fn projection_examples() {
        let x5 = LevelPath::determined(5, vec![4, 5, 2, 3, 1]).unwrap();
        let x4 = project_path(&x5, 4).unwrap();
        assert_eq!(x4.determined_states(), &[4, 2, 3, 1]);
        assert_eq!(x4.len(), 5);
        assert_eq!(x4.entry(4), None);

        let x3 = LevelPath::determined(3, vec![2, 3, 1, 1, 2]).unwrap();
        let x2 = project_path(&x3, 2).unwrap();
        assert_eq!(x2.determined_states(), &[2, 1, 1, 2]);
        assert_eq!(x2.entry(4), None);
    }

    #[test]
    fn projection_within_range_is_identity() {
        let p = LevelPath::determined(3, vec![2, 1, 3, 0]).unwrap();
        assert_eq!(project_path(&p, 3).unwrap(), p);
        let q = project_path(&p, 1).unwrap();
        assert_eq!(q.determined_states(), &[1, 0, 0, 0]);
        assert!(q.is_absorbed());
        assert_eq!(q.entry(100), Some(0));
    }

    #[test]
    fn projection_rejects_higher_level() {
        let p = LevelPath::determined(2, vec![1, 2]).unwrap();
        assert!(matches!(project_path(&p, 3), Err(VmcError::LevelTooHigh { .. })));
    }

    #[test]
    fn rejects_escape_from_zero_and_out_of_range() {
        assert!(LevelPath::determined(3, vec![1, 0, 2]).is_err());
        assert!(LevelPath::determined(3, vec![4]).is_err());
    }

    #[test]
    fn json_round_trip_keeps_determinacy() {
        let p = open(5, vec![4, 2, 3], 5);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"level":5,"entries":[4,2,3,null,null],"determined_len":3}"#);
        let back: LevelPath = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let short: LevelPath = serde_json::from_str(r#"{"level":2,"entries":[2,1,7],"determined_len":2}"#).unwrap();
        assert_eq!(short.determined_len(), 2);
        assert_eq!(short.len(), 3);
    }

    fn example_table() -> VirtualPathPrefix {
        let rows: [&[State]; 6] = [
            &[0, 0, 0, 0, 0],
            &[1, 1, 0, 0, 0],
            &[2, 1, 1, 2, 0],
            &[2, 3, 1, 1, 2],
            &[4, 2, 3, 1, 4],
            &[4, 5, 2, 3, 1],
        ];
        VirtualPathPrefix::new(
            rows.iter()
                .enumerate()
                .map(|(n, r)| LevelPath::determined(n, r.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn worked_table_is_consistent() {
        assert!(validate_virtual_prefix(&example_table()).is_empty());
        let single = VirtualPathPrefix::new(vec![LevelPath::determined(0, vec![0, 0]).unwrap()]).unwrap();
        assert!(validate_virtual_prefix(&single).is_empty());
    }

    #[test]
    fn mutated_table_reports_both_neighbouring_pairs() {
        // X_4(0): 4 -> 3. By hand: P_4(X_5) starts with 4, and P_3 of the
        // mutated X_4 starts with 3 where X_3 starts with 2.
        let mut levels: Vec<LevelPath> = example_table().levels().to_vec();
        levels[4] = LevelPath::determined(4, vec![3, 2, 3, 1, 4]).unwrap();
        let vp = VirtualPathPrefix::new(levels).unwrap();
        let report = validate_virtual_prefix(&vp);
        assert_eq!(
            report,
            vec![
                ProjectionMismatch { lower: 3, upper: 4, index: 0 },
                ProjectionMismatch { lower: 4, upper: 5, index: 0 },
            ]
        );

        // X_4(1): 2 -> 3 shifts the (4,5) mismatch to index 1.
        let mut levels: Vec<LevelPath> = example_table().levels().to_vec();
        levels[4] = LevelPath::determined(4, vec![4, 3, 3, 1, 4]).unwrap();
        let report = validate_virtual_prefix(&VirtualPathPrefix::new(levels).unwrap());
        assert_eq!(
            report,
            vec![
                ProjectionMismatch { lower: 3, upper: 4, index: 0 },
                ProjectionMismatch { lower: 4, upper: 5, index: 1 },
            ]
        );
    }

    #[test]
    fn from_top_is_consistent() {
        let top = LevelPath::determined(5, vec![4, 5, 2, 3, 1, 5, 4, 1, 2, 0]).unwrap();
        let vp = VirtualPathPrefix::from_top(top).unwrap();
        assert!(validate_virtual_prefix(&vp).is_empty());
        assert_eq!(vp.level(3).determined_states()[..6], [2, 3, 1, 1, 2, 0]);
    }

    #[test]
    fn top_level_must_be_determined() {
        let levels = vec![LevelPath::determined(0, vec![0]).unwrap(), open(1, vec![1], 3)];
        assert!(VirtualPathPrefix::new(levels).is_err());
    }
}
