//! Staircase Markov chains: the forward kernel built from a marginal
//! sequence, exact enumeration, point marginals and empirical checks.

use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::kernels::{tv_distance, Balayage, LevelDistribution};
use crate::levels::State;
use crate::rational::{self, Rational};
use crate::rng::replicate_rng;
use crate::simplex::MarginalSequence;

/// `s_0, ..., s_L` with `s_N ∈ ⟦0,N⟧` and `s_{N+1} ∈ {s_N, N+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<State>", into = "Vec<State>")]
pub struct StaircasePrefix(Vec<State>);

impl StaircasePrefix {
    pub fn new(entries: Vec<State>) -> Result<Self> {
        if entries.first().is_some_and(|&s| s != 0) {
            return Err(VmcError::InvalidPath { level: 0, reason: "a staircase starts at 0".into() });
        }
        for n in 1..entries.len() {
            if entries[n] != entries[n - 1] && entries[n] != n {
                return Err(VmcError::InvalidPath {
                    level: n,
                    reason: format!("step {} -> {} neither holds nor jumps to {n}", entries[n - 1], entries[n]),
                });
            }
        }
        Ok(StaircasePrefix(entries))
    }

    pub fn entries(&self) -> &[State] {
        &self.0
    }

    /// Index of the last level (`L`).
    pub fn top_level(&self) -> usize {
        self.0.len() - 1
    }
}

impl TryFrom<Vec<State>> for StaircasePrefix {
    type Error = VmcError;
    fn try_from(v: Vec<State>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StaircasePrefix> for Vec<State> {
    fn from(s: StaircasePrefix) -> Self {
        s.0
    }
}

/// Forward kernel: hold at `s` with probability `ν_{N+1}(s)/ν_N(s)`,
/// otherwise jump to `N+1`.
#[derive(Debug, Clone)]
pub struct SmcKernel {
    marginals: MarginalSequence,
    /// `hold[N][s]`, defined where `ν_N(s) > 0`.
    hold: Vec<Vec<Option<Rational>>>,
    hold_f64: Vec<Vec<f64>>,
}

impl SmcKernel {
    pub fn new(marginals: MarginalSequence) -> Result<Self> {
        let top = marginals.top_level();
        let mut hold = Vec::with_capacity(top);
        for n in 0..top {
            let (cur, next) = (marginals.level(n), marginals.level(n + 1));
            hold.push(
                (0..=n)
                    .map(|s| {
                        let w = &cur.weights()[s];
                        (!w.is_zero()).then(|| &next.weights()[s] / w)
                    })
                    .collect::<Vec<_>>(),
            );
        }
        let hold_f64 = hold
            .iter()
            .map(|row| row.iter().map(|h| h.as_ref().map_or(f64::NAN, rational::to_f64)).collect())
            .collect();
        Ok(SmcKernel { marginals, hold, hold_f64 })
    }

    pub fn marginals(&self) -> &MarginalSequence {
        &self.marginals
    }

    /// Highest level a sample can reach.
    pub fn top_level(&self) -> usize {
        self.marginals.top_level()
    }

    /// Exact hold probability at `(N, s)`; `None` off the support of `ν_N`.
    pub fn hold(&self, n: usize, s: State) -> Option<&Rational> {
        self.hold[n][s].as_ref()
    }

    fn check_levels(&self, top: usize) -> Result<()> {
        if top > self.top_level() {
            Err(VmcError::PrefixTooShort { needed: top, available: self.top_level() })
        } else {
            Ok(())
        }
    }

    /// One staircase through level `top`, from the stream `(seed, replicate)`.
    /// Exactly one uniform draw is consumed per step.
    pub fn sample(&self, top: usize, seed: u64, replicate: u64) -> Result<StaircasePrefix> {
        self.check_levels(top)?;
        let mut rng = replicate_rng(seed, replicate);
        let mut s = 0;
        let mut out = Vec::with_capacity(top + 1);
        out.push(0);
        for n in 0..top {
            let h = self.hold_f64[n][s];
            if h.is_nan() {
                return Err(VmcError::InternalUnreachableState { level: n, state: s });
            }
            let u: f64 = rng.random();
            if u >= h {
                s = n + 1;
            }
            out.push(s);
        }
        Ok(StaircasePrefix(out))
    }

    /// Replicates `0..count`, in replicate order.
    pub fn sample_many(&self, top: usize, count: usize, seed: u64) -> Result<Vec<StaircasePrefix>> {
        (0..count as u64).into_par_iter().map(|r| self.sample(top, seed, r)).collect()
    }

    /// Every staircase through level `top` with positive probability, with
    /// its exact probability.
    pub fn enumerate(&self, top: usize) -> Result<Vec<(StaircasePrefix, Rational)>> {
        self.check_levels(top)?;
        let mut paths = vec![(vec![0], Rational::one())];
        for n in 0..top {
            let mut next = Vec::with_capacity(paths.len() * 2);
            for (path, p) in paths {
                let s = *path.last().unwrap();
                let h = self.hold[n][s].clone().ok_or(VmcError::InternalUnreachableState { level: n, state: s })?;
                let jump = Rational::one() - &h;
                if !h.is_zero() {
                    let mut kept = path.clone();
                    kept.push(s);
                    next.push((kept, &p * &h));
                }
                if !jump.is_zero() {
                    let mut moved = path;
                    moved.push(n + 1);
                    next.push((moved, p * jump));
                }
            }
            paths = next;
        }
        Ok(paths.into_iter().map(|(s, p)| (StaircasePrefix(s), p)).collect())
    }
}

/// Exact level marginals of a law on staircases given by enumeration.
pub fn enumerated_marginals(law: &[(StaircasePrefix, Rational)]) -> Vec<LevelDistribution> {
    let top = law.first().map_or(0, |(s, _)| s.top_level());
    (0..=top)
        .map(|n| {
            let mut w = vec![Rational::zero(); n + 1];
            for (s, p) in law {
                w[s.0[n]] += p;
            }
            LevelDistribution::new_unchecked(w)
        })
        .collect()
}

/// Exact `P(S_N = · | S_{N+1} = N+1)` under an enumerated law, or `None`
/// when the conditioning event has probability zero.
pub fn enumerated_backward(law: &[(StaircasePrefix, Rational)], n: usize) -> Option<LevelDistribution> {
    let mut w = vec![Rational::zero(); n + 1];
    let mut total = Rational::zero();
    for (s, p) in law {
        if s.0[n + 1] == n + 1 {
            w[s.0[n]] += p;
            total += p;
        }
    }
    if total.is_zero() {
        return None;
    }
    Some(LevelDistribution::new_unchecked(w.into_iter().map(|x| x / &total).collect()))
}

/// `φ(s)`: the sequence of point masses `δ_{s_N}`.
pub fn point_marginals(s: &StaircasePrefix) -> MarginalSequence {
    let levels = s.0.iter().enumerate().map(|(n, &x)| LevelDistribution::point(n, x)).collect();
    MarginalSequence::new(levels, None).expect("staircases have monotone point marginals")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMarginals {
    pub samples: usize,
    /// `frequencies[N][b]` estimates `P(S_N = b)`.
    pub frequencies: Vec<Vec<f64>>,
    /// Per-level total variation distance to the reference, when given.
    pub tv: Option<Vec<f64>>,
}

impl EmpiricalMarginals {
    pub fn max_tv(&self) -> Option<f64> {
        self.tv.as_ref().map(|v| v.iter().copied().fold(0.0, f64::max))
    }
}

/// Level-wise empirical distributions of `samples`, compared against
/// `reference` on the common levels.
pub fn empirical_marginals(samples: &[StaircasePrefix], reference: Option<&MarginalSequence>) -> Result<EmpiricalMarginals> {
    let Some(first) = samples.first() else {
        return Err(VmcError::LengthMismatch("no samples".into()));
    };
    let len = first.0.len();
    if let Some(bad) = samples.iter().position(|s| s.0.len() != len) {
        return Err(VmcError::LengthMismatch(format!(
            "sample {bad} has {} levels, sample 0 has {len}",
            samples[bad].0.len()
        )));
    }
    let mut counts: Vec<Vec<u64>> = (0..len).map(|n| vec![0; n + 1]).collect();
    for s in samples {
        for (n, &x) in s.0.iter().enumerate() {
            counts[n][x] += 1;
        }
    }
    let total = samples.len() as f64;
    let frequencies: Vec<Vec<f64>> =
        counts.iter().map(|row| row.iter().map(|&c| c as f64 / total).collect()).collect();
    let tv = reference.map(|r| {
        let common = len.min(r.top_level() + 1);
        (0..common).map(|n| tv_distance(&frequencies[n], &r.level(n).to_f64())).collect()
    });
    Ok(EmpiricalMarginals { samples: samples.len(), frequencies, tv })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardCheck {
    pub level: usize,
    pub observed: usize,
    pub conditional: Vec<f64>,
    pub tv: f64,
}

/// Empirical `P(S_N = · | S_{N+1} = N+1)` against `π_N`.
pub fn backward_check(samples: &[StaircasePrefix], pi: &Balayage, n: usize) -> Result<BackwardCheck> {
    pi.require(n + 1)?;
    let mut counts = vec![0u64; n + 1];
    let mut observed = 0usize;
    for s in samples {
        if s.0.len() < n + 2 {
            return Err(VmcError::LengthMismatch(format!("samples stop below level {}", n + 1)));
        }
        if s.0[n + 1] == n + 1 {
            counts[s.0[n]] += 1;
            observed += 1;
        }
    }
    if observed == 0 {
        return Err(VmcError::ConditioningEventUnobserved { level: n });
    }
    let conditional: Vec<f64> = counts.iter().map(|&c| c as f64 / observed as f64).collect();
    let tv = tv_distance(&conditional, &pi.row(n).to_f64());
    Ok(BackwardCheck { level: n, observed, conditional, tv })
}
