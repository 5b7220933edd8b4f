use std::collections::BTreeSet;

use proptest::prelude::*;
use vmc_core::levels::{
    hitting_index, project_path, validate_virtual_prefix, HitResult, LevelPath, State, VirtualPathPrefix,
};

fn set(xs: &[State]) -> BTreeSet<State> {
    xs.iter().copied().collect()
}

fn worked_table(x4_first: State) -> VirtualPathPrefix {
    let rows: [Vec<State>; 6] = [
        vec![0],
        vec![1, 1, 0],
        vec![2, 1, 1, 2, 0],
        vec![2, 3, 1, 1, 2, 0],
        vec![x4_first, 2, 3, 1, 4, 1, 2, 0],
        vec![4, 5, 2, 3, 1, 5, 4, 1, 2, 0],
    ];
    VirtualPathPrefix::new(rows.into_iter().enumerate().map(|(n, r)| LevelPath::determined(n, r).unwrap()).collect())
        .unwrap()
}

#[test]
fn hitting_index_three_ways() {
    let x5 = LevelPath::determined(5, vec![4, 5, 2, 3, 1]).unwrap();
    assert_eq!(hitting_index(&x5, &set(&[1]), 0), HitResult::FoundAt(4));
    let zeros = LevelPath::determined(5, vec![0; 6]).unwrap();
    assert_eq!(hitting_index(&zeros, &set(&[3]), 0), HitResult::ProvablyNever);
    let open = LevelPath::new(5, vec![4, 5, 2], 6).unwrap();
    assert_eq!(hitting_index(&open, &set(&[1]), 0), HitResult::UnknownWithinHorizon);
    assert_eq!(hitting_index(&x5, &set(&[4]), 1), HitResult::UnknownWithinHorizon);
}

#[test]
fn projecting_the_worked_rows() {
    let x5 = LevelPath::determined(5, vec![4, 5, 2, 3, 1]).unwrap();
    let x4 = project_path(&x5, 4).unwrap();
    assert_eq!(x4.determined_states(), &[4, 2, 3, 1]);
    assert!(x4.determined_len() < x4.len() || x4.len() == 4);
    assert_eq!(x4.entry(4), None);

    let x3 = LevelPath::determined(3, vec![2, 3, 1, 1, 2]).unwrap();
    assert_eq!(project_path(&x3, 2).unwrap().determined_states(), &[2, 1, 1, 2]);

    let inside = LevelPath::determined(4, vec![2, 1, 0, 0]).unwrap();
    assert_eq!(project_path(&inside, 4).unwrap(), inside);
    assert!(project_path(&inside, 5).is_err());
}

#[test]
fn absorbed_sources_project_to_zero_padding() {
    let p = LevelPath::determined(3, vec![3, 2, 3, 0, 0]).unwrap();
    let q = project_path(&p, 2).unwrap();
    assert_eq!(q.determined_states().first(), Some(&2));
    assert!(q.is_absorbed());
}

#[test]
fn worked_table_validates_and_mutation_is_reported() {
    assert!(validate_virtual_prefix(&worked_table(4)).is_empty());
    let single = VirtualPathPrefix::new(vec![LevelPath::determined(0, vec![0, 0, 0]).unwrap()]).unwrap();
    assert!(validate_virtual_prefix(&single).is_empty());

    let report = validate_virtual_prefix(&worked_table(3));
    let pairs: Vec<(usize, usize, usize)> = report.iter().map(|m| (m.lower, m.upper, m.index)).collect();
    assert!(pairs.contains(&(4, 5, 0)), "{pairs:?}");
    assert!(pairs.iter().any(|&(l, u, _)| (l, u) == (3, 4)), "{pairs:?}");
}

#[test]
fn invariants_are_enforced() {
    assert!(LevelPath::determined(2, vec![1, 3]).is_err());
    assert!(LevelPath::determined(2, vec![1, 0, 2]).is_err());
}

#[test]
fn path_json_keeps_determinacy() {
    let p = LevelPath::new(3, vec![3, 1], 4).unwrap();
    let text = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<LevelPath>(&text).unwrap(), p);
}

/// A random fully determined path at `level`: free moves, absorbed at 0.
fn arb_path(level: usize) -> impl Strategy<Value = LevelPath> {
    prop::collection::vec(0..=level, 1..60).prop_map(move |mut xs| {
        if let Some(i) = xs.iter().position(|&x| x == 0) {
            xs[i..].iter_mut().for_each(|x| *x = 0);
        }
        LevelPath::determined(level, xs).unwrap()
    })
}

proptest! {
    #[test]
    fn projection_composes(p in arb_path(7), m in 0usize..=7, n in 0usize..=7) {
        let (n, m) = (n.min(m), n.max(m));
        let two_step = project_path(&project_path(&p, m).unwrap(), n).unwrap();
        let direct = project_path(&p, n).unwrap();
        for i in 0..two_step.len().min(direct.len()) {
            if let (Some(x), Some(y)) = (two_step.entry(i), direct.entry(i)) {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn longer_inputs_only_extend_outputs(p in arb_path(6), cut in 1usize..60, n in 0usize..=6) {
        let states = p.determined_states();
        let cut = cut.min(states.len());
        let short = LevelPath::determined(6, states[..cut].to_vec()).unwrap();
        let (a, b) = (project_path(&short, n).unwrap(), project_path(&p, n).unwrap());
        prop_assert!(a.determined_len() <= b.determined_len());
        for i in 0..a.determined_len() {
            prop_assert_eq!(a.entry(i), b.entry(i));
        }
    }

    #[test]
    fn from_top_tables_are_consistent(p in arb_path(6)) {
        let vp = VirtualPathPrefix::from_top(p).unwrap();
        prop_assert!(validate_virtual_prefix(&vp).is_empty());
        for level in vp.levels() {
            let d = level.determined_states();
            if let Some(i) = d.iter().position(|&x| x == 0) {
                prop_assert!(d[i..].iter().all(|&x| x == 0));
            }
        }
    }
}
