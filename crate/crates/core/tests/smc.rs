use vmc_core::kernels::{Balayage, LevelDistribution, NamedBalayage};
use vmc_core::rational::ratio;
use vmc_core::simplex::{delta_point, membership, MarginalSequence};
use vmc_core::smc::{backward_check, empirical_marginals, point_marginals, SmcKernel, StaircasePrefix};
use vmc_core::VmcError;

#[test]
fn zero_kernel_is_constant() {
    let k = SmcKernel::new(MarginalSequence::zero(6)).unwrap();
    for r in 0..20 {
        assert_eq!(k.sample(6, 1, r).unwrap().entries(), &[0; 7]);
    }
    let samples = k.sample_many(6, 100, 1).unwrap();
    assert_eq!(empirical_marginals(&samples, Some(k.marginals())).unwrap().max_tv(), Some(0.0));
    let pi = Balayage::named(NamedBalayage::Uniform, 8);
    assert!(matches!(backward_check(&samples, &pi, 3), Err(VmcError::ConditioningEventUnobserved { .. })));
}

#[test]
fn down_delta_three_is_deterministic() {
    let pi = Balayage::named(NamedBalayage::Down, 8);
    let k = SmcKernel::new(delta_point(&pi, 3, 6).unwrap()).unwrap();
    let samples = k.sample_many(6, 100_000, 3).unwrap();
    assert!(samples.iter().all(|s| s.entries() == [0, 1, 2, 3, 3, 3, 3]));
    assert_eq!(empirical_marginals(&samples, Some(k.marginals())).unwrap().max_tv(), Some(0.0));
}

#[test]
fn uniform_kernel() {
    let u = MarginalSequence::virtual_uniform(6);
    let k = SmcKernel::new(u.clone()).unwrap();
    for n in 1..6 {
        for s in 1..=n {
            assert_eq!(k.hold(n, s), Some(&ratio(n as i64, n as i64 + 1)));
        }
    }
    let samples = k.sample_many(6, 100_000, 42).unwrap();
    assert!(samples.iter().all(|s| s.entries()[..2] == [0, 1]));
    let emp = empirical_marginals(&samples, Some(&u)).unwrap();
    assert!(emp.tv.as_ref().unwrap()[4] <= 0.02);

    // A_N = {S_{N+1} = N+1}: frequencies 1/(N+1) and pairwise independence
    let jump = |s: &StaircasePrefix, n: usize| s.entries()[n + 1] == n + 1;
    let total = samples.len() as f64;
    for n in 1..5 {
        let p = samples.iter().filter(|s| jump(s, n)).count() as f64 / total;
        assert!((p - 1.0 / (n as f64 + 1.0)).abs() < 0.01, "P(A_{n}) = {p}");
        let m = n + 1;
        let both = samples.iter().filter(|s| jump(s, n) && jump(s, m)).count() as f64 / total;
        let want = 1.0 / ((n as f64 + 1.0) * (m as f64 + 1.0));
        assert!((both - want).abs() < 0.01, "P(A_{n} ∩ A_{m}) = {both}");
    }

    let pi = Balayage::named(NamedBalayage::Uniform, 8);
    let b = backward_check(&samples, &pi, 3).unwrap();
    assert!(b.tv <= 0.05, "{b:?}");
}

#[test]
fn two_down_delta_four_backward() {
    let pi = Balayage::named(NamedBalayage::TwoDown, 8);
    let k = SmcKernel::new(delta_point(&pi, 4, 5).unwrap()).unwrap();
    let samples = k.sample_many(5, 1000, 0).unwrap();
    let b = backward_check(&samples, &pi, 3).unwrap();
    assert_eq!(b.conditional, vec![0.0, 0.0, 1.0, 0.0]);
    assert_eq!(b.tv, 0.0);
}

#[test]
fn point_marginals_examples() {
    let z = point_marginals(&StaircasePrefix::new(vec![0, 0, 0]).unwrap());
    assert_eq!(z.levels(), MarginalSequence::zero(2).levels());
    let s = point_marginals(&StaircasePrefix::new(vec![0, 1, 2, 2, 4]).unwrap());
    for (n, x) in [0, 1, 2, 2, 4].into_iter().enumerate() {
        assert_eq!(s.level(n), &LevelDistribution::point(n, x));
    }
    // any staircase lies in 𝒟 — in particular in 𝒟(π) for the down balayage when it only climbs by jumps
    let down = Balayage::named(NamedBalayage::Down, 8);
    let climb = point_marginals(&StaircasePrefix::new(vec![0, 1, 2, 3]).unwrap());
    assert!(membership(&climb, &down).unwrap().member);
    assert!(StaircasePrefix::new(vec![0, 1, 3]).is_err());
    assert!(StaircasePrefix::new(vec![0, 2]).is_err());
}

#[test]
fn samples_satisfy_the_staircase_constraint() {
    let pi = Balayage::named(NamedBalayage::Uniform, 12);
    let d5 = delta_point(&pi, 5, 8).unwrap();
    let u = MarginalSequence::virtual_uniform(8);
    let mix = MarginalSequence::mixture(&[(ratio(1, 4), &d5), (ratio(3, 4), &u)]).unwrap();
    let k = SmcKernel::new(mix).unwrap();
    for s in k.sample_many(8, 2000, 9).unwrap() {
        let e = s.entries();
        assert!(e.windows(2).enumerate().all(|(n, w)| w[1] == w[0] || w[1] == n + 1));
    }
}

#[test]
fn empirical_length_mismatch() {
    let a = StaircasePrefix::new(vec![0, 1]).unwrap();
    let b = StaircasePrefix::new(vec![0, 1, 2]).unwrap();
    assert!(matches!(empirical_marginals(&[a, b], None), Err(VmcError::LengthMismatch(_))));
}
