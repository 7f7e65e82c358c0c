mod common;

use hyperspread::scenario::Scenario;
use hyperspread::system::{self, find_equilibria, Dynamics};
use hyperspread::{Domain, IntegratorConfig, Virus};
use proptest::prelude::*;
use rand::Rng;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default().with_t_end(40.0).with_stride(0.5).without_equilibrium_stop()
}

/// A state above `z` in the order the flow preserves: larger in the first virus block and,
/// for two viruses, smaller in the second.
fn raised(z: &[f64], domain: &Domain, block: usize, seed: u64) -> Vec<f64> {
    let mut rng = common::rng(seed);
    let mut out = z.to_vec();
    if domain.dim() > block {
        for v in &mut out[block..] {
            *v *= rng.gen::<f64>();
        }
    }
    for i in 0..block {
        let mut room = domain.upper[i] - out[i];
        if let Some(&(_, b)) = domain.pair_sums.iter().find(|(a, _)| *a == i) {
            room = room.min(1.0 - out[i] - out[b]);
        }
        out[i] += rng.gen::<f64>() * room.max(0.0);
    }
    out
}

fn ordered(lo: &[f64], hi: &[f64], block: usize, tol: f64) -> bool {
    lo.iter().zip(hi).enumerate().all(|(i, (a, b))| if i < block { *a <= b + tol } else { *b <= a + tol })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_virus_invariance_and_order(seed in 0u64..100_000) {
        let sc = common::scenario(seed, 1);
        let m = sc.model(0).unwrap();
        let dom = m.domain();
        let z0 = common::point(&dom, seed);
        let z1 = raised(&z0, &dom, dom.dim(), seed + 1);
        let a = system::simulate(&m, &z0, &cfg()).unwrap();
        let b = system::simulate(&m, &z1, &cfg()).unwrap();
        prop_assert!(a.max_excursion <= 1e-9 && b.max_excursion <= 1e-9);
        prop_assert_eq!(&a.times, &b.times);
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!(ordered(x, y, dom.dim(), 1e-8));
        }
    }

    #[test]
    fn bi_virus_invariance_and_order(seed in 0u64..100_000) {
        let sc = common::scenario(seed, 2);
        let bi = sc.bi_model().unwrap();
        let dom = bi.domain();
        let z0 = common::point(&dom, seed);
        let z1 = raised(&z0, &dom, bi.block(), seed + 1);
        let a = system::simulate(&bi, &z0, &cfg()).unwrap();
        let b = system::simulate(&bi, &z1, &cfg()).unwrap();
        prop_assert!(a.max_excursion <= 1e-9 && b.max_excursion <= 1e-9);
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!(ordered(x, y, bi.block(), 1e-8));
        }
    }

    #[test]
    fn competition_only_lowers_each_virus(seed in 0u64..100_000) {
        let sc = common::scenario(seed, 2);
        let bi = sc.bi_model().unwrap();
        let z0 = common::point(&bi.domain(), seed);
        let joint = system::simulate(&bi, &z0, &cfg()).unwrap();
        let (z1, z2) = bi.split(&z0);
        for (v, start) in [(Virus::First, z1), (Virus::Second, z2)] {
            let alone = system::simulate(bi.virus(v), start, &cfg()).unwrap();
            let off = v.index() * bi.block();
            for (j, s) in joint.states.iter().zip(&alone.states) {
                prop_assert!(j[off..off + bi.block()].iter().zip(s).all(|(a, b)| *a <= b + 1e-8));
            }
        }
    }

    #[test]
    fn extinct_competitor_reduces_to_single_virus(seed in 0u64..100_000) {
        let sc = common::scenario(seed, 2);
        let bi = sc.bi_model().unwrap();
        for v in [Virus::First, Virus::Second] {
            let single = bi.virus(v);
            let z = common::point(&single.domain(), seed);
            let reduced = bi.drift(&bi.embed(v, &z));
            let expected = bi.embed(v, &single.drift(&z));
            prop_assert!(reduced.iter().zip(&expected).all(|(a, b)| (a - b).abs() <= 1e-15));
        }
    }
}

#[test]
fn serialisation_preserves_analysis() {
    for seed in 0..20 {
        let sc = common::scenario(seed, 1 + (seed % 2) as usize);
        let back: Scenario = sc.to_json().parse().unwrap();
        for k in 0..sc.viruses.len() {
            let (a, b) = (sc.model(k).unwrap(), back.model(k).unwrap());
            assert_eq!(system::healthy_classify(&a).unwrap(), system::healthy_classify(&b).unwrap());
            assert_eq!(find_equilibria(&a, 6, seed).unwrap(), find_equilibria(&b, 6, seed).unwrap());
        }
        assert_eq!(back.initial_states().unwrap(), sc.initial_states().unwrap());
    }
}
