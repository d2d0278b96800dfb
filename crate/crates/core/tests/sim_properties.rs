mod common;

use std::sync::OnceLock;

use common::*;
use faultlens::sim::{FaultSpec, Injection, RunResult};
use proptest::prelude::*;

fn designs() -> &'static Vec<(Prepared, RunResult)> {
    static CELL: OnceLock<Vec<(Prepared, RunResult)>> = OnceLock::new();
    CELL.get_or_init(|| {
        [("crc8", 0), ("alu4", 1), ("sbox_towerfield", 2), ("parity_tree", 3)]
            .into_iter()
            .map(|(seed, i)| {
                let p = prepare_generated(&design(seed, 99, i));
                let gold = p.prog.run_gold(&p.stim).unwrap();
                (p, gold)
            })
            .collect()
    })
}

fn injection(p: &Prepared, gold: &RunResult, side_a: bool, pick: usize, cycle: usize) -> Injection {
    let ffs = if side_a { &p.map.ffs_a } else { &p.map.ffs_b };
    Injection {
        ff: ffs[pick % ffs.len()],
        cycle: cycle % (gold.done_time.unwrap() + 1),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn empty_fault_equals_gold(d in 0usize..4) {
        let (p, gold) = &designs()[d];
        let r = p.prog.run_with_fault(&p.stim, &FaultSpec::default(), gold).unwrap();
        prop_assert_eq!(&r, gold);
    }

    #[test]
    fn flipping_twice_is_no_fault(d in 0usize..4, a in any::<bool>(), pick in 0usize..1000, cycle in 0usize..16) {
        let (p, gold) = &designs()[d];
        let inj = injection(p, gold, a, pick, cycle);
        let r = p.prog.run_with_fault(&p.stim, &FaultSpec::pair(inj, inj), gold).unwrap();
        prop_assert_eq!(&r, gold);
    }

    #[test]
    fn single_fault_stays_in_its_replica(d in 0usize..4, a in any::<bool>(), pick in 0usize..1000, cycle in 0usize..16) {
        let (p, gold) = &designs()[d];
        let inj = injection(p, gold, a, pick, cycle);
        let r = p.prog.run_with_fault(&p.stim, &FaultSpec { injections: vec![inj] }, gold).unwrap();
        if a {
            prop_assert_eq!(r.out_b, gold.out_b);
        } else {
            prop_assert_eq!(r.out_a, gold.out_a);
        }
    }

    #[test]
    fn results_do_not_depend_on_lane_or_batch(
        d in 0usize..4,
        picks in prop::collection::vec((any::<bool>(), 0usize..1000, 0usize..16), 1..150),
    ) {
        let (p, gold) = &designs()[d];
        let faults: Vec<FaultSpec> = picks
            .iter()
            .map(|&(a, pick, cycle)| FaultSpec { injections: vec![injection(p, gold, a, pick, cycle)] })
            .collect();
        let batched = p.prog.run_faults(&p.stim, &faults, gold).unwrap();
        let again = p.prog.run_faults(&p.stim, &faults, gold).unwrap();
        prop_assert_eq!(&batched, &again);
        let mut reversed = faults.clone();
        reversed.reverse();
        let mut rev = p.prog.run_faults(&p.stim, &reversed, gold).unwrap();
        rev.reverse();
        prop_assert_eq!(&batched, &rev);
        for (f, r) in faults.iter().zip(&batched).take(8) {
            prop_assert_eq!(&p.prog.run_with_fault(&p.stim, f, gold).unwrap(), r);
        }
    }
}
