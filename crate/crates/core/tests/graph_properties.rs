mod common;

use causal_imitation::diagram::Relation;
use causal_imitation::scm::{independent, random_scm};
use causal_imitation::{fixtures, node_set, project, NodeSet};
use proptest::prelude::*;

fn random_triple(names: &[String], code: u64) -> (NodeSet, NodeSet, NodeSet) {
    let (mut a, mut b, mut c) = (NodeSet::new(), NodeSet::new(), NodeSet::new());
    let mut k = code;
    for v in names {
        match k % 4 {
            1 => a.insert(v.clone()),
            2 => b.insert(v.clone()),
            3 => c.insert(v.clone()),
            _ => false,
        };
        k /= 4;
    }
    (a, b, c)
}

proptest! {
    #[test]
    fn dsep_matches_path_oracle(d in common::arb_admg(6), code in any::<u64>()) {
        let (a, b, c) = random_triple(d.names(), code);
        prop_assume!(!a.is_empty() && !b.is_empty());
        prop_assert_eq!(d.d_separated(&a, &b, &c).unwrap(), common::dsep_by_paths(&d, &a, &b, &c));
    }

    #[test]
    fn dsep_is_symmetric(d in common::arb_admg(7), code in any::<u64>()) {
        let (a, b, c) = random_triple(d.names(), code);
        prop_assume!(!a.is_empty() && !b.is_empty());
        prop_assert_eq!(d.d_separated(&a, &b, &c).unwrap(), d.d_separated(&b, &a, &c).unwrap());
    }

    #[test]
    fn closure_is_monotone_and_idempotent(d in common::arb_admg(7), m1 in any::<u8>(), m2 in any::<u8>()) {
        let pick = |m: u8| -> NodeSet {
            d.names().iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, n)| n.clone()).collect()
        };
        let small = pick(m1 & m2);
        let large = pick(m1);
        for rel in [Relation::Ancestors, Relation::Descendants] {
            let s = d.closure(&small, rel, true).unwrap();
            let l = d.closure(&large, rel, true).unwrap();
            prop_assert!(s.is_subset(&l));
            prop_assert_eq!(d.closure(&l, rel, true).unwrap(), l);
        }
    }

    #[test]
    fn mutilation_stays_valid(d in common::arb_admg(7), m1 in any::<u8>(), m2 in any::<u8>()) {
        let pick = |m: u8| -> NodeSet {
            d.names().iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, n)| n.clone()).collect()
        };
        let cut = d.mutilate(&pick(m1), &pick(m2)).unwrap();
        prop_assert!(cut.validate().is_empty());
        for (_, b) in cut.directed_edges() {
            prop_assert!(!pick(m1).contains(&b));
        }
    }

    #[test]
    fn projection_is_idempotent_and_acyclic(d in common::arb_admg(7)) {
        let h = project(&d).unwrap();
        prop_assert!(h.validate().is_empty());
        prop_assert!(h.is_semi_markovian());
        prop_assert_eq!(project(&h).unwrap(), h.clone());
        prop_assert_eq!(h.names().len(), d.observed_nodes().len());
    }

    #[test]
    fn projection_preserves_observed_separations(d in common::arb_admg(6), code in any::<u64>()) {
        let h = project(&d).unwrap();
        let (a, b, c) = random_triple(h.names(), code);
        prop_assume!(!a.is_empty() && !b.is_empty());
        prop_assert_eq!(h.d_separated(&a, &b, &c).unwrap(), d.d_separated(&a, &b, &c).unwrap());
    }
}

/// d-separation implies conditional independence in every bundled model, in
/// the full diagram and in its projection onto the observed nodes.
#[test]
fn separation_implies_independence_on_fixtures() {
    let mut checked = 0;
    for name in fixtures::scm_names() {
        let scm = fixtures::scm(name).scm;
        let d = scm.diagram().clone();
        let joint = scm.joint().unwrap();
        let obs = scm.observational().unwrap();
        let h = project(&d).unwrap();
        let names = d.names().to_vec();
        for code in 0..4u64.pow(names.len() as u32) {
            let (a, b, c) = random_triple(&names, code);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            if d.d_separated(&a, &b, &c).unwrap() {
                assert!(independent(&joint, &a, &b, &c, 1e-9).unwrap(), "{name}: {a:?} {b:?} {c:?}");
                checked += 1;
            }
            let observed = |s: &NodeSet| s.iter().all(|v| h.contains(v));
            if observed(&a) && observed(&b) && observed(&c) && h.d_separated(&a, &b, &c).unwrap() {
                assert!(independent(&obs, &a, &b, &c, 1e-9).unwrap(), "{name} projected: {a:?} {b:?} {c:?}");
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn separation_implies_independence_on_random_models() {
    for (name, d, _) in common::corpus() {
        for seed in 0..5 {
            let scm = random_scm(&d, 2, seed).unwrap();
            let joint = scm.joint().unwrap();
            let names = d.names().to_vec();
            for code in 0..4u64.pow(names.len() as u32).min(2048) {
                let (a, b, c) = random_triple(&names, code * 7919 % 4u64.pow(names.len() as u32));
                if a.is_empty() || b.is_empty() {
                    continue;
                }
                if d.d_separated(&a, &b, &c).unwrap() {
                    assert!(independent(&joint, &a, &b, &c, 1e-9).unwrap(), "{name}: {a:?} {b:?} {c:?}");
                }
            }
        }
    }
}

#[test]
fn fixture_graph_facts() {
    let g = fixtures::graph("fig1a").diagram;
    assert_eq!(
        g.ancestors(&node_set(["Y"])).unwrap(),
        node_set(["L", "X", "Y", "Z"])
    );
    let c = fixtures::graph("fig1c").diagram;
    assert_eq!(
        c.descendants(&node_set(["X"])).unwrap(),
        node_set(["S", "W", "X", "Y"])
    );
    let cut = g.mutilate(&node_set(["X"]), &NodeSet::new()).unwrap();
    assert!(!cut.has_edge("Z", "X") && !cut.has_edge("L", "X"));
}
