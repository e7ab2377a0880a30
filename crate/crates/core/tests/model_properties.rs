mod common;

use causal_imitation::criteria::find_pi_backdoor;
use causal_imitation::identify::IdError;
use causal_imitation::imitate::{
    binary_closed_form, imitate_pipeline, instruments, solve_policy, verify_policy, Status, DEFAULT_TOLERANCE,
};
use causal_imitation::scm::{frontdoor_diagram, random_frontdoor, random_policy, random_scm, Intervention};
use causal_imitation::{evaluate, fixtures, identify_atomic, identify_policy, node_set, NodeSet, Policy, PolicySpace};
use proptest::prelude::*;

#[test]
fn fixture_joints_are_normalized_and_consistent() {
    for name in fixtures::scm_names() {
        let scm = fixtures::scm(name).scm;
        let joint = scm.joint().unwrap();
        assert!((joint.total() - 1.0).abs() <= 1e-9, "{name}");
        let obs = scm.observational().unwrap();
        let direct = joint.marginal(obs.vars()).unwrap();
        assert!(direct.max_abs_diff(&obs).unwrap() <= 1e-12, "{name}");
    }
}

#[test]
fn policy_semantics_agree_on_fixtures() {
    for name in fixtures::scm_names() {
        let file = fixtures::scm(name);
        let space = file.policy.unwrap();
        for seed in 0..5 {
            let pi = random_policy(&file.scm, &space, seed).unwrap();
            let via_submodel = file.scm.intervene(&Intervention::Policy(pi.clone())).unwrap().joint().unwrap();
            let direct = file.scm.policy_joint_direct(&pi).unwrap();
            assert!(via_submodel.max_abs_diff(&direct).unwrap() <= 1e-12, "{name}");
        }
    }
}

#[test]
fn fixture_marginals() {
    let frontdoor_xor = fixtures::scm("frontdoor_xor").scm;
    let joint = frontdoor_xor.joint().unwrap();
    assert!((joint.prob(&[("X", 1)]).unwrap() - 0.18).abs() < 1e-12);
    let fig2b = fixtures::scm("fig2b").scm;
    for i in 0..=20 {
        let p0 = i as f64 / 20.0;
        let pi = Policy::new("X", 2, vec![], vec![], vec![vec![p0, 1.0 - p0]]).unwrap();
        let y = fig2b.policy_marginal(&pi, &node_set(["Y"])).unwrap();
        assert!((y.prob(&[("Y", 1)]).unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn sampling_concentrates() {
    let scm = fixtures::scm("frontdoor_xor").scm;
    let exact = scm.observational().unwrap();
    let est = scm.sample(100_000, 11).empirical().unwrap();
    assert!(est.l1_distance(&exact).unwrap() < 0.01);
    assert_eq!(scm.sample(50, 3), scm.sample(50, 3));
}

#[test]
fn bow_is_certified_unidentifiable() {
    let d = fixtures::graph("bow").diagram;
    assert!(matches!(
        identify_atomic(&d, &node_set(["X"]), &node_set(["S"])),
        Err(IdError::NotIdentifiable(_))
    ));
    let (a, b, gap) = common::bow_witness().expect("two observationally equal models with different effects");
    assert!(gap > 0.25, "{a:?} vs {b:?}");
    let g = fixtures::graph("fig1d");
    let space = g.policy.unwrap();
    assert!(identify_policy(&g.diagram, &space, &node_set(["S"])).is_err());
    assert!(identify_policy(&g.diagram, &space.with_inputs(NodeSet::new()), &node_set(["S"])).is_ok());
}

#[test]
fn evaluations_are_distributions() {
    for (name, d, space) in common::corpus() {
        let scm = random_scm(&d, 2, 5).unwrap();
        let obs = scm.observational().unwrap();
        let mut outcome = d.observed_nodes();
        outcome.remove(&space.action);
        if let Ok(f) = identify_policy(&d, &space, &outcome) {
            let pi = random_policy(&scm, &space, 1).unwrap();
            let t = evaluate(&f, &obs, Some(&pi)).unwrap();
            assert!(t.values().iter().all(|v| *v >= -1e-12), "{name}");
            assert!((t.total() - 1.0).abs() <= 1e-9, "{name}");
        }
    }
}

/// Graphical verdicts in executable form: the prescribed conditional
/// reproduces the reward distribution exactly.
#[test]
fn backdoor_policies_imitate() {
    for (name, d, space) in common::corpus() {
        let y = common::reward_of(&d, &space);
        let Some(z) = find_pi_backdoor(&d, &space, &y).unwrap() else {
            continue;
        };
        for seed in 0..20 {
            let scm = random_scm(&d, 2, seed).unwrap();
            let z: Vec<String> = z.iter().cloned().collect();
            let pi = Policy::from_conditional(&scm.observational().unwrap(), &space.action, &z).unwrap();
            let r = verify_policy(&scm, &pi, &node_set([y.as_str()])).unwrap();
            assert!(r <= 1e-9, "{name} seed {seed}: {r}");
        }
    }
    for name in ["fig2a", "highway_binary"] {
        let file = fixtures::scm(name);
        let space = file.policy.unwrap();
        let z = find_pi_backdoor(file.scm.diagram(), &space, "Y").unwrap().unwrap();
        let z: Vec<String> = z.into_iter().collect();
        let pi = Policy::from_conditional(&file.scm.observational().unwrap(), "X", &z).unwrap();
        assert!(verify_policy(&file.scm, &pi, &node_set(["Y"])).unwrap() <= 1e-9, "{name}");
    }
}

#[test]
fn pipeline_verdicts_on_fixtures() {
    let run = |name: &str| {
        let file = fixtures::scm(name);
        let space = file.policy.unwrap();
        let obs = file.scm.observational().unwrap();
        let r = imitate_pipeline(file.scm.diagram(), &space, "Y", &obs, DEFAULT_TOLERANCE).unwrap();
        (file.scm, r)
    };
    let (_, r) = run("xor_confounded");
    assert_eq!(r.status, Status::NoInstrumentFound);
    assert!(r.policy.is_none());
    let (_, r) = run("fig2b");
    assert_eq!(r.status, Status::Infeasible);
    let (scm, r) = run("frontdoor_xor");
    assert_eq!(r.status, Status::PImitable);
    let p = r.policy.unwrap();
    assert!((p.prob(0, &[]) - 1.0).abs() < 1e-6);
    assert!(verify_policy(&scm, &p, &node_set(["Y"])).unwrap() <= 1e-6);
    let (scm, r) = run("fig2a");
    assert_eq!(r.status, Status::ImitableGraphical);
    assert!(verify_policy(&scm, r.policy.as_ref().unwrap(), &node_set(["Y"])).unwrap() <= 1e-9);

    let xor_confounded = fixtures::scm("xor_confounded").scm;
    let bc = Policy::from_conditional(&xor_confounded.observational().unwrap(), "X", &[]).unwrap();
    assert!((verify_policy(&xor_confounded, &bc, &node_set(["Y"])).unwrap() - 1.0).abs() < 1e-12);
}

fn frontdoor_space() -> PolicySpace {
    PolicySpace::new("X", Vec::<String>::new())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Soundness and the surrogate lemma on random front-door models.
    #[test]
    fn pipeline_policies_imitate_the_reward(seed in any::<u64>()) {
        let scm = random_frontdoor(seed);
        let obs = scm.observational().unwrap();
        let r = imitate_pipeline(scm.diagram(), &frontdoor_space(), "Y", &obs, DEFAULT_TOLERANCE).unwrap();
        prop_assert_eq!(r.status.has_policy(), r.policy.is_some());
        if let Some(p) = &r.policy {
            prop_assert!(r.residual <= DEFAULT_TOLERANCE);
            let s = verify_policy(&scm, p, &node_set(["S"])).unwrap();
            let y = verify_policy(&scm, p, &node_set(["Y"])).unwrap();
            prop_assert!(s <= 1e-6);
            prop_assert!(y <= s + 1e-12);
        }
    }

    /// The LP and the closed form agree on binary problems without inputs.
    #[test]
    fn solver_matches_closed_form(seed in any::<u64>()) {
        let scm = random_frontdoor(seed);
        let obs = scm.observational().unwrap();
        let (s, sub) = instruments(&frontdoor_diagram(), &frontdoor_space(), "Y").unwrap().remove(0);
        let f = identify_policy(&frontdoor_diagram(), &sub, &s).unwrap();
        let sol = solve_policy(&f, &obs, &s, "X", DEFAULT_TOLERANCE).unwrap();
        let point = |x: usize| {
            scm.intervene(&Intervention::Atomic { node: "X".into(), value: x }).unwrap()
                .joint().unwrap().prob(&[("S", 1)]).unwrap()
        };
        let p_s1 = obs.prob(&[("S", 1)]).unwrap();
        let w = binary_closed_form(p_s1, point(0), point(1)).unwrap();
        let inside = w.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v));
        prop_assert_eq!(inside, sol.feasible);
        if inside {
            prop_assert!((sol.policy.prob(0, &[]) - w[0]).abs() <= 1e-9);
        }
    }

    /// Infeasibility for a surrogate persists for its supersets.
    #[test]
    fn infeasibility_is_monotone_in_the_surrogate(seed in any::<u64>()) {
        let scm = random_frontdoor(seed);
        let obs = scm.observational().unwrap();
        let d = frontdoor_diagram();
        let space = frontdoor_space();
        let solve = |s: &NodeSet| {
            let f = identify_policy(&d, &space, s).unwrap();
            solve_policy(&f, &obs, s, "X", DEFAULT_TOLERANCE).unwrap().feasible
        };
        let small = solve(&node_set(["S"]));
        let large = solve(&node_set(["S", "W"]));
        prop_assert!(small || !large);
    }

    #[test]
    fn atomic_identification_is_sound(seed in any::<u64>(), which in 0usize..6) {
        let name = ["fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig3a"][which];
        let g = fixtures::graph(name);
        let d = g.diagram;
        let x = g.policy.unwrap().action;
        let mut outcome = d.observed_nodes();
        outcome.remove(&x);
        let scm = random_scm(&d, 2, seed).unwrap();
        if let Ok(f) = identify_atomic(&d, &node_set([x.as_str()]), &outcome) {
            let t = evaluate(&f, &scm.observational().unwrap(), None).unwrap();
            for v in 0..2 {
                let want = scm.intervene(&Intervention::Atomic { node: x.clone(), value: v }).unwrap()
                    .joint().unwrap().marginal(&outcome.iter().cloned().collect::<Vec<_>>()).unwrap();
                let got = if t.position(&x).is_some() { t.restrict(&x, v).unwrap() } else { t.clone() };
                prop_assert!(got.max_abs_diff(&want).unwrap() <= 1e-9);
            }
        }
    }
}
