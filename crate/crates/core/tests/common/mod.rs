//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the search code it is used to check.
#![allow(dead_code)]

use std::collections::BTreeMap;

use causal_imitation::diagram::{hat_name, CausalDiagram, DiagramBuilder, NodeSet, PolicySpace};
use causal_imitation::fixtures;
use causal_imitation::scm::{DiscreteScm, Exogenous, Intervention, Mechanism};
use causal_imitation::{identify_policy, node_set};
use proptest::prelude::*;

/// Adjacency with edge marks: `(neighbour, arrowhead at me, arrowhead at neighbour)`.
fn marked_adjacency(d: &CausalDiagram) -> BTreeMap<String, Vec<(String, bool, bool)>> {
    let mut adj: BTreeMap<String, Vec<(String, bool, bool)>> =
        d.names().iter().map(|n| (n.clone(), Vec::new())).collect();
    for (a, b) in d.directed_edges() {
        adj.get_mut(&a).unwrap().push((b.clone(), false, true));
        adj.get_mut(&b).unwrap().push((a.clone(), true, false));
    }
    for (a, b) in d.bidirected_edges() {
        adj.get_mut(&a).unwrap().push((b.clone(), true, true));
        adj.get_mut(&b).unwrap().push((a.clone(), true, true));
    }
    adj
}

fn ancestors_inclusive(d: &CausalDiagram, seed: &NodeSet) -> NodeSet {
    let mut out = seed.clone();
    loop {
        let before = out.len();
        for (a, b) in d.directed_edges() {
            if out.contains(&b) {
                out.insert(a);
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

/// d-separation by enumerating every simple path and testing it for
/// activity: non-colliders outside `c`, colliders in `An(c)`.
pub fn dsep_by_paths(d: &CausalDiagram, a: &NodeSet, b: &NodeSet, c: &NodeSet) -> bool {
    let adj = marked_adjacency(d);
    let an_c = ancestors_inclusive(d, c);
    fn walk(
        adj: &BTreeMap<String, Vec<(String, bool, bool)>>,
        cur: &str,
        head_in: Option<bool>,
        visited: &mut Vec<String>,
        b: &NodeSet,
        c: &NodeSet,
        an_c: &NodeSet,
    ) -> bool {
        for (next, head_here, head_there) in &adj[cur] {
            if visited.contains(next) {
                continue;
            }
            if let Some(h_in) = head_in {
                let collider = h_in && *head_here;
                let ok = if collider { an_c.contains(cur) } else { !c.contains(cur) };
                if !ok {
                    continue;
                }
            }
            if b.contains(next) {
                return true;
            }
            visited.push(next.clone());
            let found = walk(adj, next, Some(*head_there), visited, b, c, an_c);
            visited.pop();
            if found {
                return true;
            }
        }
        false
    }
    for s in a {
        let mut visited = vec![s.clone()];
        if walk(&adj, s, None, &mut visited, b, c, &an_c) {
            return false;
        }
    }
    true
}

pub fn subsets(items: &[String]) -> Vec<NodeSet> {
    (0u32..1 << items.len())
        .map(|m| (0..items.len()).filter(|i| m >> i & 1 == 1).map(|i| items[i].clone()).collect())
        .collect()
}

/// Inclusion-minimal separators of `a` and `b` among subsets of `restrict`,
/// with the convention that an endpoint inside `restrict` separates by
/// itself whenever the empty set does not.
pub fn min_separators_brute(d: &CausalDiagram, a: &str, b: &str, restrict: &NodeSet) -> Vec<NodeSet> {
    let sa = node_set([a]);
    let sb = node_set([b]);
    if dsep_by_paths(d, &sa, &sb, &NodeSet::new()) {
        return vec![NodeSet::new()];
    }
    let pool: Vec<String> = restrict.iter().filter(|v| *v != a && *v != b).cloned().collect();
    let separating: Vec<NodeSet> = subsets(&pool)
        .into_iter()
        .filter(|s| dsep_by_paths(d, &sa, &sb, s))
        .collect();
    let mut out: Vec<NodeSet> = separating
        .iter()
        .filter(|s| !separating.iter().any(|t| t.len() < s.len() && t.is_subset(s)))
        .cloned()
        .collect();
    for e in [a, b] {
        if restrict.contains(e) {
            out.push(node_set([e]));
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Every subspace of `space` for which the outcome is identifiable.
pub fn id_subspaces_brute(d: &CausalDiagram, space: &PolicySpace, outcome: &NodeSet) -> Vec<PolicySpace> {
    let inputs: Vec<String> = space.inputs.iter().cloned().collect();
    let mut out: Vec<PolicySpace> = subsets(&inputs)
        .into_iter()
        .map(|s| space.with_inputs(s))
        .filter(|sub| identify_policy(d, sub, outcome).is_ok())
        .collect();
    out.sort_by(|x, y| x.inputs.cmp(&y.inputs));
    out
}

/// π-backdoor admissibility by path enumeration in a hand-built `G` with
/// the action's outgoing edges dropped.
pub fn backdoor_brute(d: &CausalDiagram, space: &PolicySpace, reward: &str, z: &NodeSet) -> bool {
    let mut b = DiagramBuilder::new();
    for n in d.names() {
        b = if d.is_observed(n).unwrap() { b.observed(n) } else { b.latent(n) };
    }
    for (x, y) in d.directed_edges() {
        if x != space.action {
            b = b.edge(&x, &y);
        }
    }
    for (x, y) in d.bidirected_edges() {
        b = b.confounded(&x, &y);
    }
    let cut = b.build().unwrap();
    dsep_by_paths(&cut, &node_set([reward]), &node_set([space.action.as_str()]), z)
}

/// The bundled diagrams with their declared policy spaces.
pub fn corpus() -> Vec<(String, CausalDiagram, PolicySpace)> {
    fixtures::graph_names()
        .into_iter()
        .map(|n| {
            let g = fixtures::graph(n);
            (n.to_string(), g.diagram, g.policy.expect("bundled diagrams declare a policy"))
        })
        .collect()
}

/// The corpus plus each diagram joined with its policy node.
pub fn corpus_with_policy_nodes() -> Vec<(String, CausalDiagram)> {
    let mut out = Vec::new();
    for (n, d, space) in corpus() {
        let aug = d.augment_policy(&space).unwrap();
        assert!(aug.contains(&hat_name(&space.action)));
        out.push((format!("{n}+policy"), aug));
        out.push((n, d));
    }
    out
}

/// The reward of a bundled diagram: `Y` where present, else the last
/// descendant of the action in name order.
pub fn reward_of(d: &CausalDiagram, space: &PolicySpace) -> String {
    if d.contains("Y") {
        return "Y".into();
    }
    let mut de = d.descendants(&node_set([space.action.as_str()])).unwrap();
    de.remove(&space.action);
    de.into_iter().next_back().unwrap()
}

/// Random acyclic mixed graphs on up to `max_nodes` nodes. Directed edges
/// point from lower to higher position; names run against that order so
/// that name order and topological order disagree.
pub fn arb_admg(max_nodes: usize) -> impl Strategy<Value = CausalDiagram> {
    (2..=max_nodes).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            Just(n),
            prop::collection::vec(0u8..6, pairs),
            prop::collection::vec(prop::bool::weighted(0.25), n),
        )
            .prop_map(|(n, kinds, latent)| {
                let name = |i: usize| ((b'A' + (n - 1 - i) as u8) as char).to_string();
                let mut b = DiagramBuilder::new();
                for i in 0..n {
                    b = if latent[i] { b.latent(&name(i)) } else { b.observed(&name(i)) };
                }
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        // 0-2: none, 3: directed, 4: bidirected, 5: both
                        match kinds[k] {
                            3 => b = b.edge(&name(i), &name(j)),
                            4 => b = b.confounded(&name(i), &name(j)),
                            5 => b = b.edge(&name(i), &name(j)).confounded(&name(i), &name(j)),
                            _ => {}
                        }
                        k += 1;
                    }
                }
                b.build().unwrap()
            })
    })
}

fn bern(p: f64) -> Vec<f64> {
    vec![1.0 - p, p]
}

/// A binary model on `X -> S`, `X <-> S` where `X` copies the shared
/// variable `U` and `S` reads `(X, U)` from `s_rows`.
pub fn bow_model(p_u: f64, s_rows: [f64; 4]) -> DiscreteScm {
    let d = fixtures::graph("bow").diagram;
    let domains: BTreeMap<String, usize> = [("S".to_string(), 2), ("X".to_string(), 2)].into();
    DiscreteScm::new(
        d,
        &domains,
        vec![Exogenous {
            name: "U".into(),
            probs: bern(p_u),
        }],
        vec![
            Mechanism {
                node: "X".into(),
                parents: vec![],
                exo: vec!["U".into()],
                rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            Mechanism {
                node: "S".into(),
                parents: vec!["X".into()],
                exo: vec!["U".into()],
                rows: s_rows.iter().map(|&p| bern(p)).collect(),
            },
        ],
    )
    .unwrap()
}

/// Grid search over bow models for two with the same observational joint
/// but different `P(S = 1 | do(X = 0))`.
pub fn bow_witness() -> Option<((f64, [f64; 4]), (f64, [f64; 4]), f64)> {
    let levels = [0.0, 0.5, 1.0];
    let mut models = Vec::new();
    for &p_u in &[0.5] {
        for a in levels {
            for b in levels {
                for c in levels {
                    for e in levels {
                        let rows = [a, b, c, e];
                        let m = bow_model(p_u, rows);
                        let obs = m.observational().unwrap();
                        let do0 = m
                            .intervene(&Intervention::Atomic {
                                node: "X".into(),
                                value: 0,
                            })
                            .unwrap()
                            .joint()
                            .unwrap()
                            .prob(&[("S", 1)])
                            .unwrap();
                        models.push(((p_u, rows), obs, do0));
                    }
                }
            }
        }
    }
    for (i, (pa, oa, da)) in models.iter().enumerate() {
        for (pb, ob, db) in &models[i + 1..] {
            if oa.max_abs_diff(ob).unwrap() < 1e-12 && (da - db).abs() > 0.25 {
                return Some((*pa, *pb, (da - db).abs()));
            }
        }
    }
    None
}
