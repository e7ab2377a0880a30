//! Latent projection onto the observed nodes.

use std::collections::BTreeSet;

use crate::diagram::{CausalDiagram, DiagramBuilder, DiagramError};

/// Projects `diagram` onto its observed nodes.
///
/// Works on an auxiliary graph in which every bidirected edge is replaced by
/// a latent fork. Then `S -> E` holds iff `E` is reachable from `S` along
/// directed edges whose interior is latent, and `S <-> E` holds iff some
/// latent node (original or fork) reaches both that way.
pub fn project(diagram: &CausalDiagram) -> Result<CausalDiagram, DiagramError> {
    let n = diagram.len();
    let forks = diagram.bidirected_edges();
    let total = n + forks.len();
    let mut children: Vec<Vec<usize>> = (0..n).map(|i| diagram.children_idx(i).to_vec()).collect();
    for (a, b) in &forks {
        children.push(vec![diagram.idx(a)?, diagram.idx(b)?]);
    }
    let observed = |v: usize| v < n && diagram.observed_idx(v);

    // Observed endpoints reachable from `start` through latent interiors.
    let reach = |start: usize| -> BTreeSet<usize> {
        let mut seen = vec![false; total];
        let mut stack = vec![start];
        let mut hits = BTreeSet::new();
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if seen[c] {
                    continue;
                }
                seen[c] = true;
                if observed(c) {
                    hits.insert(c);
                } else {
                    stack.push(c);
                }
            }
        }
        hits
    };

    let mut b = DiagramBuilder::new();
    for i in (0..n).filter(|&i| observed(i)) {
        b = b.observed(diagram.name(i));
    }
    let mut confounded = BTreeSet::new();
    for v in 0..total {
        let hits = reach(v);
        if observed(v) {
            for &e in &hits {
                b = b.edge(diagram.name(v), diagram.name(e));
            }
        } else {
            let hits: Vec<usize> = hits.into_iter().collect();
            for (k, &s) in hits.iter().enumerate() {
                for &e in &hits[k + 1..] {
                    confounded.insert((s, e));
                }
            }
        }
    }
    for (s, e) in confounded {
        b = b.confounded(diagram.name(s), diagram.name(e));
    }
    let out = b.build();
    debug_assert!(out.is_ok(), "projection of an acyclic diagram must be acyclic");
    out
}
