//! Enumerators behind the instrument search: minimal d-separators between
//! two nodes and identifiable policy subspaces.

use std::collections::{BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use crate::diagram::{CausalDiagram, DiagramError, NodeSet, PolicySpace};
use crate::identify::{identify_policy, IdError};

/// Inclusion-minimal sets `Z ⊆ restrict` that d-separate `a` from `b`, in
/// lexicographic order.
///
/// A set containing `a` or `b` itself counts as separating, so when an
/// endpoint is in `restrict` and the empty set does not separate, that
/// endpoint alone is reported as well.
#[derive(Debug, Clone)]
pub struct MinSeparators {
    inner: std::vec::IntoIter<NodeSet>,
}

impl Iterator for MinSeparators {
    type Item = NodeSet;
    fn next(&mut self) -> Option<NodeSet> {
        self.inner.next()
    }
}

pub fn list_min_separators(
    diagram: &CausalDiagram,
    a: &str,
    b: &str,
    restrict: &NodeSet,
) -> Result<MinSeparators, DiagramError> {
    let ai = diagram.idx(a)?;
    let bi = diagram.idx(b)?;
    let r = diagram.mask(restrict)?;
    let mut found: Vec<NodeSet> = Vec::new();
    if ai == bi {
        return Ok(MinSeparators { inner: found.into_iter() });
    }
    let n = diagram.len();
    let none = vec![false; n];
    let mut ends = vec![false; n];
    ends[ai] = true;
    let mut endb = vec![false; n];
    endb[bi] = true;
    if diagram.d_separated_idx(&ends, &endb, &none) {
        found.push(NodeSet::new());
        return Ok(MinSeparators { inner: found.into_iter() });
    }
    for e in [ai, bi] {
        if r[e] {
            found.push(NodeSet::from([diagram.name(e).to_string()]));
        }
    }

    let moral = MoralGraph::new(diagram, ai, bi, &r);
    for sep in moral.minimal_separators() {
        found.push(sep.into_iter().map(|i| diagram.name(i).to_string()).collect());
    }
    found.sort();
    found.dedup();
    Ok(MinSeparators { inner: found.into_iter() })
}

/// Moral graph of `An({a, b})`, with bidirected edges expanded into hidden
/// forks and every vertex outside `restrict ∪ {a, b}` eliminated.
struct MoralGraph {
    adj: Vec<BTreeSet<usize>>,
    alive: Vec<bool>,
    a: usize,
    b: usize,
}

impl MoralGraph {
    fn new(d: &CausalDiagram, a: usize, b: usize, restrict: &[bool]) -> Self {
        let n = d.len();
        let forks = d.bidirected_edges();
        let total = n + forks.len();
        let mut parents: Vec<Vec<usize>> = (0..n).map(|i| d.parents_idx(i).to_vec()).collect();
        parents.extend(std::iter::repeat_with(Vec::new).take(forks.len()));
        for (k, (x, y)) in forks.iter().enumerate() {
            parents[d.index_of(x).unwrap()].push(n + k);
            parents[d.index_of(y).unwrap()].push(n + k);
        }
        let mut an = vec![false; total];
        let mut stack = vec![a, b];
        an[a] = true;
        an[b] = true;
        while let Some(v) = stack.pop() {
            for &p in &parents[v] {
                if !an[p] {
                    an[p] = true;
                    stack.push(p);
                }
            }
        }
        let mut adj = vec![BTreeSet::new(); total];
        for v in (0..total).filter(|&v| an[v]) {
            let ps = &parents[v];
            for (k, &p) in ps.iter().enumerate() {
                adj[v].insert(p);
                adj[p].insert(v);
                for &q in &ps[k + 1..] {
                    adj[p].insert(q);
                    adj[q].insert(p);
                }
            }
        }
        let mut alive = an;
        for v in 0..total {
            let keep = v == a || v == b || (v < n && restrict[v]);
            if alive[v] && !keep {
                alive[v] = false;
                let nb: Vec<usize> = adj[v].iter().copied().filter(|&w| alive[w]).collect();
                for &x in &nb {
                    adj[x].remove(&v);
                    for &y in &nb {
                        if x != y {
                            adj[x].insert(y);
                        }
                    }
                }
                adj[v].clear();
            }
        }
        MoralGraph { adj, alive, a, b }
    }

    /// Connected component of `start` avoiding `blocked`.
    fn component(&self, start: usize, blocked: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if self.alive[w] && !blocked[w] && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Open neighbourhood of a vertex set.
    fn boundary(&self, set: &[bool]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for v in (0..set.len()).filter(|&v| set[v]) {
            out.extend(self.adj[v].iter().copied().filter(|&w| !set[w] && self.alive[w]));
        }
        out
    }

    /// `N(C_b)` where `C_b` is the component of `b` once `N[close]` is removed.
    fn separator_near(&self, close: &[bool]) -> Option<BTreeSet<usize>> {
        let mut closed = close.to_vec();
        for w in self.boundary(close) {
            closed[w] = true;
        }
        if closed[self.b] {
            return None;
        }
        Some(self.boundary(&self.component(self.b, &closed)))
    }

    /// Every minimal `a`-`b` vertex separator, by closing the separator
    /// nearest to `a` under single-vertex moves towards `b`.
    fn minimal_separators(&self) -> Vec<BTreeSet<usize>> {
        let mut start = vec![false; self.adj.len()];
        start[self.a] = true;
        let Some(first) = self.separator_near(&start) else {
            return Vec::new();
        };
        let mut seen = BTreeSet::from([first.clone()]);
        let mut queue = VecDeque::from([first]);
        let mut out = Vec::new();
        while let Some(s) = queue.pop_front() {
            let mut blocked = vec![false; self.adj.len()];
            s.iter().for_each(|&v| blocked[v] = true);
            let ca = self.component(self.a, &blocked);
            for &x in &s {
                let mut close = ca.clone();
                close[x] = true;
                if let Some(next) = self.separator_near(&close) {
                    if seen.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
            }
            out.push(s);
        }
        out
    }
}

/// Identifiable subspaces of a policy space, produced lazily by
/// backtracking over input sets.
///
/// Each stack entry is a pair `(lower, upper)` of input sets. A branch is
/// abandoned as soon as the lower space is not identifiable; otherwise the
/// smallest undecided input is first included, then excluded.
pub struct IdSubspaces<'a> {
    diagram: &'a CausalDiagram,
    space: PolicySpace,
    outcome: NodeSet,
    stack: Vec<(NodeSet, NodeSet)>,
    check_monotone: bool,
    violations: usize,
    oracle_calls: usize,
    yield_times: Vec<Duration>,
    last: Instant,
}

pub fn list_id_subspaces<'a>(
    diagram: &'a CausalDiagram,
    space: &PolicySpace,
    outcome: &NodeSet,
) -> Result<IdSubspaces<'a>, IdError> {
    space.validate(diagram)?;
    for y in outcome {
        diagram.idx(y)?;
        if *y == space.action {
            return Err(IdError::OutcomeContainsAction(y.clone()));
        }
    }
    Ok(IdSubspaces {
        diagram,
        space: space.clone(),
        outcome: outcome.clone(),
        stack: vec![(NodeSet::new(), space.inputs.clone())],
        check_monotone: false,
        violations: 0,
        oracle_calls: 0,
        yield_times: Vec::new(),
        last: Instant::now(),
    })
}

impl IdSubspaces<'_> {
    /// On every pruned branch, also query the upper space and count cases
    /// where it is identifiable although the lower one is not.
    pub fn with_monotonicity_check(mut self) -> Self {
        self.check_monotone = true;
        self
    }

    pub fn monotonicity_violations(&self) -> usize {
        self.violations
    }

    pub fn oracle_calls(&self) -> usize {
        self.oracle_calls
    }

    /// Wall-clock time spent producing each yielded subspace.
    pub fn yield_times(&self) -> &[Duration] {
        &self.yield_times
    }

    fn identifiable(&mut self, inputs: &NodeSet) -> bool {
        self.oracle_calls += 1;
        let r = identify_policy(self.diagram, &self.space.with_inputs(inputs.clone()), &self.outcome);
        debug_assert!(matches!(r, Ok(_) | Err(IdError::NotIdentifiable(_))), "{r:?}");
        r.is_ok()
    }
}

impl Iterator for IdSubspaces<'_> {
    type Item = PolicySpace;

    fn next(&mut self) -> Option<PolicySpace> {
        while let Some((lower, upper)) = self.stack.pop() {
            if !self.identifiable(&lower) {
                if self.check_monotone && lower != upper && self.identifiable(&upper) {
                    self.violations += 1;
                }
                continue;
            }
            match upper.difference(&lower).next().cloned() {
                None => {
                    let now = Instant::now();
                    self.yield_times.push(now - self.last);
                    self.last = now;
                    return Some(self.space.with_inputs(lower));
                }
                Some(v) => {
                    let mut without = upper.clone();
                    without.remove(&v);
                    let mut with = lower.clone();
                    with.insert(v);
                    self.stack.push((lower, without));
                    self.stack.push((with, upper));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{hat_name, node_set, DiagramBuilder};

    fn fig1d() -> CausalDiagram {
        DiagramBuilder::new()
            .observed("Z")
            .observed("X")
            .observed("W")
            .observed("S")
            .latent("Y")
            .edge("X", "W")
            .edge("W", "S")
            .edge("S", "Y")
            .confounded("X", "S")
            .confounded("Z", "X")
            .confounded("Z", "S")
            .confounded("Z", "W")
            .build()
            .unwrap()
    }

    #[test]
    fn frontdoor_surrogate_is_unique() {
        let d = DiagramBuilder::new()
            .observed("X")
            .observed("W")
            .observed("S")
            .latent("Y")
            .edge("X", "W")
            .edge("W", "S")
            .edge("S", "Y")
            .confounded("X", "S")
            .build()
            .unwrap();
        let g = d.augment_policy(&PolicySpace::new("X", Vec::<String>::new())).unwrap();
        let found: Vec<NodeSet> = list_min_separators(&g, &hat_name("X"), "Y", &node_set(["W", "S"]))
            .unwrap()
            .collect();
        assert_eq!(found, vec![node_set(["S"])]);
    }

    #[test]
    fn disconnected_endpoints() {
        let d = DiagramBuilder::new().observed("A").observed("B").observed("C").build().unwrap();
        let found: Vec<NodeSet> = list_min_separators(&d, "A", "B", &node_set(["C"])).unwrap().collect();
        assert_eq!(found, vec![NodeSet::new()]);
    }

    #[test]
    fn adjacent_endpoints_have_no_separator() {
        let d = DiagramBuilder::new().observed("A").observed("B").edge("A", "B").build().unwrap();
        assert_eq!(list_min_separators(&d, "A", "B", &NodeSet::new()).unwrap().count(), 0);
    }

    #[test]
    fn id_subspaces_prune_collider_input() {
        let d = fig1d().with_observed("Y").unwrap();
        let space = PolicySpace::new("X", ["Z"]);
        let mut it = list_id_subspaces(&d, &space, &node_set(["Y"])).unwrap().with_monotonicity_check();
        let all: Vec<PolicySpace> = it.by_ref().collect();
        assert_eq!(all, vec![PolicySpace::new("X", Vec::<String>::new())]);
        assert_eq!(it.monotonicity_violations(), 0);
        assert_eq!(it.yield_times().len(), 1);
    }

    #[test]
    fn markovian_yields_every_subset() {
        let d = DiagramBuilder::new()
            .observed("A")
            .observed("B")
            .observed("X")
            .observed("Y")
            .edge("A", "X")
            .edge("B", "X")
            .edge("X", "Y")
            .edge("A", "Y")
            .build()
            .unwrap();
        let all: Vec<PolicySpace> = list_id_subspaces(&d, &PolicySpace::new("X", ["A", "B"]), &node_set(["Y"]))
            .unwrap()
            .collect();
        let inputs: Vec<NodeSet> = all.into_iter().map(|s| s.inputs).collect();
        assert_eq!(
            inputs,
            vec![node_set(["A", "B"]), node_set(["A"]), node_set(["B"]), NodeSet::new()]
        );
    }
}
