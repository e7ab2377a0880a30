//! Mixed causal diagrams: directed edges for structural dependence and
//! bidirected edges for unobserved confounding between two nodes.
//!
//! Nodes are kept in lexicographic order by name. All internal indices refer
//! to that order, so iteration, tie-breaking and printing are deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Sets of node names. Ordered so that every traversal is deterministic.
pub type NodeSet = BTreeSet<String>;

/// Builds a [`NodeSet`] from anything string-like.
pub fn node_set<I, S>(names: I) -> NodeSet
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    names.into_iter().map(Into::into).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observability {
    Observed,
    Latent,
}

impl Observability {
    pub fn keyword(self) -> &'static str {
        match self {
            Observability::Observed => "obs",
            Observability::Latent => "lat",
        }
    }
}

/// A structural problem found by [`DiagramBuilder::violations`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyName,
    DuplicateNode(String),
    UnknownNode { edge: String, node: String },
    SelfLoop(String),
    /// Nodes participating in at least one directed cycle.
    Cycle(Vec<String>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyName => write!(f, "empty node name"),
            Violation::DuplicateNode(n) => write!(f, "duplicate node {n}"),
            Violation::UnknownNode { edge, node } => {
                write!(f, "unknown node {node} in edge {edge}")
            }
            Violation::SelfLoop(n) => write!(f, "self-loop on {n}"),
            Violation::Cycle(nodes) => write!(f, "cycle through {}", nodes.join(", ")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagramError {
    #[error("invalid diagram: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node sets must be disjoint (shared: {0})")]
    OverlappingSets(String),
    #[error("reserved node name {0} already present in diagram")]
    ReservedName(String),
    #[error("invalid policy space: {0}")]
    InvalidPolicy(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Unchecked collection of declarations. Use [`DiagramBuilder::build`] to
/// obtain a validated [`CausalDiagram`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiagramBuilder {
    pub nodes: Vec<(String, Observability)>,
    pub directed: Vec<(String, String)>,
    pub bidirected: Vec<(String, String)>,
}

impl DiagramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observed(mut self, name: &str) -> Self {
        self.nodes.push((name.to_string(), Observability::Observed));
        self
    }

    pub fn latent(mut self, name: &str) -> Self {
        self.nodes.push((name.to_string(), Observability::Latent));
        self
    }

    pub fn edge(mut self, from: &str, to: &str) -> Self {
        self.directed.push((from.to_string(), to.to_string()));
        self
    }

    pub fn confounded(mut self, a: &str, b: &str) -> Self {
        self.bidirected.push((a.to_string(), b.to_string()));
        self
    }

    /// Every invariant violation; empty when the declarations form a valid
    /// diagram.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (name, _) in &self.nodes {
            if name.is_empty() {
                out.push(Violation::EmptyName);
            } else if !seen.insert(name.as_str()) {
                out.push(Violation::DuplicateNode(name.clone()));
            }
        }
        let check = |a: &str, b: &str, glyph: &str, out: &mut Vec<Violation>| {
            let label = format!("{a} {glyph} {b}");
            for n in [a, b] {
                if !seen.contains(n) {
                    out.push(Violation::UnknownNode {
                        edge: label.clone(),
                        node: n.to_string(),
                    });
                }
            }
            if a == b {
                out.push(Violation::SelfLoop(a.to_string()));
            }
        };
        for (a, b) in &self.directed {
            check(a, b, "->", &mut out);
        }
        for (a, b) in &self.bidirected {
            check(a, b, "<->", &mut out);
        }

        // Kahn's algorithm over the well-formed directed edges; whatever is
        // left over lies on or downstream of a cycle, so prune sinks until
        // only cycle members remain.
        let names: Vec<&str> = seen.iter().copied().collect();
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut succ = vec![BTreeSet::new(); names.len()];
        for (a, b) in &self.directed {
            if let (Some(&i), Some(&j)) = (index.get(a.as_str()), index.get(b.as_str())) {
                if i != j {
                    succ[i].insert(j);
                }
            }
        }
        let mut alive = vec![true; names.len()];
        loop {
            let mut changed = false;
            for v in 0..names.len() {
                if !alive[v] {
                    continue;
                }
                let has_in = (0..names.len()).any(|u| alive[u] && succ[u].contains(&v));
                let has_out = succ[v].iter().any(|&w| alive[w]);
                if !has_in || !has_out {
                    alive[v] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let cyc: Vec<String> = (0..names.len())
            .filter(|&v| alive[v])
            .map(|v| names[v].to_string())
            .collect();
        if !cyc.is_empty() {
            out.push(Violation::Cycle(cyc));
        }
        out
    }

    pub fn build(&self) -> Result<CausalDiagram, DiagramError> {
        let violations = self.violations();
        if !violations.is_empty() {
            return Err(DiagramError::Invalid(violations));
        }
        let mut sorted: Vec<(String, Observability)> = self.nodes.clone();
        sorted.sort();
        let names: Vec<String> = sorted.iter().map(|(n, _)| n.clone()).collect();
        let observed = sorted
            .iter()
            .map(|(_, o)| *o == Observability::Observed)
            .collect();
        let index = |n: &str| names.binary_search_by(|x| x.as_str().cmp(n)).unwrap();
        let n = names.len();
        let mut parents = vec![BTreeSet::new(); n];
        let mut children = vec![BTreeSet::new(); n];
        let mut spouses = vec![BTreeSet::new(); n];
        for (a, b) in &self.directed {
            let (i, j) = (index(a), index(b));
            children[i].insert(j);
            parents[j].insert(i);
        }
        for (a, b) in &self.bidirected {
            let (i, j) = (index(a), index(b));
            spouses[i].insert(j);
            spouses[j].insert(i);
        }
        let to_vec = |v: Vec<BTreeSet<usize>>| v.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(CausalDiagram {
            names,
            observed,
            parents: to_vec(parents),
            children: to_vec(children),
            spouses: to_vec(spouses),
        })
    }
}

/// Whether [`CausalDiagram::closure`] follows edges backwards or forwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Ancestors,
    Descendants,
}

/// A validated acyclic directed mixed graph over named nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDiagram {
    names: Vec<String>,
    observed: Vec<bool>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    spouses: Vec<Vec<usize>>,
}

impl CausalDiagram {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|x| x.as_str().cmp(name)).ok()
    }

    pub(crate) fn idx(&self, name: &str) -> Result<usize, DiagramError> {
        self.index_of(name)
            .ok_or_else(|| DiagramError::UnknownNode(name.to_string()))
    }

    pub(crate) fn mask(&self, set: &NodeSet) -> Result<Vec<bool>, DiagramError> {
        let mut m = vec![false; self.len()];
        for n in set {
            m[self.idx(n)?] = true;
        }
        Ok(m)
    }

    pub(crate) fn unmask(&self, m: &[bool]) -> NodeSet {
        m.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.names[i].clone())
            .collect()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn is_observed(&self, name: &str) -> Result<bool, DiagramError> {
        Ok(self.observed[self.idx(name)?])
    }

    pub fn observed_nodes(&self) -> NodeSet {
        self.unmask(&self.observed)
    }

    pub fn latent_nodes(&self) -> NodeSet {
        let m: Vec<bool> = self.observed.iter().map(|o| !o).collect();
        self.unmask(&m)
    }

    pub fn is_semi_markovian(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub(crate) fn parents_idx(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub(crate) fn children_idx(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub(crate) fn spouses_idx(&self, i: usize) -> &[usize] {
        &self.spouses[i]
    }

    pub(crate) fn observed_idx(&self, i: usize) -> bool {
        self.observed[i]
    }

    pub fn parents(&self, name: &str) -> Result<NodeSet, DiagramError> {
        let i = self.idx(name)?;
        Ok(self.parents[i].iter().map(|&p| self.names[p].clone()).collect())
    }

    pub fn children(&self, name: &str) -> Result<NodeSet, DiagramError> {
        let i = self.idx(name)?;
        Ok(self.children[i].iter().map(|&p| self.names[p].clone()).collect())
    }

    pub fn spouses(&self, name: &str) -> Result<NodeSet, DiagramError> {
        let i = self.idx(name)?;
        Ok(self.spouses[i].iter().map(|&p| self.names[p].clone()).collect())
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.children[i].contains(&j),
            _ => false,
        }
    }

    pub fn has_bidirected(&self, a: &str, b: &str) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.spouses[i].contains(&j),
            _ => false,
        }
    }

    pub fn directed_edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, ch) in self.children.iter().enumerate() {
            for &j in ch {
                out.push((self.names[i].clone(), self.names[j].clone()));
            }
        }
        out
    }

    /// Bidirected edges, each listed once with the smaller name first.
    pub fn bidirected_edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, sp) in self.spouses.iter().enumerate() {
            for &j in sp.iter().filter(|&&j| j > i) {
                out.push((self.names[i].clone(), self.names[j].clone()));
            }
        }
        out
    }

    pub fn to_builder(&self) -> DiagramBuilder {
        let nodes = self
            .names
            .iter()
            .zip(&self.observed)
            .map(|(n, &o)| {
                let obs = if o {
                    Observability::Observed
                } else {
                    Observability::Latent
                };
                (n.clone(), obs)
            })
            .collect();
        DiagramBuilder {
            nodes,
            directed: self.directed_edges(),
            bidirected: self.bidirected_edges(),
        }
    }

    /// Re-checks the construction invariants. Always empty for values built
    /// through [`DiagramBuilder::build`].
    pub fn validate(&self) -> Vec<Violation> {
        self.to_builder().violations()
    }

    pub(crate) fn closure_idx(&self, seed: &[bool], relation: Relation, inclusive: bool) -> Vec<bool> {
        let mut out = vec![false; self.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (i, &s) in seed.iter().enumerate() {
            if s {
                queue.push_back(i);
            }
        }
        while let Some(v) = queue.pop_front() {
            let next = match relation {
                Relation::Ancestors => &self.parents[v],
                Relation::Descendants => &self.children[v],
            };
            for &w in next {
                if !out[w] {
                    out[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if inclusive {
            for (o, &s) in out.iter_mut().zip(seed) {
                *o |= s;
            }
        }
        out
    }

    /// Reflexive (when `inclusive`) transitive closure of `seed` along
    /// directed edges.
    pub fn closure(
        &self,
        seed: &NodeSet,
        relation: Relation,
        inclusive: bool,
    ) -> Result<NodeSet, DiagramError> {
        let m = self.mask(seed)?;
        Ok(self.unmask(&self.closure_idx(&m, relation, inclusive)))
    }

    /// `An(seed)`, seed included.
    pub fn ancestors(&self, seed: &NodeSet) -> Result<NodeSet, DiagramError> {
        self.closure(seed, Relation::Ancestors, true)
    }

    /// `De(seed)`, seed included.
    pub fn descendants(&self, seed: &NodeSet) -> Result<NodeSet, DiagramError> {
        self.closure(seed, Relation::Descendants, true)
    }

    /// Topological order, breaking ties by smallest name.
    pub(crate) fn topological_idx(&self) -> Vec<usize> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::with_capacity(self.len());
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            out.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        out
    }

    pub fn topological_order(&self) -> Vec<String> {
        self.topological_idx()
            .into_iter()
            .map(|i| self.names[i].clone())
            .collect()
    }

    fn rebuild(&self, keep_directed: impl Fn(usize, usize) -> bool, keep_bi: impl Fn(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        for i in 0..self.len() {
            out.children[i].retain(|&j| keep_directed(i, j));
            out.parents[i].retain(|&p| keep_directed(p, i));
            out.spouses[i].retain(|&j| keep_bi(i, j));
        }
        out
    }

    /// Removes directed edges into `cut_incoming` and out of `cut_outgoing`.
    /// Bidirected edges touching `cut_incoming` go too, since they carry an
    /// arrowhead into the node.
    pub fn mutilate(&self, cut_incoming: &NodeSet, cut_outgoing: &NodeSet) -> Result<Self, DiagramError> {
        let inc = self.mask(cut_incoming)?;
        let out = self.mask(cut_outgoing)?;
        Ok(self.rebuild(|i, j| !inc[j] && !out[i], |i, j| !inc[i] && !inc[j]))
    }

    /// Induced subgraph over `keep`.
    pub fn subgraph(&self, keep: &NodeSet) -> Result<Self, DiagramError> {
        let mask = self.mask(keep)?;
        let mut b = DiagramBuilder::new();
        for (i, name) in self.names.iter().enumerate().filter(|(i, _)| mask[*i]) {
            b = if self.observed[i] { b.observed(name) } else { b.latent(name) };
        }
        for (a, c) in self.directed_edges() {
            if keep.contains(&a) && keep.contains(&c) {
                b = b.edge(&a, &c);
            }
        }
        for (a, c) in self.bidirected_edges() {
            if keep.contains(&a) && keep.contains(&c) {
                b = b.confounded(&a, &c);
            }
        }
        b.build()
    }

    /// Copy of the diagram where `name` is marked observed.
    pub fn with_observed(&self, name: &str) -> Result<Self, DiagramError> {
        let i = self.idx(name)?;
        let mut out = self.clone();
        out.observed[i] = true;
        Ok(out)
    }

    fn with_extra(&self, extra_nodes: &[(String, Observability)], extra_edges: &[(String, String)]) -> Result<Self, DiagramError> {
        let mut b = self.to_builder();
        b.nodes.extend_from_slice(extra_nodes);
        for e in extra_edges {
            if !b.directed.contains(e) {
                b.directed.push(e.clone());
            }
        }
        b.build()
    }

    /// `G ∪ Π`: adds `Pa(Π) → X` and a fresh observed parent `X̂ → X`.
    pub fn augment_policy(&self, space: &PolicySpace) -> Result<Self, DiagramError> {
        space.validate(self)?;
        let hat = hat_name(&space.action);
        if self.contains(&hat) {
            return Err(DiagramError::ReservedName(hat));
        }
        let mut edges: Vec<(String, String)> = space
            .inputs
            .iter()
            .map(|z| (z.clone(), space.action.clone()))
            .collect();
        edges.push((hat.clone(), space.action.clone()));
        self.with_extra(&[(hat, Observability::Observed)], &edges)
    }

    /// `G_Π`: drops everything pointing into the action, then wires
    /// `Pa(Π) → X`.
    pub fn manipulated(&self, space: &PolicySpace) -> Result<Self, DiagramError> {
        space.validate(self)?;
        let cut = self.mutilate(&node_set([space.action.as_str()]), &NodeSet::new())?;
        let edges: Vec<(String, String)> = space
            .inputs
            .iter()
            .map(|z| (z.clone(), space.action.clone()))
            .collect();
        cut.with_extra(&[], &edges)
    }

    /// d-separation of `a` and `b` given `c`; a bidirected edge behaves like a
    /// hidden common parent of its endpoints.
    pub fn d_separated(&self, a: &NodeSet, b: &NodeSet, c: &NodeSet) -> Result<bool, DiagramError> {
        let ma = self.mask(a)?;
        let mb = self.mask(b)?;
        let mc = self.mask(c)?;
        for (x, y) in [(&ma, &mb), (&ma, &mc), (&mb, &mc)] {
            if let Some(i) = (0..self.len()).find(|&i| x[i] && y[i]) {
                return Err(DiagramError::OverlappingSets(self.names[i].clone()));
            }
        }
        Ok(self.d_separated_idx(&ma, &mb, &mc))
    }

    pub(crate) fn d_separated_idx(&self, a: &[bool], b: &[bool], c: &[bool]) -> bool {
        let reach = self.d_connected_from(a, c);
        !(0..self.len()).any(|i| b[i] && reach[i])
    }

    /// Nodes reachable from `a` along an active trail given `c`.
    pub(crate) fn d_connected_from(&self, a: &[bool], c: &[bool]) -> Vec<bool> {
        let n = self.len();
        let an_c = self.closure_idx(c, Relation::Ancestors, true);
        // visited[v][0]: reached v through its tail end (from a child);
        // visited[v][1]: reached v through an arrowhead (from parent/spouse).
        let mut visited = vec![[false; 2]; n];
        let mut reached = vec![false; n];
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        let push = |v: usize, head: usize, visited: &mut Vec<[bool; 2]>, queue: &mut VecDeque<(usize, usize)>| {
            if !visited[v][head] {
                visited[v][head] = true;
                queue.push_back((v, head));
            }
        };
        for s in (0..n).filter(|&i| a[i]) {
            for &p in &self.parents[s] {
                push(p, 0, &mut visited, &mut queue);
            }
            for &ch in &self.children[s] {
                push(ch, 1, &mut visited, &mut queue);
            }
            for &sp in &self.spouses[s] {
                push(sp, 1, &mut visited, &mut queue);
            }
        }
        while let Some((v, head)) = queue.pop_front() {
            reached[v] = true;
            let pass_non_collider = !c[v];
            if head == 0 {
                if pass_non_collider {
                    for &p in &self.parents[v] {
                        push(p, 0, &mut visited, &mut queue);
                    }
                    for &ch in &self.children[v] {
                        push(ch, 1, &mut visited, &mut queue);
                    }
                    for &sp in &self.spouses[v] {
                        push(sp, 1, &mut visited, &mut queue);
                    }
                }
            } else {
                if pass_non_collider {
                    for &ch in &self.children[v] {
                        push(ch, 1, &mut visited, &mut queue);
                    }
                }
                if an_c[v] {
                    for &p in &self.parents[v] {
                        push(p, 0, &mut visited, &mut queue);
                    }
                    for &sp in &self.spouses[v] {
                        push(sp, 1, &mut visited, &mut queue);
                    }
                }
            }
        }
        reached
    }
}

/// Name of the policy-indicator node attached to `action` by
/// [`CausalDiagram::augment_policy`].
pub fn hat_name(action: &str) -> String {
    format!("{action}\u{0302}")
}

/// The action node together with the covariates a policy may read.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicySpace {
    pub action: String,
    pub inputs: NodeSet,
}

impl PolicySpace {
    pub fn new<I, S>(action: &str, inputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PolicySpace {
            action: action.to_string(),
            inputs: node_set(inputs),
        }
    }

    /// Same action, different inputs.
    pub fn with_inputs(&self, inputs: NodeSet) -> Self {
        PolicySpace {
            action: self.action.clone(),
            inputs,
        }
    }

    pub fn is_subspace_of(&self, other: &PolicySpace) -> bool {
        self.action == other.action && self.inputs.is_subset(&other.inputs)
    }

    pub fn validate(&self, diagram: &CausalDiagram) -> Result<(), DiagramError> {
        let bad = |m: String| Err(DiagramError::InvalidPolicy(m));
        match diagram.index_of(&self.action) {
            None => return bad(format!("unknown action {}", self.action)),
            Some(i) if !diagram.observed_idx(i) => {
                return bad(format!("action {} is latent", self.action))
            }
            _ => {}
        }
        if self.inputs.contains(&self.action) {
            return bad(format!("action {} listed as its own input", self.action));
        }
        let de = diagram.descendants(&node_set([self.action.as_str()]))?;
        for z in &self.inputs {
            match diagram.index_of(z) {
                None => return bad(format!("unknown input {z}")),
                Some(i) if !diagram.observed_idx(i) => return bad(format!("input {z} is latent")),
                _ => {}
            }
            if de.contains(z) {
                return bad(format!("input {z} is a descendant of {}", self.action));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PolicySpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inputs: Vec<&str> = self.inputs.iter().map(String::as_str).collect();
        write!(f, "π({} | {{{}}})", self.action, inputs.join(", "))
    }
}
