//! Identification of interventional distributions from observational data:
//! c-components, the c-component factorization identifier for atomic
//! interventions, its lift to conditional policies, and an exact evaluator
//! for the resulting formulas.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::diagram::{node_set, CausalDiagram, DiagramError, NodeSet, PolicySpace, Relation};
use crate::projection::project;
use crate::table::{FactorTable, JointTable, Policy, TableError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdError {
    #[error("not identifiable: {0}")]
    NotIdentifiable(String),
    #[error("outcome and action overlap on {0}")]
    OutcomeContainsAction(String),
    #[error("c-components need a diagram without latent nodes (found {0})")]
    LatentNodes(String),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unsupported conditional: {0} has a zero-probability conditioning event")]
    UnsupportedConditional(String),
    #[error("formula needs a policy for {0} but none was supplied")]
    MissingPolicy(String),
    #[error("policy is for {found}, formula expects {expected}")]
    PolicyMismatch { expected: String, found: String },
    #[error("no domain known for variable {0}")]
    UnknownVariable(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Expression tree produced by identification.
#[derive(Debug, Clone, PartialEq)]
pub enum IdFormula {
    /// Observational `P(vars | given)`.
    Factor { vars: Vec<String>, given: Vec<String> },
    Sum { bound: Vec<String>, body: Box<IdFormula> },
    Product(Vec<IdFormula>),
    Quotient(Box<IdFormula>, Box<IdFormula>),
    /// `π(action | inputs)`.
    Policy { action: String, inputs: Vec<String> },
    Constant(f64),
}

impl IdFormula {
    pub fn factor(vars: &NodeSet, given: &NodeSet) -> Self {
        IdFormula::Factor {
            vars: vars.iter().cloned().collect(),
            given: given.iter().cloned().collect(),
        }
    }

    /// `Σ_bound body`, dropping bound variables that do not occur free in
    /// the body (and the sum itself if nothing is left).
    pub fn sum(bound: &NodeSet, body: IdFormula) -> Self {
        let free = body.free_vars();
        let bound: Vec<String> = bound.iter().filter(|v| free.contains(*v)).cloned().collect();
        if bound.is_empty() {
            body
        } else {
            IdFormula::Sum {
                bound,
                body: Box::new(body),
            }
        }
    }

    /// Flattens nested products; a single factor is returned unwrapped.
    pub fn product(parts: Vec<IdFormula>) -> Self {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                IdFormula::Product(inner) => flat.extend(inner),
                IdFormula::Constant(c) if c == 1.0 => {}
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => IdFormula::Constant(1.0),
            1 => flat.pop().unwrap(),
            _ => IdFormula::Product(flat),
        }
    }

    pub fn quotient(num: IdFormula, den: IdFormula) -> Self {
        IdFormula::Quotient(Box::new(num), Box::new(den))
    }

    pub fn free_vars(&self) -> NodeSet {
        match self {
            IdFormula::Factor { vars, given } => vars.iter().chain(given).cloned().collect(),
            IdFormula::Sum { bound, body } => {
                let mut f = body.free_vars();
                for b in bound {
                    f.remove(b);
                }
                f
            }
            IdFormula::Product(parts) => parts.iter().flat_map(|p| p.free_vars()).collect(),
            IdFormula::Quotient(n, d) => n.free_vars().union(&d.free_vars()).cloned().collect(),
            IdFormula::Policy { action, inputs } => {
                std::iter::once(action).chain(inputs).cloned().collect()
            }
            IdFormula::Constant(_) => NodeSet::new(),
        }
    }

    /// The policy placeholder, if any.
    pub fn placeholder(&self) -> Option<(&str, &[String])> {
        match self {
            IdFormula::Policy { action, inputs } => Some((action, inputs)),
            IdFormula::Sum { body, .. } => body.placeholder(),
            IdFormula::Product(parts) => parts.iter().find_map(|p| p.placeholder()),
            IdFormula::Quotient(n, d) => n.placeholder().or_else(|| d.placeholder()),
            _ => None,
        }
    }

    pub fn has_placeholder(&self) -> bool {
        self.placeholder().is_some()
    }

    /// Every observational factor in the tree.
    pub fn factors(&self) -> Vec<(&[String], &[String])> {
        let mut out = Vec::new();
        self.collect_factors(&mut out);
        out
    }

    fn collect_factors<'a>(&'a self, out: &mut Vec<(&'a [String], &'a [String])>) {
        match self {
            IdFormula::Factor { vars, given } => out.push((vars, given)),
            IdFormula::Sum { body, .. } => body.collect_factors(out),
            IdFormula::Product(parts) => parts.iter().for_each(|p| p.collect_factors(out)),
            IdFormula::Quotient(n, d) => {
                n.collect_factors(out);
                d.collect_factors(out);
            }
            _ => {}
        }
    }
}

impl IdFormula {
    /// Prints the tree, priming a bound variable whenever an enclosing sum
    /// already binds the same name so that every binder reads unambiguously.
    fn render(&self, f: &mut fmt::Formatter<'_>, names: &BTreeMap<String, String>, visible: &BTreeSet<String>) -> fmt::Result {
        let name = |v: &String| names.get(v).cloned().unwrap_or_else(|| v.clone());
        let list = |vs: &[String]| vs.iter().map(name).collect::<Vec<_>>().join(", ");
        match self {
            IdFormula::Factor { vars, given } if given.is_empty() => write!(f, "P({})", list(vars)),
            IdFormula::Factor { vars, given } => write!(f, "P({} | {})", list(vars), list(given)),
            IdFormula::Sum { bound, body } => {
                let mut inner = names.clone();
                let mut seen = visible.clone();
                let mut shown = Vec::with_capacity(bound.len());
                for b in bound {
                    let mut n = b.clone();
                    while seen.contains(&n) {
                        n.push('\'');
                    }
                    seen.insert(n.clone());
                    inner.insert(b.clone(), n.clone());
                    shown.push(n);
                }
                write!(f, "Σ_{{{}}} [", shown.join(", "))?;
                body.render(f, &inner, &seen)?;
                write!(f, "]")
            }
            IdFormula::Product(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    p.render(f, names, visible)?;
                }
                Ok(())
            }
            IdFormula::Quotient(n, d) => {
                write!(f, "(")?;
                n.render(f, names, visible)?;
                write!(f, ") / (")?;
                d.render(f, names, visible)?;
                write!(f, ")")
            }
            IdFormula::Policy { action, inputs } if inputs.is_empty() => write!(f, "π({})", name(action)),
            IdFormula::Policy { action, inputs } => write!(f, "π({} | {})", name(action), list(inputs)),
            IdFormula::Constant(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for IdFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.render(f, &BTreeMap::new(), &self.free_vars())
    }
}

/// Bidirected-connected components of a diagram without latent nodes,
/// ordered by their smallest member.
pub fn c_components(diagram: &CausalDiagram) -> Result<Vec<NodeSet>, IdError> {
    if let Some(l) = diagram.latent_nodes().into_iter().next() {
        return Err(IdError::LatentNodes(l));
    }
    Ok(components_idx(diagram, &vec![true; diagram.len()])
        .into_iter()
        .map(|c| c.into_iter().map(|i| diagram.name(i).to_string()).collect())
        .collect())
}

/// C-components of the subgraph induced by `within`.
fn components_idx(d: &CausalDiagram, within: &[bool]) -> Vec<BTreeSet<usize>> {
    let mut seen = vec![false; d.len()];
    let mut out = Vec::new();
    for s in 0..d.len() {
        if !within[s] || seen[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            comp.insert(v);
            for &w in d.spouses_idx(v) {
                if within[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Ancestors of `seed` inside the subgraph induced by `within`.
fn ancestors_within(d: &CausalDiagram, seed: &BTreeSet<usize>, within: &[bool]) -> BTreeSet<usize> {
    let mut out: BTreeSet<usize> = seed.clone();
    let mut stack: Vec<usize> = seed.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for &p in d.parents_idx(v) {
            if within[p] && out.insert(p) {
                stack.push(p);
            }
        }
    }
    out
}

struct Identifier<'a> {
    h: &'a CausalDiagram,
    order: Vec<usize>,
}

impl Identifier<'_> {
    fn names(&self, set: &BTreeSet<usize>) -> NodeSet {
        set.iter().map(|&i| self.h.name(i).to_string()).collect()
    }

    fn mask(&self, set: &BTreeSet<usize>) -> Vec<bool> {
        let mut m = vec![false; self.h.len()];
        set.iter().for_each(|&i| m[i] = true);
        m
    }

    /// Nodes of `set` in topological order.
    fn ordered(&self, set: &BTreeSet<usize>) -> Vec<usize> {
        self.order.iter().copied().filter(|v| set.contains(v)).collect()
    }

    /// `Q[S] = Π_{v ∈ S} P(v | predecessors of v)`.
    fn c_factor(&self, s: &BTreeSet<usize>) -> IdFormula {
        let mut parts = Vec::new();
        for (k, &v) in self.order.iter().enumerate() {
            if s.contains(&v) {
                let pred: BTreeSet<usize> = self.order[..k].iter().copied().collect();
                parts.push(IdFormula::factor(&node_set([self.h.name(v)]), &self.names(&pred)));
            }
        }
        IdFormula::product(parts)
    }

    /// Computes `Q[c]` from `q = Q[t]`, with `c ⊆ t` a c-component of
    /// `H[c]`; `None` when a hedge blocks identification.
    fn identify(&self, c: &BTreeSet<usize>, t: &BTreeSet<usize>, q: IdFormula) -> Option<IdFormula> {
        let a = ancestors_within(self.h, c, &self.mask(t));
        if &a == c {
            let rest: BTreeSet<usize> = t.difference(c).copied().collect();
            return Some(IdFormula::sum(&self.names(&rest), q));
        }
        if &a == t {
            return None;
        }
        let outside: BTreeSet<usize> = t.difference(&a).copied().collect();
        let q_a = IdFormula::sum(&self.names(&outside), q);
        let first = *c.iter().next().unwrap();
        let t2 = components_idx(self.h, &self.mask(&a))
            .into_iter()
            .find(|comp| comp.contains(&first))
            .unwrap();
        // Q[A^(i)] = Σ_{A \ A^(i)} Q[A] for every prefix of A in topological order.
        let a_order = self.ordered(&a);
        let prefix = |k: usize| -> IdFormula {
            let rest: BTreeSet<usize> = a_order[k..].iter().copied().collect();
            IdFormula::sum(&self.names(&rest), q_a.clone())
        };
        let mut parts = Vec::new();
        for (k, &v) in a_order.iter().enumerate() {
            if !t2.contains(&v) {
                continue;
            }
            let num = prefix(k + 1);
            if k == 0 {
                parts.push(num);
            } else {
                parts.push(IdFormula::quotient(num, prefix(k)));
            }
        }
        self.identify(c, &t2, IdFormula::product(parts))
    }
}

/// Identifies `P(outcome | do(action))`.
///
/// The diagram is projected onto its observed nodes first; an outcome with a
/// latent node is never identifiable.
pub fn identify_atomic(
    diagram: &CausalDiagram,
    action: &NodeSet,
    outcome: &NodeSet,
) -> Result<IdFormula, IdError> {
    for y in outcome {
        if !diagram.is_observed(y)? {
            return Err(IdError::NotIdentifiable(format!("outcome {y} is latent")));
        }
        if action.contains(y) {
            return Err(IdError::OutcomeContainsAction(y.clone()));
        }
    }
    for x in action {
        diagram.idx(x)?;
    }
    let h = project(diagram)?;
    identify_semi_markovian(&h, action, outcome)
}

fn identify_semi_markovian(h: &CausalDiagram, action: &NodeSet, outcome: &NodeSet) -> Result<IdFormula, IdError> {
    let id = Identifier {
        h,
        order: h.topological_idx(),
    };
    let x = h.mask(action)?;
    let not_x: Vec<bool> = x.iter().map(|b| !b).collect();
    let y: BTreeSet<usize> = outcome.iter().map(|n| h.idx(n)).collect::<Result<_, _>>()?;
    let d = ancestors_within(h, &y, &not_x);
    let d_comps = components_idx(h, &id.mask(&d));
    let s_comps = components_idx(h, &vec![true; h.len()]);
    let mut parts = Vec::new();
    for di in &d_comps {
        let sj = s_comps
            .iter()
            .find(|s| di.is_subset(s))
            .expect("c-components of a subgraph refine those of the graph");
        match id.identify(di, sj, id.c_factor(sj)) {
            Some(f) => parts.push(f),
            None => {
                return Err(IdError::NotIdentifiable(format!(
                    "hedge for {{{}}} inside {{{}}}",
                    join(&id.names(di)),
                    join(&id.names(sj))
                )))
            }
        }
    }
    let rest: BTreeSet<usize> = d.difference(&y).copied().collect();
    Ok(IdFormula::sum(&id.names(&rest), IdFormula::product(parts)))
}

fn join(set: &NodeSet) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(", ")
}

/// Identifies `P(outcome | do(π))` for policies in `space`.
///
/// Returns `Σ_{x,z} P(outcome, z | do(x)) π(x | inputs)` with `z` the
/// ancestors of the outcome in the manipulated projection, or the plain
/// marginal `P(outcome)` when the action cannot reach the outcome.
pub fn identify_policy(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    outcome: &NodeSet,
) -> Result<IdFormula, IdError> {
    space.validate(diagram)?;
    for y in outcome {
        if !diagram.is_observed(y)? {
            return Err(IdError::NotIdentifiable(format!("outcome {y} is latent")));
        }
        if *y == space.action {
            return Err(IdError::OutcomeContainsAction(y.clone()));
        }
    }
    let h = project(diagram)?;
    let h_pi = h.manipulated(space)?;
    let mut z = h_pi.closure(outcome, Relation::Ancestors, false)?;
    for y in outcome {
        z.remove(y);
    }
    if !z.remove(&space.action) {
        return Ok(IdFormula::factor(outcome, &NodeSet::new()));
    }
    let mut joint_outcome = outcome.clone();
    joint_outcome.extend(z.iter().cloned());
    let action = node_set([space.action.as_str()]);
    let inner = identify_semi_markovian(&h, &action, &joint_outcome)?;
    let placeholder = IdFormula::Policy {
        action: space.action.clone(),
        inputs: space.inputs.iter().cloned().collect(),
    };
    let mut bound = z;
    bound.insert(space.action.clone());
    Ok(IdFormula::sum(&bound, IdFormula::product(vec![inner, placeholder])))
}

/// Exact dense evaluation of `formula` against an observational table.
///
/// The result is a table over the formula's free variables in name order.
pub fn evaluate(
    formula: &IdFormula,
    observational: &JointTable,
    policy: Option<&Policy>,
) -> Result<FactorTable, EvalError> {
    let factor = policy.map(Policy::to_factor);
    evaluate_with_factor(formula, observational, factor.as_ref())
}

/// Like [`evaluate`], with the policy given as an arbitrary nonnegative
/// factor over `inputs..., action`. Rows need not be normalized, which lets
/// callers probe the formula with indicator tables.
pub fn evaluate_with_factor(
    formula: &IdFormula,
    observational: &JointTable,
    policy: Option<&FactorTable>,
) -> Result<FactorTable, EvalError> {
    let t = Evaluator { obs: observational, policy }.eval(formula)?;
    let order: Vec<String> = formula.free_vars().into_iter().collect();
    Ok(t.reorder(&order)?)
}

struct Evaluator<'a> {
    obs: &'a JointTable,
    policy: Option<&'a FactorTable>,
}

impl Evaluator<'_> {
    fn card(&self, var: &str) -> Result<usize, EvalError> {
        self.obs
            .card_of(var)
            .or_else(|| self.policy.and_then(|p| p.card_of(var)))
            .ok_or_else(|| EvalError::UnknownVariable(var.to_string()))
    }

    fn eval(&self, f: &IdFormula) -> Result<FactorTable, EvalError> {
        match f {
            IdFormula::Factor { vars, given } => {
                let mut all = given.clone();
                all.extend(vars.iter().cloned());
                let num = self.obs.marginal(&all)?.into_factor();
                if given.is_empty() {
                    return Ok(num);
                }
                let den = self.obs.marginal(given)?.into_factor();
                num.quotient(&den)?
                    .map_err(|_| EvalError::UnsupportedConditional(f.to_string()))
            }
            IdFormula::Sum { bound, body } => {
                let inner = self.eval(body)?;
                let mut scale = 1.0;
                for b in bound.iter().filter(|b| inner.position(b).is_none()) {
                    scale *= self.card(b)? as f64;
                }
                let out = inner.sum_out(bound)?;
                Ok(if scale == 1.0 { out } else { out.scale(scale) })
            }
            IdFormula::Product(parts) => {
                let mut acc = FactorTable::scalar(1.0);
                for p in parts {
                    acc = acc.product(&self.eval(p)?)?;
                }
                Ok(acc)
            }
            IdFormula::Quotient(n, d) => {
                let num = self.eval(n)?;
                let den = self.eval(d)?;
                num.quotient(&den)?
                    .map_err(|_| EvalError::UnsupportedConditional(f.to_string()))
            }
            IdFormula::Policy { action, inputs } => {
                let p = self.policy.ok_or_else(|| EvalError::MissingPolicy(action.clone()))?;
                let matches = match p.vars().split_last() {
                    Some((last, rest)) => last == action && rest == inputs.as_slice(),
                    None => false,
                };
                if !matches {
                    return Err(EvalError::PolicyMismatch {
                        expected: f.to_string(),
                        found: p.vars().join(", "),
                    });
                }
                Ok(p.clone())
            }
            IdFormula::Constant(c) => Ok(FactorTable::scalar(*c)),
        }
    }
}

/// Evaluates an identified `P(outcome | do(π))` and checks it is a
/// distribution.
pub fn evaluate_distribution(
    formula: &IdFormula,
    observational: &JointTable,
    policy: Option<&Policy>,
) -> Result<JointTable, EvalError> {
    Ok(JointTable::from_factor(evaluate(formula, observational, policy)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::DiagramBuilder;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn frontdoor() -> CausalDiagram {
        DiagramBuilder::new()
            .observed("X")
            .observed("W")
            .observed("Y")
            .edge("X", "W")
            .edge("W", "Y")
            .confounded("X", "Y")
            .build()
            .unwrap()
    }

    #[test]
    fn c_component_partition() {
        let d = DiagramBuilder::new()
            .observed("Z")
            .observed("X")
            .observed("Y")
            .edge("Z", "X")
            .edge("X", "Y")
            .confounded("Z", "Y")
            .build()
            .unwrap();
        assert_eq!(c_components(&d).unwrap(), vec![node_set(["X"]), node_set(["Y", "Z"])]);
        assert_eq!(
            c_components(&frontdoor()).unwrap(),
            vec![node_set(["W"]), node_set(["X", "Y"])]
        );
        let latent = DiagramBuilder::new().latent("L").build().unwrap();
        assert!(matches!(c_components(&latent), Err(IdError::LatentNodes(_))));
    }

    #[test]
    fn bow_is_not_identifiable() {
        let bow = DiagramBuilder::new()
            .observed("X")
            .observed("S")
            .edge("X", "S")
            .confounded("X", "S")
            .build()
            .unwrap();
        let r = identify_atomic(&bow, &node_set(["X"]), &node_set(["S"]));
        assert!(matches!(r, Err(IdError::NotIdentifiable(_))));
    }

    #[test]
    fn frontdoor_formula_shape() {
        let f = identify_atomic(&frontdoor(), &node_set(["X"]), &node_set(["Y"])).unwrap();
        assert_eq!(f.free_vars(), node_set(["X", "Y"]));
        let factors = f.factors();
        assert!(factors.iter().any(|(v, g)| *v == names(&["W"]) && *g == names(&["X"])));
    }

    #[test]
    fn frontdoor_matches_closed_form() {
        // Arbitrary positive P(x, w, y).
        let probs = vec![0.05, 0.10, 0.20, 0.15, 0.12, 0.08, 0.04, 0.26];
        let obs = JointTable::new(names(&["X", "W", "Y"]), vec![2, 2, 2], probs).unwrap();
        let f = identify_atomic(&frontdoor(), &node_set(["X"]), &node_set(["Y"])).unwrap();
        let t = evaluate(&f, &obs, None).unwrap();
        let p = |x: usize, w: usize, y: usize| obs.get(&[x, w, y]);
        let px = |x: usize| p(x, 0, 0) + p(x, 0, 1) + p(x, 1, 0) + p(x, 1, 1);
        let pxw = |x: usize, w: usize| p(x, w, 0) + p(x, w, 1);
        for x in 0..2 {
            for y in 0..2 {
                let mut expected = 0.0;
                for w in 0..2 {
                    let inner: f64 = (0..2).map(|x2| p(x2, w, y) / pxw(x2, w) * px(x2)).sum();
                    expected += pxw(x, w) / px(x) * inner;
                }
                // free vars in name order: X, Y
                assert!((t.get(&[x, y]) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn policy_formula_is_policy_free_without_causal_path() {
        let d = DiagramBuilder::new()
            .observed("X")
            .observed("Y")
            .edge("Y", "X")
            .build()
            .unwrap();
        let f = identify_policy(&d, &PolicySpace::new("X", Vec::<String>::new()), &node_set(["Y"])).unwrap();
        assert!(!f.has_placeholder());
        assert_eq!(f.to_string(), "P(Y)");
    }

    #[test]
    fn shadowed_binders_are_primed() {
        let inner = IdFormula::sum(
            &node_set(["X"]),
            IdFormula::product(vec![
                IdFormula::factor(&node_set(["X"]), &NodeSet::new()),
                IdFormula::factor(&node_set(["Y"]), &node_set(["W", "X"])),
            ]),
        );
        let body = IdFormula::product(vec![IdFormula::factor(&node_set(["W"]), &node_set(["X"])), inner.clone()]);
        assert_eq!(
            IdFormula::sum(&node_set(["W"]), body).to_string(),
            "Σ_{W} [P(W | X) Σ_{X'} [P(X') P(Y | W, X')]]"
        );
        assert_eq!(inner.to_string(), "Σ_{X} [P(X) P(Y | W, X)]");
    }

    #[test]
    fn zero_denominator_is_reported() {
        let obs = JointTable::new(names(&["X", "Y"]), vec![2, 2], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let f = IdFormula::factor(&node_set(["Y"]), &node_set(["X"]));
        match evaluate(&f, &obs, None) {
            Err(EvalError::UnsupportedConditional(s)) => assert_eq!(s, "P(Y | X)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_policy() {
        let obs = JointTable::new(names(&["X", "Y"]), vec![2, 2], vec![0.25; 4]).unwrap();
        let f = identify_policy(
            &DiagramBuilder::new().observed("X").observed("Y").edge("X", "Y").build().unwrap(),
            &PolicySpace::new("X", Vec::<String>::new()),
            &node_set(["Y"]),
        )
        .unwrap();
        assert!(matches!(evaluate(&f, &obs, None), Err(EvalError::MissingPolicy(_))));
        let pi = Policy::uniform("X", 2, vec![], vec![]).unwrap();
        let t = evaluate_distribution(&f, &obs, Some(&pi)).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-12);
    }
}
