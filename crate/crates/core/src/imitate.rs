//! The imitation pipeline: graphical criteria first, then the search for an
//! instrument and a policy matching the surrogate's observational
//! distribution.

use std::fmt;

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use thiserror::Error;

use crate::criteria::{direct_parents_imitable, find_pi_backdoor, is_instrument};
use crate::diagram::{hat_name, node_set, CausalDiagram, DiagramError, NodeSet, PolicySpace};
use crate::enumerate::{list_id_subspaces, list_min_separators};
use crate::identify::{evaluate, evaluate_with_factor, identify_policy, EvalError, IdError, IdFormula};
use crate::scm::{DiscreteScm, ScmError};
use crate::table::{configurations, state_count, FactorTable, JointTable, Policy, TableError};

/// Residual tolerance for exact observational tables.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Residual tolerance for tables estimated from `n` samples.
pub fn sample_tolerance(n: usize) -> f64 {
    3.0 / (n as f64).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImitateError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Identification(#[from] IdError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Model(#[from] ScmError),
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error("formula has no policy placeholder and no action to solve for")]
    NoAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    ImitableGraphical,
    PImitable,
    NotImitableGraphical,
    NoInstrumentFound,
    Infeasible,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::ImitableGraphical => "imitable-graphical",
            Status::PImitable => "p-imitable",
            Status::NotImitableGraphical => "not-imitable-graphical",
            Status::NoInstrumentFound => "no-instrument-found",
            Status::Infeasible => "infeasible",
        }
    }

    pub fn has_policy(self) -> bool {
        matches!(self, Status::ImitableGraphical | Status::PImitable)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Evidence behind a verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// Copy of the expert's conditional on the action's parents.
    DirectParents(NodeSet),
    /// π-backdoor admissible conditioning set.
    Backdoor(NodeSet),
    /// Surrogate set together with the identifiable subspace used to solve.
    Instrument { surrogate: NodeSet, subspace: PolicySpace },
    None,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let set = |s: &NodeSet| format!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join(", "));
        match self {
            Witness::DirectParents(z) => write!(f, "direct parents {}", set(z)),
            Witness::Backdoor(z) => write!(f, "backdoor {}", set(z)),
            Witness::Instrument { surrogate, subspace } => {
                write!(f, "surrogate {} with subspace {}", set(surrogate), subspace)
            }
            Witness::None => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationResult {
    pub status: Status,
    pub policy: Option<Policy>,
    pub witness: Witness,
    /// L1 gap between the surrogate's interventional and observational
    /// distributions under the returned policy (zero for graphical verdicts).
    pub residual: f64,
    /// Residual-minimizing policy of the closest candidate when the status is
    /// `infeasible`.
    pub fallback: Option<Policy>,
    /// Candidates skipped because their formula hit a zero-probability
    /// conditioning event.
    pub skipped: usize,
}

impl ImitationResult {
    fn graphical(witness: Witness, policy: Policy) -> Self {
        ImitationResult {
            status: Status::ImitableGraphical,
            policy: Some(policy),
            witness,
            residual: 0.0,
            fallback: None,
            skipped: 0,
        }
    }

    /// Structured text report.
    pub fn report(&self) -> String {
        let mut out = format!(
            "status: {}\nwitness: {}\nresidual: {:.9e}\n",
            self.status, self.witness, self.residual
        );
        if self.skipped > 0 {
            out.push_str(&format!("skipped candidates: {}\n", self.skipped));
        }
        if let Some(p) = &self.policy {
            out.push_str("policy:\n");
            out.push_str(&p.to_string());
        } else if let Some(p) = &self.fallback {
            out.push_str("closest policy:\n");
            out.push_str(&p.to_string());
        }
        out
    }
}

/// Outcome of [`solve_policy`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub policy: Policy,
    /// `Σ_s |P(s | do(π)) − P(s)|`.
    pub residual: f64,
    pub feasible: bool,
}

/// `P(s | do(π))` as an affine function of the policy entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub action: String,
    pub action_card: usize,
    pub inputs: Vec<String>,
    pub input_cards: Vec<usize>,
    /// Surrogate variables, in name order.
    pub surrogate: Vec<String>,
    /// `coeffs[s][row * action_card + x]`.
    pub coeffs: Vec<Vec<f64>>,
    /// Observational `P(s)`.
    pub target: Vec<f64>,
    /// Observational `P(x | row)`, uniform where the row has no mass.
    pub reference: Vec<Vec<f64>>,
}

impl LinearSystem {
    /// Extracts coefficients by evaluating the formula once per indicator
    /// policy; exact because the formula is linear in the placeholder.
    pub fn from_formula(
        formula: &IdFormula,
        observational: &JointTable,
        surrogate: &NodeSet,
        action: &str,
    ) -> Result<Self, ImitateError> {
        let (action, inputs) = match formula.placeholder() {
            Some((a, i)) => (a.to_string(), i.to_vec()),
            None => (action.to_string(), Vec::new()),
        };
        let card = |v: &str| {
            observational
                .card_of(v)
                .ok_or_else(|| TableError::UnknownVariable(v.to_string()))
        };
        let action_card = card(&action)?;
        let input_cards: Vec<usize> = inputs.iter().map(|v| card(v)).collect::<Result<_, _>>()?;
        let rows = state_count(&input_cards)?;
        let surrogate: Vec<String> = surrogate.iter().cloned().collect();
        let target = observational.marginal(&surrogate)?.values().to_vec();
        let n_s = target.len();
        let n_params = rows * action_card;

        let mut coeffs = vec![vec![0.0; n_params]; n_s];
        if formula.has_placeholder() {
            let mut vars = inputs.clone();
            vars.push(action.clone());
            let mut cards = input_cards.clone();
            cards.push(action_card);
            for k in 0..n_params {
                let mut values = vec![0.0; n_params];
                values[k] = 1.0;
                let probe = FactorTable::new(vars.clone(), cards.clone(), values)?;
                let t = evaluate_with_factor(formula, observational, Some(&probe))?.reorder(&surrogate)?;
                for (s, v) in t.values().iter().enumerate() {
                    coeffs[s][k] = *v;
                }
            }
        } else {
            // Policy-free: there are no inputs, so a single row whose entries
            // all carry the constant reproduces it for every policy.
            let t = evaluate(formula, observational, None)?.reorder(&surrogate)?;
            for (s, v) in t.values().iter().enumerate() {
                for x in 0..action_card {
                    coeffs[s][x] = *v;
                }
            }
        }
        let reference = observational
            .conditional_rows(&action, &inputs)?
            .into_iter()
            .map(|r| r.unwrap_or_else(|| vec![1.0 / action_card as f64; action_card]))
            .collect();
        Ok(LinearSystem {
            action,
            action_card,
            inputs,
            input_cards,
            surrogate,
            coeffs,
            target,
            reference,
        })
    }

    fn rows(&self) -> usize {
        self.reference.len()
    }

    /// `P(s | do(π))` for a flat parameter vector.
    pub fn apply(&self, params: &[f64]) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|c| c.iter().zip(params).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn residual(&self, params: &[f64]) -> f64 {
        self.apply(params)
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// True when no policy can change `P(s | do(π))`: within each row every
    /// action value carries the same coefficient.
    pub fn is_degenerate(&self) -> bool {
        let k = self.action_card;
        self.coeffs.iter().all(|c| {
            c.chunks(k)
                .all(|row| row.iter().all(|v| (v - row[0]).abs() <= 1e-15 * (1.0 + row[0].abs())))
        })
    }

    fn flat_reference(&self) -> Vec<f64> {
        self.reference.iter().flatten().copied().collect()
    }

    fn to_policy(&self, params: &[f64]) -> Result<Policy, TableError> {
        let rows = params.chunks(self.action_card).map(<[f64]>::to_vec).collect();
        Policy::normalized(
            &self.action,
            self.action_card,
            self.inputs.clone(),
            self.input_cards.clone(),
            rows,
        )
    }

    /// The second phase trades up to the slack of its residual bound for
    /// closeness to the reference. Walk from its point towards the
    /// residual-optimal one until the residual is back at the optimum; the
    /// residual is convex along the segment, so bisection finds the first
    /// such point.
    fn tighten(&self, near: &[f64], optimal: &[f64], best: f64) -> Vec<f64> {
        let at = |t: f64| -> Vec<f64> { near.iter().zip(optimal).map(|(a, b)| a + t * (b - a)).collect() };
        let goal = best + 1e-14 + 1e-12 * best;
        if self.residual(near) <= goal {
            return near.to_vec();
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.residual(&at(mid)) <= goal {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        at(hi)
    }

    /// Two-phase LP: minimize the L1 residual over the policy polytope,
    /// then, holding the residual at its optimum, pick the policy closest in
    /// L1 to the observational conditional.
    pub fn solve(&self, tolerance: f64) -> Result<Solution, ImitateError> {
        let reference = self.flat_reference();
        if self.is_degenerate() {
            let policy = self.to_policy(&reference)?;
            let residual = self.residual(&reference);
            return Ok(Solution {
                policy,
                residual,
                feasible: residual <= tolerance,
            });
        }
        let n = reference.len();
        let k = self.action_card;

        let build = |phase_two: Option<f64>| -> Result<Vec<f64>, ImitateError> {
            let mut p = Problem::new(OptimizationDirection::Minimize);
            let params: Vec<_> = (0..n).map(|_| p.add_var(0.0, (0.0, 1.0))).collect();
            let res_cost = if phase_two.is_some() { 0.0 } else { 1.0 };
            let resid: Vec<_> = (0..self.target.len())
                .map(|_| p.add_var(res_cost, (0.0, f64::INFINITY)))
                .collect();
            for r in 0..self.rows() {
                let mut e = LinearExpr::empty();
                for x in 0..k {
                    e.add(params[r * k + x], 1.0);
                }
                p.add_constraint(e, ComparisonOp::Eq, 1.0);
            }
            for (s, c) in self.coeffs.iter().enumerate() {
                for sign in [1.0, -1.0] {
                    let mut e = LinearExpr::empty();
                    for (j, &v) in c.iter().enumerate() {
                        if v != 0.0 {
                            e.add(params[j], sign * v);
                        }
                    }
                    e.add(resid[s], -1.0);
                    p.add_constraint(e, ComparisonOp::Le, sign * self.target[s]);
                }
            }
            if let Some(bound) = phase_two {
                let mut e = LinearExpr::empty();
                resid.iter().for_each(|&r| e.add(r, 1.0));
                p.add_constraint(e, ComparisonOp::Le, bound);
                for j in 0..n {
                    let d = p.add_var(1.0, (0.0, f64::INFINITY));
                    p.add_constraint([(params[j], 1.0), (d, -1.0)], ComparisonOp::Le, reference[j]);
                    p.add_constraint([(params[j], -1.0), (d, -1.0)], ComparisonOp::Le, -reference[j]);
                }
            }
            let sol = p.solve().map_err(|e| ImitateError::Solver(e.to_string()))?;
            Ok(params.iter().map(|&v| *sol.var_value(v)).collect())
        };

        let first = build(None)?;
        let best = self.residual(&first);
        let chosen = match build(Some(best + 1e-10 + 1e-9 * best)) {
            Ok(second) if self.residual(&second) <= best + 1e-9 => self.tighten(&second, &first, best),
            _ => first,
        };
        let policy = self.to_policy(&chosen)?;
        let flat: Vec<f64> = policy.rows().iter().flatten().copied().collect();
        let residual = self.residual(&flat);
        Ok(Solution {
            policy,
            residual,
            feasible: residual <= tolerance,
        })
    }
}

/// Finds a policy with `P(s | do(π)) = P(s)` for the identified formula.
pub fn solve_policy(
    formula: &IdFormula,
    observational: &JointTable,
    surrogate: &NodeSet,
    action: &str,
    tolerance: f64,
) -> Result<Solution, ImitateError> {
    LinearSystem::from_formula(formula, observational, surrogate, action)?.solve(tolerance)
}

/// Binary action without inputs: the mixture `[π(x0), π(x1)]` with
/// `π(x0) P(s1 | do(x0)) + π(x1) P(s1 | do(x1)) = P(s1)`, so that
/// `π(x1) = (P(s1) − P(s1 | do(x0))) / (P(s1 | do(x1)) − P(s1 | do(x0)))`.
/// `None` when both interventions give the same value. Entries outside
/// `[0, 1]` signal infeasibility.
pub fn binary_closed_form(p_s1: f64, do_x0: f64, do_x1: f64) -> Option<[f64; 2]> {
    let den = do_x1 - do_x0;
    if den == 0.0 {
        return None;
    }
    let alpha = (p_s1 - do_x0) / den;
    Some([(do_x1 - p_s1) / den, alpha])
}

/// Among `(α0, α1) ∈ [0,1]²` with `a0 α0 + a1 α1 = rhs`, the point minimizing
/// `w0 |α0 − r0| + w1 |α1 − r1|`. Used to compare a two-parameter backdoor
/// solution with a reference policy; `None` if the segment is empty.
pub fn closest_on_constraint(coeffs: [f64; 2], rhs: f64, weights: [f64; 2], reference: [f64; 2]) -> Option<[f64; 2]> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let a: Vec<_> = (0..2).map(|_| p.add_var(0.0, (0.0, 1.0))).collect();
    let d: Vec<_> = (0..2).map(|i| p.add_var(weights[i], (0.0, f64::INFINITY))).collect();
    p.add_constraint([(a[0], coeffs[0]), (a[1], coeffs[1])], ComparisonOp::Eq, rhs);
    for i in 0..2 {
        p.add_constraint([(a[i], 1.0), (d[i], -1.0)], ComparisonOp::Le, reference[i]);
        p.add_constraint([(a[i], -1.0), (d[i], -1.0)], ComparisonOp::Le, -reference[i]);
    }
    let sol = p.solve().ok()?;
    Some([*sol.var_value(a[0]), *sol.var_value(a[1])])
}

/// Graphical verdict only: direct parents, then the π-backdoor criterion.
pub fn check_graphical(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
) -> Result<(Status, Witness), ImitateError> {
    if let Some(p) = direct_parents_imitable(diagram, space)? {
        return Ok((Status::ImitableGraphical, Witness::DirectParents(p.conditioning)));
    }
    if let Some(z) = find_pi_backdoor(diagram, space, reward)? {
        return Ok((Status::ImitableGraphical, Witness::Backdoor(z)));
    }
    Ok((Status::NotImitableGraphical, Witness::None))
}

/// Every instrument `(S, Π′)` in search order: identifiable subspaces of
/// `G ∪ {Y}` and, for each, the minimal surrogates of `X̂` versus `Y` among
/// the observed nodes other than the action.
pub fn instruments(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
) -> Result<Vec<(NodeSet, PolicySpace)>, ImitateError> {
    let with_reward = diagram.with_observed(reward)?;
    let mut restrict = diagram.observed_nodes();
    restrict.remove(&space.action);
    let mut out = Vec::new();
    for sub in list_id_subspaces(&with_reward, space, &node_set([reward]))? {
        let g = diagram.augment_policy(&sub)?;
        for s in list_min_separators(&g, &hat_name(&space.action), reward, &restrict)? {
            if is_instrument(diagram, space, reward, &s, &sub)? {
                out.push((s, sub.clone()));
            }
        }
    }
    Ok(out)
}

/// Decides imitability of the reward and synthesizes a policy.
pub fn imitate_pipeline(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
    observational: &JointTable,
    tolerance: f64,
) -> Result<ImitationResult, ImitateError> {
    match check_graphical(diagram, space, reward)? {
        (Status::ImitableGraphical, witness) => {
            let z = match &witness {
                Witness::DirectParents(z) | Witness::Backdoor(z) => z.clone(),
                _ => unreachable!(),
            };
            let z: Vec<String> = z.into_iter().collect();
            let policy = Policy::from_conditional(observational, &space.action, &z)?;
            return Ok(ImitationResult::graphical(witness, policy));
        }
        _ => {}
    }

    let mut best: Option<(Solution, Witness)> = None;
    let mut skipped = 0;
    let mut any = false;
    for (s, sub) in instruments(diagram, space, reward)? {
        any = true;
        let formula = identify_policy(diagram, &sub, &s)?;
        let solution = match solve_policy(&formula, observational, &s, &space.action, tolerance) {
            Ok(sol) => sol,
            Err(ImitateError::Evaluation(EvalError::UnsupportedConditional(_))) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let witness = Witness::Instrument {
            surrogate: s,
            subspace: sub,
        };
        if solution.feasible {
            return Ok(ImitationResult {
                status: Status::PImitable,
                residual: solution.residual,
                policy: Some(solution.policy),
                witness,
                fallback: None,
                skipped,
            });
        }
        if best.as_ref().map_or(true, |(b, _)| solution.residual < b.residual) {
            best = Some((solution, witness));
        }
    }
    Ok(match best {
        Some((sol, witness)) => ImitationResult {
            status: Status::Infeasible,
            policy: None,
            witness,
            residual: sol.residual,
            fallback: Some(sol.policy),
            skipped,
        },
        None => ImitationResult {
            status: if any { Status::Infeasible } else { Status::NoInstrumentFound },
            policy: None,
            witness: Witness::None,
            residual: f64::INFINITY,
            fallback: None,
            skipped,
        },
    })
}

/// `Σ_t |P(t | do(π)) − P(t)|` computed exactly in the true model.
pub fn verify_policy(scm: &DiscreteScm, policy: &Policy, target: &NodeSet) -> Result<f64, ImitateError> {
    let keep: Vec<String> = target.iter().cloned().collect();
    let before = scm.joint()?.marginal(&keep)?;
    let after = scm.policy_marginal(policy, target)?;
    Ok(after.l1_distance(&before)?)
}

/// Lifts a policy over a subset of inputs to one reading all of `inputs`
/// (the extra inputs are ignored).
pub fn widen_policy(policy: &Policy, inputs: &[String], input_cards: &[usize]) -> Result<Policy, TableError> {
    let pos: Vec<usize> = policy
        .inputs()
        .iter()
        .map(|v| {
            inputs
                .iter()
                .position(|w| w == v)
                .ok_or_else(|| TableError::UnknownVariable(v.clone()))
        })
        .collect::<Result<_, _>>()?;
    let rows = configurations(input_cards)
        .map(|cfg| {
            let sub: Vec<usize> = pos.iter().map(|&p| cfg[p]).collect();
            policy.rows()[policy.row_index(&sub)].clone()
        })
        .collect();
    Policy::new(policy.action(), policy.action_card(), inputs.to_vec(), input_cards.to_vec(), rows)
}
