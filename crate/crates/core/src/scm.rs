//! Exact discrete structural causal models: construction, enumeration of
//! joint and interventional distributions, sampling and random generators.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagram::{node_set, CausalDiagram, DiagramBuilder, DiagramError, NodeSet, PolicySpace};
use crate::par::Execution;
use crate::table::{next_config, state_count, FactorTable, JointTable, Policy, TableError, ROW_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("node {0} has no domain")]
    MissingDomain(String),
    #[error("node {0} has no mechanism")]
    MissingMechanism(String),
    #[error("mechanism for unknown node {0}")]
    UnknownNode(String),
    #[error("mechanism for {node} lists parents {{{found}}} but the diagram has {{{expected}}}")]
    ParentMismatch { node: String, expected: String, found: String },
    #[error("unknown exogenous variable {0}")]
    UnknownExogenous(String),
    #[error("duplicate declaration of {0}")]
    Duplicate(String),
    #[error("{what}: {detail}")]
    BadDistribution { what: String, detail: String },
    #[error("confounding from shared exogenous variables ({derived}) differs from the diagram ({declared})")]
    BidirectedMismatch { declared: String, derived: String },
    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),
}

/// An independent finite noise source.
#[derive(Debug, Clone, PartialEq)]
pub struct Exogenous {
    pub name: String,
    pub probs: Vec<f64>,
}

/// Stochastic structural table for one endogenous node. Rows enumerate
/// `(parents..., exo...)` in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub node: String,
    pub parents: Vec<String>,
    pub exo: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// `do(X = x)` or `do(π)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Intervention {
    Atomic { node: String, value: usize },
    Policy(Policy),
}

fn check_distribution(what: impl Fn() -> String, probs: &[f64], card: usize) -> Result<(), ScmError> {
    let bad = |detail: String| Err(ScmError::BadDistribution { what: what(), detail });
    if probs.len() != card {
        return bad(format!("{} entries, expected {card}", probs.len()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0)) {
        return bad(format!("negative or NaN entry {p}"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return bad(format!("sums to {total}"));
    }
    Ok(())
}

/// Resolved mechanism with indices in place of names.
#[derive(Debug, Clone, PartialEq)]
struct Compiled {
    parents: Vec<usize>,
    exo: Vec<usize>,
    /// Row strides for `parents` then `exo`.
    strides: Vec<usize>,
}

/// A discrete partially observable SCM.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    diagram: CausalDiagram,
    domains: Vec<usize>,
    exogenous: Vec<Exogenous>,
    mechanisms: Vec<Mechanism>,
    compiled: Vec<Compiled>,
}

impl DiscreteScm {
    pub fn new(
        diagram: CausalDiagram,
        domains: &BTreeMap<String, usize>,
        exogenous: Vec<Exogenous>,
        mechanisms: Vec<Mechanism>,
    ) -> Result<Self, ScmError> {
        let n = diagram.len();
        for d in domains.keys() {
            if !diagram.contains(d) {
                return Err(ScmError::UnknownNode(d.clone()));
            }
        }
        let mut dom = Vec::with_capacity(n);
        for name in diagram.names() {
            let k = *domains.get(name).ok_or_else(|| ScmError::MissingDomain(name.clone()))?;
            if k < 2 {
                return Err(TableError::DegenerateDomain(name.clone()).into());
            }
            dom.push(k);
        }
        let mut exo_index = BTreeMap::new();
        for (i, e) in exogenous.iter().enumerate() {
            if diagram.contains(&e.name) || exo_index.insert(e.name.clone(), i).is_some() {
                return Err(ScmError::Duplicate(e.name.clone()));
            }
            if e.probs.len() < 1 {
                return Err(ScmError::BadDistribution {
                    what: format!("exogenous {}", e.name),
                    detail: "empty".into(),
                });
            }
            check_distribution(|| format!("exogenous {}", e.name), &e.probs, e.probs.len())?;
        }

        let mut slots: Vec<Option<Mechanism>> = vec![None; n];
        for m in mechanisms {
            let i = diagram.index_of(&m.node).ok_or_else(|| ScmError::UnknownNode(m.node.clone()))?;
            if slots[i].is_some() {
                return Err(ScmError::Duplicate(m.node.clone()));
            }
            slots[i] = Some(m);
        }
        let mut mechs = Vec::with_capacity(n);
        let mut compiled = Vec::with_capacity(n);
        for (i, slot) in slots.into_iter().enumerate() {
            let m = slot.ok_or_else(|| ScmError::MissingMechanism(diagram.name(i).to_string()))?;
            let declared = diagram.parents(&m.node)?;
            let listed: NodeSet = m.parents.iter().cloned().collect();
            if declared != listed || listed.len() != m.parents.len() {
                return Err(ScmError::ParentMismatch {
                    node: m.node.clone(),
                    expected: declared.into_iter().collect::<Vec<_>>().join(", "),
                    found: m.parents.join(", "),
                });
            }
            let parents: Vec<usize> = m.parents.iter().map(|p| diagram.index_of(p).unwrap()).collect();
            let exo: Vec<usize> = m
                .exo
                .iter()
                .map(|u| exo_index.get(u).copied().ok_or_else(|| ScmError::UnknownExogenous(u.clone())))
                .collect::<Result<_, _>>()?;
            if exo.iter().collect::<BTreeSet<_>>().len() != exo.len() {
                return Err(ScmError::Duplicate(format!("exogenous attachment on {}", m.node)));
            }
            let cards: Vec<usize> = parents
                .iter()
                .map(|&p| dom[p])
                .chain(exo.iter().map(|&u| exogenous[u].probs.len()))
                .collect();
            let expected = state_count(&cards)?;
            if m.rows.len() != expected {
                return Err(ScmError::BadDistribution {
                    what: format!("mechanism {}", m.node),
                    detail: format!("{} rows, expected {expected}", m.rows.len()),
                });
            }
            for (r, row) in m.rows.iter().enumerate() {
                check_distribution(|| format!("mechanism {} row {}", m.node, r + 1), row, dom[i])?;
            }
            let mut strides = vec![1; cards.len()];
            for k in (0..cards.len().saturating_sub(1)).rev() {
                strides[k] = strides[k + 1] * cards[k + 1];
            }
            compiled.push(Compiled { parents, exo, strides });
            mechs.push(m);
        }

        let scm = DiscreteScm {
            diagram,
            domains: dom,
            exogenous,
            mechanisms: mechs,
            compiled,
        };
        let derived = scm.derived_bidirected();
        let declared: BTreeSet<(String, String)> = scm.diagram.bidirected_edges().into_iter().collect();
        if derived != declared {
            let show = |s: &BTreeSet<(String, String)>| {
                s.iter().map(|(a, b)| format!("{a}<->{b}")).collect::<Vec<_>>().join(" ")
            };
            return Err(ScmError::BidirectedMismatch {
                declared: show(&declared),
                derived: show(&derived),
            });
        }
        Ok(scm)
    }

    /// Node pairs sharing an exogenous variable.
    pub fn derived_bidirected(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        for u in 0..self.exogenous.len() {
            let users: Vec<usize> = (0..self.len()).filter(|&v| self.compiled[v].exo.contains(&u)).collect();
            for (k, &a) in users.iter().enumerate() {
                for &b in &users[k + 1..] {
                    out.insert((self.diagram.name(a).to_string(), self.diagram.name(b).to_string()));
                }
            }
        }
        out
    }

    fn len(&self) -> usize {
        self.diagram.len()
    }

    pub fn diagram(&self) -> &CausalDiagram {
        &self.diagram
    }

    pub fn domain(&self, node: &str) -> Option<usize> {
        self.diagram.index_of(node).map(|i| self.domains[i])
    }

    pub fn domains(&self) -> BTreeMap<String, usize> {
        self.diagram
            .names()
            .iter()
            .cloned()
            .zip(self.domains.iter().copied())
            .collect()
    }

    pub fn exogenous(&self) -> &[Exogenous] {
        &self.exogenous
    }

    /// Mechanisms in node-name order.
    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    fn exo_cards(&self) -> Vec<usize> {
        self.exogenous.iter().map(|e| e.probs.len()).collect()
    }

    fn row(&self, v: usize, values: &[usize], u: &[usize]) -> &[f64] {
        let c = &self.compiled[v];
        let mut idx = 0;
        for (k, &p) in c.parents.iter().enumerate() {
            idx += values[p] * c.strides[k];
        }
        let off = c.parents.len();
        for (k, &e) in c.exo.iter().enumerate() {
            idx += u[e] * c.strides[off + k];
        }
        &self.mechanisms[v].rows[idx]
    }

    /// Exact `P(v)` over all endogenous nodes, in name order.
    pub fn joint(&self) -> Result<JointTable, ScmError> {
        self.joint_with(Execution::default())
    }

    pub fn joint_with(&self, exec: Execution) -> Result<JointTable, ScmError> {
        let u_cards = self.exo_cards();
        let mut all_cards = u_cards.clone();
        all_cards.extend_from_slice(&self.domains);
        state_count(&all_cards)?;
        let n_u = state_count(&u_cards)?;
        let n_v = state_count(&self.domains)?;
        let order = self.diagram.topological_idx();

        let u_configs: Vec<Vec<usize>> = crate::table::configurations(&u_cards).collect();
        let chunks = if exec.is_parallel() { 64.min(n_u.max(1)) } else { 1 };
        let per = n_u.div_ceil(chunks).max(1);
        let partials = exec.map_indexed(chunks, |c| {
            let mut acc = vec![0.0; n_v];
            let mut values = vec![0; self.len()];
            for u in u_configs.iter().skip(c * per).take(per) {
                let pu: f64 = u.iter().enumerate().map(|(k, &x)| self.exogenous[k].probs[x]).product();
                if pu > 0.0 {
                    self.descend(&order, 0, pu, u, &mut values, &mut acc);
                }
            }
            acc
        });
        let mut total = vec![0.0; n_v];
        for p in partials {
            total.iter_mut().zip(p).for_each(|(t, x)| *t += x);
        }
        Ok(JointTable::new(self.diagram.names().to_vec(), self.domains.clone(), total)?)
    }

    fn descend(&self, order: &[usize], k: usize, mass: f64, u: &[usize], values: &mut [usize], acc: &mut [f64]) {
        if k == order.len() {
            let idx = values.iter().zip(&self.domains).fold(0, |a, (&v, &c)| a * c + v);
            acc[idx] += mass;
            return;
        }
        let v = order[k];
        let row = self.row(v, values, u);
        for (x, &p) in row.iter().enumerate() {
            if p > 0.0 {
                values[v] = x;
                self.descend(order, k + 1, mass * p, u, values, acc);
            }
        }
        values[v] = 0;
    }

    /// Exact `P(o)` over the observed nodes, in name order.
    pub fn observational(&self) -> Result<JointTable, ScmError> {
        let obs: Vec<String> = self.diagram.observed_nodes().into_iter().collect();
        Ok(self.joint()?.marginal(&obs)?)
    }

    /// Submodel where the action's mechanism is replaced by a constant or
    /// by a policy reading its inputs. The diagram becomes `G_Π`.
    pub fn intervene(&self, spec: &Intervention) -> Result<DiscreteScm, ScmError> {
        let policy = match spec {
            Intervention::Atomic { node, value } => {
                let card = self
                    .domain(node)
                    .ok_or_else(|| ScmError::UnknownNode(node.clone()))?;
                if *value >= card {
                    return Err(ScmError::InvalidIntervention(format!(
                        "value {value} outside the domain of {node} (size {card})"
                    )));
                }
                Policy::point_mass(node, card, *value)?
            }
            Intervention::Policy(p) => p.clone(),
        };
        self.check_policy(&policy)?;
        let space = policy.space();
        let diagram = self.diagram.manipulated(&space)?;
        let mut mechanisms = self.mechanisms.clone();
        let i = self.diagram.idx(policy.action())?;
        mechanisms[i] = Mechanism {
            node: policy.action().to_string(),
            parents: policy.inputs().to_vec(),
            exo: Vec::new(),
            rows: policy.rows().to_vec(),
        };
        // Exogenous variables now attached to a single node keep their
        // meaning; ones attached to nothing are harmless.
        DiscreteScm::new(diagram, &self.domains(), self.exogenous.clone(), mechanisms)
    }

    fn check_policy(&self, policy: &Policy) -> Result<(), ScmError> {
        let space = policy.space();
        space.validate(&self.diagram)?;
        let bad = |m: String| Err(ScmError::InvalidIntervention(m));
        if self.domain(policy.action()) != Some(policy.action_card()) {
            return bad(format!("policy domain for {} does not match the model", policy.action()));
        }
        for (z, &c) in policy.inputs().iter().zip(policy.input_cards()) {
            if self.domain(z) != Some(c) {
                return bad(format!("policy input {z} has the wrong domain size"));
            }
        }
        Ok(())
    }

    /// Direct evaluation of `P(v | do(π)) = Σ_u P(u) Π_{V ≠ X} P(v | pa, u) π(x | pa*)`
    /// by brute enumeration of every `(u, v)` configuration. Independent of
    /// [`DiscreteScm::intervene`] and [`DiscreteScm::joint`]; kept as a
    /// cross-check of both.
    pub fn policy_joint_direct(&self, policy: &Policy) -> Result<JointTable, ScmError> {
        self.check_policy(policy)?;
        let x = self.diagram.idx(policy.action())?;
        let inputs: Vec<usize> = policy
            .inputs()
            .iter()
            .map(|z| self.diagram.idx(z))
            .collect::<Result<_, _>>()?;
        let u_cards = self.exo_cards();
        let mut all = u_cards.clone();
        all.extend_from_slice(&self.domains);
        state_count(&all)?;
        let n_v = state_count(&self.domains)?;
        let mut acc = vec![0.0; n_v];
        let mut u = vec![0; u_cards.len()];
        loop {
            let pu: f64 = u.iter().enumerate().map(|(k, &x)| self.exogenous[k].probs[x]).product();
            let mut v = vec![0; self.len()];
            for (idx, slot) in acc.iter_mut().enumerate() {
                let mut p = pu;
                for i in 0..self.len() {
                    p *= if i == x {
                        let pa: Vec<usize> = inputs.iter().map(|&z| v[z]).collect();
                        policy.prob(v[i], &pa)
                    } else {
                        self.row(i, &v, &u)[v[i]]
                    };
                }
                *slot += p;
                debug_assert_eq!(idx, v.iter().zip(&self.domains).fold(0, |a, (&q, &c)| a * c + q));
                next_config(&mut v, &self.domains);
            }
            if !next_config(&mut u, &u_cards) {
                break;
            }
        }
        Ok(JointTable::new(self.diagram.names().to_vec(), self.domains.clone(), acc)?)
    }

    /// Exact `P(target | do(π))`.
    pub fn policy_marginal(&self, policy: &Policy, target: &NodeSet) -> Result<JointTable, ScmError> {
        let keep: Vec<String> = target.iter().cloned().collect();
        Ok(self
            .intervene(&Intervention::Policy(policy.clone()))?
            .joint()?
            .marginal(&keep)?)
    }

    /// `n` i.i.d. observed rows by ancestral sampling.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = self.diagram.topological_idx();
        let observed: Vec<usize> = (0..self.len()).filter(|&i| self.diagram.observed_idx(i)).collect();
        let mut rows = Vec::with_capacity(n);
        let mut u = vec![0; self.exogenous.len()];
        let mut v = vec![0; self.len()];
        for _ in 0..n {
            for (k, e) in self.exogenous.iter().enumerate() {
                u[k] = draw(&mut rng, &e.probs);
            }
            for &i in &order {
                v[i] = draw(&mut rng, self.row(i, &v, &u));
            }
            rows.push(observed.iter().map(|&i| v[i]).collect());
        }
        Dataset {
            vars: observed.iter().map(|&i| self.diagram.name(i).to_string()).collect(),
            cards: observed.iter().map(|&i| self.domains[i]).collect(),
            rows,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    // Rounding slack: fall back to the last value with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Observed rows with their variable names and domain sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub vars: Vec<String>,
    pub cards: Vec<usize>,
    pub rows: Vec<Vec<usize>>,
}

impl Dataset {
    /// Empirical joint distribution of the rows.
    pub fn empirical(&self) -> Result<JointTable, TableError> {
        JointTable::from_counts(self.vars.clone(), self.cards.clone(), &self.rows)
    }
}

/// Seed for the `index`-th instance of a batch started from `seed`.
pub fn instance_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}

/// The front-door diagram `X -> W -> S -> Y`, `X <-> S`, reward latent.
pub fn frontdoor_diagram() -> CausalDiagram {
    DiagramBuilder::new()
        .observed("X")
        .observed("W")
        .observed("S")
        .latent("Y")
        .edge("X", "W")
        .edge("W", "S")
        .edge("S", "Y")
        .confounded("X", "S")
        .build()
        .expect("static diagram")
}

/// Bernoulli parameters of a binary front-door instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontdoorParams {
    /// `P(X = 1)`.
    pub p_x: f64,
    /// `P(W = 1 | X = x)`.
    pub p_w: [f64; 2],
    /// `P(S = 1 | X = x, W = w)`, indexed `[x][w]`.
    pub p_s: [[f64; 2]; 2],
    /// `P(Y = 1 | S = s)`.
    pub p_y: [f64; 2],
}

impl FrontdoorParams {
    pub fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || rng.gen::<f64>();
        let p_x = u();
        let p_w = [u(), u()];
        let s00 = u();
        let s01 = u();
        let s10 = u();
        let s11 = u();
        let p_y = [u(), u()];
        FrontdoorParams {
            p_x,
            p_w,
            p_s: [[s00, s01], [s10, s11]],
            p_y,
        }
    }

    /// Realizes the parameters on [`frontdoor_diagram`]. A shared binary
    /// exogenous `U` drives `X = U` and enters `S`, which produces `X <-> S`.
    pub fn to_scm(&self) -> DiscreteScm {
        let bern = |p: f64| vec![1.0 - p, p];
        let mechanisms = vec![
            Mechanism {
                node: "X".into(),
                parents: vec![],
                exo: vec!["U".into()],
                rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            Mechanism {
                node: "W".into(),
                parents: vec!["X".into()],
                exo: vec![],
                rows: vec![bern(self.p_w[0]), bern(self.p_w[1])],
            },
            Mechanism {
                node: "S".into(),
                parents: vec!["W".into()],
                exo: vec!["U".into()],
                // rows over (W, U); U carries the value of X
                rows: vec![
                    bern(self.p_s[0][0]),
                    bern(self.p_s[1][0]),
                    bern(self.p_s[0][1]),
                    bern(self.p_s[1][1]),
                ],
            },
            Mechanism {
                node: "Y".into(),
                parents: vec!["S".into()],
                exo: vec![],
                rows: vec![bern(self.p_y[0]), bern(self.p_y[1])],
            },
        ];
        let domains = ["S", "W", "X", "Y"].iter().map(|n| (n.to_string(), 2)).collect();
        DiscreteScm::new(
            frontdoor_diagram(),
            &domains,
            vec![Exogenous {
                name: "U".into(),
                probs: bern(self.p_x),
            }],
            mechanisms,
        )
        .expect("front-door construction is well formed")
    }
}

/// Random binary front-door instance with every conditional parameter drawn
/// uniformly from `(0, 1)`.
pub fn random_frontdoor(seed: u64) -> DiscreteScm {
    FrontdoorParams::draw(seed).to_scm()
}

/// Random model on `diagram`: every node takes `card` values, each
/// bidirected edge gets its own binary shared exogenous variable and every
/// mechanism row is drawn uniformly from the simplex.
pub fn random_scm(diagram: &CausalDiagram, card: usize, seed: u64) -> Result<DiscreteScm, ScmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exogenous = Vec::new();
    let mut attach: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (k, (a, b)) in diagram.bidirected_edges().into_iter().enumerate() {
        let name = format!("U{k}_{a}_{b}");
        let p: f64 = rng.gen_range(0.05..0.95);
        exogenous.push(Exogenous {
            name: name.clone(),
            probs: vec![1.0 - p, p],
        });
        attach.entry(a).or_default().push(name.clone());
        attach.entry(b).or_default().push(name);
    }
    let mut mechanisms = Vec::new();
    for name in diagram.names() {
        let parents: Vec<String> = diagram.parents(name)?.into_iter().collect();
        let exo = attach.remove(name).unwrap_or_default();
        let rows_n = card.pow(parents.len() as u32) * 2usize.pow(exo.len() as u32);
        let rows = (0..rows_n).map(|_| simplex_point(&mut rng, card)).collect();
        mechanisms.push(Mechanism {
            node: name.clone(),
            parents,
            exo,
            rows,
        });
    }
    let domains = diagram.names().iter().map(|n| (n.clone(), card)).collect();
    DiscreteScm::new(diagram.clone(), &domains, exogenous, mechanisms)
}

/// Uniform draw from the probability simplex, kept away from the boundary
/// so conditionals stay well defined.
fn simplex_point(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-3f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let drift: f64 = 1.0 - row.iter().sum::<f64>();
    row[k - 1] += drift;
    row
}

/// Random policy over `space` with rows drawn from the simplex.
pub fn random_policy(scm: &DiscreteScm, space: &PolicySpace, seed: u64) -> Result<Policy, ScmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let card = scm
        .domain(&space.action)
        .ok_or_else(|| ScmError::UnknownNode(space.action.clone()))?;
    let inputs: Vec<String> = space.inputs.iter().cloned().collect();
    let cards: Vec<usize> = inputs
        .iter()
        .map(|z| scm.domain(z).ok_or_else(|| ScmError::UnknownNode(z.clone())))
        .collect::<Result<_, _>>()?;
    let rows = (0..state_count(&cards)?).map(|_| simplex_point(&mut rng, card)).collect();
    Ok(Policy::normalized(&space.action, card, inputs, cards, rows)?)
}

/// Conditional independence `A ⊥ B | C` in a joint table, checked cell by
/// cell as `P(a,b,c) P(c) = P(a,c) P(b,c)`.
pub fn independent(joint: &FactorTable, a: &NodeSet, b: &NodeSet, c: &NodeSet, tol: f64) -> Result<bool, TableError> {
    let v = |s: &NodeSet| s.iter().cloned().collect::<Vec<String>>();
    let mut abc = v(a);
    abc.extend(v(b));
    abc.extend(v(c));
    let mut ac = v(a);
    ac.extend(v(c));
    let mut bc = v(b);
    bc.extend(v(c));
    let p_abc = joint.marginal(&abc)?;
    let p_ac = joint.marginal(&ac)?;
    let p_bc = joint.marginal(&bc)?;
    let p_c = joint.marginal(&v(c))?;
    let lhs = p_abc.product(&p_c)?;
    let rhs = p_ac.product(&p_bc)?;
    Ok(lhs.max_abs_diff(&rhs)? <= tol)
}

/// `Y` marginal of a table as a map from value to probability.
pub fn marginal_of(joint: &FactorTable, node: &str) -> Result<Vec<f64>, TableError> {
    Ok(joint.marginal(&[node.to_string()])?.values().to_vec())
}

/// Convenience: `{node}` as a node set.
pub fn single(node: &str) -> NodeSet {
    node_set([node])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern(p: f64) -> Vec<f64> {
        vec![1.0 - p, p]
    }

    /// `X = UX ^ UY`, `W = X ^ UW`, `Y = W ^ UY` with all noise at 0.9/0.1.
    fn section3() -> DiscreteScm {
        let d = DiagramBuilder::new()
            .observed("X")
            .observed("W")
            .latent("Y")
            .edge("X", "W")
            .edge("W", "Y")
            .confounded("X", "Y")
            .build()
            .unwrap();
        let xor2 = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let domains = ["X", "W", "Y"].iter().map(|n| (n.to_string(), 2)).collect();
        DiscreteScm::new(
            d,
            &domains,
            vec![
                Exogenous { name: "UX".into(), probs: bern(0.9) },
                Exogenous { name: "UY".into(), probs: bern(0.9) },
                Exogenous { name: "UW".into(), probs: bern(0.1) },
            ],
            vec![
                Mechanism { node: "X".into(), parents: vec![], exo: vec!["UX".into(), "UY".into()], rows: xor2.clone() },
                Mechanism { node: "W".into(), parents: vec!["X".into()], exo: vec!["UW".into()], rows: xor2.clone() },
                Mechanism { node: "Y".into(), parents: vec!["W".into()], exo: vec!["UY".into()], rows: xor2 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn section3_marginals() {
        let m = section3();
        let j = m.joint().unwrap();
        assert!((j.prob(&[("Y", 1)]).unwrap() - 0.82).abs() < 1e-12);
        assert!((m.observational().unwrap().prob(&[("X", 1)]).unwrap() - 0.18).abs() < 1e-12);
        let do0 = m.intervene(&Intervention::Atomic { node: "X".into(), value: 0 }).unwrap();
        assert!((do0.joint().unwrap().prob(&[("Y", 1)]).unwrap() - 0.82).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_sequential_joints_agree() {
        let m = section3();
        let a = m.joint_with(Execution::Sequential).unwrap();
        let b = m.joint_with(Execution::Parallel).unwrap();
        assert!(a.l1_distance(&b).unwrap() < 1e-15);
    }

    #[test]
    fn direct_policy_path_matches_submodel() {
        let m = section3();
        let pi = Policy::new("X", 2, vec![], vec![], vec![vec![0.3, 0.7]]).unwrap();
        let a = m.intervene(&Intervention::Policy(pi.clone())).unwrap().joint().unwrap();
        let b = m.policy_joint_direct(&pi).unwrap();
        assert!(a.l1_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn construction_rejects_inconsistencies() {
        let m = section3();
        // mechanisms are in name order: W, X, Y
        let mut mechs = m.mechanisms().to_vec();
        mechs[1].exo = vec!["UX".into()];
        mechs[1].rows.truncate(2);
        // Y and X no longer share UY, but the diagram still says X <-> Y.
        let err = DiscreteScm::new(m.diagram().clone(), &m.domains(), m.exogenous().to_vec(), mechs).unwrap_err();
        assert!(matches!(err, ScmError::BidirectedMismatch { .. }));

        let mut mechs = m.mechanisms().to_vec();
        mechs[0].rows[0] = vec![0.5, 0.6];
        assert!(matches!(
            DiscreteScm::new(m.diagram().clone(), &m.domains(), m.exogenous().to_vec(), mechs),
            Err(ScmError::BadDistribution { .. })
        ));

        let mut mechs = m.mechanisms().to_vec();
        mechs[2].parents = vec![];
        assert!(matches!(
            DiscreteScm::new(m.diagram().clone(), &m.domains(), m.exogenous().to_vec(), mechs),
            Err(ScmError::ParentMismatch { .. })
        ));
    }

    #[test]
    fn sampling_is_seeded() {
        let m = section3();
        assert_eq!(m.sample(50, 3), m.sample(50, 3));
        assert_ne!(m.sample(50, 3), m.sample(50, 4));
        let one = m.sample(1, 0);
        assert_eq!(one.rows.len(), 1);
        assert_eq!(one.vars, vec!["W", "X"]);
    }

    #[test]
    fn frontdoor_generator() {
        let a = FrontdoorParams::draw(1);
        let b = FrontdoorParams::draw(2);
        assert_ne!(a, b);
        let m = random_frontdoor(1);
        assert_eq!(m.diagram(), &frontdoor_diagram());
        let j = m.joint().unwrap();
        let p = a;
        // P(S=1 | X=1, W=0) is reproduced by the realization.
        let num = j.prob(&[("X", 1), ("W", 0), ("S", 1)]).unwrap();
        let den = j.prob(&[("X", 1), ("W", 0)]).unwrap();
        assert!((num / den - p.p_s[1][0]).abs() < 1e-12);
    }

    #[test]
    fn random_models_validate() {
        let d = frontdoor_diagram();
        for seed in 0..5 {
            let m = random_scm(&d, 2, seed).unwrap();
            assert!((m.joint().unwrap().total() - 1.0).abs() < 1e-12);
        }
    }
}
