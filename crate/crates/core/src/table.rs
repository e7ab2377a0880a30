//! Dense tables over finite discrete variables: general nonnegative factors,
//! normalized joint distributions and conditional policies.
//!
//! Layout is row-major with the first variable most significant, so the flat
//! order of a table is the lexicographic order of its configurations.

use std::fmt;
use std::ops::Deref;

use thiserror::Error;

use crate::diagram::PolicySpace;

/// Upper bound on the number of cells any exact computation may touch.
pub const MAX_STATES: usize = 10_000_000;

/// Tolerance on the total mass of a joint table.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Tolerance on each row of a mechanism or policy table.
pub const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("table has {got} cells, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("variable {0} appears twice")]
    DuplicateVariable(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {var} has cardinality {left} in one table and {right} in another")]
    CardinalityMismatch { var: String, left: usize, right: usize },
    #[error("variable {0} must have at least 2 values")]
    DegenerateDomain(String),
    #[error("negative probability {value} at cell {index}")]
    Negative { index: usize, value: f64 },
    #[error("total probability mass {total} differs from 1")]
    NotNormalized { total: f64 },
    #[error("state space too large ({states} configurations, cap {MAX_STATES})")]
    TooLarge { states: u128 },
    #[error("value {value} out of range for {var} (cardinality {card})")]
    OutOfRange { var: String, value: usize, card: usize },
}

/// Number of configurations of `cards`, or `TooLarge` beyond [`MAX_STATES`].
pub fn state_count(cards: &[usize]) -> Result<usize, TableError> {
    let mut total: u128 = 1;
    for &c in cards {
        total = total.saturating_mul(c as u128);
    }
    if total > MAX_STATES as u128 {
        Err(TableError::TooLarge { states: total })
    } else {
        Ok(total as usize)
    }
}

/// Advances `config` to the next configuration in lexicographic order.
/// Returns false after wrapping around past the last one.
pub fn next_config(config: &mut [usize], cards: &[usize]) -> bool {
    for i in (0..config.len()).rev() {
        config[i] += 1;
        if config[i] < cards[i] {
            return true;
        }
        config[i] = 0;
    }
    false
}

/// All configurations of `cards` in lexicographic order.
pub fn configurations(cards: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let mut cur: Option<Vec<usize>> = if cards.iter().any(|&c| c == 0) {
        None
    } else {
        Some(vec![0; cards.len()])
    };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        cur = if next_config(&mut next, cards) { Some(next) } else { None };
        Some(out)
    })
}

/// A nonnegative table over named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    vars: Vec<String>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl FactorTable {
    pub fn new(vars: Vec<String>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self, TableError> {
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(TableError::DuplicateVariable(v.clone()));
            }
        }
        if vars.len() != cards.len() {
            return Err(TableError::Shape {
                expected: vars.len(),
                got: cards.len(),
            });
        }
        let expected = state_count(&cards)?;
        if values.len() != expected {
            return Err(TableError::Shape {
                expected,
                got: values.len(),
            });
        }
        Ok(FactorTable { vars, cards, values })
    }

    pub fn scalar(value: f64) -> Self {
        FactorTable {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn from_fn(
        vars: Vec<String>,
        cards: Vec<usize>,
        f: impl Fn(&[usize]) -> f64,
    ) -> Result<Self, TableError> {
        let n = state_count(&cards)?;
        let mut values = Vec::with_capacity(n);
        for c in configurations(&cards) {
            values.push(f(&c));
        }
        Self::new(vars, cards, values)
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn position(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    pub fn card_of(&self, var: &str) -> Option<usize> {
        self.position(var).map(|i| self.cards[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn index(&self, config: &[usize]) -> usize {
        config
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&v, &c)| acc * c + v)
    }

    pub fn get(&self, config: &[usize]) -> f64 {
        self.values[self.index(config)]
    }

    /// Positions in `self` of each of `vars`.
    fn positions(&self, vars: &[String]) -> Result<Vec<usize>, TableError> {
        vars.iter()
            .map(|v| self.position(v).ok_or_else(|| TableError::UnknownVariable(v.clone())))
            .collect()
    }

    /// Sum over all variables outside `keep`; the result lists `keep` in the
    /// given order.
    pub fn marginal(&self, keep: &[String]) -> Result<FactorTable, TableError> {
        let pos = self.positions(keep)?;
        let cards: Vec<usize> = pos.iter().map(|&p| self.cards[p]).collect();
        let mut out = FactorTable::new(keep.to_vec(), cards.clone(), vec![0.0; state_count(&cards)?])?;
        let mut cfg = vec![0; self.vars.len()];
        for &v in &self.values {
            let idx = pos.iter().zip(&cards).fold(0, |acc, (&p, &c)| acc * c + cfg[p]);
            out.values[idx] += v;
            next_config(&mut cfg, &self.cards);
        }
        Ok(out)
    }

    /// Sums out `bound`; variables not present are ignored.
    pub fn sum_out(&self, bound: &[String]) -> Result<FactorTable, TableError> {
        let keep: Vec<String> = self.vars.iter().filter(|v| !bound.contains(v)).cloned().collect();
        self.marginal(&keep)
    }

    /// Same table with variables listed in `order` (a permutation).
    pub fn reorder(&self, order: &[String]) -> Result<FactorTable, TableError> {
        if order.len() != self.vars.len() {
            return Err(TableError::Shape {
                expected: self.vars.len(),
                got: order.len(),
            });
        }
        self.marginal(order)
    }

    /// Fixes `var = value` and drops the variable.
    pub fn restrict(&self, var: &str, value: usize) -> Result<FactorTable, TableError> {
        let p = self
            .position(var)
            .ok_or_else(|| TableError::UnknownVariable(var.to_string()))?;
        if value >= self.cards[p] {
            return Err(TableError::OutOfRange {
                var: var.to_string(),
                value,
                card: self.cards[p],
            });
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(p);
        cards.remove(p);
        let mut values = Vec::with_capacity(self.len() / self.cards[p]);
        let mut cfg = vec![0; self.vars.len()];
        for &v in &self.values {
            if cfg[p] == value {
                values.push(v);
            }
            next_config(&mut cfg, &self.cards);
        }
        FactorTable::new(vars, cards, values)
    }

    /// Mass of the cells consistent with a partial assignment.
    pub fn prob(&self, assignment: &[(&str, usize)]) -> Result<f64, TableError> {
        let mut t = self.clone();
        for &(var, val) in assignment {
            t = t.restrict(var, val)?;
        }
        Ok(t.total())
    }

    fn combine(
        &self,
        other: &FactorTable,
        mut op: impl FnMut(f64, f64, usize) -> Result<f64, TableError>,
    ) -> Result<FactorTable, TableError> {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (v, &c) in other.vars.iter().zip(&other.cards) {
            match self.position(v) {
                Some(p) if self.cards[p] != c => {
                    return Err(TableError::CardinalityMismatch {
                        var: v.clone(),
                        left: self.cards[p],
                        right: c,
                    })
                }
                Some(_) => {}
                None => {
                    vars.push(v.clone());
                    cards.push(c);
                }
            }
        }
        let n = state_count(&cards)?;
        let other_pos: Vec<usize> = other.vars.iter().map(|v| vars.iter().position(|w| w == v).unwrap()).collect();
        let mut values = Vec::with_capacity(n);
        let mut cfg = vec![0; vars.len()];
        for i in 0..n {
            let a = self.values[self.index(&cfg[..self.vars.len()])];
            let bi = other_pos
                .iter()
                .zip(&other.cards)
                .fold(0, |acc, (&p, &c)| acc * c + cfg[p]);
            values.push(op(a, other.values[bi], i)?);
            next_config(&mut cfg, &cards);
        }
        FactorTable::new(vars, cards, values)
    }

    /// Pointwise product over the union of variables.
    pub fn product(&self, other: &FactorTable) -> Result<FactorTable, TableError> {
        self.combine(other, |a, b, _| Ok(a * b))
    }

    /// Pointwise quotient; returns the flat index of the first zero
    /// denominator as `Err(Some(i))`.
    pub fn quotient(&self, other: &FactorTable) -> Result<Result<FactorTable, usize>, TableError> {
        let mut zero = None;
        let t = self.combine(other, |a, b, i| {
            if b == 0.0 {
                zero.get_or_insert(i);
                Ok(0.0)
            } else {
                Ok(a / b)
            }
        })?;
        Ok(match zero {
            Some(i) => Err(i),
            None => Ok(t),
        })
    }

    pub fn scale(&self, k: f64) -> FactorTable {
        let mut t = self.clone();
        t.values.iter_mut().for_each(|v| *v *= k);
        t
    }

    /// L1 distance between tables over the same variable set.
    pub fn l1_distance(&self, other: &FactorTable) -> Result<f64, TableError> {
        let o = other.reorder(&self.vars)?;
        if o.cards != self.cards {
            return Err(TableError::Shape {
                expected: self.len(),
                got: o.len(),
            });
        }
        Ok(self.values.iter().zip(&o.values).map(|(a, b)| (a - b).abs()).sum())
    }

    pub fn max_abs_diff(&self, other: &FactorTable) -> Result<f64, TableError> {
        let o = other.reorder(&self.vars)?;
        Ok(self
            .values
            .iter()
            .zip(&o.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl fmt::Display for FactorTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}\tp", self.vars.join("\t"))?;
        for (cfg, v) in configurations(&self.cards).zip(&self.values) {
            for x in &cfg {
                write!(f, "{x}\t")?;
            }
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A normalized probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable(FactorTable);

impl JointTable {
    pub fn new(vars: Vec<String>, cards: Vec<usize>, probs: Vec<f64>) -> Result<Self, TableError> {
        Self::from_factor(FactorTable::new(vars, cards, probs)?)
    }

    pub fn from_factor(t: FactorTable) -> Result<Self, TableError> {
        for (i, &v) in t.values.iter().enumerate() {
            if v < 0.0 || v.is_nan() {
                return Err(TableError::Negative { index: i, value: v });
            }
        }
        let total = t.total();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(TableError::NotNormalized { total });
        }
        Ok(JointTable(t))
    }

    /// Empirical distribution of `rows`.
    pub fn from_counts(vars: Vec<String>, cards: Vec<usize>, rows: &[Vec<usize>]) -> Result<Self, TableError> {
        let mut t = FactorTable::new(vars, cards.clone(), vec![0.0; state_count(&cards)?])?;
        if rows.is_empty() {
            return Err(TableError::NotNormalized { total: 0.0 });
        }
        let w = 1.0 / rows.len() as f64;
        for r in rows {
            for (i, (&v, &c)) in r.iter().zip(&cards).enumerate() {
                if v >= c {
                    return Err(TableError::OutOfRange {
                        var: t.vars[i].clone(),
                        value: v,
                        card: c,
                    });
                }
            }
            let idx = t.index(r);
            t.values[idx] += w;
        }
        Self::from_factor(t)
    }

    pub fn factor(&self) -> &FactorTable {
        &self.0
    }

    pub fn into_factor(self) -> FactorTable {
        self.0
    }

    pub fn marginal(&self, keep: &[String]) -> Result<JointTable, TableError> {
        Ok(JointTable(self.0.marginal(keep)?))
    }

    /// `P(target | given)` as rows indexed by the configurations of `given`;
    /// rows with zero mass are `None`.
    pub fn conditional_rows(&self, target: &str, given: &[String]) -> Result<Vec<Option<Vec<f64>>>, TableError> {
        let mut keep = given.to_vec();
        keep.push(target.to_string());
        let m = self.0.marginal(&keep)?;
        let k = *m.cards.last().unwrap();
        Ok(m.values
            .chunks(k)
            .map(|row| {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    Some(row.iter().map(|v| v / s).collect())
                } else {
                    None
                }
            })
            .collect())
    }
}

impl Deref for JointTable {
    type Target = FactorTable;
    fn deref(&self) -> &FactorTable {
        &self.0
    }
}

impl fmt::Display for JointTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A stochastic decision rule `π(x | inputs)`. Rows are indexed by input
/// configurations in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    action: String,
    action_card: usize,
    inputs: Vec<String>,
    input_cards: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(
        action: &str,
        action_card: usize,
        inputs: Vec<String>,
        input_cards: Vec<usize>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, TableError> {
        if inputs.len() != input_cards.len() {
            return Err(TableError::Shape {
                expected: inputs.len(),
                got: input_cards.len(),
            });
        }
        let expected = state_count(&input_cards)?;
        if rows.len() != expected {
            return Err(TableError::Shape {
                expected,
                got: rows.len(),
            });
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != action_card {
                return Err(TableError::Shape {
                    expected: action_card,
                    got: row.len(),
                });
            }
            if let Some((i, &v)) = row.iter().enumerate().find(|(_, v)| **v < 0.0 || v.is_nan()) {
                return Err(TableError::Negative {
                    index: r * action_card + i,
                    value: v,
                });
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return Err(TableError::NotNormalized { total });
            }
        }
        Ok(Policy {
            action: action.to_string(),
            action_card,
            inputs,
            input_cards,
            rows,
        })
    }

    /// Clamps negatives to zero and rescales each row before validating.
    /// Meant for solver output carrying rounding noise.
    pub fn normalized(
        action: &str,
        action_card: usize,
        inputs: Vec<String>,
        input_cards: Vec<usize>,
        mut rows: Vec<Vec<f64>>,
    ) -> Result<Self, TableError> {
        for row in &mut rows {
            row.iter_mut().for_each(|v| *v = v.max(0.0));
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        Self::new(action, action_card, inputs, input_cards, rows)
    }

    pub fn uniform(action: &str, action_card: usize, inputs: Vec<String>, input_cards: Vec<usize>) -> Result<Self, TableError> {
        let n = state_count(&input_cards)?;
        let rows = vec![vec![1.0 / action_card as f64; action_card]; n];
        Self::new(action, action_card, inputs, input_cards, rows)
    }

    /// The atomic intervention `do(action = value)` written as a policy.
    pub fn point_mass(action: &str, action_card: usize, value: usize) -> Result<Self, TableError> {
        let mut row = vec![0.0; action_card];
        *row.get_mut(value).ok_or(TableError::OutOfRange {
            var: action.to_string(),
            value,
            card: action_card,
        })? = 1.0;
        Self::new(action, action_card, Vec::new(), Vec::new(), vec![row])
    }

    /// `P(action | inputs)` read off a joint table; rows with zero mass fall
    /// back to the uniform distribution.
    pub fn from_conditional(joint: &JointTable, action: &str, inputs: &[String]) -> Result<Self, TableError> {
        let card = joint
            .card_of(action)
            .ok_or_else(|| TableError::UnknownVariable(action.to_string()))?;
        let input_cards = inputs
            .iter()
            .map(|v| joint.card_of(v).ok_or_else(|| TableError::UnknownVariable(v.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = joint
            .conditional_rows(action, inputs)?
            .into_iter()
            .map(|r| r.unwrap_or_else(|| vec![1.0 / card as f64; card]))
            .collect();
        Self::normalized(action, card, inputs.to_vec(), input_cards, rows)
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn action_card(&self) -> usize {
        self.action_card
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn input_cards(&self) -> &[usize] {
        &self.input_cards
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn space(&self) -> PolicySpace {
        PolicySpace::new(&self.action, self.inputs.iter().cloned())
    }

    pub fn row_index(&self, input_values: &[usize]) -> usize {
        input_values
            .iter()
            .zip(&self.input_cards)
            .fold(0, |acc, (&v, &c)| acc * c + v)
    }

    pub fn prob(&self, action_value: usize, input_values: &[usize]) -> f64 {
        self.rows[self.row_index(input_values)][action_value]
    }

    /// The policy as a factor over `inputs..., action`.
    pub fn to_factor(&self) -> FactorTable {
        let mut vars = self.inputs.clone();
        vars.push(self.action.clone());
        let mut cards = self.input_cards.clone();
        cards.push(self.action_card);
        let values = self.rows.iter().flatten().copied().collect();
        FactorTable::new(vars, cards, values).expect("policy shape checked at construction")
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<String> = (0..self.action_card)
            .map(|x| format!("{}={x}", self.action))
            .collect();
        writeln!(f, "{}\t{}", self.inputs.join("\t"), head.join("\t"))?;
        for (cfg, row) in configurations(&self.input_cards).zip(&self.rows) {
            let cells: Vec<String> = cfg.iter().map(|v| v.to_string()).collect();
            let probs: Vec<String> = row.iter().map(|p| format!("{p:.9}")).collect();
            writeln!(f, "{}\t{}", cells.join("\t"), probs.join("\t"))?;
        }
        Ok(())
    }
}
