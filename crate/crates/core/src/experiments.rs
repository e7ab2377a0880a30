//! Desk-scale experiments: the random binary front-door study, the binary
//! highway model and the stochastic variation of the front-door fixture.

use std::fmt::Write as _;

use crate::diagram::{node_set, NodeSet, PolicySpace};
use crate::fixtures;
use crate::identify::{identify_policy, IdFormula};
use crate::imitate::{imitate_pipeline, instruments, sample_tolerance, solve_policy, ImitateError, Status, DEFAULT_TOLERANCE};
use crate::par::Execution;
use crate::scm::{frontdoor_diagram, instance_seed, random_frontdoor, DiscreteScm};
use crate::table::{JointTable, Policy};

/// Offset separating the sampling stream from the parameter stream of an
/// instance.
const SAMPLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Settings for [`frontdoor_study`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub models: usize,
    /// Rows drawn per model; `None` uses the exact observational table.
    pub samples: Option<usize>,
    pub seed: u64,
    pub execution: Execution,
}

impl StudyConfig {
    pub fn exact(models: usize, seed: u64) -> Self {
        StudyConfig {
            models,
            samples: None,
            seed,
            execution: Execution::default(),
        }
    }

    pub fn sampled(models: usize, samples: usize, seed: u64) -> Self {
        StudyConfig {
            samples: Some(samples),
            ..Self::exact(models, seed)
        }
    }

    fn tolerance(&self) -> f64 {
        self.samples.map_or(DEFAULT_TOLERANCE, sample_tolerance)
    }
}

/// One model instance. Distances are full L1 gaps between the interventional
/// and the natural distribution, computed exactly in the true model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub index: usize,
    pub seed: u64,
    /// Feasibility of the surrogate equation under the exact table.
    pub p_imitable: bool,
    /// False when the estimated table had an empty conditioning cell.
    pub estimable: bool,
    pub ci_surrogate: f64,
    pub ci_reward: f64,
    pub bc_surrogate: f64,
    pub bc_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySummary {
    pub models: usize,
    pub p_imitable: usize,
    /// p-imitable instances left out because of empty cells.
    pub skipped: usize,
    pub mean_ci_surrogate: f64,
    pub mean_ci_reward: f64,
    pub mean_bc_surrogate: f64,
    pub mean_bc_reward: f64,
}

impl StudySummary {
    pub fn fraction_p_imitable(&self) -> f64 {
        self.p_imitable as f64 / self.models.max(1) as f64
    }
}

struct Plan {
    formula: IdFormula,
    surrogate: NodeSet,
}

fn frontdoor_plan() -> Result<Plan, ImitateError> {
    let d = frontdoor_diagram();
    let space = PolicySpace::new("X", Vec::<String>::new());
    let (surrogate, sub) = instruments(&d, &space, "Y")?
        .into_iter()
        .next()
        .expect("the front-door diagram has an instrument");
    Ok(Plan {
        formula: identify_policy(&d, &sub, &surrogate)?,
        surrogate,
    })
}

fn gap(scm: &DiscreteScm, natural: &JointTable, policy: &Policy, target: &str) -> Result<f64, ImitateError> {
    let after = scm.policy_marginal(policy, &node_set([target]))?;
    let before = natural.marginal(&[target.to_string()])?;
    Ok(after.l1_distance(&before)?)
}

fn study_instance(plan: &Plan, cfg: &StudyConfig, index: usize) -> Result<StudyRow, ImitateError> {
    let seed = instance_seed(cfg.seed, index as u64);
    let scm = random_frontdoor(seed);
    let natural = scm.joint()?;
    let exact = scm.observational()?;
    let p_imitable = solve_policy(&plan.formula, &exact, &plan.surrogate, "X", DEFAULT_TOLERANCE)?.feasible;
    let estimate = match cfg.samples {
        None => exact,
        Some(n) => scm.sample(n, seed ^ SAMPLE_STREAM).empirical()?,
    };
    let mut row = StudyRow {
        index,
        seed,
        p_imitable,
        estimable: true,
        ci_surrogate: f64::NAN,
        ci_reward: f64::NAN,
        bc_surrogate: f64::NAN,
        bc_reward: f64::NAN,
    };
    let ci = match solve_policy(&plan.formula, &estimate, &plan.surrogate, "X", cfg.tolerance()) {
        Ok(sol) => sol.policy,
        Err(ImitateError::Evaluation(crate::identify::EvalError::UnsupportedConditional(_))) => {
            row.estimable = false;
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let bc = Policy::from_conditional(&estimate, "X", &[])?;
    row.ci_surrogate = gap(&scm, &natural, &ci, "S")?;
    row.ci_reward = gap(&scm, &natural, &ci, "Y")?;
    row.bc_surrogate = gap(&scm, &natural, &bc, "S")?;
    row.bc_reward = gap(&scm, &natural, &bc, "Y")?;
    Ok(row)
}

/// Random binary front-door models: decides p-imitability from the exact
/// table, then compares the causal policy solved from the (possibly
/// sampled) table against cloning `π(x) = P(x)`.
pub fn frontdoor_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>, ImitateError> {
    let plan = frontdoor_plan()?;
    cfg.execution
        .map_indexed(cfg.models, |i| study_instance(&plan, cfg, i))
        .into_iter()
        .collect()
}

/// Means over the p-imitable, estimable instances.
pub fn summarize(rows: &[StudyRow]) -> StudySummary {
    let kept: Vec<&StudyRow> = rows.iter().filter(|r| r.p_imitable && r.estimable).collect();
    let mean = |f: fn(&StudyRow) -> f64| {
        if kept.is_empty() {
            f64::NAN
        } else {
            kept.iter().map(|r| f(r)).sum::<f64>() / kept.len() as f64
        }
    };
    StudySummary {
        models: rows.len(),
        p_imitable: rows.iter().filter(|r| r.p_imitable).count(),
        skipped: rows.iter().filter(|r| r.p_imitable && !r.estimable).count(),
        mean_ci_surrogate: mean(|r| r.ci_surrogate),
        mean_ci_reward: mean(|r| r.ci_reward),
        mean_bc_surrogate: mean(|r| r.bc_surrogate),
        mean_bc_reward: mean(|r| r.bc_reward),
    }
}

/// One comma-separated row per instance, then summary lines as comments.
pub fn study_report(rows: &[StudyRow]) -> String {
    let mut out = String::from("index,seed,p_imitable,l1_ci_s,l1_ci_y,l1_bc_s,l1_bc_y\n");
    let cell = |v: f64| if v.is_nan() { "NA".to_string() } else { format!("{v:.9}") };
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            u8::from(r.p_imitable),
            cell(r.ci_surrogate),
            cell(r.ci_reward),
            cell(r.bc_surrogate),
            cell(r.bc_reward)
        )
        .unwrap();
    }
    let s = summarize(rows);
    writeln!(out, "# models {}", s.models).unwrap();
    writeln!(out, "# p_imitable {} ({:.4})", s.p_imitable, s.fraction_p_imitable()).unwrap();
    writeln!(out, "# skipped_empty_cells {}", s.skipped).unwrap();
    writeln!(out, "# mean_l1_ci_s {}", cell(s.mean_ci_surrogate)).unwrap();
    writeln!(out, "# mean_l1_ci_y {}", cell(s.mean_ci_reward)).unwrap();
    writeln!(out, "# mean_l1_bc_s {}", cell(s.mean_bc_surrogate)).unwrap();
    writeln!(out, "# mean_l1_bc_y {}", cell(s.mean_bc_reward)).unwrap();
    out
}

/// Rewards under the two cloning policies of the binary highway model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighwayOutcome {
    /// `E[Y | do(π)]` for `π(x) = P(x)`.
    pub marginal_cloning: f64,
    /// `E[Y | do(π)]` for `π(x | w) = P(x | w)`.
    pub conditional_cloning: f64,
}

impl HighwayOutcome {
    pub fn bias(&self) -> f64 {
        self.marginal_cloning - self.conditional_cloning
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighwayReport {
    pub exact: HighwayOutcome,
    /// Policies estimated from `n` rows, evaluated in the true model.
    pub sampled: Option<(usize, u64, HighwayOutcome)>,
}

fn highway_outcome(scm: &DiscreteScm, estimate: &JointTable) -> Result<HighwayOutcome, ImitateError> {
    let reward = |p: &Policy| -> Result<f64, ImitateError> {
        Ok(scm.policy_marginal(p, &node_set(["Y"]))?.prob(&[("Y", 1)])?)
    };
    let pi1 = Policy::from_conditional(estimate, "X", &[])?;
    let pi2 = Policy::from_conditional(estimate, "X", &["W".to_string()])?;
    Ok(HighwayOutcome {
        marginal_cloning: reward(&pi1)?,
        conditional_cloning: reward(&pi2)?,
    })
}

/// The adversarial binary highway model: cloning with the non-admissible
/// input `W` loses reward compared with cloning the marginal of `X`.
pub fn highway_binary(samples: Option<usize>, seed: u64) -> Result<HighwayReport, ImitateError> {
    let scm = fixtures::scm("highway_binary").scm;
    let exact = highway_outcome(&scm, &scm.observational()?)?;
    let sampled = match samples {
        None => None,
        Some(n) => {
            let est = scm.sample(n, seed).empirical()?;
            Some((n, seed, highway_outcome(&scm, &est)?))
        }
    };
    Ok(HighwayReport { exact, sampled })
}

pub fn highway_report(r: &HighwayReport) -> String {
    let mut out = String::from("mode,n,seed,reward_marginal_cloning,reward_conditional_cloning,bias\n");
    let e = r.exact;
    writeln!(
        out,
        "exact,NA,NA,{:.9},{:.9},{:.9}",
        e.marginal_cloning,
        e.conditional_cloning,
        e.bias()
    )
    .unwrap();
    if let Some((n, seed, s)) = r.sampled {
        writeln!(
            out,
            "sampled,{n},{seed},{:.9},{:.9},{:.9}",
            s.marginal_cloning,
            s.conditional_cloning,
            s.bias()
        )
        .unwrap();
    }
    out
}

/// The value `π(X = 0)` quoted for the stochastic variation.
pub const QUOTED_MIXTURE: f64 = 0.75;

/// Grid oracle and pipeline result on the variation with `P(U_W = 1) = 0.7`.
#[derive(Debug, Clone, PartialEq)]
pub struct FootnoteReport {
    pub p_y1: f64,
    pub do_x0: f64,
    pub do_x1: f64,
    /// `(π(X = 0), |P(Y=1 | do(π)) − P(Y=1)|)` on an even grid.
    pub grid: Vec<(f64, f64)>,
    /// Grid points whose gap is at most `tolerance`.
    pub feasible: Vec<f64>,
    pub tolerance: f64,
    pub pipeline_status: Status,
    /// `π(X = 0)` returned by the pipeline.
    pub pipeline_mixture: Option<f64>,
    /// Gap of the quoted mixture in the true model.
    pub quoted_gap: f64,
}

impl FootnoteReport {
    /// True when the quoted mixture does not imitate the reward.
    pub fn diverges(&self) -> bool {
        self.quoted_gap > self.tolerance
    }
}

fn mixture(p0: f64) -> Policy {
    Policy::new("X", 2, vec![], vec![], vec![vec![p0, 1.0 - p0]]).expect("valid mixture")
}

/// Evaluates every `π(X = 0)` on a grid of `points` values directly in the
/// true model, independently of identification, and compares with the
/// pipeline's answer.
pub fn footnote_variation(points: usize) -> Result<FootnoteReport, ImitateError> {
    let file = fixtures::scm("frontdoor_xor_noisy");
    let scm = file.scm;
    let tolerance = 1e-9;
    let p_y1 = scm.joint()?.prob(&[("Y", 1)])?;
    let y1 = |p0: f64| -> Result<f64, ImitateError> {
        Ok(scm.policy_marginal(&mixture(p0), &node_set(["Y"]))?.prob(&[("Y", 1)])?)
    };
    let do_x0 = y1(1.0)?;
    let do_x1 = y1(0.0)?;
    let steps = points.max(2) - 1;
    let mut grid = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let p0 = i as f64 / steps as f64;
        grid.push((p0, (y1(p0)? - p_y1).abs()));
    }
    let feasible = grid.iter().filter(|(_, g)| *g <= tolerance).map(|(p, _)| *p).collect();
    let space = file.policy.expect("fixture declares a policy space");
    let result = imitate_pipeline(scm.diagram(), &space, "Y", &scm.observational()?, DEFAULT_TOLERANCE)?;
    let pipeline_mixture = result.policy.as_ref().map(|p| p.prob(0, &[]));
    Ok(FootnoteReport {
        p_y1,
        do_x0,
        do_x1,
        grid,
        feasible,
        tolerance,
        pipeline_status: result.status,
        pipeline_mixture,
        quoted_gap: (y1(QUOTED_MIXTURE)? - p_y1).abs(),
    })
}

pub fn footnote_report(r: &FootnoteReport) -> String {
    let mut out = String::new();
    writeln!(out, "P(Y=1) {:.9}", r.p_y1).unwrap();
    writeln!(out, "P(Y=1|do(X=0)) {:.9}", r.do_x0).unwrap();
    writeln!(out, "P(Y=1|do(X=1)) {:.9}", r.do_x1).unwrap();
    let feasible: Vec<String> = r.feasible.iter().map(|p| format!("{p:.4}")).collect();
    writeln!(out, "grid points {} feasible pi(X=0) {{{}}}", r.grid.len(), feasible.join(", ")).unwrap();
    writeln!(out, "pipeline {} pi(X=0) {}", r.pipeline_status, match r.pipeline_mixture {
        Some(p) => format!("{p:.9}"),
        None => "NA".into(),
    })
    .unwrap();
    writeln!(out, "quoted pi(X=0) {QUOTED_MIXTURE} gap {:.9}", r.quoted_gap).unwrap();
    if r.diverges() {
        writeln!(out, "DIVERGENCE: quoted mixture {QUOTED_MIXTURE} does not imitate P(Y); oracle-feasible set shown above").unwrap();
    } else {
        writeln!(out, "quoted mixture agrees with the oracle").unwrap();
    }
    out
}
