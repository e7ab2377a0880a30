//! `cimit`: command-line front end for the causal imitation library.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use causal_imitation::criteria::{admissible_backdoor_sets, find_pi_backdoor};
use causal_imitation::diagram::hat_name;
use causal_imitation::enumerate::list_min_separators;
use causal_imitation::experiments::{
    footnote_report, footnote_variation, frontdoor_study, highway_binary, highway_report, study_report,
    StudyConfig,
};
use causal_imitation::formats::{parse_distribution, parse_graph, parse_scm, write_dataset, GraphFile, ScmFile};
use causal_imitation::imitate::{
    check_graphical, imitate_pipeline, instruments, sample_tolerance, verify_policy, Status, DEFAULT_TOLERANCE,
};
use causal_imitation::par::Execution;
use causal_imitation::{fixtures, identify_policy, node_set, CausalDiagram, JointTable, NodeSet, PolicySpace};
use clap::{Args, Parser, Subcommand};

/// Exit code for an infeasible verdict under `--strict`.
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "cimit", version, about = "Causal imitation: imitability checks, policy synthesis and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graphical imitability verdict with its witness.
    Check(Query),
    /// Admissible π-backdoor sets among the policy inputs.
    Backdoor(Query),
    /// Minimal imitation surrogates.
    Surrogates(Query),
    /// Instruments: surrogate sets paired with identifiable subspaces.
    Instruments(Query),
    /// Identification formula for the distribution of a node set under a policy.
    Identify {
        #[command(flatten)]
        query: Query,
        /// Comma-separated outcome nodes (defaults to the reward).
        #[arg(long, value_delimiter = ',')]
        outcome: Vec<String>,
    },
    /// Full pipeline: graphical criteria, then instruments and policy synthesis.
    Imitate(ImitateArgs),
    /// Draw samples from an SCM as CSV.
    Simulate {
        #[arg(long)]
        scm: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Desk-scale experiments.
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Args)]
struct Query {
    /// Diagram file, or the name of a bundled diagram.
    #[arg(long)]
    graph: String,
    /// Policy space as `ACTION` or `ACTION:IN1,IN2`; overrides the file's `policy` line.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, default_value = "Y")]
    reward: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImitateArgs {
    /// Diagram file or bundled name; taken from the SCM when omitted.
    #[arg(long)]
    graph: Option<String>,
    /// Observational distribution file.
    #[arg(long, conflicts_with = "scm", required_unless_present = "scm")]
    dist: Option<PathBuf>,
    /// SCM file or bundled name. Supplies the observational table and checks the result.
    #[arg(long)]
    scm: Option<String>,
    /// Estimate the observational table from this many SCM samples.
    #[arg(long, requires = "scm", value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, default_value = "Y")]
    reward: String,
    /// Residual tolerance; defaults to 1e-6, or 3/sqrt(n) with `--samples`.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Exit with a nonzero status when the verdict is infeasible.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Experiment {
    /// Random binary front-door models: p-imitability rate and L1 gaps.
    FrontdoorStudy {
        #[arg(long, default_value_t = 1000)]
        models: usize,
        /// Rows per model; exact tables when omitted.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run on the calling thread only.
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cloning bias in the binary highway model.
    HighwayBinary {
        /// Also estimate both policies from this many samples.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feasible mixtures in the noisier mediator variation.
    FootnoteVariation {
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// A path on disk, or else a bundled fixture.
fn load_graph(spec: &str) -> Result<GraphFile> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = read_text(path)?;
        return parse_graph(&text).map_err(|e| anyhow!("{}: {e}", path.display()));
    }
    fixtures::try_graph(spec).map_err(|e| anyhow!("{spec}: {e}"))
}

fn load_scm(spec: &str) -> Result<ScmFile> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loader = |r: &str| -> std::result::Result<GraphFile, String> {
            let local = base.join(r);
            if local.is_file() {
                let t = fs::read_to_string(&local).map_err(|e| e.to_string())?;
                parse_graph(&t).map_err(|e| format!("{}: {e}", local.display()))
            } else {
                fixtures::bundled_loader(r)
            }
        };
        return parse_scm(&text, loader).map_err(|e| anyhow!("{}: {e}", path.display()));
    }
    fixtures::try_scm(spec).map_err(|e| anyhow!("{spec}: {e}"))
}

fn parse_policy(spec: &str) -> Result<PolicySpace> {
    let (action, inputs) = match spec.split_once(':') {
        Some((a, i)) => (a.trim(), i),
        None => (spec.trim(), ""),
    };
    if action.is_empty() {
        bail!("policy {spec:?} names no action");
    }
    let inputs: Vec<&str> = inputs.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    Ok(PolicySpace::new(action, inputs))
}

fn policy_space(file: Option<&PolicySpace>, flag: Option<&str>, diagram: &CausalDiagram) -> Result<PolicySpace> {
    let space = match (flag, file) {
        (Some(s), _) => parse_policy(s)?,
        (None, Some(p)) => p.clone(),
        (None, None) => bail!("no policy space: pass --policy or add a `policy` line to the diagram"),
    };
    space.validate(diagram)?;
    Ok(space)
}

fn fmt_set(s: &NodeSet) -> String {
    format!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join(", "))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn query_context(q: &Query) -> Result<(CausalDiagram, PolicySpace)> {
    let g = load_graph(&q.graph)?;
    let space = policy_space(g.policy.as_ref(), q.policy.as_deref(), &g.diagram)?;
    if !g.diagram.contains(&q.reward) {
        bail!("unknown reward node {}", q.reward);
    }
    Ok((g.diagram, space))
}

fn check(q: &Query) -> Result<String> {
    let (d, space) = query_context(q)?;
    let (status, witness) = check_graphical(&d, &space, &q.reward)?;
    Ok(format!("policy space: {space}\nreward: {}\nverdict: {status}\nwitness: {witness}\n", q.reward))
}

fn backdoor(q: &Query) -> Result<String> {
    let (d, space) = query_context(q)?;
    let mut out = format!("policy space: {space}\nreward: {}\n", q.reward);
    match find_pi_backdoor(&d, &space, &q.reward)? {
        Some(z) => out.push_str(&format!("canonical: {}\n", fmt_set(&z))),
        None => out.push_str("canonical: none\n"),
    }
    for z in admissible_backdoor_sets(&d, &space, &q.reward)? {
        out.push_str(&format!("admissible: {}\n", fmt_set(&z)));
    }
    Ok(out)
}

fn surrogates(q: &Query) -> Result<String> {
    let (d, space) = query_context(q)?;
    let g = d.augment_policy(&space)?;
    let mut restrict = d.observed_nodes();
    restrict.remove(&space.action);
    let mut out = format!("policy space: {space}\nreward: {}\n", q.reward);
    for s in list_min_separators(&g, &hat_name(&space.action), &q.reward, &restrict)? {
        out.push_str(&format!("surrogate: {}\n", fmt_set(&s)));
    }
    Ok(out)
}

fn list_instruments(q: &Query) -> Result<String> {
    let (d, space) = query_context(q)?;
    let mut out = format!("policy space: {space}\nreward: {}\n", q.reward);
    for (s, sub) in instruments(&d, &space, &q.reward)? {
        out.push_str(&format!("instrument: {} with {sub}\n", fmt_set(&s)));
    }
    Ok(out)
}

fn identify(q: &Query, outcome: &[String]) -> Result<String> {
    let (d, space) = query_context(q)?;
    let outcome = if outcome.is_empty() { node_set([q.reward.as_str()]) } else { node_set(outcome.iter().cloned()) };
    let f = identify_policy(&d, &space, &outcome)?;
    Ok(format!("P({} | do({space})) = {f}\n", outcome.iter().cloned().collect::<Vec<_>>().join(", ")))
}

fn imitate(a: &ImitateArgs) -> Result<(String, Status)> {
    let model = a.scm.as_deref().map(load_scm).transpose()?;
    let (diagram, file_policy) = match (&a.graph, &model) {
        (Some(g), _) => {
            let g = load_graph(g)?;
            (g.diagram, g.policy)
        }
        (None, Some(m)) => (m.scm.diagram().clone(), m.policy.clone()),
        (None, None) => bail!("--graph is required with --dist"),
    };
    let space = policy_space(file_policy.as_ref(), a.policy.as_deref(), &diagram)?;
    let (obs, source, default_tol): (JointTable, String, f64) = match (&a.dist, &model) {
        (Some(p), _) => {
            let t = parse_distribution(&read_text(p)?).map_err(|e| anyhow!("{}: {e}", p.display()))?;
            (t, format!("distribution {}", p.display()), DEFAULT_TOLERANCE)
        }
        (None, Some(m)) => match a.samples {
            Some(n) => {
                let n = n as usize;
                let t = m.scm.sample(n, a.seed).empirical()?;
                (t, format!("{n} samples, seed {}", a.seed), sample_tolerance(n))
            }
            None => (m.scm.observational()?, "exact observational table".into(), DEFAULT_TOLERANCE),
        },
        (None, None) => unreachable!("clap requires --dist or --scm"),
    };
    let tol = a.tolerance.unwrap_or(default_tol);
    let result = imitate_pipeline(&diagram, &space, &a.reward, &obs, tol)?;
    let mut out = format!(
        "policy space: {space}\nreward: {}\nobservations: {source}\ntolerance: {tol:.9e}\n",
        a.reward
    );
    out.push_str(&result.report());
    if let (Some(m), Some(p)) = (&model, &result.policy) {
        let gap = verify_policy(&m.scm, p, &node_set([a.reward.as_str()]))?;
        out.push_str(&format!("true reward gap (L1): {gap:.9e}\n"));
    }
    Ok((out, result.status))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check(q) => emit(q.out.as_deref(), &check(&q)?)?,
        Command::Backdoor(q) => emit(q.out.as_deref(), &backdoor(&q)?)?,
        Command::Surrogates(q) => emit(q.out.as_deref(), &surrogates(&q)?)?,
        Command::Instruments(q) => emit(q.out.as_deref(), &list_instruments(&q)?)?,
        Command::Identify { query, outcome } => emit(query.out.as_deref(), &identify(&query, &outcome)?)?,
        Command::Imitate(a) => {
            let (text, status) = imitate(&a)?;
            emit(a.out.as_deref(), &text)?;
            if a.strict && status == Status::Infeasible {
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Simulate { scm, n, seed, out } => {
            let m = load_scm(&scm)?;
            emit(out.as_deref(), &write_dataset(&m.scm.sample(n as usize, seed)))?;
        }
        Command::Experiment(e) => match e {
            Experiment::FrontdoorStudy { models, samples, seed, sequential, out } => {
                let mut cfg = match samples {
                    Some(n) => StudyConfig::sampled(models, n as usize, seed),
                    None => StudyConfig::exact(models, seed),
                };
                if sequential {
                    cfg.execution = Execution::Sequential;
                }
                emit(out.as_deref(), &study_report(&frontdoor_study(&cfg)?))?;
            }
            Experiment::HighwayBinary { samples, seed, out } => {
                let r = highway_binary(samples.map(|n| n as usize), seed)?;
                emit(out.as_deref(), &highway_report(&r))?;
            }
            Experiment::FootnoteVariation { points, out } => {
                if points == 0 {
                    bail!("--points must be at least 1");
                }
                emit(out.as_deref(), &footnote_report(&footnote_variation(points)?))?;
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
