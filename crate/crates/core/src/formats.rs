//! Text formats: diagrams with an optional policy space, SCM fixtures,
//! distribution tables and datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::diagram::{CausalDiagram, DiagramBuilder, Observability, PolicySpace};
use crate::scm::{Dataset, DiscreteScm, Exogenous, Mechanism};
use crate::table::{state_count, JointTable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based; 0 when the problem is not tied to a single line.
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        message: message.into(),
    })
}

/// Non-empty, comment-stripped lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let body = l.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

/// A parsed diagram file.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub diagram: CausalDiagram,
    pub policy: Option<PolicySpace>,
}

pub fn parse_graph(text: &str) -> Result<GraphFile, ParseError> {
    let mut b = DiagramBuilder::new();
    let mut nodes = BTreeSet::new();
    let mut directed = BTreeSet::new();
    let mut bidirected = BTreeSet::new();
    let mut policy: Option<(usize, PolicySpace)> = None;
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    for (ln, t) in lines(text) {
        match t.as_slice() {
            ["node", name, kind] => {
                let obs = match *kind {
                    "obs" => Observability::Observed,
                    "lat" => Observability::Latent,
                    other => return err(ln, format!("expected obs or lat, found {other}")),
                };
                if !nodes.insert(name.to_string()) {
                    return err(ln, format!("duplicate node {name}"));
                }
                first_line.insert(name.to_string(), ln);
                b.nodes.push((name.to_string(), obs));
            }
            ["edge", a, "->", c] => {
                if !directed.insert((a.to_string(), c.to_string())) {
                    return err(ln, format!("duplicate edge {a} -> {c}"));
                }
                first_line.insert(format!("{a} -> {c}"), ln);
                b.directed.push((a.to_string(), c.to_string()));
            }
            ["edge", a, "<->", c] => {
                let key = if a <= c { (a.to_string(), c.to_string()) } else { (c.to_string(), a.to_string()) };
                if !bidirected.insert(key) {
                    return err(ln, format!("duplicate edge {a} <-> {c}"));
                }
                first_line.insert(format!("{a} <-> {c}"), ln);
                b.bidirected.push((a.to_string(), c.to_string()));
            }
            ["policy", "action", x, "inputs", rest @ ..] => {
                if policy.is_some() {
                    return err(ln, "duplicate policy declaration");
                }
                let inputs: BTreeSet<&str> = rest.iter().copied().collect();
                if inputs.len() != rest.len() {
                    return err(ln, "duplicate policy input");
                }
                policy = Some((ln, PolicySpace::new(x, rest.iter().copied())));
            }
            _ => return err(ln, format!("cannot parse declaration: {}", t.join(" "))),
        }
    }
    let diagram = match b.build() {
        Ok(d) => d,
        Err(e) => {
            // Point at the first offending declaration when there is one.
            let line = b
                .violations()
                .iter()
                .find_map(|v| match v {
                    crate::diagram::Violation::UnknownNode { edge, .. } => first_line.get(edge).copied(),
                    crate::diagram::Violation::SelfLoop(n) => first_line
                        .iter()
                        .find(|(k, _)| k.starts_with(&format!("{n} ")) && k.ends_with(&format!(" {n}")))
                        .map(|(_, l)| *l),
                    _ => None,
                })
                .unwrap_or(0);
            return err(line, e.to_string());
        }
    };
    let policy = match policy {
        Some((ln, p)) => {
            if let Err(e) = p.validate(&diagram) {
                return err(ln, e.to_string());
            }
            Some(p)
        }
        None => None,
    };
    Ok(GraphFile { diagram, policy })
}

/// Canonical text form: nodes, directed edges, bidirected edges, policy.
pub fn write_graph(diagram: &CausalDiagram, policy: Option<&PolicySpace>) -> String {
    let mut out = String::new();
    for n in diagram.names() {
        let kind = if diagram.is_observed(n).unwrap() { "obs" } else { "lat" };
        writeln!(out, "node {n} {kind}").unwrap();
    }
    for (a, b) in diagram.directed_edges() {
        writeln!(out, "edge {a} -> {b}").unwrap();
    }
    for (a, b) in diagram.bidirected_edges() {
        writeln!(out, "edge {a} <-> {b}").unwrap();
    }
    if let Some(p) = policy {
        let mut line = format!("policy action {} inputs", p.action);
        for z in &p.inputs {
            line.push(' ');
            line.push_str(z);
        }
        writeln!(out, "{line}").unwrap();
    }
    out
}

/// A parsed SCM file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmFile {
    /// The diagram reference from the header, as written.
    pub diagram_ref: String,
    pub policy: Option<PolicySpace>,
    pub scm: DiscreteScm,
}

struct MechBlock {
    line: usize,
    node: String,
    parents: Vec<String>,
    exo: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse_probs(ln: usize, toks: &[&str]) -> Result<Vec<f64>, ParseError> {
    toks.iter()
        .map(|t| t.parse::<f64>().or_else(|_| err(ln, format!("not a number: {t}"))))
        .collect()
}

/// Parses an SCM file. `load` resolves the `diagram <ref>` header.
pub fn parse_scm(
    text: &str,
    load: impl Fn(&str) -> Result<GraphFile, String>,
) -> Result<ScmFile, ParseError> {
    let mut diagram_ref: Option<(usize, String)> = None;
    let mut domains = BTreeMap::new();
    let mut exogenous: Vec<Exogenous> = Vec::new();
    let mut blocks: Vec<MechBlock> = Vec::new();
    for (ln, t) in lines(text) {
        match t.as_slice() {
            ["diagram", r] => {
                if diagram_ref.is_some() {
                    return err(ln, "duplicate diagram header");
                }
                diagram_ref = Some((ln, r.to_string()));
            }
            ["domain", node, k] => {
                let k: usize = k.parse().or_else(|_| err(ln, format!("bad domain size {k}")))?;
                if domains.insert(node.to_string(), k).is_some() {
                    return err(ln, format!("duplicate domain for {node}"));
                }
            }
            ["exo", name, probs @ ..] => {
                if exogenous.iter().any(|e| e.name == *name) {
                    return err(ln, format!("duplicate exogenous {name}"));
                }
                if probs.is_empty() {
                    return err(ln, format!("exogenous {name} has no probabilities"));
                }
                exogenous.push(Exogenous {
                    name: name.to_string(),
                    probs: parse_probs(ln, probs)?,
                });
            }
            ["mech", node, "given", rest @ ..] => {
                let Some(split) = rest.iter().position(|t| *t == "exo") else {
                    return err(ln, "mech line needs an `exo` section (possibly empty)");
                };
                if blocks.iter().any(|b| b.node == *node) {
                    return err(ln, format!("duplicate mechanism for {node}"));
                }
                blocks.push(MechBlock {
                    line: ln,
                    node: node.to_string(),
                    parents: rest[..split].iter().map(|s| s.to_string()).collect(),
                    exo: rest[split + 1..].iter().map(|s| s.to_string()).collect(),
                    rows: Vec::new(),
                });
            }
            [first, ..] if first.parse::<f64>().is_ok() => match blocks.last_mut() {
                Some(b) => b.rows.push(parse_probs(ln, &t)?),
                None => return err(ln, "distribution row outside a mech block"),
            },
            _ => return err(ln, format!("cannot parse declaration: {}", t.join(" "))),
        }
    }
    let Some((dl, dref)) = diagram_ref else {
        return err(0, "missing `diagram <file>` header");
    };
    let graph = load(&dref).or_else(|e| err(dl, format!("cannot load diagram {dref}: {e}")))?;
    for b in &blocks {
        let mut cards: Vec<usize> = Vec::new();
        for p in &b.parents {
            match domains.get(p) {
                Some(&k) => cards.push(k),
                None => return err(b.line, format!("no domain declared for parent {p}")),
            }
        }
        for u in &b.exo {
            match exogenous.iter().find(|e| &e.name == u) {
                Some(e) => cards.push(e.probs.len()),
                None => return err(b.line, format!("unknown exogenous {u}")),
            }
        }
        let expected = state_count(&cards).or_else(|e| err(b.line, e.to_string()))?;
        if b.rows.len() != expected {
            return err(
                b.line,
                format!("mechanism {} has {} rows, expected {expected}", b.node, b.rows.len()),
            );
        }
    }
    let mech_line: BTreeMap<String, usize> = blocks.iter().map(|b| (b.node.clone(), b.line)).collect();
    let mechanisms = blocks
        .into_iter()
        .map(|b| Mechanism {
            node: b.node,
            parents: b.parents,
            exo: b.exo,
            rows: b.rows,
        })
        .collect();
    match DiscreteScm::new(graph.diagram, &domains, exogenous, mechanisms) {
        Ok(scm) => Ok(ScmFile {
            diagram_ref: dref,
            policy: graph.policy,
            scm,
        }),
        Err(e) => {
            let line = match &e {
                crate::scm::ScmError::ParentMismatch { node, .. } => mech_line.get(node).copied().unwrap_or(0),
                crate::scm::ScmError::BadDistribution { what, .. } => what
                    .strip_prefix("mechanism ")
                    .and_then(|r| r.split_whitespace().next())
                    .and_then(|n| mech_line.get(n).copied())
                    .unwrap_or(0),
                _ => 0,
            };
            err(line, e.to_string())
        }
    }
}

pub fn write_scm(scm: &DiscreteScm, diagram_ref: &str) -> String {
    let mut out = format!("diagram {diagram_ref}\n");
    for (n, k) in scm.domains() {
        writeln!(out, "domain {n} {k}").unwrap();
    }
    for e in scm.exogenous() {
        let probs: Vec<String> = e.probs.iter().map(|p| p.to_string()).collect();
        writeln!(out, "exo {} {}", e.name, probs.join(" ")).unwrap();
    }
    for m in scm.mechanisms() {
        let mut head = format!("mech {} given", m.node);
        for p in &m.parents {
            head.push(' ');
            head.push_str(p);
        }
        head.push_str(" exo");
        for u in &m.exo {
            head.push(' ');
            head.push_str(u);
        }
        writeln!(out, "{head}").unwrap();
        for r in &m.rows {
            let cells: Vec<String> = r.iter().map(|p| p.to_string()).collect();
            writeln!(out, "  {}", cells.join(" ")).unwrap();
        }
    }
    out
}

/// Distribution file: a header of node names followed by `p`, then one
/// row per configuration with nonzero mass. Domain sizes are the largest
/// value seen plus one, and at least two.
pub fn parse_distribution(text: &str) -> Result<JointTable, ParseError> {
    let mut it = lines(text);
    let Some((hl, header)) = it.next() else {
        return err(0, "empty distribution file");
    };
    let Some((&"p", names)) = header.split_last() else {
        return err(hl, "header must end with a `p` column");
    };
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let mut rows: Vec<(usize, Vec<usize>, f64)> = Vec::new();
    for (ln, t) in it {
        if t.len() != names.len() + 1 {
            return err(ln, format!("expected {} columns, found {}", names.len() + 1, t.len()));
        }
        let vals: Vec<usize> = t[..names.len()]
            .iter()
            .map(|v| v.parse::<usize>().or_else(|_| err(ln, format!("bad value {v}"))))
            .collect::<Result<_, _>>()?;
        let p: f64 = t[names.len()].parse().or_else(|_| err(ln, "bad probability"))?;
        if !(p >= 0.0) {
            return err(ln, format!("negative probability {p}"));
        }
        rows.push((ln, vals, p));
    }
    let mut cards = vec![2; names.len()];
    for (_, vals, _) in &rows {
        for (c, &v) in cards.iter_mut().zip(vals) {
            *c = (*c).max(v + 1);
        }
    }
    let n = state_count(&cards).or_else(|e| err(0, e.to_string()))?;
    let mut probs = vec![0.0; n];
    let mut seen = BTreeSet::new();
    for (ln, vals, p) in rows {
        let idx = vals.iter().zip(&cards).fold(0, |a, (&v, &c)| a * c + v);
        if !seen.insert(idx) {
            return err(ln, "duplicate configuration");
        }
        probs[idx] = p;
    }
    JointTable::new(names, cards, probs).or_else(|e| err(0, e.to_string()))
}

pub fn write_distribution(t: &JointTable) -> String {
    let mut out = format!("{} p\n", t.vars().join(" "));
    for (cfg, p) in crate::table::configurations(t.cards()).zip(t.values()) {
        if *p > 0.0 {
            let cells: Vec<String> = cfg.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{} {}", cells.join(" "), p).unwrap();
        }
    }
    out
}

/// Comma-separated dataset with a header row.
pub fn write_dataset(d: &Dataset) -> String {
    let mut out = d.vars.join(",");
    out.push('\n');
    for r in &d.rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Reads a dataset; domain sizes are inferred as in [`parse_distribution`].
pub fn parse_dataset(text: &str) -> Result<Dataset, ParseError> {
    let mut it = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = it.next() else {
        return err(0, "empty dataset");
    };
    let vars: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, l) in it {
        let r: Vec<usize> = l
            .split(',')
            .map(|v| v.trim().parse::<usize>().or_else(|_| err(i + 1, format!("bad value {v}"))))
            .collect::<Result<_, _>>()?;
        if r.len() != vars.len() {
            return err(i + 1, format!("expected {} columns, found {}", vars.len(), r.len()));
        }
        rows.push(r);
    }
    let mut cards = vec![2; vars.len()];
    for r in &rows {
        for (c, &v) in cards.iter_mut().zip(r) {
            *c = (*c).max(v + 1);
        }
    }
    Ok(Dataset { vars, cards, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRONTDOOR: &str = "# front-door\nnode X obs\nnode W obs\nnode Y lat\nedge X -> W\nedge W -> Y\nedge X <-> Y\npolicy action X inputs\n";

    #[test]
    fn graph_round_trip() {
        let g = parse_graph(FRONTDOOR).unwrap();
        assert_eq!(g.policy, Some(PolicySpace::new("X", Vec::<String>::new())));
        let again = parse_graph(&write_graph(&g.diagram, g.policy.as_ref())).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn graph_errors_carry_lines() {
        let e = parse_graph("node X obs\nnode X lat\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_graph("node X obs\nedge X -> Q\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_graph("node X obs\nedge X => Q\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_graph("node X obs\nnode Z obs\nedge X -> Z\npolicy action X inputs Z\n").unwrap_err();
        assert_eq!(e.line, 4);
    }

    #[test]
    fn scm_round_trip() {
        let scm_text = "diagram fd\ndomain X 2\ndomain W 2\ndomain Y 2\nexo U 0.5 0.5\n\
            mech X given exo U\n1 0\n0 1\nmech W given X exo\n0.9 0.1\n0.2 0.8\n\
            mech Y given W exo U\n1 0\n0 1\n0 1\n1 0\n";
        let load = |_: &str| parse_graph(FRONTDOOR).map_err(|e| e.to_string());
        let f = parse_scm(scm_text, load).unwrap();
        let again = parse_scm(&write_scm(&f.scm, "fd"), load).unwrap();
        assert_eq!(f, again);
        let bad = scm_text.replace("0.2 0.8", "0.2 0.9");
        assert_eq!(parse_scm(&bad, load).unwrap_err().line, 9);
    }

    #[test]
    fn distribution_round_trip() {
        let t = parse_distribution("X Y p\n0 0 0.25\n0 1 0.25\n1 1 0.5\n").unwrap();
        assert_eq!(t.get(&[1, 0]), 0.0);
        assert_eq!(parse_distribution(&write_distribution(&t)).unwrap(), t);
        assert!(parse_distribution("X p\n0 0.5\n1 0.6\n").is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let d = Dataset {
            vars: vec!["A".into(), "B".into()],
            cards: vec![2, 3],
            rows: vec![vec![0, 2], vec![1, 0]],
        };
        assert_eq!(parse_dataset(&write_dataset(&d)).unwrap(), d);
    }
}
