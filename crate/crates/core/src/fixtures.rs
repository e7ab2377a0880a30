//! Bundled example diagrams and models, looked up by name.

use crate::formats::{parse_graph, parse_scm, GraphFile, ParseError, ScmFile};

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../fixtures/", $name)))),*]
    };
}

static GRAPHS: &[(&str, &str)] = bundle![
    "confounded_chain.graph",
    "bow.graph",
    "fig1a.graph",
    "fig1b.graph",
    "fig1c.graph",
    "fig1d.graph",
    "fig2a.graph",
    "fig2b.graph",
    "fig3a.graph",
    "highway_binary.graph",
];

static MODELS: &[(&str, &str)] = bundle![
    "fig2a.scm",
    "fig2b.scm",
    "highway_binary.scm",
    "xor_confounded.scm",
    "frontdoor_xor.scm",
    "frontdoor_xor_noisy.scm",
];

fn strip<'a>(name: &'a str, ext: &str) -> &'a str {
    name.strip_suffix(ext).unwrap_or(name)
}

/// Names of the bundled diagrams, without extension.
pub fn graph_names() -> Vec<&'static str> {
    GRAPHS.iter().map(|(n, _)| strip(n, ".graph")).collect()
}

/// Names of the bundled models, without extension.
pub fn scm_names() -> Vec<&'static str> {
    MODELS.iter().map(|(n, _)| strip(n, ".scm")).collect()
}

pub fn graph_text(name: &str) -> Option<&'static str> {
    let name = strip(name, ".graph");
    GRAPHS.iter().find(|(n, _)| strip(n, ".graph") == name).map(|(_, t)| *t)
}

pub fn scm_text(name: &str) -> Option<&'static str> {
    let name = strip(name, ".scm");
    MODELS.iter().find(|(n, _)| strip(n, ".scm") == name).map(|(_, t)| *t)
}

/// Parses a bundled diagram. Panics on an unknown name; the bundle is
/// checked by the test suite.
pub fn graph(name: &str) -> GraphFile {
    try_graph(name).unwrap_or_else(|e| panic!("bundled diagram {name}: {e}"))
}

pub fn try_graph(name: &str) -> Result<GraphFile, ParseError> {
    let text = graph_text(name).ok_or_else(|| ParseError {
        line: 0,
        message: format!("no bundled diagram named {name}"),
    })?;
    parse_graph(text)
}

/// Resolves `diagram <ref>` headers against the bundled diagrams.
pub fn bundled_loader(reference: &str) -> Result<GraphFile, String> {
    try_graph(reference).map_err(|e| e.to_string())
}

pub fn scm(name: &str) -> ScmFile {
    try_scm(name).unwrap_or_else(|e| panic!("bundled model {name}: {e}"))
}

pub fn try_scm(name: &str) -> Result<ScmFile, ParseError> {
    let text = scm_text(name).ok_or_else(|| ParseError {
        line: 0,
        message: format!("no bundled model named {name}"),
    })?;
    parse_scm(text, bundled_loader)
}
