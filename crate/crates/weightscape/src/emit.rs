//! Disconnectivity graph output: Graphviz dot, a standalone SVG drawing and
//! a JSON tree. All three are deterministic functions of the graph and db.

use std::fmt::Write as _;

use serde::Serialize;
use weightscape_core::{DisconnectivityGraph, LandscapeDatabase};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GraphFormat {
    Dot,
    Svg,
    Json,
}

impl GraphFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GraphFormat::Dot => "dot",
            GraphFormat::Svg => "svg",
            GraphFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dot" => Ok(GraphFormat::Dot),
            "svg" => Ok(GraphFormat::Svg),
            "json" => Ok(GraphFormat::Json),
            other => Err(Error::Usage(format!(
                "unknown graph format '{other}' (expected dot, svg or json)"
            ))),
        }
    }
}

pub fn emit_graph(
    graph: &DisconnectivityGraph,
    db: &LandscapeDatabase,
    format: GraphFormat,
) -> String {
    match format {
        GraphFormat::Dot => to_dot(graph, db),
        GraphFormat::Svg => to_svg(graph, db),
        GraphFormat::Json => to_json(graph, db),
    }
}

/// Position in `graph.nodes` of the deepest node holding each minimum, in
/// db order.
fn leaf_nodes(
    graph: &DisconnectivityGraph,
    db: &LandscapeDatabase,
) -> Vec<(u64, f64, Option<usize>)> {
    db.minima()
        .iter()
        .map(|m| {
            (
                m.id,
                m.loss,
                graph.nodes.iter().rposition(|n| n.members.contains(&m.id)),
            )
        })
        .collect()
}

pub fn to_dot(graph: &DisconnectivityGraph, db: &LandscapeDatabase) -> String {
    let mut s = String::new();
    s.push_str("digraph disconnectivity {\n  node [shape=point];\n");
    for n in &graph.nodes {
        let _ = writeln!(
            s,
            "  \"{}\" [label=\"{}\", level={}, energy=\"{}\", members={}];",
            n.label(),
            n.label(),
            n.level,
            graph.threshold(n.level),
            n.members.len()
        );
    }
    for n in &graph.nodes {
        for &c in &n.children {
            let _ = writeln!(s, "  \"{}\" -> \"{}\";", n.label(), graph.nodes[c].label());
        }
    }
    for (id, loss, leaf) in leaf_nodes(graph, db) {
        let _ = writeln!(
            s,
            "  \"min{id}\" [shape=plaintext, label=\"{id}\", energy=\"{loss}\"];"
        );
        if let Some(p) = leaf {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"min{id}\" [style=dashed];",
                graph.nodes[p].label()
            );
        }
    }
    s.push_str("}\n");
    s
}

#[derive(Serialize)]
struct JsonNode {
    label: String,
    level: usize,
    index: usize,
    parent: Option<String>,
    members: Vec<u64>,
    y: f64,
}

#[derive(Serialize)]
struct JsonLeaf {
    id: u64,
    loss: f64,
    node: Option<String>,
}

#[derive(Serialize)]
struct JsonGraph {
    levels: usize,
    e_top: f64,
    e_bottom: f64,
    delta: f64,
    nodes: Vec<JsonNode>,
    minima: Vec<JsonLeaf>,
}

pub fn to_json(graph: &DisconnectivityGraph, db: &LandscapeDatabase) -> String {
    let doc = JsonGraph {
        levels: graph.n_levels,
        e_top: graph.e_top,
        e_bottom: graph.e_bottom,
        delta: graph.delta,
        nodes: graph
            .nodes
            .iter()
            .map(|n| JsonNode {
                label: n.label(),
                level: n.level,
                index: n.index,
                parent: n.parent.map(|p| graph.nodes[p].label()),
                members: n.members.clone(),
                y: graph.threshold(n.level),
            })
            .collect(),
        minima: leaf_nodes(graph, db)
            .into_iter()
            .map(|(id, loss, p)| JsonLeaf {
                id,
                loss,
                node: p.map(|p| graph.nodes[p].label()),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
    s.push('\n');
    s
}

const SVG_HEIGHT: f64 = 520.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 40.0;
const MARGIN_LEFT: f64 = 90.0;
const LEAF_SPACING: f64 = 18.0;

/// Horizontal order of the minima: depth-first through the tree, children in
/// index order, a node's own leaves (by loss) before its children.
fn leaf_order(graph: &DisconnectivityGraph, leaves: &[(u64, f64, Option<usize>)]) -> Vec<u64> {
    fn visit(
        graph: &DisconnectivityGraph,
        node: usize,
        leaves: &[(u64, f64, Option<usize>)],
        out: &mut Vec<u64>,
    ) {
        let mut own: Vec<&(u64, f64, Option<usize>)> =
            leaves.iter().filter(|l| l.2 == Some(node)).collect();
        own.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out.extend(own.iter().map(|l| l.0));
        for &c in &graph.nodes[node].children {
            visit(graph, c, leaves, out);
        }
    }
    let mut out = Vec::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if n.parent.is_none() {
            visit(graph, i, leaves, &mut out);
        }
    }
    out
}

pub fn to_svg(graph: &DisconnectivityGraph, db: &LandscapeDatabase) -> String {
    let leaves = leaf_nodes(graph, db);
    let order = leaf_order(graph, &leaves);
    let x_of = |id: u64| {
        MARGIN_LEFT + LEAF_SPACING * (order.iter().position(|&o| o == id).unwrap_or(0) as f64 + 1.0)
    };
    let width = MARGIN_LEFT + LEAF_SPACING * (order.len() as f64 + 1.0) + 20.0;
    let (top, bottom) = (graph.e_top, graph.e_bottom);
    let span = if top > bottom { top - bottom } else { 1.0 };
    let y_of = |e: f64| MARGIN_TOP + (top - e) / span * (SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    let node_x: Vec<f64> = graph
        .nodes
        .iter()
        .map(|n| n.members.iter().map(|&m| x_of(m)).sum::<f64>() / n.members.len() as f64)
        .collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.1}\" height=\"{SVG_HEIGHT:.1}\" viewBox=\"0 0 {width:.1} {SVG_HEIGHT:.1}\" font-family=\"sans-serif\" font-size=\"10\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    // energy axis
    let (y0, y1) = (y_of(top), y_of(bottom));
    let _ = writeln!(
        s,
        "<line x1=\"{:.1}\" y1=\"{y0:.1}\" x2=\"{:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>",
        MARGIN_LEFT - 20.0,
        MARGIN_LEFT - 20.0
    );
    for (e, y) in [(top, y0), (bottom, y1)] {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{e:.5}</text>",
            MARGIN_LEFT - 24.0,
            y + 3.0
        );
    }
    let _ = writeln!(s, "<text x=\"12\" y=\"{:.1}\" transform=\"rotate(-90 12 {:.1})\" text-anchor=\"middle\">loss</text>", (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    let _ = writeln!(s, "<g stroke=\"black\" stroke-width=\"1\">");
    for (i, n) in graph.nodes.iter().enumerate() {
        let (x, y) = (node_x[i], y_of(graph.threshold(n.level)));
        if let Some(p) = n.parent {
            let (px, py) = (node_x[p], y_of(graph.threshold(graph.nodes[p].level)));
            let _ = writeln!(s, "<line x1=\"{px:.1}\" y1=\"{py:.1}\" x2=\"{x:.1}\" y2=\"{y:.1}\"><title>{}</title></line>", n.label());
        }
    }
    for &(id, loss, leaf) in &leaves {
        let Some(p) = leaf else { continue };
        let (px, py) = (node_x[p], y_of(graph.threshold(graph.nodes[p].level)));
        let _ = writeln!(s, "<line x1=\"{px:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{:.1}\"><title>minimum {id}: {loss}</title></line>", x_of(id), y_of(loss));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
