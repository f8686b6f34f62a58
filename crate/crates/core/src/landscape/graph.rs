//! Disconnectivity graph: evenly spaced energy levels, each partitioning the
//! minima below it into superbasins. Level 1 is the highest cross-section;
//! nodes are labelled `level_index`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::LandscapeDatabase;
use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: usize = 25;

/// Slack added above the highest stationary point so it sits inside level 1.
const TOP_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    /// 1-based; 1 is the highest level.
    pub level: usize,
    /// 1-based position within the level, by ascending best member loss.
    pub index: usize,
    /// Member minimum ids ordered by (loss, id).
    pub members: Vec<u64>,
    /// Position in [`DisconnectivityGraph::nodes`] of the enclosing node one
    /// level up.
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl GraphNode {
    pub fn label(&self) -> String {
        format!("{}_{}", self.level, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisconnectivityGraph {
    pub n_levels: usize,
    pub e_top: f64,
    /// Loss of the global minimum.
    pub e_bottom: f64,
    pub delta: f64,
    /// Nodes level by level, each level in index order.
    pub nodes: Vec<GraphNode>,
}

impl DisconnectivityGraph {
    /// Threshold of level `k`: `e_top - (k - 1) * delta`.
    pub fn threshold(&self, level: usize) -> f64 {
        self.e_top - (level as f64 - 1.0) * self.delta
    }

    pub fn level(&self, level: usize) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    pub fn node(&self, level: usize, index: usize) -> Option<&GraphNode> {
        self.nodes
            .iter()
            .find(|n| n.level == level && n.index == index)
    }

    pub fn node_position(&self, level: usize, index: usize) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.level == level && n.index == index)
    }

    /// Parses an `L_K` label and looks it up.
    pub fn node_by_label(&self, label: &str) -> Result<&GraphNode> {
        let (level, index) = parse_label(label)?;
        self.node(level, index)
            .ok_or(Error::UnknownGroup { level, index })
    }

    /// Deepest node holding `id` with at least `min_members` members.
    pub fn deepest_group_of(&self, id: u64, min_members: usize) -> Option<&GraphNode> {
        self.nodes
            .iter()
            .rev()
            .find(|n| n.members.len() >= min_members && n.members.contains(&id))
    }

    pub fn labels(&self) -> Vec<String> {
        self.nodes.iter().map(GraphNode::label).collect()
    }
}

/// `"25_7"` -> `(25, 7)`.
pub fn parse_label(label: &str) -> Result<(usize, usize)> {
    let bad = || {
        Error::InvalidConfig(format!(
            "group label '{label}' is not of the form LEVEL_NODE"
        ))
    };
    let (l, k) = label.trim().split_once('_').ok_or_else(bad)?;
    let level = l.parse::<usize>().map_err(|_| bad())?;
    let index = k.parse::<usize>().map_err(|_| bad())?;
    if level == 0 || index == 0 {
        return Err(bad());
    }
    Ok((level, index))
}

/// Builds the graph over `n_levels` evenly spaced thresholds from just above
/// the highest stationary point down to one spacing above the global minimum.
pub fn build_disconnectivity(
    db: &LandscapeDatabase,
    n_levels: usize,
) -> Result<DisconnectivityGraph> {
    if n_levels < 2 {
        return Err(Error::InvalidConfig(
            "a disconnectivity graph needs at least two levels".into(),
        ));
    }
    let global = db.global_minimum().ok_or(Error::EmptyDatabase)?;
    let e_bottom = global.loss;
    let highest = db
        .transition_states()
        .iter()
        .map(|t| t.loss)
        .chain(db.minima().iter().map(|m| m.loss))
        .fold(f64::NEG_INFINITY, f64::max);
    let e_top = highest + TOP_MARGIN;
    let delta = (e_top - e_bottom) / n_levels as f64;

    let mut graph = DisconnectivityGraph {
        n_levels,
        e_top,
        e_bottom,
        delta,
        nodes: Vec::new(),
    };
    let mut previous: Vec<usize> = Vec::new();
    for level in 1..=n_levels {
        let eps = graph.threshold(level);
        let mut current = Vec::new();
        for (i, members) in db.superbasins_at(eps).into_iter().enumerate() {
            let parent = previous
                .iter()
                .copied()
                .find(|&p| graph.nodes[p].members.contains(&members[0]));
            let pos = graph.nodes.len();
            if let Some(p) = parent {
                graph.nodes[p].children.push(pos);
            }
            graph.nodes.push(GraphNode {
                level,
                index: i + 1,
                members,
                parent,
                children: Vec::new(),
            });
            current.push(pos);
        }
        previous = current;
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{abc, synthetic};
    use super::*;
    use alloc::vec;

    #[test]
    fn single_minimum_is_a_chain() {
        let db = synthetic(&[0.7], &[]);
        let g = build_disconnectivity(&db, 5).unwrap();
        assert_eq!(g.nodes.len(), 5);
        for (k, node) in g.nodes.iter().enumerate() {
            assert_eq!(node.label(), format!("{}_1", k + 1));
            assert_eq!(node.parent, k.checked_sub(1));
        }
    }

    #[test]
    fn abc_levels() {
        let g = build_disconnectivity(&abc(), 4).unwrap();
        let counts: Vec<usize> = (1..=4).map(|l| g.level(l).count()).collect();
        assert_eq!(counts[0], 1);
        for level in 1..=4 {
            let eps = g.threshold(level);
            if eps > 0.5 && eps < 0.9 {
                assert_eq!(counts[level - 1], 2, "level {level}");
            }
        }
        // merges at 0.5 (A,B) and 0.9 (AB,C): two branching vertices
        let branching = g.nodes.iter().filter(|n| n.children.len() > 1).count();
        assert_eq!(branching, 2);
        assert_eq!(g.node(1, 1).unwrap().members, vec![1, 2, 3]);
        assert_eq!(g.node_by_label("2_2").unwrap().members, vec![3]);
    }

    #[test]
    fn errors() {
        let db = synthetic(&[], &[]);
        assert_eq!(build_disconnectivity(&db, 3), Err(Error::EmptyDatabase));
        assert!(build_disconnectivity(&abc(), 1).is_err());
        assert!(parse_label("3-1").is_err());
        assert!(parse_label("0_1").is_err());
        assert_eq!(parse_label("25_7").unwrap(), (25, 7));
        let g = build_disconnectivity(&abc(), 4).unwrap();
        assert_eq!(
            g.node_by_label("9_1"),
            Err(Error::UnknownGroup { level: 9, index: 1 })
        );
    }

    #[test]
    fn lowest_level_contains_global_minimum() {
        let g = build_disconnectivity(&abc(), 25).unwrap();
        assert!(g.level(25).any(|n| n.members.contains(&1)));
        assert_eq!(g.deepest_group_of(1, 2).unwrap().members, vec![1, 2]);
    }
}
