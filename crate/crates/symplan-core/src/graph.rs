//! Symbolic transition graph and shortest-path queries.
//!
//! Nodes are symbolic states, edges are observed skills with unit cost, and
//! parallel observations of the same skill merge into one edge carrying all
//! provenance. A* uses a Hamming-distance heuristic scaled by the largest
//! per-edge symbol change seen in the data, which keeps it admissible even
//! when one skill flips several object symbols at once.

use std::collections::BTreeMap;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FrameRef;
use crate::symbols::{SymbolicState, SymbolicTransition};

/// Count of differing components between two equal-arity states.
pub fn hamming(a: &SymbolicState, b: &SymbolicState) -> Result<usize> {
    if a.arity() != b.arity() {
        return Err(Error::ArityMismatch {
            left: a.arity(),
            right: b.arity(),
        });
    }
    Ok(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count())
}

/// One logical edge: all observed traversals of the same (before, after) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeData {
    /// (start key frame, end key frame) of each supporting sub-skill.
    pub provenance: Vec<(FrameRef, FrameRef)>,
}

/// Directed multigraph of symbolic states with unit edge costs.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    nodes: Vec<SymbolicState>,
    ids: BTreeMap<SymbolicState, usize>,
    successors: Vec<BTreeMap<usize, EdgeData>>,
    state_index: BTreeMap<SymbolicState, Vec<FrameRef>>,
    max_symbol_change: usize,
}

impl TransitionGraph {
    pub fn nodes(&self) -> &[SymbolicState] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.successors.iter().map(|s| s.len()).sum()
    }

    pub fn contains(&self, state: &SymbolicState) -> bool {
        self.ids.contains_key(state)
    }

    /// Largest per-edge symbol-change count observed in the graph.
    pub fn max_symbol_change(&self) -> usize {
        self.max_symbol_change
    }

    pub fn successors(
        &self,
        state: &SymbolicState,
    ) -> impl Iterator<Item = (&SymbolicState, &EdgeData)> {
        let slot = self.ids.get(state).copied();
        slot.into_iter().flat_map(move |id| {
            self.successors[id]
                .iter()
                .map(|(succ, data)| (&self.nodes[*succ], data))
        })
    }

    pub fn edge(&self, before: &SymbolicState, after: &SymbolicState) -> Option<&EdgeData> {
        let b = *self.ids.get(before)?;
        let a = *self.ids.get(after)?;
        self.successors[b].get(&a)
    }

    /// Key frames labelled with a given node state.
    pub fn state_frames(&self, state: &SymbolicState) -> Option<&[FrameRef]> {
        self.state_index.get(state).map(|v| v.as_slice())
    }

    pub fn state_index(&self) -> &BTreeMap<SymbolicState, Vec<FrameRef>> {
        &self.state_index
    }

    pub fn edges(&self) -> impl Iterator<Item = (&SymbolicState, &SymbolicState, &EdgeData)> {
        self.nodes.iter().enumerate().flat_map(move |(id, node)| {
            self.successors[id]
                .iter()
                .map(move |(succ, data)| (node, &self.nodes[*succ], data))
        })
    }
}

/// Build a graph from extracted transitions plus the key frames labelled with
/// each state. Parallel edges merge; their provenance is concatenated in
/// input order.
pub fn build_graph(
    transitions: &[SymbolicTransition],
    state_frames: &BTreeMap<SymbolicState, Vec<FrameRef>>,
) -> Result<TransitionGraph> {
    if transitions.is_empty() {
        return Err(Error::EmptyTransitionSet);
    }
    let mut node_set: Vec<SymbolicState> = transitions
        .iter()
        .flat_map(|t| [t.before.clone(), t.after.clone()])
        .collect();
    node_set.sort();
    node_set.dedup();
    let ids: BTreeMap<SymbolicState, usize> = node_set
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();

    let mut successors: Vec<BTreeMap<usize, EdgeData>> = vec![BTreeMap::new(); node_set.len()];
    let mut max_change = 1;
    for t in transitions {
        let change = hamming(&t.before, &t.after)?;
        max_change = max_change.max(change);
        let b = ids[&t.before];
        let a = ids[&t.after];
        successors[b]
            .entry(a)
            .or_insert_with(|| EdgeData {
                provenance: Vec::new(),
            })
            .provenance
            .push(t.provenance.clone());
    }

    // every node keeps the key frames labelled with it; the transition
    // endpoints themselves always count as supporting frames
    let mut state_index: BTreeMap<SymbolicState, Vec<FrameRef>> = BTreeMap::new();
    for node in &node_set {
        let mut frames: Vec<FrameRef> = state_frames.get(node).cloned().unwrap_or_default();
        for t in transitions {
            if &t.before == node {
                frames.push(t.provenance.0.clone());
            }
            if &t.after == node {
                frames.push(t.provenance.1.clone());
            }
        }
        frames.sort();
        frames.dedup();
        state_index.insert(node.clone(), frames);
    }

    Ok(TransitionGraph {
        nodes: node_set,
        ids,
        successors,
        state_index,
        max_symbol_change: max_change,
    })
}

/// A walk through the graph; `cost` is the edge count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicPath {
    pub states: Vec<SymbolicState>,
    pub cost: usize,
}

/// Heuristic choice for [`astar_with`]. `Zero` degrades A* to uniform-cost
/// search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heuristic {
    Hamming,
    Zero,
}

/// Minimum-edge-count path via A* with the Hamming/`c_max` heuristic.
pub fn astar(
    graph: &TransitionGraph,
    start: &SymbolicState,
    goal: &SymbolicState,
) -> Result<SymbolicPath> {
    astar_with(graph, start, goal, Heuristic::Hamming)
}

pub fn astar_with(
    graph: &TransitionGraph,
    start: &SymbolicState,
    goal: &SymbolicState,
    heuristic: Heuristic,
) -> Result<SymbolicPath> {
    let start_id = *graph
        .ids
        .get(start)
        .ok_or_else(|| Error::UnknownState(start.to_string()))?;
    let goal_id = *graph
        .ids
        .get(goal)
        .ok_or_else(|| Error::UnknownState(goal.to_string()))?;

    let c_max = graph.max_symbol_change.max(1);
    let h = |id: usize| -> Result<usize> {
        match heuristic {
            Heuristic::Zero => Ok(0),
            Heuristic::Hamming => Ok(hamming(&graph.nodes[id], goal)?.div_ceil(c_max)),
        }
    };

    let n = graph.nodes.len();
    let mut g = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    // min-heap on (f, node id); node ids are assigned in sorted state order,
    // so equal-f ties resolve to the lexicographically smallest state
    let mut open: BinaryHeap<std::cmp::Reverse<(usize, usize)>> = BinaryHeap::new();
    g[start_id] = 0;
    open.push(std::cmp::Reverse((h(start_id)?, start_id)));

    while let Some(std::cmp::Reverse((_, current))) = open.pop() {
        if closed[current] {
            continue;
        }
        closed[current] = true;
        if current == goal_id {
            let mut states = vec![graph.nodes[current].clone()];
            let mut at = current;
            while at != start_id {
                at = parent[at];
                states.push(graph.nodes[at].clone());
            }
            states.reverse();
            let cost = states.len() - 1;
            return Ok(SymbolicPath { states, cost });
        }
        for &succ in graph.successors[current].keys() {
            if closed[succ] {
                continue;
            }
            let tentative = g[current] + 1;
            if tentative < g[succ] {
                g[succ] = tentative;
                parent[succ] = current;
                open.push(std::cmp::Reverse((tentative + h(succ)?, succ)));
            }
        }
    }
    Err(Error::NoPath {
        start: start.to_string(),
        goal: goal.to_string(),
    })
}

/// DOT digraph with symbol-tuple node labels and provenance-count edge labels.
pub fn export_dot(graph: &TransitionGraph) -> String {
    let mut out = String::from("digraph transitions {\n");
    for node in &graph.nodes {
        writeln!(out, "    \"{node}\";").unwrap();
    }
    for (before, after, data) in graph.edges() {
        writeln!(
            out,
            "    \"{before}\" -> \"{after}\" [label=\"{}\"];",
            data.provenance.len()
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

/// JSON form of the graph: node list plus edges with full provenance.
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<Vec<usize>>,
    pub edges: Vec<GraphEdgeJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphEdgeJson {
    pub before: Vec<usize>,
    pub after: Vec<usize>,
    pub provenance: Vec<ProvenanceJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProvenanceJson {
    pub traj: String,
    pub start: usize,
    pub end: usize,
}

pub fn to_json(graph: &TransitionGraph) -> GraphJson {
    GraphJson {
        nodes: graph.nodes.iter().map(|n| n.0.clone()).collect(),
        edges: graph
            .edges()
            .map(|(before, after, data)| GraphEdgeJson {
                before: before.0.clone(),
                after: after.0.clone(),
                provenance: data
                    .provenance
                    .iter()
                    .map(|(s, e)| ProvenanceJson {
                        traj: s.trajectory_id.clone(),
                        start: s.frame_index,
                        end: e.frame_index,
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Rebuild a graph from its JSON edge dump.
pub fn from_json(json: &GraphJson) -> Result<TransitionGraph> {
    let mut transitions = Vec::new();
    for e in &json.edges {
        for p in &e.provenance {
            transitions.push(SymbolicTransition {
                before: SymbolicState(e.before.clone()),
                after: SymbolicState(e.after.clone()),
                provenance: (
                    FrameRef::new(p.traj.clone(), p.start),
                    FrameRef::new(p.traj.clone(), p.end),
                ),
            });
        }
    }
    build_graph(&transitions, &BTreeMap::new())
}
