//! Direct-feedthrough dependency graph and deterministic scheduling.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::CompileError;
use crate::blocks::{resolve, BlockKind};
use crate::diagram::{cmp_ids, Block, Diagram};

/// Graph over block ids with an edge `u -> v` whenever `u` drives a
/// feedthrough input of `v`. Nodes are held in id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedthroughGraph {
    nodes: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl FeedthroughGraph {
    pub fn from_edges<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Self {
        let mut nodes: Vec<String> = nodes.iter().map(|n| n.as_ref().to_string()).collect();
        nodes.sort_by(|a, b| cmp_ids(a, b));
        nodes.dedup();
        let index: BTreeMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let edges = edges
            .iter()
            .map(|(a, b)| (index[a.as_ref()], index[b.as_ref()]))
            .collect();
        FeedthroughGraph { nodes, edges }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].as_str(), self.nodes[b].as_str()))
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges().any(|(a, b)| a == from && b == to)
    }

    /// Node sets of every cycle (strongly connected component with an internal edge).
    pub fn cycles(&self) -> Vec<Vec<String>> {
        let mut g = DiGraph::<(), ()>::new();
        let idx: Vec<_> = self.nodes.iter().map(|_| g.add_node(())).collect();
        for &(a, b) in &self.edges {
            g.add_edge(idx[a], idx[b], ());
        }
        let mut out: Vec<Vec<String>> = tarjan_scc(&g)
            .into_iter()
            .filter(|scc| {
                scc.len() > 1 || {
                    let n = scc[0].index();
                    self.edges.contains(&(n, n))
                }
            })
            .map(|scc| {
                let mut ids: Vec<String> =
                    scc.iter().map(|n| self.nodes[n.index()].clone()).collect();
                ids.sort_by(|a, b| cmp_ids(a, b));
                ids
            })
            .collect();
        out.sort_by(|a, b| cmp_ids(&a[0], &b[0]));
        out
    }
}

/// Feedthrough flags for a block, falling back to the kind's structure when
/// its parameters do not resolve.
pub(crate) fn block_feedthrough(block: &Block) -> Vec<bool> {
    match resolve(block) {
        Ok(model) => model.feedthrough(),
        Err(_) => {
            let ft = !matches!(
                block.kind,
                BlockKind::Clr | BlockKind::IntegralF | BlockKind::Dollar
            );
            vec![ft; block.n_in]
        }
    }
}

pub fn feedthrough_graph(d: &Diagram) -> Result<FeedthroughGraph, CompileError> {
    if let Some(b) = d.blocks().iter().find(|b| !b.kind.is_known()) {
        return Err(CompileError::UnknownKind {
            block: b.id.clone(),
            kind: b.kind.name().to_string(),
        });
    }
    let flags: BTreeMap<&str, Vec<bool>> = d
        .blocks()
        .iter()
        .map(|b| (b.id.as_str(), block_feedthrough(b)))
        .collect();
    let nodes: Vec<&str> = d.blocks().iter().map(|b| b.id.as_str()).collect();
    let edges: Vec<(&str, &str)> = d
        .links()
        .iter()
        .filter(|l| {
            flags[l.dst.block.as_str()]
                .get(l.dst.port)
                .copied()
                .unwrap_or(true)
        })
        .map(|l| (l.src.block.as_str(), l.dst.block.as_str()))
        .collect();
    Ok(FeedthroughGraph::from_edges(&nodes, &edges))
}

/// Topological order with ties broken by ascending block id.
pub fn schedule(g: &FeedthroughGraph) -> Result<Vec<String>, CompileError> {
    let n = g.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        indegree[b] += 1;
        succ[a].push(b);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(next) = ready.pop_first() {
        order.push(g.nodes[next].clone());
        for &s in &succ[next] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() < n {
        return Err(CompileError::AlgebraicLoop { cycles: g.cycles() });
    }
    Ok(order)
}
