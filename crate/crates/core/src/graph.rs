//! Undirected locality graphs.
//!
//! Every node carries a self-loop: staying put is always a local move. The
//! constructors insert the loops and [`Graph::from_edges`] adds them for
//! edge lists that leave them implicit.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Subset enumeration is exact and exponential; this is the node cap for it.
pub const MAX_ENUM_NODES: usize = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<bool>>,
    neighbors: Vec<Vec<usize>>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.edge_list())
            .finish()
    }
}

/// Standard graph families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Two `size`-cliques joined by the single edge `(size-1, size)`.
    Dumbbell,
    Cycle,
    Complete,
    Path,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Self-loops are added for
    /// every node; duplicate and reversed pairs are accepted.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(invalid("graph must have at least one node"));
        }
        let mut adj = vec![vec![false; n]; n];
        for (i, row) in adj.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i},{j}) out of range for n={n}")));
            }
            adj[i][j] = true;
            adj[j][i] = true;
        }
        Ok(Self::from_adjacency_unchecked(adj))
    }

    /// Builds a graph from a boolean adjacency matrix. The matrix must be
    /// symmetric with a true diagonal.
    pub fn from_adjacency(adj: Vec<Vec<bool>>) -> Result<Self> {
        let n = adj.len();
        if n == 0 {
            return Err(invalid("graph must have at least one node"));
        }
        for (i, row) in adj.iter().enumerate() {
            if row.len() != n {
                return Err(invalid("adjacency matrix is not square"));
            }
            if !row[i] {
                return Err(invalid(format!("node {i} is missing its self-loop")));
            }
            for (j, &e) in row.iter().enumerate() {
                if e != adj[j][i] {
                    return Err(invalid(format!("edge ({i},{j}) is not symmetric")));
                }
            }
        }
        Ok(Self::from_adjacency_unchecked(adj))
    }

    fn from_adjacency_unchecked(adj: Vec<Vec<bool>>) -> Self {
        let neighbors = adj
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter_map(|(j, &e)| e.then_some(j))
                    .collect()
            })
            .collect();
        Self {
            n: adj.len(),
            adj,
            neighbors,
        }
    }

    pub fn family(family: Family, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("graph size must be positive"));
        }
        let edges: Vec<(usize, usize)> = match family {
            Family::Dumbbell => {
                if size < 2 {
                    return Err(invalid("dumbbell requires size >= 2"));
                }
                let mut e = Vec::new();
                for side in 0..2 {
                    let off = side * size;
                    for i in 0..size {
                        for j in i + 1..size {
                            e.push((off + i, off + j));
                        }
                    }
                }
                e.push((size - 1, size));
                return Self::from_edges(2 * size, &e);
            }
            Family::Cycle => (0..size).map(|i| (i, (i + 1) % size)).collect(),
            Family::Complete => (0..size)
                .flat_map(|i| (i + 1..size).map(move |j| (i, j)))
                .collect(),
            Family::Path => (1..size).map(|i| (i - 1, i)).collect(),
        };
        Self::from_edges(size, &edges)
    }

    pub fn dumbbell(n: usize) -> Result<Self> {
        Self::family(Family::Dumbbell, n)
    }

    pub fn cycle(m: usize) -> Result<Self> {
        Self::family(Family::Cycle, m)
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::family(Family::Complete, n)
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::family(Family::Path, n)
    }

    /// Graph on lifted states where two states are adjacent iff their base
    /// nodes are.
    pub fn lifted(base: &Graph, projection: &[usize]) -> Result<Self> {
        if let Some(&bad) = projection.iter().find(|&&b| b >= base.n) {
            return Err(invalid(format!("projection target {bad} out of range")));
        }
        let adj = projection
            .iter()
            .map(|&a| projection.iter().map(|&b| base.adj[a][b]).collect())
            .collect();
        Graph::from_adjacency(adj)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Whether `(i, j)` is an edge. Always true for `i == j`.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.adj[i][j]
    }

    /// Neighbors of `i`, including `i` itself, in increasing order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Number of distinct neighbors of `i`, self excluded.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() - 1
    }

    /// Undirected non-loop edges `(i, j)` with `i < j`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| {
                self.neighbors[i]
                    .iter()
                    .filter(move |&&j| j > i)
                    .map(move |&j| (i, j))
            })
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_list().len()
    }

    /// Longest shortest path, or `None` if the graph is disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.n {
            let mut dist = vec![usize::MAX; self.n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            best = best.max(*dist.iter().max()?);
            if best == usize::MAX {
                return None;
            }
        }
        Some(best)
    }

    /// Whether every node has exactly two distinct neighbors arranged as a
    /// single cycle `0 - 1 - ... - (n-1) - 0`.
    pub fn is_canonical_cycle(&self) -> bool {
        self.n >= 3
            && (0..self.n).all(|i| {
                self.degree(i) == 2 && self.has_edge(i, (i + 1) % self.n)
            })
    }

    /// Nodes outside `w` with an edge into `w`.
    pub fn neighborhood(&self, w: &NodeSet) -> Result<NodeSet> {
        self.check_set(w)?;
        let mut out = NodeSet::empty(self.n);
        for i in w.iter() {
            for &j in &self.neighbors[i] {
                if !w.contains(j) {
                    out.insert(j);
                }
            }
        }
        Ok(out)
    }

    /// Bitmask variant of [`Graph::neighborhood`] for enumeration loops.
    pub(crate) fn neighborhood_mask(&self, w: u64) -> u64 {
        let mut out = 0u64;
        let mut rest = w;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            out |= self.neighbor_mask(i);
        }
        out & !w
    }

    pub(crate) fn neighbor_mask(&self, i: usize) -> u64 {
        self.neighbors[i].iter().fold(0u64, |m, &j| m | (1 << j))
    }

    pub(crate) fn check_set(&self, w: &NodeSet) -> Result<()> {
        if w.universe() != self.n {
            return Err(invalid(format!(
                "node set over {} nodes used with a graph of {} nodes",
                w.universe(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson::Edges {
            n: self.n,
            edges: self.edge_list().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

/// On-disk graph description. Self-loops are implied in the edge form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphJson {
    Edges { n: usize, edges: Vec<[usize; 2]> },
    Family { family: Family, size: usize },
}

impl GraphJson {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphJson::Edges { n, edges } => {
                let pairs: Vec<_> = edges.iter().map(|e| (e[0], e[1])).collect();
                Graph::from_edges(*n, &pairs)
            }
            GraphJson::Family { family, size } => Graph::family(*family, *size),
        }
    }
}

/// A subset of the nodes `0..n`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NodeSet {
    members: Vec<bool>,
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl NodeSet {
    pub fn empty(n: usize) -> Self {
        Self {
            members: vec![false; n],
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            members: vec![true; n],
        }
    }

    pub fn from_indices(n: usize, nodes: &[usize]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &i in nodes {
            if i >= n {
                return Err(invalid(format!("node {i} out of range for n={n}")));
            }
            s.members[i] = true;
        }
        Ok(s)
    }

    pub fn from_mask(n: usize, mask: u64) -> Self {
        Self {
            members: (0..n).map(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn range(n: usize, nodes: std::ops::Range<usize>) -> Result<Self> {
        Self::from_indices(n, &nodes.collect::<Vec<_>>())
    }

    /// Size of the ambient node range.
    pub fn universe(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.get(i).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, i: usize) {
        self.members[i] = true;
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn complement(&self) -> Self {
        Self {
            members: self.members.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn union(&self, other: &NodeSet) -> Self {
        Self {
            members: self
                .members
                .iter()
                .zip(&other.members)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dumbbell_neighborhood_of_left_clique_is_bridge_endpoint() {
        let g = Graph::dumbbell(6).unwrap();
        let left = NodeSet::range(12, 0..6).unwrap();
        assert_eq!(g.neighborhood(&left).unwrap().to_vec(), vec![6]);
    }

    #[test]
    fn neighborhood_of_everything_is_empty() {
        let g = Graph::dumbbell(6).unwrap();
        assert!(g.neighborhood(&NodeSet::full(12)).unwrap().is_empty());
        assert!(g.neighborhood(&NodeSet::empty(12)).unwrap().is_empty());
    }

    #[test]
    fn complete_neighborhood() {
        let g = Graph::complete(3).unwrap();
        let w = NodeSet::from_indices(3, &[0]).unwrap();
        assert_eq!(g.neighborhood(&w).unwrap().to_vec(), vec![1, 2]);
    }

    #[test]
    fn neighborhood_rejects_foreign_sets() {
        let g = Graph::complete(3).unwrap();
        assert!(g.neighborhood(&NodeSet::full(4)).is_err());
        assert!(NodeSet::from_indices(3, &[3]).is_err());
    }

    #[test]
    fn dumbbell_shape() {
        let g = Graph::dumbbell(6).unwrap();
        assert_eq!(g.node_count(), 12);
        assert_eq!(g.diameter(), Some(3));
        assert_eq!(g.edge_count(), 2 * 6 * 5 / 2 + 1);
        assert!((0..12).all(|i| g.has_edge(i, i)));
    }

    #[test]
    fn small_families() {
        let c = Graph::cycle(4).unwrap();
        assert!((0..4).all(|i| c.degree(i) == 2 && c.has_edge(i, i)));
        assert!(c.is_canonical_cycle());
        let k2 = Graph::complete(2).unwrap();
        assert_eq!(k2.edge_list(), vec![(0, 1)]);
        let p1 = Graph::path(1).unwrap();
        assert_eq!(p1.node_count(), 1);
        assert!(p1.has_edge(0, 0));
        assert!(Graph::path(0).is_err());
        assert!(Graph::dumbbell(1).is_err());
        assert!(!Graph::path(4).unwrap().is_canonical_cycle());
    }

    #[test]
    fn adjacency_validation() {
        assert!(Graph::from_adjacency(vec![vec![true, true], vec![false, true]]).is_err());
        assert!(Graph::from_adjacency(vec![vec![false]]).is_err());
        assert!(Graph::from_adjacency(vec![vec![true, true], vec![true, true]]).is_ok());
    }

    #[test]
    fn json_forms() {
        let g: GraphJson = serde_json::from_str(r#"{"n": 3, "edges": [[0,1],[1,0],[1,2]]}"#).unwrap();
        assert_eq!(g.build().unwrap(), Graph::path(3).unwrap());
        let d: GraphJson = serde_json::from_str(r#"{"family": "dumbbell", "size": 3}"#).unwrap();
        assert_eq!(d.build().unwrap(), Graph::dumbbell(3).unwrap());
        let bad: GraphJson = serde_json::from_str(r#"{"n": 2, "edges": [[0,2]]}"#).unwrap();
        assert!(bad.build().is_err());
    }

    #[test]
    fn mask_neighborhood_matches_set_version() {
        let g = Graph::dumbbell(3).unwrap();
        for mask in 0u64..(1 << 6) {
            let w = NodeSet::from_mask(6, mask);
            let a = g.neighborhood(&w).unwrap();
            assert_eq!(a, NodeSet::from_mask(6, g.neighborhood_mask(mask)));
        }
    }
}
