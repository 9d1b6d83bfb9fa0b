//! Static undirected communication graphs.
//!
//! Nodes are 0-based inside the library. Configuration files and CLI output
//! use 1-based labels; [`Graph::from_one_based_edges`] is the only place the
//! conversion happens.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected, unweighted graph without self loops.
///
/// Hop distances are computed once at construction, so every k-hop query
/// afterwards is a table lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    /// Sorted ascending, no duplicates, never contains the node itself.
    neighbors: Vec<Vec<usize>>,
    /// `hops[i][j]` is the shortest-path length, `None` when unreachable.
    hops: Vec<Vec<Option<usize>>>,
}

impl Graph {
    /// Builds a graph from 0-based edge pairs. Duplicate and reversed pairs
    /// collapse into one edge.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut sets = vec![BTreeSet::new(); node_count];
        for &(a, b) in edges {
            for index in [a, b] {
                if index >= node_count {
                    return Err(Error::NodeOutOfRange {
                        index,
                        nodes: node_count,
                    });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        let neighbors: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let hops = (0..node_count)
            .map(|source| bfs_distances(&neighbors, source))
            .collect();
        Ok(Self {
            node_count,
            neighbors,
            hops,
        })
    }

    /// Builds a graph from 1-based edge pairs as written in scenario files.
    pub fn from_one_based_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut shifted = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for index in [a, b] {
                if index == 0 || index > node_count {
                    return Err(Error::NodeOutOfRange {
                        index,
                        nodes: node_count,
                    });
                }
            }
            shifted.push((a - 1, b - 1));
        }
        Self::new(node_count, &shifted)
    }

    pub fn complete(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (0..node_count)
            .flat_map(|a| (a + 1..node_count).map(move |b| (a, b)))
            .collect();
        Self::new(node_count, &edges)
    }

    pub fn path(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (1..node_count).map(|b| (b - 1, b)).collect();
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as 0-based pairs `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    /// One-hop neighborhood, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighborhood plus the node itself, ascending.
    pub fn augmented_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = self.neighbors[i].clone();
        let at = out.partition_point(|&j| j < i);
        out.insert(at, i);
        out
    }

    pub fn contains_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Shortest-path length between two nodes.
    pub fn hop_distance(&self, i: usize, j: usize) -> Option<usize> {
        self.hops[i][j]
    }

    /// Nodes reachable from `i` in at most `k` edges, excluding `i`, ascending.
    pub fn k_hop(&self, i: usize, k: usize) -> Vec<usize> {
        self.hops[i]
            .iter()
            .enumerate()
            .filter(|&(j, d)| j != i && matches!(d, Some(d) if *d <= k))
            .map(|(j, _)| j)
            .collect()
    }

    /// [`Graph::k_hop`] with `i` itself included.
    pub fn augmented_k_hop(&self, i: usize, k: usize) -> Vec<usize> {
        self.hops[i]
            .iter()
            .enumerate()
            .filter(|&(_, d)| matches!(d, Some(d) if *d <= k))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.hops[0].iter().all(Option::is_some)
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.node_count, self.node_count, |a, b| {
            if self.contains_edge(a, b) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Adjacency with unit diagonal.
    pub fn adjacency_with_self_loops(&self) -> DMatrix<f64> {
        self.adjacency() + DMatrix::identity(self.node_count, self.node_count)
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.node_count, self.node_count, |a, b| {
            if a == b {
                self.degree(a) as f64
            } else {
                0.0
            }
        })
    }

    /// `D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.degree_matrix() - self.adjacency()
    }

    /// Relabels node `i` as `p.apply(i)`.
    pub fn permute(&self, p: &Permutation) -> Result<Self> {
        p.check_len(self.node_count)?;
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(a, b)| (p.apply(a), p.apply(b)))
            .collect();
        Self::new(self.node_count, &edges)
    }
}

fn bfs_distances(neighbors: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; neighbors.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let next = dist[v].unwrap_or(0) + 1;
        for &w in &neighbors[v] {
            if dist[w].is_none() {
                dist[w] = Some(next);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// A relabeling of `[N]`; maps old index to new index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::Config(format!(
                    "{mapping:?} is not a permutation of 0..{n}"
                )));
            }
            seen[m] = true;
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (old, &new) in self.0.iter().enumerate() {
            inv[new] = old;
        }
        Self(inv)
    }

    /// Moves per-node items so that `out[p(i)] = items[i]`.
    pub fn permute_items<T: Clone>(&self, items: &[T]) -> Result<Vec<T>> {
        self.check_len(items.len())?;
        let inv = self.inverse();
        Ok((0..items.len()).map(|new| items[inv.0[new]].clone()).collect())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::Dimension {
                context: "permutation length",
                expected: n,
                actual: self.0.len(),
            });
        }
        Ok(())
    }
}
