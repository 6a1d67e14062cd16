//! Undirected graphs, propagation operators and degree grouping.

mod csr;
pub mod io;
pub mod sbm;

pub use csr::Csr;
pub use io::{load_dataset, write_dataset, FeatureMatrix, LabeledDataset};
pub use sbm::{gen_sbm, SbmParams};

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// An immutable, simple, undirected graph. Self-loops are never stored;
/// they only appear through [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    self_loops_dropped: usize,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Direction and duplicates
    /// are ignored; `(i, i)` entries are dropped and counted.
    pub fn build(edges: &[(usize, usize)], n: usize) -> Result<Graph> {
        let mut set = BTreeSet::new();
        let mut loops = 0;
        for (idx, &(i, j)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::Malformed(format!(
                    "edge {idx} = ({i}, {j}) has an endpoint >= n = {n}"
                )));
            }
            if i == j {
                loops += 1;
                continue;
            }
            set.insert((i.min(j), i.max(j)));
        }
        if loops > 0 {
            log::warn!("dropped {loops} self-loop entries from edge list");
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Graph {
            n,
            edges,
            neighbors,
            self_loops_dropped: loops,
        })
    }

    pub fn edgeless(n: usize) -> Graph {
        Graph {
            n,
            edges: Vec::new(),
            neighbors: vec![Vec::new(); n],
            self_loops_dropped: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Canonical edge list with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn self_loops_dropped(&self) -> usize {
        self.self_loops_dropped
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let edges: Vec<_> = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Graph::build(&edges, self.n)
    }

    /// Self-loop augmented adjacency `Ã = A + I` as a CSR matrix of ones.
    pub fn augmented_adjacency(&self) -> Csr {
        self.weighted_closed_neighborhood(|_, _| 1.0)
    }

    /// Mean over open neighbourhoods (self excluded); isolated rows are empty.
    pub fn mean_neighbor_operator(&self) -> Csr {
        let mut indptr = Vec::with_capacity(self.n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for nb in &self.neighbors {
            let w = 1.0 / nb.len().max(1) as f64;
            for &j in nb {
                indices.push(j);
                values.push(w);
            }
            indptr.push(indices.len());
        }
        Csr::from_parts(self.n, self.n, indptr, indices, values)
    }

    fn weighted_closed_neighborhood(&self, w: impl Fn(usize, usize) -> f64) -> Csr {
        let mut indptr = Vec::with_capacity(self.n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..self.n {
            let nb = &self.neighbors[i];
            let split = nb.partition_point(|&j| j < i);
            for &j in nb[..split].iter().chain(std::iter::once(&i)).chain(&nb[split..]) {
                indices.push(j);
                values.push(w(i, j));
            }
            indptr.push(indices.len());
        }
        Csr::from_parts(self.n, self.n, indptr, indices, values)
    }
}

/// Which self-loop normalization to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `D̃^{-1/2} Ã D̃^{-1/2}`
    Symmetric,
    /// `D̃^{-1} Ã`
    RandomWalk,
}

/// A normalized propagation operator over the closed neighbourhoods of a
/// graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    pub kind: NormKind,
    pub matrix: Csr,
}

pub fn normalize(graph: &Graph, kind: NormKind) -> PropagationOperator {
    let inv_sqrt: Vec<f64> = graph
        .neighbors
        .iter()
        .map(|nb| 1.0 / ((nb.len() + 1) as f64).sqrt())
        .collect();
    let matrix = match kind {
        NormKind::Symmetric => {
            graph.weighted_closed_neighborhood(|i, j| inv_sqrt[i] * inv_sqrt[j])
        }
        NormKind::RandomWalk => graph
            .weighted_closed_neighborhood(|i, _| 1.0 / (graph.neighbors[i].len() + 1) as f64),
    };
    PropagationOperator { kind, matrix }
}

/// Degree group per node: `floor(log2(degree))`, or −1 for isolated nodes.
pub fn degree_groups(graph: &Graph) -> Vec<i32> {
    graph
        .neighbors
        .iter()
        .map(|nb| match nb.len() {
            0 => -1,
            d => (usize::BITS - 1 - d.leading_zeros()) as i32,
        })
        .collect()
}

/// Row-normalizes `Ã · diag(w)`: entry `(i, j)` is `w_j / Σ_{k ∈ N̄(i)} w_k`
/// on the closed neighbourhood of `i`. With `w ≡ 1` this is `D̃^{-1} Ã`.
pub fn row_normalized_weighted(graph: &Graph, w: &[f64]) -> Csr {
    let raw = graph.weighted_closed_neighborhood(|_, j| w[j]);
    raw.row_normalized()
}
