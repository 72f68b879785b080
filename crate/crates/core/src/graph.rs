use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected region adjacency graph. Neighbour lists are symmetric and free
/// of self-loops; every list is kept sorted so that iteration order does not
/// depend on how the graph was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
    n_edges: usize,
    component: Vec<usize>,
    component_sizes: Vec<usize>,
}

impl AdjacencyGraph {
    /// Builds a graph from per-region neighbour lists, rejecting asymmetric
    /// lists, self-loops and out-of-range ids. Duplicate entries collapse.
    pub fn from_neighbors(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        let mut lists: Vec<Vec<usize>> = neighbors;
        for (s, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&bad) = list.iter().find(|&&t| t >= n) {
                return Err(Error::Config(format!(
                    "region {s} lists neighbour {bad} but the graph has {n} regions"
                )));
            }
            if list.binary_search(&s).is_ok() {
                return Err(Error::Config(format!("region {s} is listed as its own neighbour")));
            }
        }
        for (s, list) in lists.iter().enumerate() {
            for &t in list {
                if lists[t].binary_search(&s).is_err() {
                    return Err(Error::Config(format!(
                        "asymmetric adjacency: {t} is a neighbour of {s} but not vice versa"
                    )));
                }
            }
        }
        Ok(Self::assemble(lists))
    }

    /// Builds a graph from an undirected edge list, symmetrising as it goes.
    pub fn from_edges(n_regions: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists = vec![Vec::new(); n_regions];
        for &(a, b) in edges {
            if a >= n_regions || b >= n_regions {
                return Err(Error::Config(format!(
                    "edge ({a}, {b}) references a region outside 0..{n_regions}"
                )));
            }
            if a == b {
                return Err(Error::Config(format!("self-loop on region {a}")));
            }
            lists[a].push(b);
            lists[b].push(a);
        }
        Self::from_neighbors(lists)
    }

    /// Rook-adjacency lattice of `rows × cols` cells, numbered row-major.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let s = r * cols + c;
                if c + 1 < cols {
                    edges.push((s, s + 1));
                }
                if r + 1 < rows {
                    edges.push((s, s + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges).expect("lattice edges are valid")
    }

    fn assemble(neighbors: Vec<Vec<usize>>) -> Self {
        let n = neighbors.len();
        let n_edges = neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        let mut component = vec![usize::MAX; n];
        let mut component_sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let id = component_sizes.len();
            let mut size = 0;
            component[start] = id;
            stack.push(start);
            while let Some(s) = stack.pop() {
                size += 1;
                for &t in &neighbors[s] {
                    if component[t] == usize::MAX {
                        component[t] = id;
                        stack.push(t);
                    }
                }
            }
            component_sizes.push(size);
        }
        Self {
            neighbors,
            n_edges,
            component,
            component_sizes,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn neighbors(&self, s: usize) -> &[usize] {
        &self.neighbors[s]
    }

    pub fn degree(&self, s: usize) -> usize {
        self.neighbors[s].len()
    }

    pub fn n_components(&self) -> usize {
        self.component_sizes.len()
    }

    pub fn component_of(&self, s: usize) -> usize {
        self.component[s]
    }

    pub fn component_size(&self, c: usize) -> usize {
        self.component_sizes[c]
    }

    /// Rank of the ICAR precision structure: regions minus components.
    pub fn icar_rank(&self) -> usize {
        self.n_regions() - self.n_components()
    }

    /// Unique undirected edges `(s, t)` with `s < t`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(s, list)| list.iter().filter(move |&&t| t > s).map(move |&t| (s, t)))
    }

    /// Graph Laplacian `D − A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_regions();
        let mut l = DMatrix::zeros(n, n);
        for s in 0..n {
            l[(s, s)] = self.degree(s) as f64;
            for &t in &self.neighbors[s] {
                l[(s, t)] = -1.0;
            }
        }
        l
    }

    /// Per-component means of `values`.
    pub fn component_means(&self, values: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_components()];
        for (s, v) in values.iter().enumerate() {
            sums[self.component[s]] += v;
        }
        sums.iter()
            .zip(&self.component_sizes)
            .map(|(sum, &n)| sum / n as f64)
            .collect()
    }

    /// Subtracts each component's mean from its members.
    pub fn center_per_component(&self, values: &mut [f64]) {
        let means = self.component_means(values);
        for (s, v) in values.iter_mut().enumerate() {
            *v -= means[self.component[s]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts() {
        let g = AdjacencyGraph::lattice(10, 10);
        assert_eq!(g.n_regions(), 100);
        assert_eq!(g.n_edges(), 180);
        assert_eq!(g.n_components(), 1);
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.degree(11), 4);
        assert_eq!(g.edges().count(), 180);
    }

    #[test]
    fn asymmetric_lists_rejected() {
        let err = AdjacencyGraph::from_neighbors(vec![vec![1], vec![]]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn self_loop_rejected() {
        assert!(AdjacencyGraph::from_neighbors(vec![vec![0]]).is_err());
    }

    #[test]
    fn isolated_region_is_its_own_component() {
        let g = AdjacencyGraph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.n_components(), 2);
        assert_ne!(g.component_of(3), g.component_of(0));
        assert_eq!(g.icar_rank(), 2);
    }

    #[test]
    fn centering_is_per_component() {
        let g = AdjacencyGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let mut v = vec![1.0, 3.0, 10.0, 20.0];
        g.center_per_component(&mut v);
        assert_eq!(v, vec![-1.0, 1.0, -5.0, 5.0]);
    }
}
