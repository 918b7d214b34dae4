//! Boolean interaction graphs.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `edge(i, j)` is true when node `i` receives information from node `j`,
/// i.e. `j` is an in-neighbor of `i` (`a_ij > 0`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency { n, edges: vec![false; n * n] }
    }

    /// Support of a weight matrix, ignoring the diagonal.
    pub fn from_weights(w: &DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::Dimension("adjacency weights must be square".into()));
        }
        let mut adj = Self::empty(w.nrows());
        for i in 0..adj.n {
            for j in (0..adj.n).filter(|&j| j != i) {
                if w[(i, j)] != 0.0 {
                    adj.set(i, j);
                }
            }
        }
        Ok(adj)
    }

    /// Undirected graph from an edge list.
    pub fn undirected(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Self::empty(n);
        for &(i, j) in edges {
            adj.check(i)?;
            adj.check(j)?;
            adj.set(i, j);
            adj.set(j, i);
        }
        Ok(adj)
    }

    pub fn complete(n: usize) -> Self {
        let mut adj = Self::empty(n);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                adj.set(i, j);
            }
        }
        adj
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::undirected(n, &edges).expect("path nodes are in range")
    }

    pub fn set(&mut self, i: usize, j: usize) {
        self.edges[i * self.n + j] = true;
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn check(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::UnknownNode(i))
        }
    }

    /// In-neighbors `N_i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> BTreeSet<usize> {
        (0..self.n).filter(|&j| j != i && self.edge(i, j)).collect()
    }

    /// `{i} ∪ N_i`.
    pub fn closed_neighborhood(&self, i: usize) -> BTreeSet<usize> {
        let mut s = self.neighbors(i);
        s.insert(i);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_neighborhoods() {
        let g = Adjacency::path(3);
        assert_eq!(g.closed_neighborhood(0), BTreeSet::from([0, 1]));
        assert_eq!(g.closed_neighborhood(1), BTreeSet::from([0, 1, 2]));
        assert!(Adjacency::undirected(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn weights_direction() {
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 1.0]);
        let g = Adjacency::from_weights(&w).unwrap();
        assert_eq!(g.neighbors(0), BTreeSet::from([1]));
        assert!(g.neighbors(1).is_empty());
    }
}
