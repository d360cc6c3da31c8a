//! Weighted DAG coefficient matrices, binary adjacency graphs, and cycle
//! checks used across the sampler, projection, and evaluation layers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The p-by-p coefficient matrix of the structural equation Y = W·Y + noise.
///
/// The diagonal is identically zero; acyclicity is *not* an invariant here
/// (unrestricted posterior draws are cyclic in general). Entry `w[(i, j)]`
/// is the weight of edge j → i.
#[derive(Debug, Clone, PartialEq)]
pub struct DagWeights {
    w: DMatrix<f64>,
}

impl DagWeights {
    pub fn zeros(p: usize) -> Self {
        Self {
            w: DMatrix::zeros(p, p),
        }
    }

    /// Wraps a square matrix, rejecting nonzero diagonals and non-finite entries.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        for i in 0..w.nrows() {
            if w[(i, i)] != 0.0 {
                return Err(Error::DimensionMismatch(format!(
                    "weight matrix diagonal entry ({i},{i}) must be zero"
                )));
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "weight matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { w })
    }

    pub fn from_row_major(p: usize, values: &[f64]) -> Result<Self> {
        if values.len() != p * p {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {p}x{p} matrix, got {}",
                p * p,
                values.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(p, p, values))
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Mutable access for row updates; callers must keep the diagonal at zero.
    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.w
    }

    pub fn row_major(&self) -> Vec<f64> {
        let p = self.dim();
        let mut out = Vec::with_capacity(p * p);
        for i in 0..p {
            for j in 0..p {
                out.push(self.w[(i, j)]);
            }
        }
        out
    }

    /// Binary support of entries with magnitude strictly above `tol`.
    pub fn support(&self, tol: f64) -> AdjacencyGraph {
        let p = self.dim();
        let mut g = AdjacencyGraph::empty(p);
        for i in 0..p {
            for j in 0..p {
                if i != j && self.w[(i, j)].abs() > tol {
                    g.set(i, j, true);
                }
            }
        }
        g
    }
}

/// Binary directed graph on p nodes. `edges[(i, j)]` mirrors the weight
/// convention: true means an edge j → i (j is a parent of i).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    p: usize,
    edges: Vec<bool>,
}

impl AdjacencyGraph {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: vec![false; p * p],
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.p + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, present: bool) {
        self.edges[i * self.p + j] = present;
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    /// Directed edges as (child, parent) index pairs, row-major order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.p {
            for j in 0..self.p {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Depth-first cycle check. Self-loops count as cycles.
    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Returns the nodes of some directed cycle (in traversal order), or None.
    pub fn find_cycle(&self) -> Option<Vec<usize>> {
        // colors: 0 unvisited, 1 on stack, 2 done
        let p = self.p;
        let mut color = vec![0u8; p];
        let mut parent_of = vec![usize::MAX; p];

        // Edge j -> i is stored as get(i, j); traverse along j -> i.
        for start in 0..p {
            if color[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            color[start] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let mut advanced = false;
                while *next < p {
                    let child = *next;
                    *next += 1;
                    if !self.get(child, node) {
                        continue;
                    }
                    if child == node {
                        return Some(vec![node]);
                    }
                    match color[child] {
                        0 => {
                            color[child] = 1;
                            parent_of[child] = node;
                            stack.push((child, 0));
                            advanced = true;
                            break;
                        }
                        1 => {
                            // back edge: unwind node -> ... -> child
                            let mut cycle = vec![child];
                            let mut cur = node;
                            while cur != child {
                                cycle.push(cur);
                                cur = parent_of[cur];
                            }
                            cycle.reverse();
                            return Some(cycle);
                        }
                        _ => {}
                    }
                }
                if !advanced {
                    color[node] = 2;
                    stack.pop();
                }
            }
        }
        None
    }
}
