//! Weighted digraph of the communication topology, Laplacian block
//! partition and rooted-connectivity checks.
//!
//! Node 0 is the global reference model (leader); agents are numbered
//! `1..=N` with the first `n` informed (they receive the reference output
//! directly). The Laplacian block structure requires informed agents to be
//! fed only by the leader and uninformed agents never by the leader.

use crate::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Directed edge: information flows `from → to` with weight `a_{to,from}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Communication digraph over leader node 0 and `N` agent nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    /// Total node count `N + 1` including the leader.
    pub node_count: usize,
    /// Number of informed agents `n ≥ 1` (agents `1..=n`).
    pub informed_count: usize,
    pub edges: Vec<Edge>,
}

impl Digraph {
    pub fn new(node_count: usize, informed_count: usize, edges: Vec<Edge>) -> Result<Self> {
        let g = Digraph {
            node_count,
            informed_count,
            edges,
        };
        g.validate()?;
        Ok(g)
    }

    /// Number of agents (excluding the leader).
    pub fn agent_count(&self) -> usize {
        self.node_count - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::Graph("graph needs at least the leader node".into()));
        }
        if self.node_count > 1 && self.informed_count == 0 {
            return Err(Error::Graph("at least one informed agent is required".into()));
        }
        if self.informed_count > self.agent_count() {
            return Err(Error::Graph(format!(
                "informed count {} exceeds agent count {}",
                self.informed_count,
                self.agent_count()
            )));
        }
        let n = self.informed_count;
        for e in &self.edges {
            if e.from >= self.node_count || e.to >= self.node_count {
                return Err(Error::Graph(format!(
                    "edge ({}, {}) references a node outside 0..{}",
                    e.from,
                    e.to,
                    self.node_count
                )));
            }
            if !(e.weight > 0.0) {
                return Err(Error::Graph(format!(
                    "edge ({}, {}) must have strictly positive weight",
                    e.from, e.to
                )));
            }
            if e.from == e.to {
                return Err(Error::Graph(format!("self-loop at node {}", e.from)));
            }
            if e.to == 0 {
                return Err(Error::Graph(format!(
                    "edge from {} into the leader node 0 is not allowed",
                    e.from
                )));
            }
            if e.from == 0 && e.to > n {
                return Err(Error::Graph(format!(
                    "leader edge into uninformed agent {} is not allowed",
                    e.to
                )));
            }
            // block structure of the Laplacian: informed agents listen only
            // to the leader
            if e.to <= n && e.to > 0 && e.from != 0 {
                return Err(Error::Graph(format!(
                    "informed agent {} may only receive from the leader (got edge from {})",
                    e.to, e.from
                )));
            }
        }
        // every informed agent must actually receive the reference
        for i in 1..=n {
            if !self.edges.iter().any(|e| e.from == 0 && e.to == i) {
                return Err(Error::Graph(format!(
                    "informed agent {i} has no edge from the leader"
                )));
            }
        }
        Ok(())
    }

    /// Adjacency matrix with `A[i][j] = a_{ij}` (weight of edge `j → i`).
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::<f64>::zeros(self.node_count, self.node_count);
        for e in &self.edges {
            a[(e.to, e.from)] += e.weight;
        }
        a
    }

    /// True iff every node is reachable from the leader node 0.
    pub fn is_rooted(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::new();
        seen[0] = true;
        queue.push_back(0);
        while let Some(u) = queue.pop_front() {
            for e in &self.edges {
                if e.from == u && !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Laplacian of the communication graph with its leader/informed/uninformed
/// block partition.
#[derive(Debug, Clone)]
pub struct LaplacianBlocks {
    pub l: DMatrix<f64>,
    /// `−col(a_{10}, …, a_{n0})`.
    pub l21: DVector<f64>,
    /// `diag(a_{10}, …, a_{n0})`.
    pub l22: DMatrix<f64>,
    pub l32: DMatrix<f64>,
    pub l33: DMatrix<f64>,
}

/// Build the Laplacian `L = D − A` and its block partition.
pub fn laplacian(g: &Digraph) -> Result<LaplacianBlocks> {
    g.validate()?;
    let a = g.adjacency();
    let nn = g.node_count;
    let n = g.informed_count;
    let nu = g.agent_count() - n;
    let mut l = -a.clone();
    for i in 0..nn {
        l[(i, i)] += a.row(i).sum();
    }
    let l21 = DVector::from_fn(n, |i, _| l[(i + 1, 0)]);
    let l22 = l.view((1, 1), (n, n)).into_owned();
    let (l32, l33) = if nu > 0 {
        (
            l.view((1 + n, 1), (nu, n)).into_owned(),
            l.view((1 + n, 1 + n), (nu, nu)).into_owned(),
        )
    } else {
        (DMatrix::zeros(0, n), DMatrix::zeros(0, 0))
    };
    Ok(LaplacianBlocks { l, l21, l22, l32, l33 })
}

/// Spectrum of the uninformed block with the admissible `ν` upper bound.
#[derive(Debug, Clone)]
pub struct L33Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Largest admissible `ν`: the minimum real part of `σ(L33)`.
    pub nu_max: f64,
}

/// Eigenvalues of `L33`; errors when the real part is not strictly positive
/// (the graph is then not rooted and Theorem-style designs do not apply).
pub fn spectrum_l33(blocks: &LaplacianBlocks) -> Result<L33Spectrum> {
    if blocks.l33.nrows() == 0 {
        return Ok(L33Spectrum {
            eigenvalues: Vec::new(),
            nu_max: f64::INFINITY,
        });
    }
    let eigenvalues: Vec<Complex<f64>> = blocks
        .l33
        .clone()
        .complex_eigenvalues()
        .iter()
        .cloned()
        .collect();
    let nu_max = eigenvalues
        .iter()
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);
    if nu_max <= 0.0 {
        return Err(Error::Graph(format!(
            "σ(L33) has an eigenvalue with Re ≤ 0 (min Re = {nu_max:.3e}); \
             the uninformed agents are not reachable"
        )));
    }
    Ok(L33Spectrum { eigenvalues, nu_max })
}

/// The communication graph of the four-agent example: leader informs agents
/// 1 and 2; 1 → 3, 2 → 4 and 3 ↔ 4, all unit weights.
pub fn example_graph() -> Digraph {
    let e = |from, to| Edge { from, to, weight: 1.0 };
    Digraph::new(
        5,
        2,
        vec![e(0, 1), e(0, 2), e(1, 3), e(2, 4), e(3, 4), e(4, 3)],
    )
    .expect("example graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_graph() {
        let g = Digraph::new(1, 0, vec![]).unwrap();
        let b = laplacian(&g).unwrap();
        assert_eq!(b.l.nrows(), 1);
        assert_eq!(b.l[(0, 0)], 0.0);
    }

    #[test]
    fn two_node_edge_weight() {
        let g = Digraph::new(
            2,
            1,
            vec![Edge { from: 0, to: 1, weight: 2.5 }],
        )
        .unwrap();
        let b = laplacian(&g).unwrap();
        assert_eq!(b.l[(0, 0)], 0.0);
        assert_eq!(b.l[(1, 0)], -2.5);
        assert_eq!(b.l[(1, 1)], 2.5);
    }

    #[test]
    fn example_graph_laplacian_rows() {
        let b = laplacian(&example_graph()).unwrap();
        let expected = DMatrix::from_row_slice(
            5,
            5,
            &[
                0.0, 0.0, 0.0, 0.0, 0.0, //
                -1.0, 1.0, 0.0, 0.0, 0.0, //
                -1.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 2.0, -1.0, //
                0.0, 0.0, -1.0, -1.0, 2.0,
            ],
        );
        assert_eq!(b.l, expected);
        // unit weights give the spectrum {0, 1, 1, 1, 3}
        let mut eigs: Vec<f64> = b.l.clone().complex_eigenvalues().iter().map(|e| e.re).collect();
        eigs.sort_by(f64::total_cmp);
        let expect = [0.0, 1.0, 1.0, 1.0, 3.0];
        for (e, x) in eigs.iter().zip(expect) {
            // the triple eigenvalue is resolved to ~sqrt(machine) only
            assert!((e - x).abs() < 1e-6, "eigs {eigs:?}");
        }
    }

    #[test]
    fn rooted_checks() {
        assert!(example_graph().is_rooted());
        // chain 0 → 1 → 2 → 3 (informed only the first)
        let chain = Digraph::new(
            4,
            1,
            vec![
                Edge { from: 0, to: 1, weight: 1.0 },
                Edge { from: 1, to: 2, weight: 1.0 },
                Edge { from: 2, to: 3, weight: 1.0 },
            ],
        )
        .unwrap();
        assert!(chain.is_rooted());
        // isolated agent 3
        let isolated = Digraph::new(
            4,
            1,
            vec![
                Edge { from: 0, to: 1, weight: 1.0 },
                Edge { from: 1, to: 2, weight: 1.0 },
            ],
        )
        .unwrap();
        assert!(!isolated.is_rooted());
    }

    #[test]
    fn l33_spectrum_example() {
        let b = laplacian(&example_graph()).unwrap();
        assert_eq!(b.l33, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        let spec = spectrum_l33(&b).unwrap();
        let mut re: Vec<f64> = spec.eigenvalues.iter().map(|e| e.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 1.0).abs() < 1e-12 && (re[1] - 3.0).abs() < 1e-12);
        assert!((spec.nu_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l33_single_uninformed() {
        let g = Digraph::new(
            3,
            1,
            vec![
                Edge { from: 0, to: 1, weight: 1.0 },
                Edge { from: 1, to: 2, weight: 1.0 },
            ],
        )
        .unwrap();
        let spec = spectrum_l33(&laplacian(&g).unwrap()).unwrap();
        assert!((spec.nu_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_uninformed_rejected() {
        let g = Digraph::new(
            3,
            1,
            vec![Edge { from: 0, to: 1, weight: 1.0 }],
        )
        .unwrap();
        let b = laplacian(&g).unwrap();
        assert!(spectrum_l33(&b).is_err());
    }

    #[test]
    fn structure_violations_rejected() {
        // edge into the leader
        assert!(Digraph::new(
            2,
            1,
            vec![
                Edge { from: 0, to: 1, weight: 1.0 },
                Edge { from: 1, to: 0, weight: 1.0 },
            ]
        )
        .is_err());
        // leader edge into an uninformed agent
        assert!(Digraph::new(
            3,
            1,
            vec![
                Edge { from: 0, to: 1, weight: 1.0 },
                Edge { from: 0, to: 2, weight: 1.0 },
            ]
        )
        .is_err());
        // informed agent fed by another agent breaks the block partition
        assert!(Digraph::new(
            3,
            2,
            vec![
                Edge { from: 0, to: 1, weight: 1.0 },
                Edge { from: 0, to: 2, weight: 1.0 },
                Edge { from: 2, to: 1, weight: 1.0 },
            ]
        )
        .is_err());
        // nonpositive weight
        assert!(Digraph::new(
            2,
            1,
            vec![Edge { from: 0, to: 1, weight: 0.0 }]
        )
        .is_err());
    }

    #[test]
    fn row_sums_vanish() {
        let b = laplacian(&example_graph()).unwrap();
        for i in 0..5 {
            assert!(b.l.row(i).sum().abs() <= 1e-12);
        }
        // L33·1 = −L32·1
        let ones2 = DVector::from_element(2, 1.0);
        let r = &b.l33 * &ones2 + &b.l32 * &ones2;
        assert!(r.amax() <= 1e-12);
    }
}
