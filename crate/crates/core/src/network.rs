//! Centralities of the directed tail-dependency graph of one window.
//! Row j of the adjacency matrix receives from column i, so a nonzero
//! `A[j][i]` is the edge i -> j.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

const EIGEN_TOL: f64 = 1e-10;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    /// `weights[[j, i]] = |A[j][i]|`, zero diagonal.
    pub weights: Array2<f64>,
    out_links: Vec<Vec<usize>>,
}

impl DependencyGraph {
    /// Self-loops on the diagonal are ignored.
    pub fn from_adjacency(nodes: Vec<String>, adjacency: &Array2<f64>) -> Self {
        let k = nodes.len();
        assert_eq!(adjacency.dim(), (k, k), "adjacency must be square over the nodes");
        let weights = Array2::from_shape_fn((k, k), |(j, i)| if i == j { 0.0 } else { adjacency[[j, i]].abs() });
        let out_links = (0..k).map(|i| (0..k).filter(|&j| weights[[j, i]] != 0.0).collect()).collect();
        DependencyGraph { nodes, weights, out_links }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (from, tos) in self.out_links.iter().enumerate() {
            for &to in tos {
                edges.push(Edge { from, to, weight: self.weights[[to, from]] });
            }
        }
        edges
    }

    fn bfs(&self, source: usize, dist: &mut [usize], sigma: &mut [f64], order: &mut Vec<usize>) {
        dist.fill(usize::MAX);
        sigma.fill(0.0);
        order.clear();
        dist[source] = 0;
        sigma[source] = 1.0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.out_links[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenCentrality {
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Perron vector of `|A|`, L2-normalised. Iterates on `|A| + I`, which has
/// the same eigenvectors but cannot oscillate on periodic graphs. An edgeless
/// graph has all-zero centrality.
pub fn eigenvector_centrality(g: &DependencyGraph) -> EigenCentrality {
    let k = g.len();
    if k == 0 || g.weights.iter().all(|&w| w == 0.0) {
        return EigenCentrality { values: vec![0.0; k], converged: true, iterations: 0 };
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut next = vec![0.0; k];
    for iter in 1..=EIGEN_MAX_ITER {
        for j in 0..k {
            next[j] = v[j] + g.weights.row(j).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        let diff = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if diff < EIGEN_TOL {
            return EigenCentrality { values: v, converged: true, iterations: iter };
        }
    }
    EigenCentrality { values: v, converged: false, iterations: EIGEN_MAX_ITER }
}

/// `sum_{i != j} 1 / d(i, j)` over sources i, hop distances, unreachable
/// pairs contribute nothing.
pub fn closeness(g: &DependencyGraph) -> Vec<f64> {
    let k = g.len();
    let mut out = vec![0.0; k];
    let mut dist = vec![0; k];
    let mut sigma = vec![0.0; k];
    let mut order = Vec::with_capacity(k);
    for source in 0..k {
        g.bfs(source, &mut dist, &mut sigma, &mut order);
        for &t in &order[1..] {
            out[t] += 1.0 / dist[t] as f64;
        }
    }
    out
}

/// Shortest-path betweenness over ordered pairs, unnormalised.
pub fn betweenness(g: &DependencyGraph) -> Vec<f64> {
    let k = g.len();
    let mut out = vec![0.0; k];
    let mut dist = vec![0; k];
    let mut sigma = vec![0.0; k];
    let mut delta = vec![0.0; k];
    let mut order = Vec::with_capacity(k);
    for source in 0..k {
        g.bfs(source, &mut dist, &mut sigma, &mut order);
        delta.fill(0.0);
        for &w in order.iter().rev() {
            for &x in &g.out_links[w] {
                if dist[x] == dist[w] + 1 {
                    delta[w] += sigma[w] / sigma[x] * (1.0 + delta[x]);
                }
            }
            if w != source {
                out[w] += delta[w];
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Degrees {
    pub indegree: Vec<usize>,
    pub outdegree: Vec<usize>,
    pub total: usize,
}

impl Degrees {
    /// Per-node in plus out degree.
    pub fn node_total(&self) -> Vec<usize> {
        self.indegree.iter().zip(&self.outdegree).map(|(a, b)| a + b).collect()
    }
}

pub fn degrees(g: &DependencyGraph) -> Degrees {
    let k = g.len();
    let indegree = (0..k).map(|j| g.weights.row(j).iter().filter(|&&w| w != 0.0).count()).collect();
    let outdegree: Vec<usize> = g.out_links.iter().map(Vec::len).collect();
    let total = outdegree.iter().sum();
    Degrees { indegree, outdegree, total }
}
