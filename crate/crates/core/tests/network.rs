mod support;

use frm_core::network::{betweenness, closeness, degrees, eigenvector_centrality, DependencyGraph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_graph(adj: &[Vec<f64>]) -> DependencyGraph {
    let n = adj.len();
    let a = Array2::from_shape_fn((n, n), |(r, c)| adj[r][c]);
    DependencyGraph::from_adjacency((0..n).map(|k| format!("n{k}")).collect(), &a)
}

fn random_adj(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if r != c && rng.random::<f64>() < density {
                        rng.random::<f64>() * 2.0 - 1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{what}: {a:?} vs {b:?}");
    }
}

#[test]
fn every_four_node_digraph_matches_enumeration() {
    let pairs: Vec<(usize, usize)> = (0..4).flat_map(|r| (0..4).map(move |c| (r, c))).filter(|(r, c)| r != c).collect();
    for mask in 0u32..(1 << pairs.len()) {
        let mut adj = vec![vec![0.0; 4]; 4];
        for (bit, &(r, c)) in pairs.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                adj[r][c] = 1.0;
            }
        }
        let g = to_graph(&adj);
        assert_close(&betweenness(&g), &support::graph::betweenness(&adj), 1e-12, "betweenness");
        assert_close(&closeness(&g), &support::graph::closeness(&adj), 1e-12, "closeness");
    }
}

#[test]
fn random_eight_node_graphs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..60 {
        let density = rng.random_range(0.1..0.6);
        let adj = random_adj(&mut rng, 8, density);
        let g = to_graph(&adj);
        assert_close(&betweenness(&g), &support::graph::betweenness(&adj), 1e-12, "betweenness");
        assert_close(&closeness(&g), &support::graph::closeness(&adj), 1e-12, "closeness");
    }
}

#[test]
fn eigenvector_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        // strongly connected so the Perron vector is unique
        let mut adj = random_adj(&mut rng, 6, 0.5);
        for k in 0..6 {
            adj[(k + 1) % 6][k] = 0.5 + rng.random::<f64>();
        }
        let e = eigenvector_centrality(&to_graph(&adj));
        assert!(e.converged);
        assert_close(&e.values, &support::graph::perron_vector(&adj), 1e-8, "eigen");
    }
}

#[test]
fn eigenvector_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let adj = random_adj(&mut rng, 7, 0.5);
    let perm = [3, 6, 0, 5, 1, 4, 2];
    let permuted: Vec<Vec<f64>> = (0..7).map(|r| (0..7).map(|c| adj[perm[r]][perm[c]]).collect()).collect();
    let base = eigenvector_centrality(&to_graph(&adj)).values;
    let moved = eigenvector_centrality(&to_graph(&permuted)).values;
    for r in 0..7 {
        assert!((moved[r] - base[perm[r]]).abs() < 1e-8);
    }
}

#[test]
fn degree_double_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let adj = random_adj(&mut rng, 9, 0.3);
        let d = degrees(&to_graph(&adj));
        assert_eq!(d.total, d.indegree.iter().sum::<usize>());
        assert_eq!(d.total, d.outdegree.iter().sum::<usize>());
    }
}

#[test]
fn adding_edges_never_lowers_closeness() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let mut adj = random_adj(&mut rng, 7, 0.25);
        let before = closeness(&to_graph(&adj));
        let (r, c) = (rng.random_range(0..7), rng.random_range(0..7));
        if r != c {
            adj[r][c] = 1.0;
        }
        let after = closeness(&to_graph(&adj));
        assert!(before.iter().zip(&after).all(|(b, a)| a >= b));
    }
}
