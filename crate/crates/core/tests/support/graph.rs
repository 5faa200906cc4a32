//! Brute-force geodesic enumeration and a dense eigen oracle.

use nalgebra::DMatrix;

/// `adj[j][i] != 0` is the edge i -> j.
fn has_edge(adj: &[Vec<f64>], from: usize, to: usize) -> bool {
    from != to && adj[to][from] != 0.0
}

/// Shortest simple paths from `source` to every vertex, found by walking
/// every simple path out of `source`.
fn geodesics_from(adj: &[Vec<f64>], source: usize) -> Vec<Vec<Vec<usize>>> {
    fn walk(adj: &[Vec<f64>], path: &mut Vec<usize>, best: &mut [Vec<Vec<usize>>]) {
        let v = *path.last().unwrap();
        let slot = &mut best[v];
        match slot.first().map(Vec::len) {
            Some(len) if len < path.len() => {}
            Some(len) if len == path.len() => slot.push(path.clone()),
            _ => *slot = vec![path.clone()],
        }
        for w in 0..adj.len() {
            if has_edge(adj, v, w) && !path.contains(&w) {
                path.push(w);
                walk(adj, path, best);
                path.pop();
            }
        }
    }
    let mut best = vec![Vec::new(); adj.len()];
    walk(adj, &mut vec![source], &mut best);
    best
}

pub fn betweenness(adj: &[Vec<f64>]) -> Vec<f64> {
    let n = adj.len();
    let mut out = vec![0.0; n];
    for l in 0..n {
        let all = geodesics_from(adj, l);
        for (k, geo) in all.iter().enumerate() {
            if l == k || geo.is_empty() {
                continue;
            }
            for (j, slot) in out.iter_mut().enumerate() {
                if j == l || j == k {
                    continue;
                }
                let through = geo.iter().filter(|p| p.contains(&j)).count();
                *slot += through as f64 / geo.len() as f64;
            }
        }
    }
    out
}

pub fn closeness(adj: &[Vec<f64>]) -> Vec<f64> {
    let n = adj.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        for (j, geo) in geodesics_from(adj, i).iter().enumerate() {
            if let (true, Some(p)) = (i != j, geo.first()) {
                out[j] += 1.0 / (p.len() - 1) as f64;
            }
        }
    }
    out
}

/// Nonnegative unit eigenvector of `|adj|` (zero diagonal) for its spectral
/// radius, from a dense eigen decomposition and an SVD null vector.
pub fn perron_vector(adj: &[Vec<f64>]) -> Vec<f64> {
    let n = adj.len();
    let a = DMatrix::from_fn(n, n, |r, c| if r == c { 0.0 } else { adj[r][c].abs() });
    let radius = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = &a - DMatrix::identity(n, n) * radius;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut v: Vec<f64> = v_t.row(idx).iter().copied().collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}
