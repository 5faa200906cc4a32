//! Allocation strategies: minimum variance, inverse variance, hierarchical
//! risk parity on correlations, inverse lambda, and hierarchical risk parity
//! on the FRM adjacency matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::frm::WindowResult;

const RIDGE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PortfolioError {
    #[error("covariance matrix is singular even after ridge regularisation")]
    SingularCovariance,
    #[error("zero variance for `{0}`")]
    ZeroVariance(String),
    #[error("non-positive lambda for `{0}`")]
    ZeroLambda(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    MinVar,
    Ivp,
    Hrp,
    InvLambda,
    UpHrp,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::MinVar, Strategy::Ivp, Strategy::Hrp, Strategy::InvLambda, Strategy::UpHrp];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MinVar => "MinVar",
            Strategy::Ivp => "IVP",
            Strategy::Hrp => "HRP",
            Strategy::InvLambda => "InvLambda",
            Strategy::UpHrp => "upHRP",
        }
    }

    /// Needs FRM output rather than only returns.
    pub fn uses_frm(self) -> bool {
        matches!(self, Strategy::InvLambda | Strategy::UpHrp)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = PortfolioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PortfolioError::InvalidInput(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CovMatrix {
    pub tickers: Vec<String>,
    pub sigma: Array2<f64>,
}

impl CovMatrix {
    /// Sample covariance (divisor T - 1) of a T x N return matrix.
    pub fn sample(tickers: Vec<String>, returns: ArrayView2<f64>) -> Result<Self, PortfolioError> {
        let t = returns.nrows();
        if t < 2 {
            return Err(PortfolioError::InvalidInput(format!("{t} return rows, need at least 2")));
        }
        if returns.ncols() != tickers.len() {
            return Err(PortfolioError::InvalidInput("ticker count does not match return columns".into()));
        }
        let mean = returns.mean_axis(Axis(0)).expect("t >= 2");
        let centred = &returns - &mean;
        let mut sigma = centred.t().dot(&centred) / (t - 1) as f64;
        // exact symmetry
        let n = sigma.nrows();
        for i in 0..n {
            for j in 0..i {
                sigma[[i, j]] = sigma[[j, i]];
            }
        }
        Ok(CovMatrix { tickers, sigma })
    }

    pub fn correlation(&self) -> Result<Array2<f64>, PortfolioError> {
        let sd: Vec<f64> = self.sigma.diag().iter().map(|v| v.sqrt()).collect();
        if let Some(k) = sd.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(PortfolioError::ZeroVariance(self.tickers[k].clone()));
        }
        Ok(Array2::from_shape_fn(self.sigma.dim(), |(i, j)| {
            if i == j {
                1.0
            } else {
                (self.sigma[[i, j]] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            }
        }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrmAdjacency {
    pub tickers: Vec<String>,
    /// Lambdas on the diagonal, signed coefficients elsewhere.
    pub a_tilde: Array2<f64>,
}

impl FrmAdjacency {
    pub fn from_window(result: &WindowResult) -> Self {
        let mut a_tilde = result.adjacency.clone();
        for (k, &l) in result.lambdas.iter().enumerate() {
            a_tilde[[k, k]] = l;
        }
        FrmAdjacency { tickers: result.tickers.clone(), a_tilde }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.a_tilde.diag().to_vec()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Merge {
    /// Cluster ids: `0..N` are leaves, merge k creates cluster `N + k`.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
}

impl Dendrogram {
    fn walk(&self, id: usize, out: &mut Vec<usize>) {
        if id < self.n {
            out.push(id);
        } else {
            let m = &self.merges[id - self.n];
            self.walk(m.left, out);
            self.walk(m.right, out);
        }
    }

    /// Nested merge tree with leaves labelled by ticker.
    pub fn to_json(&self, tickers: &[String]) -> Value {
        fn node(d: &Dendrogram, id: usize, tickers: &[String]) -> Value {
            if id < d.n {
                json!({ "ticker": tickers[id] })
            } else {
                let m = &d.merges[id - d.n];
                json!({
                    "height": m.height,
                    "size": m.size,
                    "left": node(d, m.left, tickers),
                    "right": node(d, m.right, tickers),
                })
            }
        }
        if self.n == 0 {
            return Value::Null;
        }
        node(self, self.n + self.merges.len() - 1, tickers)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AllocationResult {
    pub strategy: Strategy,
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
    pub leaf_order: Option<Vec<usize>>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl AllocationResult {
    fn plain(strategy: Strategy, tickers: Vec<String>, weights: Vec<f64>) -> Self {
        AllocationResult { strategy, tickers, weights, leaf_order: None, diagnostics: BTreeMap::new() }
    }
}

fn check_square(m: ArrayView2<f64>) -> Result<usize, PortfolioError> {
    if m.nrows() != m.ncols() {
        return Err(PortfolioError::InvalidInput(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Err(PortfolioError::InvalidInput("empty matrix".into()));
    }
    Ok(m.nrows())
}

fn solve_ones(sigma: &Array2<f64>, idx: &[usize]) -> Result<Vec<f64>, PortfolioError> {
    let k = idx.len();
    let a = DMatrix::from_fn(k, k, |r, c| sigma[[idx[r], idx[c]]] + if r == c { RIDGE } else { 0.0 });
    let x = a.lu().solve(&DVector::from_element(k, 1.0)).ok_or(PortfolioError::SingularCovariance)?;
    let total: f64 = x.iter().sum();
    if !total.is_finite() || total == 0.0 || x.iter().any(|v| !v.is_finite()) {
        return Err(PortfolioError::SingularCovariance);
    }
    Ok(x.iter().map(|v| v / total).collect())
}

/// `(Sigma + eps I)^-1 1` normalised. With `long_only`, negative weights are
/// dropped and the system re-solved on the remaining assets until none is
/// negative.
pub fn minvar_weights(cov: &CovMatrix, long_only: bool) -> Result<AllocationResult, PortfolioError> {
    let n = check_square(cov.sigma.view())?;
    let mut active: Vec<usize> = (0..n).collect();
    let mut rounds = 0;
    let weights = loop {
        rounds += 1;
        let w = solve_ones(&cov.sigma, &active)?;
        let negative: Vec<bool> = w.iter().map(|&v| v < 0.0).collect();
        if !long_only || !negative.iter().any(|&b| b) {
            let mut full = vec![0.0; n];
            for (&k, v) in active.iter().zip(w) {
                full[k] = v;
            }
            break full;
        }
        active = active.iter().zip(&negative).filter(|(_, &neg)| !neg).map(|(&k, _)| k).collect();
    };
    let mut res = AllocationResult::plain(Strategy::MinVar, cov.tickers.clone(), weights);
    res.diagnostics.insert("clip_rounds".into(), rounds as f64);
    Ok(res)
}

fn inverse_normalised(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().map(|v| 1.0 / v).sum();
    values.iter().map(|v| (1.0 / v) / total).collect()
}

pub fn ivp_weights(cov: &CovMatrix) -> Result<AllocationResult, PortfolioError> {
    check_square(cov.sigma.view())?;
    let diag = cov.sigma.diag().to_vec();
    if let Some(k) = diag.iter().position(|&v| !(v > 0.0)) {
        return Err(PortfolioError::ZeroVariance(cov.tickers[k].clone()));
    }
    Ok(AllocationResult::plain(Strategy::Ivp, cov.tickers.clone(), inverse_normalised(&diag)))
}

pub fn inv_lambda_weights(tickers: Vec<String>, lambdas: &[f64]) -> Result<AllocationResult, PortfolioError> {
    if lambdas.is_empty() || tickers.len() != lambdas.len() {
        return Err(PortfolioError::InvalidInput("lambda and ticker counts differ or are zero".into()));
    }
    if let Some(k) = lambdas.iter().position(|&l| !(l > 0.0)) {
        return Err(PortfolioError::ZeroLambda(tickers[k].clone()));
    }
    Ok(AllocationResult::plain(Strategy::InvLambda, tickers, inverse_normalised(lambdas)))
}

/// `sqrt((1 - rho) / 2)`.
pub fn corr_distance(corr: ArrayView2<f64>) -> Array2<f64> {
    corr.mapv(|r| (0.5 * (1.0 - r)).max(0.0).sqrt())
}

/// Correlation distance applied to coefficients with `|beta| < 1`; larger
/// coefficients get the largest distance computed, the diagonal is 0.
pub fn adjacency_distance(a_tilde: ArrayView2<f64>) -> Array2<f64> {
    let n = a_tilde.nrows();
    let mut d = Array2::zeros((n, n));
    let mut clipped = Vec::new();
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let b = a_tilde[[i, j]];
            if b.abs() < 1.0 {
                let v = (0.5 * (1.0 - b)).sqrt();
                d[[i, j]] = v;
                max = max.max(v);
            } else {
                clipped.push((i, j));
            }
        }
    }
    let fill = if max.is_finite() { max } else { 1.0 };
    for (i, j) in clipped {
        d[[i, j]] = fill;
    }
    d
}

/// Euclidean distance between columns.
pub fn column_distance(d: ArrayView2<f64>) -> Array2<f64> {
    let n = d.ncols();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = d.column(i).iter().zip(d.column(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Agglomerative single linkage. The closest pair of clusters is merged
/// (ties go to the lowest pair of slots, a cluster's slot being its smallest
/// leaf) and distances to the merged cluster are the elementwise minimum.
pub fn single_linkage(d: ArrayView2<f64>) -> Result<Dendrogram, PortfolioError> {
    let n = check_square(d)?;
    let mut dist = d.to_owned();
    let mut cluster: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if alive[j] && best.is_none_or(|(_, _, b)| dist[[i, j]] < b) {
                    best = Some((i, j, dist[[i, j]]));
                }
            }
        }
        let (i, j, height) = best.expect("at least two live clusters");
        merges.push(Merge { left: cluster[i], right: cluster[j], height, size: size[i] + size[j] });
        for k in 0..n {
            if alive[k] && k != i && k != j {
                let v = dist[[i, k]].min(dist[[j, k]]);
                dist[[i, k]] = v;
                dist[[k, i]] = v;
            }
        }
        alive[j] = false;
        cluster[i] = n + step;
        size[i] += size[j];
    }
    let mut dend = Dendrogram { n, merges, leaf_order: Vec::with_capacity(n) };
    let mut order = Vec::with_capacity(n);
    dend.walk(n + dend.merges.len() - 1, &mut order);
    dend.leaf_order = order;
    Ok(dend)
}

/// Rows and columns permuted into leaf order.
pub fn quasi_diagonalize(dend: &Dendrogram, m: ArrayView2<f64>) -> (Array2<f64>, Vec<usize>) {
    let p = dend.leaf_order.clone();
    (permute(m, &p), p)
}

pub fn permute(m: ArrayView2<f64>, p: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((p.len(), p.len()), |(r, c)| m[[p[r], p[c]]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BisectionMode {
    Covariance,
    Adjacency,
}

/// `w' M w` with inverse-diagonal weights inside the block `lo..hi`.
fn cluster_variance(m: ArrayView2<f64>, lo: usize, hi: usize) -> f64 {
    let inv: Vec<f64> = (lo..hi).map(|k| 1.0 / m[[k, k]]).collect();
    let total: f64 = inv.iter().sum();
    let w: Vec<f64> = inv.iter().map(|v| v / total).collect();
    let mut v = 0.0;
    for (a, wa) in w.iter().enumerate() {
        for (b, wb) in w.iter().enumerate() {
            v += wa * m[[lo + a, lo + b]] * wb;
        }
    }
    v
}

/// Top-down bisection of an ordered matrix into contiguous halves. Returns the
/// weights in the matrix's order plus the number of adjacency-mode blocks
/// whose variance was not positive and fell back to the sum of absolute
/// entries.
pub fn recursive_bisection(ordered: ArrayView2<f64>, mode: BisectionMode) -> Result<(Vec<f64>, usize), PortfolioError> {
    let n = check_square(ordered)?;
    if let Some(k) = (0..n).position(|k| !(ordered[[k, k]] > 0.0)) {
        return Err(match mode {
            BisectionMode::Covariance => PortfolioError::ZeroVariance(format!("position {k}")),
            BisectionMode::Adjacency => PortfolioError::ZeroLambda(format!("position {k}")),
        });
    }
    let mut w = vec![1.0; n];
    let mut fallbacks = 0;
    let mut stack = vec![(0usize, n)];
    let variance = |lo: usize, hi: usize, fallbacks: &mut usize| {
        let v = cluster_variance(ordered, lo, hi);
        if mode == BisectionMode::Adjacency && v <= 0.0 {
            *fallbacks += 1;
            let mut s = 0.0;
            for r in lo..hi {
                for c in lo..hi {
                    s += ordered[[r, c]].abs();
                }
            }
            s
        } else {
            v
        }
    };
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let mid = lo + (hi - lo).div_ceil(2);
        let v1 = variance(lo, mid, &mut fallbacks);
        let v2 = variance(mid, hi, &mut fallbacks);
        let alpha = 1.0 - v1 / (v1 + v2);
        w[lo..mid].iter_mut().for_each(|x| *x *= alpha);
        w[mid..hi].iter_mut().for_each(|x| *x *= 1.0 - alpha);
        stack.push((mid, hi));
        stack.push((lo, mid));
    }
    Ok((w, fallbacks))
}

fn unpermute(ordered_weights: &[f64], order: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; order.len()];
    for (pos, &k) in order.iter().enumerate() {
        w[k] = ordered_weights[pos];
    }
    w
}

/// HRP from a covariance matrix; also returns the dendrogram.
pub fn hrp_from_cov(cov: &CovMatrix) -> Result<(AllocationResult, Dendrogram), PortfolioError> {
    let n = check_square(cov.sigma.view())?;
    if n == 1 {
        return Ok((single(Strategy::Hrp, &cov.tickers), Dendrogram { n: 1, merges: vec![], leaf_order: vec![0] }));
    }
    let corr = cov.correlation()?;
    let dend = single_linkage(column_distance(corr_distance(corr.view()).view()).view())?;
    let (ordered, order) = quasi_diagonalize(&dend, cov.sigma.view());
    let (w, _) = recursive_bisection(ordered.view(), BisectionMode::Covariance)?;
    let mut res = AllocationResult::plain(Strategy::Hrp, cov.tickers.clone(), unpermute(&w, &order));
    res.leaf_order = Some(order);
    Ok((res, dend))
}

/// HRP on the sample covariance of a T x N return matrix.
pub fn hrp_weights(tickers: Vec<String>, returns: ArrayView2<f64>) -> Result<AllocationResult, PortfolioError> {
    hrp_from_cov(&CovMatrix::sample(tickers, returns)?).map(|(r, _)| r)
}

fn single(strategy: Strategy, tickers: &[String]) -> AllocationResult {
    let mut r = AllocationResult::plain(strategy, tickers.to_vec(), vec![1.0]);
    r.leaf_order = Some(vec![0]);
    r
}

/// HRP with the adjacency matrix (lambdas on the diagonal) in place of the
/// covariance; also returns the dendrogram.
pub fn uphrp_with_dendrogram(adj: &FrmAdjacency) -> Result<(AllocationResult, Dendrogram), PortfolioError> {
    let n = check_square(adj.a_tilde.view())?;
    if let Some(k) = (0..n).position(|k| !(adj.a_tilde[[k, k]] > 0.0)) {
        return Err(PortfolioError::ZeroLambda(adj.tickers[k].clone()));
    }
    if n == 1 {
        return Ok((single(Strategy::UpHrp, &adj.tickers), Dendrogram { n: 1, merges: vec![], leaf_order: vec![0] }));
    }
    let dend = single_linkage(column_distance(adjacency_distance(adj.a_tilde.view()).view()).view())?;
    let (ordered, order) = quasi_diagonalize(&dend, adj.a_tilde.view());
    let (w, fallbacks) = recursive_bisection(ordered.view(), BisectionMode::Adjacency)?;
    let mut res = AllocationResult::plain(Strategy::UpHrp, adj.tickers.clone(), unpermute(&w, &order));
    res.leaf_order = Some(order);
    res.diagnostics.insert("variance_fallbacks".into(), fallbacks as f64);
    Ok((res, dend))
}

pub fn uphrp_weights(adj: &FrmAdjacency) -> Result<AllocationResult, PortfolioError> {
    uphrp_with_dendrogram(adj).map(|(r, _)| r)
}

/// Equal weights, used as a reference allocation.
pub fn equal_weights(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("a{k}")).collect()
    }

    fn cov(sigma: Array2<f64>) -> CovMatrix {
        CovMatrix { tickers: names(sigma.nrows()), sigma }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn minvar_closed_forms() {
        let r = minvar_weights(&cov(Array2::eye(4)), true).unwrap();
        assert!(close(&r.weights, &[0.25; 4], 1e-9));
        let r = minvar_weights(&cov(array![[1.0, 0.0], [0.0, 4.0]]), false).unwrap();
        assert!(close(&r.weights, &[0.8, 0.2], 1e-8));
    }

    #[test]
    fn minvar_first_order_condition() {
        let s = array![[0.04, 0.006, -0.01], [0.006, 0.09, 0.02], [-0.01, 0.02, 0.0625]];
        let r = minvar_weights(&cov(s.clone()), false).unwrap();
        let w = Array1::from(r.weights.clone());
        let sw = s.dot(&w);
        let kappa = sw.mean().unwrap();
        assert!(sw.iter().all(|v| (v - kappa).abs() < 1e-8));
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ivp_and_inverse_lambda() {
        let r = ivp_weights(&cov(array![[1.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 2.0]])).unwrap();
        assert!(close(&r.weights, &[0.4, 0.4, 0.2], 1e-15));
        let r = inv_lambda_weights(names(2), &[1.0, 3.0]).unwrap();
        assert!(close(&r.weights, &[0.75, 0.25], 1e-15));
        let r2 = inv_lambda_weights(names(2), &[7.0, 21.0]).unwrap();
        assert!(close(&r.weights, &r2.weights, 1e-15));
        assert!(matches!(inv_lambda_weights(names(2), &[0.0, 1.0]), Err(PortfolioError::ZeroLambda(_))));
        assert!(matches!(ivp_weights(&cov(Array2::zeros((2, 2)))), Err(PortfolioError::ZeroVariance(_))));
    }

    #[test]
    fn distances() {
        let d = corr_distance(array![[1.0, -1.0], [0.0, 1.0]].view());
        assert_eq!(d[[0, 0]], 0.0);
        assert_eq!(d[[0, 1]], 1.0);
        assert!((d[[1, 0]] - 0.5f64.sqrt()).abs() < 1e-15);
        let a = adjacency_distance(array![[2.0, 0.0, 0.999], [1.5, 3.0, 0.0], [0.0, 0.0, 1.0]].view());
        assert_eq!(a[[0, 0]], 0.0);
        assert!((a[[0, 1]] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((a[[0, 2]] - 0.0005f64.sqrt()).abs() < 1e-15);
        assert_eq!(a[[1, 0]], 0.5f64.sqrt());
        let c = column_distance(array![[0.0, 1.0], [1.0, 0.0]].view());
        assert!((c[[0, 1]] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c[[0, 1]], c[[1, 0]]);
    }

    #[test]
    fn linkage_hand_trace() {
        let d = array![[0.0, 1.0, 5.0], [1.0, 0.0, 4.0], [5.0, 4.0, 0.0]];
        let dend = single_linkage(d.view()).unwrap();
        assert_eq!((dend.merges[0].left, dend.merges[0].right, dend.merges[0].height), (0, 1, 1.0));
        assert_eq!((dend.merges[1].left, dend.merges[1].right, dend.merges[1].height), (3, 2, 4.0));
        assert_eq!(dend.leaf_order, vec![0, 1, 2]);
        let eq = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let dend = single_linkage(eq.view()).unwrap();
        let pairs: Vec<(usize, usize)> = dend.merges.iter().map(|m| (m.left, m.right)).collect();
        assert_eq!(pairs, vec![(0, 1), (4, 2), (5, 3)]);
    }

    #[test]
    fn quasi_diagonal_permutations() {
        let m = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        let id = Dendrogram { n: 3, merges: vec![], leaf_order: vec![0, 1, 2] };
        assert_eq!(quasi_diagonalize(&id, m.view()).0, m);
        let rev = Dendrogram { n: 3, merges: vec![], leaf_order: vec![2, 1, 0] };
        let (flipped, p) = quasi_diagonalize(&rev, m.view());
        assert_eq!(flipped, array![[9.0, 8.0, 7.0], [6.0, 5.0, 4.0], [3.0, 2.0, 1.0]]);
        let p2 = vec![1, 2, 0];
        let mut inv = vec![0; 3];
        for (k, &v) in p2.iter().enumerate() {
            inv[v] = k;
        }
        assert_eq!(permute(permute(m.view(), &p2).view(), &inv), m);
        assert_eq!(p, vec![2, 1, 0]);
    }

    #[test]
    fn bisection_on_diagonals_is_inverse_variance() {
        let s = Array2::from_diag(&array![1.0, 2.0, 4.0, 8.0]);
        let (w, _) = recursive_bisection(s.view(), BisectionMode::Covariance).unwrap();
        assert!(close(&w, &[8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0], 1e-12));
        let (w, _) = recursive_bisection(Array2::eye(2).view(), BisectionMode::Covariance).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        let (w, f) = recursive_bisection(s.view(), BisectionMode::Adjacency).unwrap();
        assert!(close(&w, &[8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0], 1e-12));
        assert_eq!(f, 0);
    }

    #[test]
    fn adjacency_fallback_is_counted() {
        let a = array![[1.0, -3.0, 0.0], [-3.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (w, f) = recursive_bisection(a.view(), BisectionMode::Adjacency).unwrap();
        assert!(f >= 1);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn uphrp_diagonal_is_inverse_lambda() {
        let l = [0.3, 0.05, 1.2, 0.7, 0.01];
        let adj = FrmAdjacency { tickers: names(5), a_tilde: Array2::from_diag(&Array1::from(l.to_vec())) };
        let up = uphrp_weights(&adj).unwrap();
        let inv = inv_lambda_weights(names(5), &l).unwrap();
        assert!(close(&up.weights, &inv.weights, 1e-10));
    }

    #[test]
    fn dendrogram_json_nests() {
        let d = array![[0.0, 1.0, 5.0], [1.0, 0.0, 4.0], [5.0, 4.0, 0.0]];
        let dend = single_linkage(d.view()).unwrap();
        let j = dend.to_json(&names(3));
        assert_eq!(j["height"], 4.0);
        assert_eq!(j["left"]["right"]["ticker"], "a1");
        assert_eq!(j["right"]["ticker"], "a2");
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
    }
}
