//! Linear quantile regression with an optional L1 penalty, solved exactly as a
//! linear program, plus GACV selection of the penalty.

mod gacv;
mod simplex;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gacv::{lambda_grid, select_gacv, select_gacv_with_grid, GacvResult, DEFAULT_GRID_SIZE};
pub(crate) use simplex::QuantileLp;

/// Coefficients with magnitude at or below this count as inactive.
pub const ACTIVE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantileError {
    #[error("degenerate problem: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("every GACV candidate has n <= df")]
    AllInfinite,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// One (possibly penalised) linear quantile regression.
#[derive(Debug, Clone)]
pub struct QuantileProblem {
    pub y: Array1<f64>,
    /// n x p design without an intercept column.
    pub x: Array2<f64>,
    pub tau: f64,
    pub lambda: f64,
}

impl QuantileProblem {
    pub fn new(y: Array1<f64>, x: Array2<f64>, tau: f64, lambda: f64) -> Self {
        QuantileProblem { y, x, tau, lambda }
    }

    /// Intercept-only problem.
    pub fn location(y: Array1<f64>, tau: f64) -> Self {
        let n = y.len();
        QuantileProblem { y, x: Array2::zeros((n, 0)), tau, lambda: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuantileFit {
    pub alpha: f64,
    pub beta: Array1<f64>,
    pub residuals: Array1<f64>,
    pub objective: f64,
    pub lambda_used: f64,
    pub df: usize,
}

impl QuantileFit {
    pub(crate) fn from_coefficients(
        y: ArrayView1<f64>,
        x: ArrayView2<f64>,
        tau: f64,
        lambda: f64,
        alpha: f64,
        beta: Array1<f64>,
    ) -> Self {
        let residuals = &y - &x.dot(&beta) - alpha;
        let n = y.len() as f64;
        let loss: f64 = residuals.iter().map(|&u| check_loss(u, tau)).sum();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let df = 1 + beta.iter().filter(|b| b.abs() > ACTIVE_TOL).count();
        QuantileFit {
            alpha,
            objective: loss / n + lambda * l1,
            beta,
            residuals,
            lambda_used: lambda,
            df,
        }
    }

    /// Sum of check losses over the residuals.
    pub fn loss_sum(&self, tau: f64) -> f64 {
        self.residuals.iter().map(|&u| check_loss(u, tau)).sum()
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > ACTIVE_TOL)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Check (pinball) loss `|u| * |tau - 1{u < 0}|`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

pub(crate) fn validate(y: ArrayView1<f64>, x: ArrayView2<f64>, tau: f64) -> Result<(), QuantileError> {
    if y.is_empty() {
        return Err(QuantileError::Degenerate("no observations".into()));
    }
    if x.nrows() != y.len() {
        return Err(QuantileError::InvalidInput(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QuantileError::InvalidInput(format!("tau {tau} outside (0, 1)")));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(QuantileError::InvalidInput("non-finite value in data".into()));
    }
    Ok(())
}

/// Solve `min n^-1 sum rho_tau(y - alpha - X beta) + lambda ||beta||_1` exactly.
///
/// Among multiple optimal solutions the one with the smallest `||beta||_1`
/// and then the smallest intercept is returned.
pub fn solve(problem: &QuantileProblem) -> Result<QuantileFit, QuantileError> {
    solve_view(problem.y.view(), problem.x.view(), problem.tau, problem.lambda)
}

pub fn solve_view(
    y: ArrayView1<f64>,
    x: ArrayView2<f64>,
    tau: f64,
    lambda: f64,
) -> Result<QuantileFit, QuantileError> {
    validate(y, x, tau)?;
    if !(lambda >= 0.0) {
        return Err(QuantileError::InvalidInput(format!("lambda {lambda} is negative")));
    }
    let mut lp = QuantileLp::new(y, x, tau);
    lp.solve_at(lambda)?;
    let (alpha, beta) = lp.solution();
    Ok(QuantileFit::from_coefficients(y, x, tau, lambda, alpha, beta))
}

/// Smallest minimiser of `sum rho_tau(y - a)`, i.e. the order statistic
/// `y_(ceil(n tau))`.
pub fn sample_quantile(y: ArrayView1<f64>, tau: f64) -> f64 {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[quantile_rank(sorted.len(), tau)]
}

/// Zero-based rank of the smallest tau-quantile minimiser in a sample of size n.
fn quantile_rank(n: usize, tau: f64) -> usize {
    let k = (n as f64 * tau - 1e-9).ceil() as usize;
    k.clamp(1, n) - 1
}

/// Smallest penalty at which the zero coefficient vector is optimal.
///
/// Uses the subgradient of the intercept-only fit: `theta_t` is `tau` for
/// positive residuals, `tau - 1` for negative ones, and observations sitting
/// exactly on the fitted quantile share whatever makes `sum theta = 0`.
pub fn lambda_max(y: ArrayView1<f64>, x: ArrayView2<f64>, tau: f64) -> f64 {
    let n = y.len();
    if n == 0 || x.ncols() == 0 {
        return 0.0;
    }
    let alpha = sample_quantile(y, tau);
    let mut theta = Array1::<f64>::zeros(n);
    let mut zeros = Vec::new();
    let mut fixed_sum = 0.0;
    for (t, &v) in y.iter().enumerate() {
        let r = v - alpha;
        if r > 0.0 {
            theta[t] = tau;
            fixed_sum += tau;
        } else if r < 0.0 {
            theta[t] = tau - 1.0;
            fixed_sum += tau - 1.0;
        } else {
            zeros.push(t);
        }
    }
    let share = (-fixed_sum / zeros.len() as f64).clamp(tau - 1.0, tau);
    for &t in &zeros {
        theta[t] = share;
    }
    x.columns()
        .into_iter()
        .map(|col| col.dot(&theta).abs() / n as f64)
        .fold(0.0, f64::max)
}
