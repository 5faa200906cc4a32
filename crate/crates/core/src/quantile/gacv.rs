use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{lambda_max, validate, QuantileError, QuantileFit, QuantileLp};

pub const DEFAULT_GRID_SIZE: usize = 50;

/// Floor applied to `lambda_max` so the grid stays strictly positive when no
/// covariate can enter (all-zero design).
const LAMBDA_FLOOR: f64 = 1e-10;

/// Smallest grid point relative to `lambda_max`.
const GRID_DEPTH: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GacvResult {
    /// Descending penalties.
    pub lambda_grid: Vec<f64>,
    pub gacv_values: Vec<f64>,
    pub selected_lambda: f64,
    pub selected_fit: QuantileFit,
}

/// `grid_size` log-spaced penalties from `lambda_max` down to `1e-4 * lambda_max`.
pub fn lambda_grid(lambda_max: f64, grid_size: usize) -> Vec<f64> {
    let top = lambda_max.max(LAMBDA_FLOOR);
    if grid_size == 1 {
        return vec![top];
    }
    let step = GRID_DEPTH.ln() / (grid_size - 1) as f64;
    (0..grid_size)
        .map(|k| if k == 0 { top } else { top * (step * k as f64).exp() })
        .collect()
}

/// GACV(lambda) = sum rho_tau(residuals) / (n - df); infinite when n <= df.
fn gacv_value(fit: &QuantileFit, tau: f64, n: usize) -> f64 {
    if n <= fit.df {
        f64::INFINITY
    } else {
        fit.loss_sum(tau) / (n - fit.df) as f64
    }
}

/// Choose the penalty minimising GACV over the default log grid.
pub fn select_gacv(
    y: ArrayView1<f64>,
    x: ArrayView2<f64>,
    tau: f64,
    grid_size: usize,
) -> Result<GacvResult, QuantileError> {
    if grid_size < 2 {
        return Err(QuantileError::InvalidInput("grid_size must be at least 2".into()));
    }
    validate(y, x, tau)?;
    if y.len() < 2 {
        return Err(QuantileError::Degenerate("GACV needs n > 1".into()));
    }
    let grid = lambda_grid(lambda_max(y, x, tau), grid_size);
    select_gacv_with_grid(y, x, tau, grid)
}

/// GACV selection over a caller-supplied descending grid. Fits are warm-started
/// along the grid. Ties go to the larger penalty.
pub fn select_gacv_with_grid(
    y: ArrayView1<f64>,
    x: ArrayView2<f64>,
    tau: f64,
    grid: Vec<f64>,
) -> Result<GacvResult, QuantileError> {
    validate(y, x, tau)?;
    let n = y.len();
    let mut lp = QuantileLp::new(y, x, tau);
    let mut values = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, QuantileFit)> = None;
    for (k, &lambda) in grid.iter().enumerate() {
        lp.solve_at(lambda)?;
        let (alpha, beta) = lp.solution();
        let fit = QuantileFit::from_coefficients(y, x, tau, lambda, alpha, beta);
        let value = gacv_value(&fit, tau, n);
        values.push(value);
        let improves = match &best {
            None => value.is_finite(),
            Some((_, b, _)) => value < *b,
        };
        if improves {
            best = Some((k, value, fit));
        }
    }
    let (k, _, fit) = best.ok_or(QuantileError::AllInfinite)?;
    Ok(GacvResult {
        selected_lambda: grid[k],
        lambda_grid: grid,
        gacv_values: values,
        selected_fit: fit,
    })
}
