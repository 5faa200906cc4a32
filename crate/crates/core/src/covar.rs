//! Two-step unpenalised quantile regression for VaR and CoVaR.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::quantile::{solve_view, QuantileError, QuantileFit};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoVarResult {
    pub tau: f64,
    pub var_i: Vec<f64>,
    pub covar_ji: Vec<f64>,
    pub alpha_i: f64,
    pub gamma_i: Vec<f64>,
    pub alpha_j_given_i: f64,
    pub beta_j_given_i: f64,
    pub gamma_j_given_i: Vec<f64>,
}

fn check_macros(t: usize, macros: ArrayView2<f64>) -> Result<(), QuantileError> {
    if macros.nrows() != t {
        return Err(QuantileError::InvalidInput(format!(
            "macros have {} rows, returns have {t}",
            macros.nrows()
        )));
    }
    if t <= macros.ncols() + 1 {
        return Err(QuantileError::Degenerate(format!(
            "{t} observations for {} macro regressors",
            macros.ncols()
        )));
    }
    Ok(())
}

/// Quantile fit of `returns_i` on lagged macros and the fitted VaR series
/// `alpha + gamma' M_{t-1}`.
pub fn estimate_var(
    returns_i: ArrayView1<f64>,
    macros: ArrayView2<f64>,
    tau: f64,
) -> Result<(QuantileFit, Vec<f64>), QuantileError> {
    check_macros(returns_i.len(), macros)?;
    let fit = solve_view(returns_i, macros, tau, 0.0)?;
    let var = (&macros.dot(&fit.beta) + fit.alpha).to_vec();
    Ok((fit, var))
}

/// Step 2 regresses `returns_j` on contemporaneous `returns_i` and the macros,
/// then plugs the step-1 VaR of `i` into the fitted equation.
pub fn estimate_covar(
    returns_j: ArrayView1<f64>,
    returns_i: ArrayView1<f64>,
    macros: ArrayView2<f64>,
    tau: f64,
) -> Result<CoVarResult, QuantileError> {
    if returns_j.len() != returns_i.len() {
        return Err(QuantileError::InvalidInput("return series differ in length".into()));
    }
    let (step1, var_i) = estimate_var(returns_i, macros, tau)?;
    let t = returns_i.len();
    let m = macros.ncols();
    let mut design = Array2::<f64>::zeros((t, m + 1));
    design.column_mut(0).assign(&returns_i);
    design.slice_mut(s![.., 1..]).assign(&macros);
    let step2 = solve_view(returns_j, design.view(), tau, 0.0)?;
    let beta = step2.beta[0];
    let gamma: Array1<f64> = step2.beta.slice(s![1..]).to_owned();
    let macro_part = macros.dot(&gamma);
    let covar_ji = var_i
        .iter()
        .zip(macro_part.iter())
        .map(|(&v, &g)| step2.alpha + beta * v + g)
        .collect();
    Ok(CoVarResult {
        tau,
        var_i,
        covar_ji,
        alpha_i: step1.alpha,
        gamma_i: step1.beta.to_vec(),
        alpha_j_given_i: step2.alpha,
        beta_j_given_i: beta,
        gamma_j_given_i: gamma.to_vec(),
    })
}
