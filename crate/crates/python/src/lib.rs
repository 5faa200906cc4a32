//! Python bindings. Matrices cross the boundary as lists of rows and dates
//! as ISO strings.

use std::path::PathBuf;

use frm_core::backtest::{self, BacktestConfig, ReturnMode};
use frm_core::covar::estimate_covar;
use frm_core::frm::{self as engine, WindowResult};
use frm_core::io::date;
use frm_core::market_data::{attach_market_caps, build_panel, load_csv, CsvKind, ReturnPanel, WindowSpec};
use frm_core::network::{self, DependencyGraph};
use frm_core::portfolio::{self, CovMatrix, FrmAdjacency, Strategy};
use frm_core::quantile::{self, QuantileProblem};
use frm_core::synth::{self, SynthConfig};
use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn numeric_err(e: impl std::fmt::Display) -> PyErr {
    PyArithmeticError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>], cols: Option<usize>) -> PyResult<Array2<f64>> {
    let c = cols.unwrap_or_else(|| rows.first().map_or(0, Vec::len));
    if rows.iter().any(|r| r.len() != c) {
        return Err(value_err("rows have different lengths"));
    }
    Ok(Array2::from_shape_fn((rows.len(), c), |(i, j)| rows[i][j]))
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn square(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    matrix(rows, Some(rows.len()))
}

fn labels(n: usize, tickers: Option<Vec<String>>) -> PyResult<Vec<String>> {
    match tickers {
        Some(t) if t.len() != n => Err(value_err(format!("{} tickers for {n} assets", t.len()))),
        Some(t) => Ok(t),
        None => Ok((0..n).map(|k| format!("x{k}")).collect()),
    }
}

/// Penalised quantile regression fit.
#[pyclass(frozen, module = "pyfrm")]
struct QuantileFit {
    #[pyo3(get)]
    alpha: f64,
    #[pyo3(get)]
    beta: Vec<f64>,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    df: usize,
    #[pyo3(get)]
    residuals: Vec<f64>,
    #[pyo3(get)]
    #[pyo3(name = "lambda_")]
    lambda_used: f64,
}

impl From<quantile::QuantileFit> for QuantileFit {
    fn from(f: quantile::QuantileFit) -> Self {
        QuantileFit {
            alpha: f.alpha,
            beta: f.beta.to_vec(),
            objective: f.objective,
            df: f.df,
            residuals: f.residuals.to_vec(),
            lambda_used: f.lambda_used,
        }
    }
}

#[pymethods]
impl QuantileFit {
    fn __repr__(&self) -> String {
        format!("QuantileFit(alpha={}, beta={:?}, objective={})", self.alpha, self.beta, self.objective)
    }
}

/// Mean check loss plus `lam * |beta|_1`, minimised exactly.
#[pyfunction]
#[pyo3(signature = (y, x, tau, lam=0.0))]
fn solve_quantile(y: Vec<f64>, x: Vec<Vec<f64>>, tau: f64, lam: f64) -> PyResult<QuantileFit> {
    let p = if x.is_empty() { 0 } else { x[0].len() };
    let x = matrix(&x, Some(p))?;
    let fit = quantile::solve(&QuantileProblem::new(Array1::from(y), x, tau, lam)).map_err(numeric_err)?;
    Ok(fit.into())
}

#[pyfunction]
fn lambda_max(y: Vec<f64>, x: Vec<Vec<f64>>, tau: f64) -> PyResult<f64> {
    let x = matrix(&x, None)?;
    Ok(quantile::lambda_max(Array1::from(y).view(), x.view(), tau))
}

/// GACV-selected penalty and its fit.
#[pyfunction]
#[pyo3(signature = (y, x, tau, grid=50))]
fn select_gacv(y: Vec<f64>, x: Vec<Vec<f64>>, tau: f64, grid: usize) -> PyResult<(f64, QuantileFit)> {
    let x = matrix(&x, None)?;
    let res = quantile::select_gacv(Array1::from(y).view(), x.view(), tau, grid).map_err(numeric_err)?;
    Ok((res.selected_lambda, res.selected_fit.into()))
}

/// Aligned return panel: institution log returns and lagged macros.
#[pyclass(frozen, module = "pyfrm")]
struct Panel {
    inner: ReturnPanel,
}

#[pymethods]
impl Panel {
    #[staticmethod]
    #[pyo3(signature = (prices, caps, macros=None))]
    fn from_csv(prices: PathBuf, caps: PathBuf, macros: Option<PathBuf>) -> PyResult<Self> {
        let mut series = load_csv(&prices, CsvKind::Prices).map_err(value_err)?;
        let caps = load_csv(&caps, CsvKind::MarketCaps).map_err(value_err)?;
        attach_market_caps(&mut series, &caps);
        let mut names = Vec::new();
        if let Some(path) = macros {
            let m = load_csv(&path, CsvKind::Macros).map_err(value_err)?;
            names = m.iter().map(|s| s.ticker.clone()).collect();
            series.extend(m);
        }
        Ok(Panel { inner: build_panel(&series, &names).map_err(value_err)? })
    }

    /// Seeded synthetic market with a high-volatility middle third.
    #[staticmethod]
    #[pyo3(signature = (seed=0, institutions=25, days=252, vol_factor=3.0))]
    fn synthetic(seed: u64, institutions: usize, days: usize, vol_factor: f64) -> PyResult<Self> {
        let data = synth::generate(&SynthConfig { seed, institutions, days, vol_factor, ..SynthConfig::default() });
        Ok(Panel { inner: build_panel(&data.series(), &data.macro_names).map_err(value_err)? })
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.dates.iter().map(|&d| date(d)).collect()
    }

    #[getter]
    fn institutions(&self) -> Vec<String> {
        self.inner.institutions.clone()
    }

    #[getter]
    fn macros(&self) -> Vec<String> {
        self.inner.macros.clone()
    }

    fn institution_returns(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.institution_returns().to_owned())
    }

    fn macro_values(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.macro_values().to_owned())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel({} rows, {} institutions, {} macros)",
            self.inner.len(),
            self.inner.num_institutions(),
            self.inner.macros.len()
        )
    }
}

/// One rolling window of the FRM engine.
#[pyclass(frozen, module = "pyfrm")]
struct Window {
    inner: WindowResult,
}

#[pymethods]
impl Window {
    #[getter]
    fn date(&self) -> String {
        date(self.inner.date)
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn tickers(&self) -> Vec<String> {
        self.inner.tickers.clone()
    }

    #[getter]
    fn macros(&self) -> Vec<String> {
        self.inner.macros.clone()
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambdas.clone()
    }

    /// Row j holds the coefficients of j's regression on the others.
    #[getter]
    fn adjacency(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.adjacency)
    }

    #[getter]
    fn macro_influence(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.macro_influence)
    }

    #[getter]
    fn frm(&self) -> f64 {
        self.inner.frm()
    }

    /// (srr, sre) weighted by the window's market caps.
    fn risk_indices(&self) -> (Vec<f64>, Vec<f64>) {
        let r = engine::risk_indices(&self.inner, &self.inner.caps);
        (r.srr, r.sre)
    }

    fn centralities<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        centrality_dict(py, &DependencyGraph::from_adjacency(self.inner.tickers.clone(), &self.inner.adjacency))
    }

    fn __repr__(&self) -> String {
        format!("Window({}, tau={}, frm={})", date(self.inner.date), self.inner.tau, self.inner.frm())
    }
}

/// Rolling FRM windows over the panel.
#[pyfunction]
#[pyo3(signature = (panel, tau=0.05, window=63, top=25, grid=50))]
fn run_frm(py: Python<'_>, panel: &Panel, tau: f64, window: usize, top: usize, grid: usize) -> PyResult<Vec<Window>> {
    let spec = WindowSpec::new(window, top, tau).map_err(value_err)?;
    let results = py.detach(|| engine::run(&panel.inner, &spec, grid)).map_err(numeric_err)?;
    Ok(results.into_iter().map(|inner| Window { inner }).collect())
}

fn centrality_dict<'py>(py: Python<'py>, g: &DependencyGraph) -> PyResult<Bound<'py, PyDict>> {
    let eigen = network::eigenvector_centrality(g);
    let deg = network::degrees(g);
    let d = PyDict::new(py);
    d.set_item("eigen", eigen.values)?;
    d.set_item("eigen_converged", eigen.converged)?;
    d.set_item("closeness", network::closeness(g))?;
    d.set_item("betweenness", network::betweenness(g))?;
    d.set_item("indegree", deg.indegree)?;
    d.set_item("outdegree", deg.outdegree)?;
    Ok(d)
}

/// Centralities of the graph with an edge i -> j wherever `adjacency[j][i]`
/// is nonzero.
#[pyfunction]
fn centralities<'py>(py: Python<'py>, adjacency: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let a = square(&adjacency)?;
    centrality_dict(py, &DependencyGraph::from_adjacency(labels(a.nrows(), None)?, &a))
}

/// Two-step CoVaR of `returns_j` given `returns_i` at its VaR.
#[pyfunction]
fn covar<'py>(
    py: Python<'py>,
    returns_j: Vec<f64>,
    returns_i: Vec<f64>,
    macros: Vec<Vec<f64>>,
    tau: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = matrix(&macros, None)?;
    let res = estimate_covar(Array1::from(returns_j).view(), Array1::from(returns_i).view(), m.view(), tau)
        .map_err(numeric_err)?;
    let d = PyDict::new(py);
    d.set_item("var_i", res.var_i)?;
    d.set_item("covar_ji", res.covar_ji)?;
    d.set_item("alpha_i", res.alpha_i)?;
    d.set_item("gamma_i", res.gamma_i)?;
    d.set_item("alpha_j_given_i", res.alpha_j_given_i)?;
    d.set_item("beta_j_given_i", res.beta_j_given_i)?;
    d.set_item("gamma_j_given_i", res.gamma_j_given_i)?;
    Ok(d)
}

fn cov_matrix(cov: Vec<Vec<f64>>, tickers: Option<Vec<String>>) -> PyResult<CovMatrix> {
    let sigma = square(&cov)?;
    Ok(CovMatrix { tickers: labels(sigma.nrows(), tickers)?, sigma })
}

#[pyfunction]
#[pyo3(signature = (cov, long_only=true))]
fn minvar_weights(cov: Vec<Vec<f64>>, long_only: bool) -> PyResult<Vec<f64>> {
    Ok(portfolio::minvar_weights(&cov_matrix(cov, None)?, long_only).map_err(numeric_err)?.weights)
}

#[pyfunction]
fn ivp_weights(cov: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(portfolio::ivp_weights(&cov_matrix(cov, None)?).map_err(numeric_err)?.weights)
}

/// HRP weights and the dendrogram leaf order.
#[pyfunction]
fn hrp_weights(cov: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let (res, dend) = portfolio::hrp_from_cov(&cov_matrix(cov, None)?).map_err(numeric_err)?;
    Ok((res.weights, dend.leaf_order))
}

#[pyfunction]
fn inv_lambda_weights(lambdas: Vec<f64>) -> PyResult<Vec<f64>> {
    let n = lambdas.len();
    Ok(portfolio::inv_lambda_weights(labels(n, None)?, &lambdas).map_err(numeric_err)?.weights)
}

/// upHRP weights and leaf order from an adjacency with lambdas on the diagonal.
#[pyfunction]
fn uphrp_weights(a_tilde: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let a = square(&a_tilde)?;
    let adj = FrmAdjacency { tickers: labels(a.nrows(), None)?, a_tilde: a };
    let (res, dend) = portfolio::uphrp_with_dendrogram(&adj).map_err(numeric_err)?;
    Ok((res.weights, dend.leaf_order))
}

#[pyfunction]
fn effective_n(weights: Vec<f64>) -> f64 {
    backtest::effective_n(&weights)
}

/// Summary of one backtested strategy.
#[pyclass(frozen, module = "pyfrm")]
struct StrategyResult {
    #[pyo3(get)]
    name: String,
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    std: f64,
    #[pyo3(get)]
    sharpe: Option<f64>,
    #[pyo3(get)]
    effective_n: f64,
    #[pyo3(get)]
    dates: Vec<String>,
    #[pyo3(get)]
    daily_returns: Vec<f64>,
    #[pyo3(get)]
    cumulative: Vec<f64>,
}

#[pymethods]
impl StrategyResult {
    fn __repr__(&self) -> String {
        format!("StrategyResult({}, sharpe={:?}, effective_n={})", self.name, self.sharpe, self.effective_n)
    }
}

/// Rolling backtest; FRM strategies look up the windows by date and tau.
#[pyfunction]
#[pyo3(signature = (panel, windows, strategies=None, taus=vec![0.05], rebalance=30, window=63, universe=25, long_only=true, log_returns=false))]
#[allow(clippy::too_many_arguments)]
fn run_backtest(
    py: Python<'_>,
    panel: &Panel,
    windows: Vec<Py<Window>>,
    strategies: Option<Vec<String>>,
    taus: Vec<f64>,
    rebalance: usize,
    window: usize,
    universe: usize,
    long_only: bool,
    log_returns: bool,
) -> PyResult<Vec<StrategyResult>> {
    let strategies = match strategies {
        Some(names) => names.iter().map(|s| s.parse::<Strategy>().map_err(value_err)).collect::<PyResult<Vec<_>>>()?,
        None => Strategy::ALL.to_vec(),
    };
    let config = BacktestConfig {
        rebalance_days: rebalance,
        strategies,
        taus,
        estimation_window: window,
        universe,
        long_only,
        return_mode: if log_returns { ReturnMode::Log } else { ReturnMode::Simple },
        equal_weight_override: false,
    };
    let windows: Vec<WindowResult> = windows.iter().map(|w| w.get().inner.clone()).collect();
    let report = py.detach(|| backtest::run(&panel.inner, &windows, &config)).map_err(|e| match e {
        backtest::BacktestError::Portfolio { .. } | backtest::BacktestError::ZeroVolatility => numeric_err(e),
        _ => value_err(e),
    })?;
    Ok(report
        .strategies
        .into_iter()
        .map(|s| StrategyResult {
            name: s.name,
            mean: s.mean,
            std: s.std,
            sharpe: s.sharpe,
            effective_n: s.effective_n,
            dates: s.dates.iter().map(|&d| date(d)).collect(),
            daily_returns: s.daily_returns,
            cumulative: s.cumulative,
        })
        .collect())
}

#[pymodule]
fn pyfrm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<QuantileFit>()?;
    m.add_class::<Panel>()?;
    m.add_class::<Window>()?;
    m.add_class::<StrategyResult>()?;
    m.add_function(wrap_pyfunction!(solve_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_max, m)?)?;
    m.add_function(wrap_pyfunction!(select_gacv, m)?)?;
    m.add_function(wrap_pyfunction!(run_frm, m)?)?;
    m.add_function(wrap_pyfunction!(centralities, m)?)?;
    m.add_function(wrap_pyfunction!(covar, m)?)?;
    m.add_function(wrap_pyfunction!(minvar_weights, m)?)?;
    m.add_function(wrap_pyfunction!(ivp_weights, m)?)?;
    m.add_function(wrap_pyfunction!(hrp_weights, m)?)?;
    m.add_function(wrap_pyfunction!(inv_lambda_weights, m)?)?;
    m.add_function(wrap_pyfunction!(uphrp_weights, m)?)?;
    m.add_function(wrap_pyfunction!(effective_n, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    Ok(())
}
