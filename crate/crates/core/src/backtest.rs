//! Rolling out-of-sample backtest of the allocation strategies.

use std::collections::HashMap;

use chrono::NaiveDate;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frm::WindowResult;
use crate::market_data::{select_top_j, DataError, ReturnPanel, WindowSpec};
use crate::portfolio::{
    hrp_from_cov, inv_lambda_weights, ivp_weights, minvar_weights, uphrp_weights, AllocationResult, CovMatrix,
    FrmAdjacency, PortfolioError, Strategy,
};

/// Lambdas are floored here before inverse weighting.
pub const LAMBDA_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("no FRM window ending {date} at tau {tau}")]
    MissingFrmWindow { date: NaiveDate, tau: f64 },
    #[error("zero volatility")]
    ZeroVolatility,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{date} {strategy}: {source}")]
    Portfolio {
        date: NaiveDate,
        strategy: Strategy,
        #[source]
        source: PortfolioError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnMode {
    /// Weights applied to `exp(r) - 1`.
    Simple,
    /// Weights applied to log returns directly.
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BacktestConfig {
    pub rebalance_days: usize,
    pub strategies: Vec<Strategy>,
    pub taus: Vec<f64>,
    /// Trailing rows used to estimate covariances.
    pub estimation_window: usize,
    /// Assets held by the return-based strategies, largest by market cap.
    pub universe: usize,
    pub long_only: bool,
    pub return_mode: ReturnMode,
    /// Replace every strategy's weights by 1/N.
    pub equal_weight_override: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            rebalance_days: 30,
            strategies: Strategy::ALL.to_vec(),
            taus: vec![0.05],
            estimation_window: 63,
            universe: 25,
            long_only: true,
            return_mode: ReturnMode::Simple,
            equal_weight_override: false,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.rebalance_days == 0 {
            return Err(BacktestError::InvalidConfig("rebalance_days must be at least 1".into()));
        }
        if self.estimation_window < 2 {
            return Err(BacktestError::InvalidConfig("estimation window must be at least 2".into()));
        }
        if self.universe == 0 {
            return Err(BacktestError::InvalidConfig("universe must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(BacktestError::InvalidConfig("no strategies".into()));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(BacktestError::InvalidConfig(format!("tau {t} outside (0, 1)")));
        }
        if self.taus.is_empty() && self.strategies.iter().any(|s| s.uses_frm()) {
            return Err(BacktestError::InvalidConfig("FRM strategies need at least one tau".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Rebalance {
    pub date: NaiveDate,
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StrategyReport {
    /// Strategy name, suffixed with `@tau` for FRM strategies.
    pub name: String,
    pub strategy: Strategy,
    pub tau: Option<f64>,
    pub mean: f64,
    pub std: f64,
    /// Absent when the return series has zero volatility.
    pub sharpe: Option<f64>,
    pub effective_n: f64,
    pub dates: Vec<NaiveDate>,
    pub daily_returns: Vec<f64>,
    /// Compounded in simple mode, summed in log mode.
    pub cumulative: Vec<f64>,
    pub rebalances: Vec<Rebalance>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BacktestReport {
    pub rebalance_days: usize,
    pub return_mode: ReturnMode,
    pub strategies: Vec<StrategyReport>,
}

/// `1 / sum w^2` for weights summing to one, evaluated as `(sum v)^2 / sum v^2`
/// with `v = w / max|w|` so that equal weights give exactly N. Long-only
/// results are clamped to `[1, N]` against rounding.
pub fn effective_n(weights: &[f64]) -> f64 {
    let scale = weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    if scale == 0.0 {
        return f64::NAN;
    }
    let sum: f64 = weights.iter().map(|w| w / scale).sum();
    let sq: f64 = weights.iter().map(|w| (w / scale).powi(2)).sum();
    let n = sum * sum / sq;
    if weights.iter().all(|&w| w >= 0.0) {
        n.clamp(1.0, weights.len() as f64)
    } else {
        n
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sample mean over sample standard deviation (divisor n - 1).
pub fn sharpe(returns: &[f64]) -> Result<f64, BacktestError> {
    if returns.len() < 2 {
        return Err(BacktestError::InsufficientData("sharpe needs two observations".into()));
    }
    let (mean, std) = mean_std(returns);
    if std <= 1e-14 * mean.abs() || std == 0.0 {
        return Err(BacktestError::ZeroVolatility);
    }
    Ok(mean / std)
}

type FrmKey = (NaiveDate, u64);

fn frm_lookup(results: &[WindowResult]) -> HashMap<FrmKey, &WindowResult> {
    results.iter().map(|r| ((r.date, r.tau.to_bits()), r)).collect()
}

/// Rebalance rows: first full estimation window, then every `rebalance_days`.
pub fn rebalance_rows(t: usize, config: &BacktestConfig) -> Vec<usize> {
    let first = config.estimation_window - 1;
    (first..t.saturating_sub(1)).step_by(config.rebalance_days).collect()
}

struct Job {
    strategy: Strategy,
    tau: Option<f64>,
}

fn allocate(
    panel: &ReturnPanel,
    row: usize,
    job: &Job,
    config: &BacktestConfig,
    frm: &HashMap<FrmKey, &WindowResult>,
) -> Result<(Vec<usize>, Vec<f64>), BacktestError> {
    let date = panel.dates[row];
    let wrap = |source| BacktestError::Portfolio { date, strategy: job.strategy, source };
    let start = row + 1 - config.estimation_window;
    let (columns, alloc): (Vec<usize>, Option<AllocationResult>) = if let Some(tau) = job.tau {
        let w = frm.get(&(date, tau.to_bits())).ok_or(BacktestError::MissingFrmWindow { date, tau })?;
        let columns = w
            .tickers
            .iter()
            .map(|t| {
                panel
                    .institution_index(t)
                    .ok_or_else(|| BacktestError::InsufficientData(format!("ticker `{t}` not in panel")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if config.equal_weight_override {
            (columns, None)
        } else {
            let lambdas: Vec<f64> = w.lambdas.iter().map(|l| l.max(LAMBDA_FLOOR)).collect();
            let alloc = match job.strategy {
                Strategy::InvLambda => inv_lambda_weights(w.tickers.clone(), &lambdas),
                _ => {
                    let mut adj = FrmAdjacency::from_window(w);
                    for (k, &l) in lambdas.iter().enumerate() {
                        adj.a_tilde[[k, k]] = l;
                    }
                    uphrp_weights(&adj)
                }
            }
            .map_err(wrap)?;
            (columns, Some(alloc))
        }
    } else {
        let spec = WindowSpec { length_n: config.estimation_window, top_j: config.universe, tau: 0.5 };
        let columns = select_top_j(panel, start, &spec)?;
        if config.equal_weight_override {
            (columns, None)
        } else {
            let tickers = columns.iter().map(|&c| panel.institutions[c].clone()).collect();
            let inst = panel.institution_returns();
            let window = Array2::from_shape_fn((config.estimation_window, columns.len()), |(r, c)| {
                inst[[start + r, columns[c]]]
            });
            let cov = CovMatrix::sample(tickers, window.view()).map_err(wrap)?;
            let alloc = match job.strategy {
                Strategy::MinVar => minvar_weights(&cov, config.long_only),
                Strategy::Ivp => ivp_weights(&cov),
                _ => hrp_from_cov(&cov).map(|(r, _)| r),
            }
            .map_err(wrap)?;
            (columns, Some(alloc))
        }
    };
    let weights = match alloc {
        Some(a) => a.weights,
        None => vec![1.0 / columns.len() as f64; columns.len()],
    };
    Ok((columns, weights))
}

fn run_job(
    panel: &ReturnPanel,
    job: Job,
    config: &BacktestConfig,
    rows: &[usize],
    frm: &HashMap<FrmKey, &WindowResult>,
) -> Result<StrategyReport, BacktestError> {
    let t = panel.len();
    let inst = panel.institution_returns();
    let mut dates = Vec::new();
    let mut daily = Vec::new();
    let mut rebalances = Vec::with_capacity(rows.len());
    for (k, &row) in rows.iter().enumerate() {
        let (columns, weights) = allocate(panel, row, &job, config, frm)?;
        let end = rows.get(k + 1).copied().unwrap_or(t - 1);
        for r in (row + 1)..=end {
            let ret: f64 = columns
                .iter()
                .zip(&weights)
                .map(|(&c, &w)| {
                    let x = inst[[r, c]];
                    w * match config.return_mode {
                        ReturnMode::Simple => x.exp_m1(),
                        ReturnMode::Log => x,
                    }
                })
                .sum();
            dates.push(panel.dates[r]);
            daily.push(ret);
        }
        rebalances.push(Rebalance {
            date: panel.dates[row],
            tickers: columns.iter().map(|&c| panel.institutions[c].clone()).collect(),
            weights,
        });
    }
    let cumulative = match config.return_mode {
        ReturnMode::Simple => {
            let mut log_growth = 0.0;
            daily
                .iter()
                .map(|r| {
                    log_growth += f64::ln_1p(*r);
                    log_growth.exp_m1()
                })
                .collect()
        }
        ReturnMode::Log => {
            let mut acc = 0.0;
            daily.iter().map(|r| {
                acc += r;
                acc
            })
            .collect()
        }
    };
    let (mean, std) = mean_std(&daily);
    let effective = rebalances.iter().map(|r| effective_n(&r.weights)).sum::<f64>() / rebalances.len() as f64;
    let name = match job.tau {
        Some(tau) => format!("{}@{}", job.strategy.name(), tau),
        None => job.strategy.name().to_string(),
    };
    Ok(StrategyReport {
        name,
        strategy: job.strategy,
        tau: job.tau,
        mean,
        std,
        sharpe: sharpe(&daily).ok(),
        effective_n: effective,
        dates,
        daily_returns: daily,
        cumulative,
        rebalances,
    })
}

/// Backtest every configured strategy; FRM strategies once per tau, looking up
/// the FRM window that ends on each rebalance date.
pub fn run(panel: &ReturnPanel, frm: &[WindowResult], config: &BacktestConfig) -> Result<BacktestReport, BacktestError> {
    config.validate()?;
    let rows = rebalance_rows(panel.len(), config);
    if rows.len() < 2 {
        return Err(BacktestError::InsufficientData(format!(
            "{} rows give {} rebalance dates with window {} and period {}, need 2",
            panel.len(),
            rows.len(),
            config.estimation_window,
            config.rebalance_days
        )));
    }
    let lookup = frm_lookup(frm);
    let mut jobs = Vec::new();
    for &strategy in &config.strategies {
        if strategy.uses_frm() {
            jobs.extend(config.taus.iter().map(|&tau| Job { strategy, tau: Some(tau) }));
        } else {
            jobs.push(Job { strategy, tau: None });
        }
    }
    let strategies = jobs
        .into_par_iter()
        .map(|job| run_job(panel, job, config, &rows, &lookup))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BacktestReport { rebalance_days: config.rebalance_days, return_mode: config.return_mode, strategies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn panel(returns: Array2<f64>) -> ReturnPanel {
        let (t, j) = returns.dim();
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        ReturnPanel {
            dates: (0..t).map(|k| start + chrono::Days::new(k as u64)).collect(),
            institutions: (0..j).map(|k| format!("T{k}")).collect(),
            macros: vec![],
            returns,
            market_caps: Array2::from_shape_fn((t, j), |(_, c)| 10.0 + c as f64),
        }
    }

    fn noise(seed: u64, t: usize, j: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0005, 0.01).unwrap();
        Array2::from_shape_fn((t, j), |_| normal.sample(&mut rng))
    }

    fn config(strategies: Vec<Strategy>, universe: usize) -> BacktestConfig {
        BacktestConfig {
            rebalance_days: 10,
            strategies,
            taus: vec![],
            estimation_window: 20,
            universe,
            ..BacktestConfig::default()
        }
    }

    #[test]
    fn effective_n_cases() {
        assert_eq!(effective_n(&[0.04; 25]), 25.0);
        assert_eq!(effective_n(&[1.0 / 7.0; 7]), 7.0);
        assert!((effective_n(&[0.7, 0.2, 0.1]) - 1.0 / 0.54).abs() < 1e-12);
        assert_eq!(effective_n(&[1.0, 0.0, 0.0]), 1.0);
        assert_eq!(effective_n(&[0.5, 0.5]), 2.0);
    }

    #[test]
    fn sharpe_cases() {
        assert!(matches!(sharpe(&[0.01; 5]), Err(BacktestError::ZeroVolatility)));
        assert_eq!(sharpe(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 0.0);
        assert!((sharpe(&[2.0, 4.0]).unwrap() - 3.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_asset_passes_returns_through() {
        let p = panel(noise(1, 80, 1));
        let cfg = BacktestConfig { return_mode: ReturnMode::Log, ..config(vec![Strategy::MinVar, Strategy::Ivp, Strategy::Hrp], 1) };
        let rep = run(&p, &[], &cfg).unwrap();
        for s in &rep.strategies {
            assert_eq!(s.daily_returns.len(), 80 - 20);
            for (k, r) in s.daily_returns.iter().enumerate() {
                assert_eq!(*r, p.returns[[20 + k, 0]]);
            }
            assert_eq!(s.effective_n, 1.0);
        }
    }

    #[test]
    fn identical_assets_give_identical_portfolios() {
        let one = noise(2, 90, 1);
        let both = Array2::from_shape_fn((90, 2), |(t, _)| one[[t, 0]]);
        let mut p = panel(both);
        // distinct caps so the selection is well defined
        p.market_caps[[0, 1]] = 5.0;
        let cfg = config(vec![Strategy::MinVar, Strategy::Ivp], 2);
        let rep = run(&p, &[], &cfg).unwrap();
        for s in &rep.strategies {
            for (k, r) in s.daily_returns.iter().enumerate() {
                assert!((r - one[[20 + k, 0]].exp_m1()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn equal_weight_override_matches_direct_average() {
        let p = panel(noise(3, 120, 5));
        let cfg = BacktestConfig { equal_weight_override: true, ..config(vec![Strategy::Hrp], 5) };
        let rep = run(&p, &[], &cfg).unwrap();
        let avg: Vec<f64> = (20..120).map(|t| p.returns.row(t).iter().map(|x| x.exp_m1() * 0.2).sum()).collect();
        let n = avg.len() as f64;
        let mean = avg.iter().sum::<f64>() / n;
        let std = (avg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let s = &rep.strategies[0];
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - std).abs() < 1e-12);
        assert!((s.effective_n - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_log_growth_identity() {
        let p = panel(noise(4, 100, 4));
        let rep = run(&p, &[], &config(vec![Strategy::Hrp, Strategy::MinVar], 4)).unwrap();
        for s in &rep.strategies {
            let growth: f64 = s.daily_returns.iter().map(|r| r.ln_1p()).sum();
            assert!((s.cumulative.last().unwrap().ln_1p() - growth).abs() < 1e-12);
        }
    }

    #[test]
    fn frm_strategies_need_their_window() {
        let p = panel(noise(5, 60, 3));
        let cfg = BacktestConfig { taus: vec![0.05], ..config(vec![Strategy::InvLambda], 3) };
        assert!(matches!(run(&p, &[], &cfg), Err(BacktestError::MissingFrmWindow { .. })));
    }

    #[test]
    fn too_short_panel_is_rejected() {
        let p = panel(noise(6, 25, 3));
        assert!(matches!(run(&p, &[], &config(vec![Strategy::Ivp], 3)), Err(BacktestError::InsufficientData(_))));
    }
}
