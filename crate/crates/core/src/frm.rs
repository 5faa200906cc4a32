//! Rolling FRM pipeline: per window and institution, a GACV-tuned penalised
//! quantile regression on the other selected institutions and lagged macros.

use chrono::NaiveDate;
use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{select_top_j, windows, DataError, ReturnPanel, WindowSpec};
use crate::quantile::{select_gacv, QuantileError, ACTIVE_TOL};

#[derive(Debug, Error)]
pub enum FrmError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("window {window}, institution `{ticker}`: {source}")]
    Solver {
        window: usize,
        ticker: String,
        #[source]
        source: QuantileError,
    },
    #[error("no windows to aggregate")]
    Empty,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WindowResult {
    pub window_index: usize,
    /// Last date of the window.
    pub date: NaiveDate,
    pub tau: f64,
    pub tickers: Vec<String>,
    pub macros: Vec<String>,
    pub lambdas: Vec<f64>,
    /// Signed coefficients, row j regressed on column i. Zero diagonal.
    pub adjacency: Array2<f64>,
    /// J x M signed macro coefficients.
    pub macro_influence: Array2<f64>,
    pub active_counts: Vec<usize>,
    /// Market caps on the window's first date, used for the selection.
    pub caps: Vec<f64>,
}

impl WindowResult {
    pub fn abs_adjacency(&self) -> Array2<f64> {
        self.adjacency.mapv(f64::abs)
    }

    pub fn frm(&self) -> f64 {
        mean(&self.lambdas)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrmSeries {
    pub tau: f64,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LambdaSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub argmax_ticker: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RiskIndices {
    pub tickers: Vec<String>,
    pub srr: Vec<f64>,
    pub sre: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MacroShare {
    pub dates: Vec<NaiveDate>,
    pub macros: Vec<String>,
    /// windows x M, trailing moving average of the raw shares
    pub shares: Array2<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

struct InstitutionFit {
    lambda: f64,
    beta: Array1<f64>,
}

/// Regress institution `selected[pos]` over `rows` on the other selected
/// institutions (in `selected` order) followed by the lagged macros.
fn fit_institution(
    panel: &ReturnPanel,
    s: usize,
    selected: &[usize],
    pos: usize,
    spec: &WindowSpec,
    grid_size: usize,
) -> Result<InstitutionFit, FrmError> {
    let rows = s..s + spec.length_n;
    let inst = panel.institution_returns();
    let macros = panel.macro_values();
    let m = macros.ncols();
    let others: Vec<usize> = selected.iter().enumerate().filter(|&(k, _)| k != pos).map(|(_, &c)| c).collect();
    let y = inst.slice(s![rows.clone(), selected[pos]]).to_owned();
    let mut x = Array2::<f64>::zeros((spec.length_n, others.len() + m));
    for (k, &c) in others.iter().enumerate() {
        x.column_mut(k).assign(&inst.slice(s![rows.clone(), c]));
    }
    x.slice_mut(s![.., others.len()..]).assign(&macros.slice(s![rows, ..]));
    let res = select_gacv(y.view(), x.view(), spec.tau, grid_size).map_err(|source| FrmError::Solver {
        window: s,
        ticker: panel.institutions[selected[pos]].clone(),
        source,
    })?;
    Ok(InstitutionFit { lambda: res.selected_lambda, beta: res.selected_fit.beta })
}

fn assemble(
    panel: &ReturnPanel,
    s: usize,
    selected: &[usize],
    spec: &WindowSpec,
    fits: Vec<InstitutionFit>,
) -> WindowResult {
    let j = selected.len();
    let m = panel.macros.len();
    let mut adjacency = Array2::zeros((j, j));
    let mut macro_influence = Array2::zeros((j, m));
    let mut lambdas = Vec::with_capacity(j);
    let mut active_counts = Vec::with_capacity(j);
    for (row, fit) in fits.into_iter().enumerate() {
        let cols = (0..j).filter(|&c| c != row);
        for (k, c) in cols.enumerate() {
            adjacency[[row, c]] = fit.beta[k];
        }
        for k in 0..m {
            macro_influence[[row, k]] = fit.beta[j - 1 + k];
        }
        active_counts.push(fit.beta.iter().filter(|b| b.abs() > ACTIVE_TOL).count());
        lambdas.push(fit.lambda);
    }
    WindowResult {
        window_index: s,
        date: panel.dates[s + spec.length_n - 1],
        tau: spec.tau,
        tickers: selected.iter().map(|&c| panel.institutions[c].clone()).collect(),
        macros: panel.macros.clone(),
        lambdas,
        adjacency,
        macro_influence,
        active_counts,
        caps: selected.iter().map(|&c| panel.market_caps[[s, c]]).collect(),
    }
}

/// Fit every selected institution of window `s`.
pub fn fit_window(panel: &ReturnPanel, s: usize, spec: &WindowSpec, grid_size: usize) -> Result<WindowResult, FrmError> {
    spec.validate()?;
    let selected = select_top_j(panel, s, spec)?;
    let fits = (0..selected.len())
        .into_par_iter()
        .map(|pos| fit_institution(panel, s, &selected, pos, spec, grid_size))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(panel, s, &selected, spec, fits))
}

/// All `T - n + 1` windows. Work is spread over (window, institution) pairs;
/// the output order does not depend on scheduling.
pub fn run(panel: &ReturnPanel, spec: &WindowSpec, grid_size: usize) -> Result<Vec<WindowResult>, FrmError> {
    spec.validate()?;
    if panel.len() < spec.length_n {
        return Err(DataError::InvalidSpec(format!(
            "panel has {} rows, window needs {}",
            panel.len(),
            spec.length_n
        ))
        .into());
    }
    let selections: Vec<(usize, Vec<usize>)> = windows(panel, spec)
        .map(|(s, _)| select_top_j(panel, s, spec).map(|sel| (s, sel)))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, usize)> = selections
        .iter()
        .enumerate()
        .flat_map(|(w, (_, sel))| (0..sel.len()).map(move |pos| (w, pos)))
        .collect();
    let mut fits = pairs
        .par_iter()
        .map(|&(w, pos)| {
            let (s, sel) = &selections[w];
            fit_institution(panel, *s, sel, pos, spec, grid_size)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();
    Ok(selections
        .iter()
        .map(|(s, sel)| {
            let window_fits: Vec<InstitutionFit> = fits.by_ref().take(sel.len()).collect();
            assemble(panel, *s, sel, spec, window_fits)
        })
        .collect())
}

/// Mean lambda per window.
pub fn frm_index(results: &[WindowResult]) -> Result<FrmSeries, FrmError> {
    let first = results.first().ok_or(FrmError::Empty)?;
    Ok(FrmSeries {
        tau: first.tau,
        dates: results.iter().map(|r| r.date).collect(),
        values: results.iter().map(WindowResult::frm).collect(),
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn lambda_distribution(result: &WindowResult) -> LambdaSummary {
    let mut sorted = result.lambdas.clone();
    sorted.sort_by(f64::total_cmp);
    let max = sorted.last().copied().unwrap_or(0.0);
    let argmax_ticker = result
        .tickers
        .iter()
        .zip(&result.lambdas)
        .filter(|(_, &l)| l == max)
        .map(|(t, _)| t)
        .min()
        .cloned()
        .unwrap_or_default();
    if sorted.is_empty() {
        return LambdaSummary { min: 0.0, q1: 0.0, median: 0.0, q3: 0.0, max, mean: 0.0, argmax_ticker };
    }
    LambdaSummary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max,
        mean: mean(&result.lambdas),
        argmax_ticker,
    }
}

/// Receiver and emitter indices from an adjacency matrix (row receives from
/// column) and caps.
pub fn risk_indices_from(adjacency: &Array2<f64>, caps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let j = caps.len();
    let mut srr = vec![0.0; j];
    let mut sre = vec![0.0; j];
    for a in 0..j {
        let mut inc = 0.0;
        let mut out = 0.0;
        for i in 0..j {
            let r = adjacency[[a, i]];
            if r != 0.0 {
                inc += r.abs() * caps[i];
            }
            let e = adjacency[[i, a]];
            if e != 0.0 {
                out += e.abs() * caps[i];
            }
        }
        srr[a] = caps[a] * inc;
        sre[a] = caps[a] * out;
    }
    (srr, sre)
}

pub fn risk_indices(result: &WindowResult, caps: &[f64]) -> RiskIndices {
    let (srr, sre) = risk_indices_from(&result.adjacency, caps);
    RiskIndices { tickers: result.tickers.clone(), srr, sre }
}

/// Share of institutions loading on each macro, smoothed with a trailing
/// moving average over `smoothing` windows (fewer at the start).
pub fn macro_share(results: &[WindowResult], smoothing: usize) -> MacroShare {
    let smoothing = smoothing.max(1);
    let macros = results.first().map(|r| r.macros.clone()).unwrap_or_default();
    let m = macros.len();
    let raw = Array2::from_shape_fn((results.len(), m), |(w, k)| {
        let r = &results[w];
        let j = r.macro_influence.nrows();
        if j == 0 {
            return 0.0;
        }
        let hits = r.macro_influence.column(k).iter().filter(|b| b.abs() > ACTIVE_TOL).count();
        hits as f64 / j as f64
    });
    let shares = Array2::from_shape_fn(raw.dim(), |(w, k)| {
        let lo = (w + 1).saturating_sub(smoothing);
        raw.slice(s![lo..=w, k]).sum() / (w + 1 - lo) as f64
    });
    MacroShare { dates: results.iter().map(|r| r.date).collect(), macros, shares }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn window(tickers: &[&str], lambdas: Vec<f64>, adjacency: Array2<f64>) -> WindowResult {
        let j = tickers.len();
        WindowResult {
            window_index: 0,
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            tau: 0.05,
            tickers: tickers.iter().map(|t| t.to_string()).collect(),
            macros: vec![],
            lambdas,
            adjacency,
            macro_influence: Array2::zeros((j, 0)),
            active_counts: vec![0; j],
            caps: vec![1.0; j],
        }
    }

    fn panel_from(returns: Array2<f64>, caps: Vec<f64>) -> ReturnPanel {
        let (t, j) = returns.dim();
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        ReturnPanel {
            dates: (0..t).map(|k| start + chrono::Days::new(k as u64)).collect(),
            institutions: (0..j).map(|k| format!("I{k:02}")).collect(),
            macros: vec![],
            returns,
            market_caps: Array2::from_shape_fn((t, j), |(_, c)| caps[c]),
        }
    }

    #[test]
    fn frm_is_mean_of_lambdas() {
        let r = window(&["a", "b", "c"], vec![0.1, 0.2, 0.3], Array2::zeros((3, 3)));
        assert!((frm_index(&[r]).unwrap().values[0] - 0.2).abs() < 1e-15);
        let z = window(&["a", "b"], vec![0.0, 0.0], Array2::zeros((2, 2)));
        assert_eq!(frm_index(&[z]).unwrap().values[0], 0.0);
        assert!(matches!(frm_index(&[]), Err(FrmError::Empty)));
    }

    #[test]
    fn distribution_summary() {
        let r = window(&["a", "b", "c", "d", "e"], vec![1.0, 2.0, 3.0, 4.0, 5.0], Array2::zeros((5, 5)));
        let s = lambda_distribution(&r);
        assert_eq!((s.median, s.mean, s.min, s.max), (3.0, 3.0, 1.0, 5.0));
        assert_eq!(s.argmax_ticker, "e");
        let r = window(&["z", "b", "y"], vec![2.0, 2.0, 2.0], Array2::zeros((3, 3)));
        let s = lambda_distribution(&r);
        assert_eq!((s.min, s.max, s.mean), (2.0, 2.0, 2.0));
        assert_eq!(s.argmax_ticker, "b");
    }

    #[test]
    fn risk_index_single_edge() {
        let a = array![[0.0, 0.5], [0.0, 0.0]];
        let (srr, sre) = risk_indices_from(&a, &[2.0, 3.0]);
        assert_eq!(srr, vec![3.0, 0.0]);
        assert_eq!(sre, vec![0.0, 3.0]);
        let (srr2, sre2) = risk_indices_from(&a, &[4.0, 6.0]);
        assert_eq!(srr2, vec![12.0, 0.0]);
        assert_eq!(sre2, vec![0.0, 12.0]);
        let (z1, z2) = risk_indices_from(&Array2::zeros((2, 2)), &[2.0, 3.0]);
        assert!(z1.iter().chain(&z2).all(|&v| v == 0.0));
    }

    #[test]
    fn risk_bookkeeping_identity_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a = Array2::from_shape_fn((6, 6), |(r, c)| {
            let v: f64 = normal.sample(&mut rng);
            if r == c || v.abs() < 0.7 { 0.0 } else { v }
        });
        let caps: Vec<f64> = (0..6).map(|k| 1.0 + k as f64 * 0.37).collect();
        let (srr, _) = risk_indices_from(&a, &caps);
        let (_, sre_t) = risk_indices_from(&a.t().to_owned(), &caps);
        assert_eq!(srr.iter().sum::<f64>(), sre_t.iter().sum::<f64>());
    }

    #[test]
    fn macro_share_smoothing() {
        let mut a = window(&["a", "b"], vec![0.0; 2], Array2::zeros((2, 2)));
        a.macros = vec!["m1".into(), "m2".into()];
        a.macro_influence = array![[0.3, 0.0], [-0.1, 0.0]];
        let mut b = a.clone();
        b.macro_influence = array![[0.0, 0.0], [0.2, 0.0]];
        let raw = macro_share(&[a.clone(), b.clone()], 1);
        assert_eq!(raw.shares, array![[1.0, 0.0], [0.5, 0.0]]);
        let smooth = macro_share(&[a, b], 7);
        assert_eq!(smooth.shares, array![[1.0, 0.0], [0.75, 0.0]]);
    }

    #[test]
    fn planted_copy_links_both_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let base: Vec<f64> = (0..63).map(|_| normal.sample(&mut rng)).collect();
        let returns = Array2::from_shape_fn((63, 2), |(t, _)| base[t]);
        let panel = panel_from(returns, vec![2.0, 1.0]);
        let spec = WindowSpec::new(63, 2, 0.05).unwrap();
        let r = fit_window(&panel, 0, &spec, 50).unwrap();
        assert!((r.adjacency[[0, 1]] - 1.0).abs() < 0.05, "{}", r.adjacency);
        assert!((r.adjacency[[1, 0]] - 1.0).abs() < 0.05, "{}", r.adjacency);
        assert_eq!(r.adjacency[[0, 0]], 0.0);
        assert_eq!(r.adjacency[[1, 1]], 0.0);
    }

    #[test]
    fn noise_gives_sparse_rows_and_run_matches_fit_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let returns = Array2::from_shape_fn((70, 4), |_| normal.sample(&mut rng));
        let panel = panel_from(returns, vec![4.0, 3.0, 2.0, 1.0]);
        let spec = WindowSpec::new(63, 4, 0.05).unwrap();
        let all = run(&panel, &spec, 20).unwrap();
        assert_eq!(all.len(), 8);
        let single = fit_window(&panel, 5, &spec, 20).unwrap();
        assert_eq!(all[5], single);
        for r in &all {
            for k in 0..4 {
                assert_eq!(r.adjacency[[k, k]], 0.0);
                let row_nz = r.adjacency.row(k).iter().filter(|b| b.abs() > ACTIVE_TOL).count();
                assert_eq!(row_nz, r.active_counts[k]);
            }
            assert!(r.lambdas.iter().all(|&l| l >= 0.0));
        }
    }
}
