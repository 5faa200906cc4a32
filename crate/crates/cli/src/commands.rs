use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use frm_core::backtest::{self, BacktestConfig, BacktestError, BacktestReport, ReturnMode, LAMBDA_FLOOR};
use frm_core::covar::{estimate_covar, CoVarResult};
use frm_core::frm::{self, FrmSeries, LambdaSummary, WindowResult};
use frm_core::io::{self, date, num, CentralityRow, Table};
use frm_core::market_data::{attach_market_caps, build_panel, load_csv, select_top_j, CsvKind, ReturnPanel, WindowSpec};
use frm_core::network::{self, Degrees, DependencyGraph, EigenCentrality};
use frm_core::portfolio::{
    hrp_from_cov, inv_lambda_weights, ivp_weights, minvar_weights, uphrp_with_dendrogram, AllocationResult, CovMatrix,
    Dendrogram, FrmAdjacency, Strategy,
};
use frm_core::synth::{self, SynthConfig};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::RunConfig;
use crate::error::CliError;
use crate::svg;

/// Files written by a command, in write order.
pub type Written = Vec<PathBuf>;

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::usage(format!("--{flag} is required")))
}

/// Prices with caps attached plus the macro series; without `--macros` the
/// panel has no macro regressors.
pub fn load_panel(cfg: &RunConfig) -> Result<ReturnPanel, CliError> {
    let mut series = load_csv(required(&cfg.prices, "prices")?, CsvKind::Prices)?;
    let caps = load_csv(required(&cfg.caps, "caps")?, CsvKind::MarketCaps)?;
    attach_market_caps(&mut series, &caps);
    let mut names = Vec::new();
    if let Some(path) = &cfg.macros {
        let macros = load_csv(path, CsvKind::Macros)?;
        names = macros.iter().map(|s| s.ticker.clone()).collect();
        series.extend(macros);
    }
    Ok(build_panel(&series, &names)?)
}

pub fn synth(cfg: &RunConfig) -> Result<Written, CliError> {
    let config = SynthConfig {
        seed: cfg.seed,
        institutions: cfg.institutions,
        days: cfg.days,
        vol_factor: cfg.vol_factor,
        ..SynthConfig::default()
    };
    let data = synth::generate(&config);
    io::write_synth(&cfg.out, &data)?;
    let (lo, hi) = config.regime();
    // regime bounds as dates of the first and last return inside it
    let meta = json!({
        "seed": config.seed,
        "institutions": config.institutions,
        "days": config.days,
        "vol_factor": config.vol_factor,
        "regime_start": date(data.dates[lo + 1]),
        "regime_end": date(data.dates[hi]),
        "tickers": data.tickers,
        "macros": data.macro_names,
    });
    let meta_path = cfg.out.join("synth.json");
    io::write_json(&meta_path, &meta)?;
    Ok(["prices.csv", "caps.csv", "macros.csv"].iter().map(|f| cfg.out.join(f)).chain([meta_path]).collect())
}

struct Centralities {
    date: NaiveDate,
    graph: DependencyGraph,
    eigen: EigenCentrality,
    closeness: Vec<f64>,
    betweenness: Vec<f64>,
    degrees: Degrees,
}

fn centralities(windows: &[WindowResult]) -> Vec<Centralities> {
    windows
        .par_iter()
        .map(|w| {
            let graph = DependencyGraph::from_adjacency(w.tickers.clone(), &w.adjacency);
            Centralities {
                date: w.date,
                eigen: network::eigenvector_centrality(&graph),
                closeness: network::closeness(&graph),
                betweenness: network::betweenness(&graph),
                degrees: network::degrees(&graph),
                graph,
            }
        })
        .collect()
}

fn write_centralities(path: &Path, rows: &[Centralities]) -> Result<(), CliError> {
    let rows: Vec<CentralityRow<'_>> = rows
        .iter()
        .map(|c| CentralityRow {
            date: c.date,
            graph: &c.graph,
            eigen: &c.eigen,
            closeness: &c.closeness,
            betweenness: &c.betweenness,
            degrees: &c.degrees,
        })
        .collect();
    Ok(io::write_centrality(path, &rows)?)
}

fn write_lambda_summary(path: &Path, windows: &[WindowResult]) -> Result<(), CliError> {
    let mut t = Table::create(path, &["date", "min", "q1", "median", "q3", "max", "mean", "argmax_ticker"])?;
    for w in windows {
        let s: LambdaSummary = frm::lambda_distribution(w);
        t.row([date(w.date), num(s.min), num(s.q1), num(s.median), num(s.q3), num(s.max), num(s.mean), s.argmax_ticker])?;
    }
    Ok(t.finish()?)
}

pub fn frm(cfg: &RunConfig) -> Result<Written, CliError> {
    let panel = load_panel(cfg)?;
    let mut files = Vec::new();
    for &tau in &cfg.taus {
        let spec = WindowSpec::new(cfg.window, cfg.top, tau)?;
        let windows = frm::run(&panel, &spec, cfg.grid)?;
        let series = frm::frm_index(&windows)?;

        let path = cfg.out.join(io::frm_file(tau));
        io::write_frm_series(&path, &series)?;
        files.push(path);
        let path = cfg.out.join(io::lambda_file(tau));
        io::write_lambdas(&path, &windows)?;
        files.push(path);
        for w in &windows {
            let path = cfg.out.join(io::adjacency_file(tau, w.date));
            io::write_adjacency(&path, w)?;
            files.push(path);
        }
        let path = cfg.out.join(format!("lambda_summary_{tau}.csv"));
        write_lambda_summary(&path, &windows)?;
        files.push(path);
        let path = cfg.out.join(format!("macro_share_{tau}.csv"));
        io::write_macro_share(&path, &frm::macro_share(&windows, cfg.smoothing))?;
        files.push(path);
        let risk: Vec<_> = windows.iter().map(|w| (w.date, frm::risk_indices(w, &w.caps))).collect();
        let path = cfg.out.join(format!("risk_{tau}.csv"));
        io::write_risk(&path, &risk)?;
        files.push(path);
        let path = cfg.out.join(format!("centrality_{tau}.csv"));
        write_centralities(&path, &centralities(&windows))?;
        files.push(path);
    }
    Ok(files)
}

pub fn network(cfg: &RunConfig) -> Result<Written, CliError> {
    let mut files = Vec::new();
    for &tau in &cfg.taus {
        let windows = io::load_frm_windows(&cfg.frm_dir, tau)?;
        let last = windows.last().ok_or_else(|| CliError::data("Empty", format!("no FRM windows for tau {tau}")))?;
        let at = cfg.date.unwrap_or(last.date);
        let w = windows
            .iter()
            .find(|w| w.date == at)
            .ok_or(BacktestError::MissingFrmWindow { date: at, tau })?;
        let graph = DependencyGraph::from_adjacency(w.tickers.clone(), &w.adjacency);
        let path = cfg.out.join(format!("edges_{tau}_{}.csv", date(at)));
        io::write_edges(&path, &graph)?;
        files.push(path);
        let path = cfg.out.join(format!("centrality_{tau}.csv"));
        write_centralities(&path, &centralities(&windows))?;
        files.push(path);
    }
    Ok(files)
}

#[derive(Serialize)]
struct CoVarSummary<'a> {
    target: &'a str,
    condition: &'a str,
    #[serde(flatten)]
    result: &'a CoVarResult,
}

pub fn covar(cfg: &RunConfig) -> Result<Written, CliError> {
    let panel = load_panel(cfg)?;
    let inst = panel.institution_returns();
    let macros = panel.macro_values();
    let lookup = |t: &str| {
        panel
            .institution_index(t)
            .ok_or_else(|| CliError::data("UnknownTicker", format!("ticker `{t}` not in the panel")))
    };
    // SYSTEM is the equal-weight average of all institutions
    let (target_idx, rj): (Option<usize>, Array1<f64>) = if cfg.target.eq_ignore_ascii_case("SYSTEM") {
        (None, inst.mean_axis(Axis(1)).expect("panel has institutions"))
    } else {
        let j = lookup(&cfg.target)?;
        (Some(j), inst.column(j).to_owned())
    };
    let target = target_idx.map_or("SYSTEM", |j| panel.institutions[j].as_str());
    let conditions: Vec<usize> = match &cfg.condition {
        Some(c) => vec![lookup(c)?],
        None => (0..panel.num_institutions()).filter(|&i| Some(i) != target_idx).collect(),
    };

    let mut files = Vec::new();
    for &tau in &cfg.taus {
        let results = conditions
            .par_iter()
            .map(|&i| estimate_covar(rj.view(), inst.column(i), macros, tau))
            .collect::<Result<Vec<_>, _>>()?;
        let mut summary = Vec::with_capacity(results.len());
        for (&i, res) in conditions.iter().zip(&results) {
            let condition = panel.institutions[i].as_str();
            let path = cfg.out.join(format!("covar_{target}_{condition}_{tau}.csv"));
            io::write_covar(&path, &panel.dates, res)?;
            files.push(path);
            summary.push(CoVarSummary { target, condition, result: res });
        }
        let path = cfg.out.join(format!("covar_summary_{tau}.json"));
        io::write_json(&path, &summary)?;
        files.push(path);
    }
    Ok(files)
}

fn backtest_config(cfg: &RunConfig) -> BacktestConfig {
    BacktestConfig {
        rebalance_days: cfg.rebalance,
        strategies: cfg.strategies.clone(),
        taus: cfg.taus.clone(),
        estimation_window: cfg.window,
        universe: cfg.top,
        long_only: cfg.long_only,
        return_mode: if cfg.log_returns { ReturnMode::Log } else { ReturnMode::Simple },
        equal_weight_override: false,
    }
}

/// FRM windows for every tau whose lambda file exists. A tau without outputs
/// contributes nothing, so strategies needing it fail with MissingFrmWindow.
fn frm_windows(cfg: &RunConfig) -> Result<Vec<WindowResult>, CliError> {
    let mut out = Vec::new();
    if !cfg.strategies.iter().any(|s| s.uses_frm()) {
        return Ok(out);
    }
    for &tau in &cfg.taus {
        if cfg.frm_dir.join(io::lambda_file(tau)).is_file() {
            out.extend(io::load_frm_windows(&cfg.frm_dir, tau)?);
        }
    }
    Ok(out)
}

fn write_performance(path: &Path, report: &BacktestReport) -> Result<(), CliError> {
    let mut t = Table::create(path, &["strategy", "mean", "std", "sharpe", "effective_n", "cumulative"])?;
    for s in &report.strategies {
        t.row([
            s.name.clone(),
            num(s.mean),
            num(s.std),
            s.sharpe.map(num).unwrap_or_default(),
            num(s.effective_n),
            s.cumulative.last().copied().map(num).unwrap_or_default(),
        ])?;
    }
    Ok(t.finish()?)
}

fn run_backtest(cfg: &RunConfig, panel: &ReturnPanel, windows: &[WindowResult]) -> Result<Written, CliError> {
    let report = backtest::run(panel, windows, &backtest_config(cfg))?;
    let files = ["backtest.json", "weights.csv", "cumulative.csv", "performance.csv"].map(|f| cfg.out.join(f));
    io::write_json(&files[0], &report)?;
    io::write_weights(&files[1], &report)?;
    io::write_cumulative(&files[2], &report)?;
    write_performance(&files[3], &report)?;
    Ok(files.to_vec())
}

pub fn backtest(cfg: &RunConfig) -> Result<Written, CliError> {
    let panel = load_panel(cfg)?;
    let windows = frm_windows(cfg)?;
    run_backtest(cfg, &panel, &windows)
}

fn allocation_name(strategy: Strategy, tau: Option<f64>) -> String {
    match tau {
        Some(t) => format!("{}@{t}", strategy.name()),
        None => strategy.name().to_string(),
    }
}

/// Allocation on one date: return-based strategies use the trailing window
/// ending on that row, FRM strategies the window ending on that date.
fn allocate_at(
    cfg: &RunConfig,
    panel: &ReturnPanel,
    row: usize,
    windows: &[WindowResult],
    strategy: Strategy,
    tau: Option<f64>,
) -> Result<(AllocationResult, Option<Dendrogram>), CliError> {
    let at = panel.dates[row];
    let wrap = |source| BacktestError::Portfolio { date: at, strategy, source };
    if let Some(tau) = tau {
        let w = windows
            .iter()
            .find(|w| w.date == at && w.tau == tau)
            .ok_or(BacktestError::MissingFrmWindow { date: at, tau })?;
        let lambdas: Vec<f64> = w.lambdas.iter().map(|l| l.max(LAMBDA_FLOOR)).collect();
        return Ok(match strategy {
            Strategy::InvLambda => (inv_lambda_weights(w.tickers.clone(), &lambdas).map_err(wrap)?, None),
            _ => {
                let mut adj = FrmAdjacency::from_window(w);
                for (k, &l) in lambdas.iter().enumerate() {
                    adj.a_tilde[[k, k]] = l;
                }
                let (a, d) = uphrp_with_dendrogram(&adj).map_err(wrap)?;
                (a, Some(d))
            }
        });
    }
    let start = row + 1 - cfg.window;
    let spec = WindowSpec { length_n: cfg.window, top_j: cfg.top, tau: 0.5 };
    let columns = select_top_j(panel, start, &spec)?;
    let inst = panel.institution_returns();
    let returns = Array2::from_shape_fn((cfg.window, columns.len()), |(r, c)| inst[[start + r, columns[c]]]);
    let tickers = columns.iter().map(|&c| panel.institutions[c].clone()).collect();
    let cov = CovMatrix::sample(tickers, returns.view()).map_err(wrap)?;
    Ok(match strategy {
        Strategy::MinVar => (minvar_weights(&cov, cfg.long_only).map_err(wrap)?, None),
        Strategy::Ivp => (ivp_weights(&cov).map_err(wrap)?, None),
        _ => {
            let (a, d) = hrp_from_cov(&cov).map_err(wrap)?;
            (a, Some(d))
        }
    })
}

pub fn portfolio(cfg: &RunConfig) -> Result<Written, CliError> {
    let panel = load_panel(cfg)?;
    let windows = frm_windows(cfg)?;
    let at = cfg.date.unwrap_or(*panel.dates.last().expect("panel is nonempty"));
    let row = panel
        .dates
        .iter()
        .position(|&d| d == at)
        .ok_or_else(|| CliError::data("UnknownDate", format!("{} is not a panel date", date(at))))?;
    if row + 1 < cfg.window {
        return Err(CliError::data(
            "InsufficientData",
            format!("{} has {} rows of history, window needs {}", date(at), row + 1, cfg.window),
        ));
    }

    let mut jobs = Vec::new();
    for &s in &cfg.strategies {
        if s.uses_frm() {
            jobs.extend(cfg.taus.iter().map(|&t| (s, Some(t))));
        } else {
            jobs.push((s, None));
        }
    }
    let allocations = jobs
        .par_iter()
        .map(|&(s, tau)| allocate_at(cfg, &panel, row, &windows, s, tau))
        .collect::<Result<Vec<_>, _>>()?;

    let mut files = Vec::new();
    let path = cfg.out.join("allocation.csv");
    let mut t = Table::create(&path, &["date", "strategy", "ticker", "weight"])?;
    for (&(s, tau), (alloc, _)) in jobs.iter().zip(&allocations) {
        for (ticker, w) in alloc.tickers.iter().zip(&alloc.weights) {
            t.row([date(at), allocation_name(s, tau), ticker.clone(), num(*w)])?;
        }
    }
    t.finish()?;
    files.push(path);
    for (&(s, tau), (alloc, dend)) in jobs.iter().zip(&allocations) {
        let Some(dend) = dend else { continue };
        let name = allocation_name(s, tau);
        let path = cfg.out.join(format!("dendrogram_{name}.json"));
        let doc = json!({
            "strategy": name,
            "date": date(at),
            "leaf_order": dend.leaf_order.iter().map(|&k| &alloc.tickers[k]).collect::<Vec<_>>(),
            "diagnostics": alloc.diagnostics,
            "tree": dend.to_json(&alloc.tickers),
        });
        io::write_json(&path, &doc)?;
        files.push(path);
    }
    files.extend(run_backtest(cfg, &panel, &windows)?);
    Ok(files)
}

#[derive(Serialize)]
struct FrmStats {
    tau: f64,
    windows: usize,
    first_date: String,
    last_date: String,
    mean: f64,
    min: f64,
    max: f64,
    max_date: String,
    last: f64,
}

fn frm_stats(s: &FrmSeries) -> Option<FrmStats> {
    let n = s.values.len();
    if n == 0 {
        return None;
    }
    let (mut lo, mut hi) = (0, 0);
    for k in 1..n {
        if s.values[k] < s.values[lo] {
            lo = k;
        }
        if s.values[k] > s.values[hi] {
            hi = k;
        }
    }
    Some(FrmStats {
        tau: s.tau,
        windows: n,
        first_date: date(s.dates[0]),
        last_date: date(s.dates[n - 1]),
        mean: s.values.iter().sum::<f64>() / n as f64,
        min: s.values[lo],
        max: s.values[hi],
        max_date: date(s.dates[hi]),
        last: s.values[n - 1],
    })
}

#[derive(Serialize)]
struct StrategyStats<'a> {
    name: &'a str,
    mean: f64,
    std: f64,
    sharpe: Option<f64>,
    effective_n: f64,
    cumulative: Option<f64>,
}

pub fn report(cfg: &RunConfig) -> Result<Written, CliError> {
    let dir = &cfg.frm_dir;
    let mut files = Vec::new();
    let mut frm_rows = Vec::new();
    for &tau in &cfg.taus {
        let path = dir.join(io::frm_file(tau));
        if !path.is_file() {
            continue;
        }
        let series = io::read_frm_series(&path, tau)?;
        if let Some(stats) = frm_stats(&series) {
            frm_rows.push(stats);
        }
        if cfg.svg {
            let lambdas = dir.join(io::lambda_file(tau));
            let bands = if lambdas.is_file() { Some(svg::bands(&io::read_lambdas(&lambdas)?)) } else { None };
            let path = cfg.out.join(format!("frm_{tau}.svg"));
            let text = svg::frm_chart(&series, bands.as_deref());
            std::fs::create_dir_all(&cfg.out)
                .and_then(|_| std::fs::write(&path, text))
                .map_err(|e| CliError::Data {
                    kind: "Io".into(),
                    message: e.to_string(),
                    path: Some(path.display().to_string()),
                })?;
            files.push(path);
        }
    }

    let bt_path = dir.join("backtest.json");
    let backtest: Option<BacktestReport> = if bt_path.is_file() {
        let text = std::fs::read_to_string(&bt_path).map_err(|e| CliError::Data {
            kind: "Io".into(),
            message: e.to_string(),
            path: Some(bt_path.display().to_string()),
        })?;
        Some(serde_json::from_str(&text).map_err(|e| CliError::Data {
            kind: "BadJson".into(),
            message: e.to_string(),
            path: Some(bt_path.display().to_string()),
        })?)
    } else {
        None
    };
    if frm_rows.is_empty() && backtest.is_none() {
        return Err(CliError::Data {
            kind: "NothingToReport".into(),
            message: "no FRM series or backtest report found".into(),
            path: Some(dir.display().to_string()),
        });
    }
    let strategies: Vec<StrategyStats<'_>> = backtest
        .iter()
        .flat_map(|r| &r.strategies)
        .map(|s| StrategyStats {
            name: &s.name,
            mean: s.mean,
            std: s.std,
            sharpe: s.sharpe,
            effective_n: s.effective_n,
            cumulative: s.cumulative.last().copied(),
        })
        .collect();
    let path = cfg.out.join("report.json");
    io::write_json(&path, &json!({ "frm": frm_rows, "strategies": strategies }))?;
    files.push(path);
    Ok(files)
}
