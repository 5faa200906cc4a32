//! CSV and JSON emission of pipeline outputs, plus readers for the files the
//! later stages consume. Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::Array2;
use serde::Serialize;

use crate::backtest::BacktestReport;
use crate::covar::CoVarResult;
use crate::frm::{FrmSeries, MacroShare, RiskIndices, WindowResult};
use crate::market_data::DataError;
use crate::network::{Degrees, DependencyGraph, EigenCentrality};
use crate::quantile::ACTIVE_TOL;
use crate::synth::SynthData;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

pub fn frm_file(tau: f64) -> String {
    format!("frm_{tau}.csv")
}

pub fn lambda_file(tau: f64) -> String {
    format!("lambda_{tau}.csv")
}

pub fn adjacency_file(tau: f64, d: NaiveDate) -> String {
    format!("adj_{tau}_{}.csv", date(d))
}

/// CSV writer that creates parent directories.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, DataError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        writer.write_record(header).map_err(|e| io_err(path, e))?;
        Ok(Table { path: path.to_path_buf(), writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), DataError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| io_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), DataError> {
        self.writer.flush().map_err(|e| io_err(&self.path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `prices.csv`, `caps.csv` and `macros.csv` in the input schemas.
pub fn write_synth(dir: &Path, data: &SynthData) -> Result<(), DataError> {
    let mut prices = Table::create(&dir.join("prices.csv"), &["date", "ticker", "price"])?;
    let mut caps = Table::create(&dir.join("caps.csv"), &["date", "ticker", "market_cap"])?;
    for (t, &d) in data.dates.iter().enumerate() {
        for (k, ticker) in data.tickers.iter().enumerate() {
            prices.row([date(d), ticker.clone(), num(data.prices[k][t])])?;
            caps.row([date(d), ticker.clone(), num(data.caps[k][t])])?;
        }
    }
    prices.finish()?;
    caps.finish()?;
    let mut macros = Table::create(&dir.join("macros.csv"), &["date", "name", "value"])?;
    for (t, &d) in data.dates.iter().enumerate() {
        for (k, name) in data.macro_names.iter().enumerate() {
            macros.row([date(d), name.clone(), num(data.macros[k][t])])?;
        }
    }
    macros.finish()
}

pub fn write_frm_series(path: &Path, series: &FrmSeries) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "frm"])?;
    for (d, v) in series.dates.iter().zip(&series.values) {
        t.row([date(*d), num(*v)])?;
    }
    t.finish()
}

pub fn write_lambdas(path: &Path, results: &[WindowResult]) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "ticker", "lambda"])?;
    for r in results {
        for (ticker, l) in r.tickers.iter().zip(&r.lambdas) {
            t.row([date(r.date), ticker.clone(), num(*l)])?;
        }
    }
    t.finish()
}

/// Every off-diagonal institution pair, then every macro coefficient, with
/// the receiving institution in `row`.
pub fn write_adjacency(path: &Path, r: &WindowResult) -> Result<(), DataError> {
    let mut t = Table::create(path, &["row", "col", "beta"])?;
    for (j, row) in r.tickers.iter().enumerate() {
        for (i, col) in r.tickers.iter().enumerate() {
            if i != j {
                t.row([row.clone(), col.clone(), num(r.adjacency[[j, i]])])?;
            }
        }
        for (k, m) in r.macros.iter().enumerate() {
            t.row([row.clone(), m.clone(), num(r.macro_influence[[j, k]])])?;
        }
    }
    t.finish()
}

pub fn write_macro_share(path: &Path, share: &MacroShare) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "macro", "share"])?;
    for (w, d) in share.dates.iter().enumerate() {
        for (k, m) in share.macros.iter().enumerate() {
            t.row([date(*d), m.clone(), num(share.shares[[w, k]])])?;
        }
    }
    t.finish()
}

pub fn write_risk(path: &Path, rows: &[(NaiveDate, RiskIndices)]) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "ticker", "srr", "sre"])?;
    for (d, r) in rows {
        for (k, ticker) in r.tickers.iter().enumerate() {
            t.row([date(*d), ticker.clone(), num(r.srr[k]), num(r.sre[k])])?;
        }
    }
    t.finish()
}

pub struct CentralityRow<'a> {
    pub date: NaiveDate,
    pub graph: &'a DependencyGraph,
    pub eigen: &'a EigenCentrality,
    pub closeness: &'a [f64],
    pub betweenness: &'a [f64],
    pub degrees: &'a Degrees,
}

pub fn write_centrality(path: &Path, rows: &[CentralityRow<'_>]) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "ticker", "eigen", "closeness", "betweenness", "indeg", "outdeg"])?;
    for r in rows {
        for (k, ticker) in r.graph.nodes.iter().enumerate() {
            t.row([
                date(r.date),
                ticker.clone(),
                num(r.eigen.values[k]),
                num(r.closeness[k]),
                num(r.betweenness[k]),
                r.degrees.indegree[k].to_string(),
                r.degrees.outdegree[k].to_string(),
            ])?;
        }
    }
    t.finish()
}

pub fn write_edges(path: &Path, graph: &DependencyGraph) -> Result<(), DataError> {
    let mut t = Table::create(path, &["from", "to", "weight"])?;
    for e in graph.edges() {
        t.row([graph.nodes[e.from].clone(), graph.nodes[e.to].clone(), num(e.weight)])?;
    }
    t.finish()
}

pub fn write_covar(path: &Path, dates: &[NaiveDate], res: &CoVarResult) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "var_i", "covar_ji"])?;
    for (k, d) in dates.iter().enumerate() {
        t.row([date(*d), num(res.var_i[k]), num(res.covar_ji[k])])?;
    }
    t.finish()
}

pub fn write_weights(path: &Path, report: &BacktestReport) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "strategy", "ticker", "weight"])?;
    for s in &report.strategies {
        for r in &s.rebalances {
            for (ticker, w) in r.tickers.iter().zip(&r.weights) {
                t.row([date(r.date), s.name.clone(), ticker.clone(), num(*w)])?;
            }
        }
    }
    t.finish()
}

pub fn write_cumulative(path: &Path, report: &BacktestReport) -> Result<(), DataError> {
    let mut t = Table::create(path, &["date", "strategy", "cumulative"])?;
    for s in &report.strategies {
        for (d, c) in s.dates.iter().zip(&s.cumulative) {
            t.row([date(*d), s.name.clone(), num(*c)])?;
        }
    }
    t.finish()
}

/// Rows of a headed CSV as string maps keyed by the requested columns.
pub fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<Vec<String>>, DataError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = reader.headers().map_err(|e| io_err(path, e))?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h.trim() == *c).ok_or_else(|| DataError::MissingColumn {
                path: path.display().to_string(),
                column: c.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        rows.push(idx.iter().map(|&i| rec.get(i).unwrap_or("").trim().to_string()).collect());
    }
    Ok(rows)
}

pub fn parse_num(value: &str, row: usize, column: &str) -> Result<f64, DataError> {
    value.parse().map_err(|_| DataError::BadNumber { row, column: column.into(), value: value.into() })
}

pub fn parse_date(value: &str, row: usize, column: &str) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(value, DATE_FORMAT).map_err(|_| DataError::BadDate {
        row,
        column: column.into(),
        value: value.into(),
    })
}

pub fn read_frm_series(path: &Path, tau: f64) -> Result<FrmSeries, DataError> {
    let rows = read_table(path, &["date", "frm"])?;
    let mut series = FrmSeries { tau, dates: vec![], values: vec![] };
    for (k, r) in rows.iter().enumerate() {
        series.dates.push(parse_date(&r[0], k + 1, "date")?);
        series.values.push(parse_num(&r[1], k + 1, "frm")?);
    }
    Ok(series)
}

/// Lambdas grouped by date, tickers in file order.
pub fn read_lambdas(path: &Path) -> Result<BTreeMap<NaiveDate, Vec<(String, f64)>>, DataError> {
    let rows = read_table(path, &["date", "ticker", "lambda"])?;
    let mut out: BTreeMap<NaiveDate, Vec<(String, f64)>> = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        let d = parse_date(&r[0], k + 1, "date")?;
        out.entry(d).or_default().push((r[1].clone(), parse_num(&r[2], k + 1, "lambda")?));
    }
    Ok(out)
}

/// Adjacency file back into matrices over `tickers`; columns not among the
/// tickers are macros, in order of first appearance.
pub fn read_adjacency(path: &Path, tickers: &[String]) -> Result<(Array2<f64>, Vec<String>, Array2<f64>), DataError> {
    let rows = read_table(path, &["row", "col", "beta"])?;
    let pos = |t: &str| tickers.iter().position(|x| x == t);
    let mut macros: Vec<String> = Vec::new();
    for r in &rows {
        if pos(&r[1]).is_none() && !macros.contains(&r[1]) {
            macros.push(r[1].clone());
        }
    }
    let j = tickers.len();
    let mut adjacency = Array2::zeros((j, j));
    let mut influence = Array2::zeros((j, macros.len()));
    for (k, r) in rows.iter().enumerate() {
        let row = pos(&r[0]).ok_or_else(|| DataError::BadNumber {
            row: k + 1,
            column: "row".into(),
            value: r[0].clone(),
        })?;
        let beta = parse_num(&r[2], k + 1, "beta")?;
        match pos(&r[1]) {
            Some(col) => adjacency[[row, col]] = beta,
            None => {
                let m = macros.iter().position(|x| x == &r[1]).expect("collected above");
                influence[[row, m]] = beta;
            }
        }
    }
    Ok((adjacency, macros, influence))
}

/// Rebuild window results from an FRM output directory. Market caps are not
/// part of these files and come back as zeros; window indices count from 0
/// in date order.
pub fn load_frm_windows(dir: &Path, tau: f64) -> Result<Vec<WindowResult>, DataError> {
    let lambdas = read_lambdas(&dir.join(lambda_file(tau)))?;
    let mut out = Vec::with_capacity(lambdas.len());
    for (w, (d, entries)) in lambdas.into_iter().enumerate() {
        let tickers: Vec<String> = entries.iter().map(|(t, _)| t.clone()).collect();
        let (adjacency, macros, macro_influence) = read_adjacency(&dir.join(adjacency_file(tau, d)), &tickers)?;
        let active_counts = (0..tickers.len())
            .map(|j| {
                adjacency.row(j).iter().chain(macro_influence.row(j).iter()).filter(|b| b.abs() > ACTIVE_TOL).count()
            })
            .collect();
        out.push(WindowResult {
            window_index: w,
            date: d,
            tau,
            caps: vec![0.0; tickers.len()],
            lambdas: entries.iter().map(|(_, l)| *l).collect(),
            tickers,
            macros,
            adjacency,
            macro_influence,
            active_counts,
        });
    }
    Ok(out)
}
