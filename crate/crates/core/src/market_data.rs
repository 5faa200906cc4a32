//! Price, market-cap and macro ingestion; aligned log-return panels; rolling
//! windows and per-window top-J institution selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum calendar-day gap bridged by forward filling macro values and caps.
pub const MAX_FILL_DAYS: i64 = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("missing column `{column}` in {path}")]
    MissingColumn { path: String, column: String },
    #[error("bad date `{value}` at row {row}, column `{column}`")]
    BadDate { row: usize, column: String, value: String },
    #[error("bad number `{value}` at row {row}, column `{column}`")]
    BadNumber { row: usize, column: String, value: String },
    #[error("non-positive value at row {row}, column `{column}`")]
    NonPositivePrice { row: usize, column: String },
    #[error("duplicate date {date} for `{ticker}`")]
    DuplicateDate { ticker: String, date: NaiveDate },
    #[error("only {common} common dates after alignment, need at least 2")]
    InsufficientOverlap { common: usize },
    #[error("{available} institutions available, {requested} requested")]
    NotEnoughInstitutions { available: usize, requested: usize },
    #[error("macro series `{0}` not found")]
    UnknownMacro(String),
    #[error("invalid window spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub date: NaiveDate,
    pub price: f64,
    pub market_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    /// Strictly increasing dates.
    pub observations: Vec<Observation>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, mut observations: Vec<Observation>) -> Result<Self, DataError> {
        let ticker = ticker.into();
        observations.sort_by_key(|o| o.date);
        if let Some(w) = observations.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(DataError::DuplicateDate { ticker, date: w[0].date });
        }
        Ok(PriceSeries { ticker, observations })
    }

    /// Value at `date`, or the latest earlier value no more than `max_gap` days old.
    fn value_filled(&self, date: NaiveDate, max_gap: i64, cap: bool) -> Option<f64> {
        let idx = self.observations.partition_point(|o| o.date <= date);
        self.observations[..idx]
            .iter()
            .rev()
            .take_while(|o| (date - o.date).num_days() <= max_gap)
            .find_map(|o| if cap { o.market_cap } else { Some(o.price) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Prices,
    MarketCaps,
    Macros,
}

impl CsvKind {
    fn columns(self) -> [&'static str; 3] {
        match self {
            CsvKind::Prices => ["date", "ticker", "price"],
            CsvKind::MarketCaps => ["date", "ticker", "market_cap"],
            CsvKind::Macros => ["date", "name", "value"],
        }
    }
}

/// Parse one of the long-format input files. Data rows are numbered from 1
/// (the header is not counted). For market-cap files the parsed value is
/// stored both as `price` and as `market_cap`.
pub fn load_csv(path: &Path, kind: CsvKind) -> Result<Vec<PriceSeries>, DataError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: display.clone(),
        message: e.to_string(),
    })?;
    parse_csv(file, kind, &display)
}

pub fn parse_csv<R: std::io::Read>(reader: R, kind: CsvKind, source: &str) -> Result<Vec<PriceSeries>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let io_err = |e: csv::Error| DataError::Io { path: source.to_string(), message: e.to_string() };
    let headers = rdr.headers().map_err(io_err)?.clone();
    let [date_col, key_col, value_col] = kind.columns();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn {
            path: source.to_string(),
            column: name.to_string(),
        })
    };
    let (di, ki, vi) = (find(date_col)?, find(key_col)?, find(value_col)?);

    let mut grouped: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(io_err)?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(di), "%Y-%m-%d").map_err(|_| DataError::BadDate {
            row,
            column: date_col.to_string(),
            value: field(di).to_string(),
        })?;
        let raw = field(vi);
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| DataError::BadNumber { row, column: value_col.to_string(), value: raw.to_string() })?;
        if kind != CsvKind::Macros && value <= 0.0 {
            return Err(DataError::NonPositivePrice { row, column: value_col.to_string() });
        }
        let market_cap = (kind == CsvKind::MarketCaps).then_some(value);
        grouped
            .entry(field(ki).to_string())
            .or_default()
            .push(Observation { date, price: value, market_cap });
    }
    grouped
        .into_iter()
        .map(|(ticker, obs)| PriceSeries::new(ticker, obs))
        .collect()
}

/// Copy market caps from `caps` (as loaded from a market-cap file) onto the
/// matching price series by exact date.
pub fn attach_market_caps(prices: &mut [PriceSeries], caps: &[PriceSeries]) {
    let by_ticker: HashMap<&str, &PriceSeries> = caps.iter().map(|c| (c.ticker.as_str(), c)).collect();
    for series in prices.iter_mut() {
        if let Some(cap_series) = by_ticker.get(series.ticker.as_str()) {
            let dates: HashMap<NaiveDate, f64> =
                cap_series.observations.iter().map(|o| (o.date, o.price)).collect();
            for obs in series.observations.iter_mut() {
                if let Some(&c) = dates.get(&obs.date) {
                    obs.market_cap = Some(c);
                }
            }
        }
    }
}

/// Aligned daily panel. Row `t` holds the institutions' log returns
/// `ln(P_t / P_{t-1})` followed by the macro values observed on the previous
/// trading day (`M_{t-1}`), so every regression row is already lagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub institutions: Vec<String>,
    pub macros: Vec<String>,
    /// T x (J + M)
    pub returns: Array2<f64>,
    /// T x J, caps on the row's date
    pub market_caps: Array2<f64>,
}

impl ReturnPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn num_institutions(&self) -> usize {
        self.institutions.len()
    }

    pub fn institution_returns(&self) -> ArrayView2<'_, f64> {
        self.returns.slice(s![.., ..self.institutions.len()])
    }

    /// Lagged macro regressors, T x M.
    pub fn macro_values(&self) -> ArrayView2<'_, f64> {
        self.returns.slice(s![.., self.institutions.len()..])
    }

    pub fn institution_index(&self, ticker: &str) -> Option<usize> {
        self.institutions.iter().position(|t| t == ticker)
    }
}

/// Build the aligned panel. Series named in `macro_names` are macros, all
/// others institutions. Institution dates are inner-joined; macros and market
/// caps are forward filled for at most [`MAX_FILL_DAYS`] calendar days and a
/// row whose lagged macro vector is still incomplete is dropped. Macro values
/// are used as given (no log transform).
pub fn build_panel(series: &[PriceSeries], macro_names: &[String]) -> Result<ReturnPanel, DataError> {
    let mut institutions: Vec<&PriceSeries> = series
        .iter()
        .filter(|s| !macro_names.contains(&s.ticker))
        .collect();
    institutions.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    let macros: Vec<&PriceSeries> = macro_names
        .iter()
        .map(|name| {
            series
                .iter()
                .find(|s| &s.ticker == name)
                .ok_or_else(|| DataError::UnknownMacro(name.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut common: Option<BTreeSet<NaiveDate>> = None;
    for inst in &institutions {
        let dates: BTreeSet<NaiveDate> = inst
            .observations
            .iter()
            .filter(|o| inst.value_filled(o.date, MAX_FILL_DAYS, true).is_some())
            .map(|o| o.date)
            .collect();
        common = Some(match common {
            None => dates,
            Some(c) => c.intersection(&dates).copied().collect(),
        });
    }
    let common: Vec<NaiveDate> = common.unwrap_or_default().into_iter().collect();
    if common.len() < 2 {
        return Err(DataError::InsufficientOverlap { common: common.len() });
    }

    let j = institutions.len();
    let m = macros.len();
    let mut dates = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut caps: Vec<f64> = Vec::new();
    for w in common.windows(2) {
        let (prev, date) = (w[0], w[1]);
        let lagged: Option<Vec<f64>> = macros
            .iter()
            .map(|ms| ms.value_filled(prev, MAX_FILL_DAYS, false))
            .collect();
        let Some(lagged) = lagged else { continue };
        for inst in &institutions {
            let p0 = inst.value_filled(prev, 0, false).expect("date in common set");
            let p1 = inst.value_filled(date, 0, false).expect("date in common set");
            rows.push((p1 / p0).ln());
        }
        rows.extend(lagged);
        for inst in &institutions {
            caps.push(inst.value_filled(date, MAX_FILL_DAYS, true).expect("cap resolved"));
        }
        dates.push(date);
    }
    if dates.is_empty() {
        return Err(DataError::InsufficientOverlap { common: 1 });
    }
    let t = dates.len();
    Ok(ReturnPanel {
        dates,
        institutions: institutions.iter().map(|s| s.ticker.clone()).collect(),
        macros: macro_names.to_vec(),
        returns: Array2::from_shape_vec((t, j + m), rows).expect("row-major panel"),
        market_caps: Array2::from_shape_vec((t, j), caps).expect("row-major caps"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length_n: usize,
    pub top_j: usize,
    pub tau: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { length_n: 63, top_j: 25, tau: 0.05 }
    }
}

impl WindowSpec {
    pub fn new(length_n: usize, top_j: usize, tau: f64) -> Result<Self, DataError> {
        let spec = WindowSpec { length_n, top_j, tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.length_n < 2 {
            return Err(DataError::InvalidSpec(format!("window length {} < 2", self.length_n)));
        }
        if self.top_j < 2 {
            return Err(DataError::InvalidSpec(format!("top_j {} < 2", self.top_j)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(DataError::InvalidSpec(format!("tau {} outside (0, 1)", self.tau)));
        }
        Ok(())
    }
}

/// Indices (ascending) of the `top_j` largest institutions by market cap on
/// the window's first row. Equal caps are ranked by ticker.
pub fn select_top_j(panel: &ReturnPanel, window_start: usize, spec: &WindowSpec) -> Result<Vec<usize>, DataError> {
    if window_start + spec.length_n > panel.len() {
        return Err(DataError::InvalidSpec(format!(
            "window starting at {window_start} with length {} exceeds {} rows",
            spec.length_n,
            panel.len()
        )));
    }
    let available = panel.num_institutions();
    if available < spec.top_j {
        return Err(DataError::NotEnoughInstitutions { available, requested: spec.top_j });
    }
    let caps = panel.market_caps.row(window_start);
    let mut order: Vec<usize> = (0..available).collect();
    order.sort_by(|&a, &b| {
        caps[b]
            .total_cmp(&caps[a])
            .then_with(|| panel.institutions[a].cmp(&panel.institutions[b]))
    });
    order.truncate(spec.top_j);
    order.sort_unstable();
    Ok(order)
}

/// Stride-one windows `(s, rows)` with `s` zero-based; `T - n + 1` of them.
pub fn windows(panel: &ReturnPanel, spec: &WindowSpec) -> impl Iterator<Item = (usize, Range<usize>)> {
    let n = spec.length_n;
    let count = (panel.len() + 1).saturating_sub(n);
    (0..count).map(move |s| (s, s..s + n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn series(ticker: &str, obs: &[(&str, f64, Option<f64>)]) -> PriceSeries {
        PriceSeries::new(
            ticker,
            obs.iter()
                .map(|&(date, price, market_cap)| Observation { date: d(date), price, market_cap })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let text = "date,ticker,price\n2020-01-02,AAA,10\n2020-01-03,AAA,11\n2020-01-06,AAA,12\n";
        let out = parse_csv(text.as_bytes(), CsvKind::Prices, "mem").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].observations.len(), 3);
        assert_eq!(out[0].observations[2].price, 12.0);
    }

    #[test]
    fn zero_price_names_row() {
        let text = "date,ticker,price\n2020-01-02,AAA,10\n2020-01-03,AAA,0\n";
        let err = parse_csv(text.as_bytes(), CsvKind::Prices, "mem").unwrap_err();
        assert!(matches!(err, DataError::NonPositivePrice { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn missing_column_and_bad_date() {
        let err = parse_csv("date,ticker\n".as_bytes(), CsvKind::Prices, "mem").unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { ref column, .. } if column == "price"));
        let err = parse_csv("date,name,value\n2020-13-01,VIX,1\n".as_bytes(), CsvKind::Macros, "m").unwrap_err();
        assert!(matches!(err, DataError::BadDate { row: 1, .. }));
    }

    #[test]
    fn negative_macro_values_allowed() {
        let out = parse_csv("date,name,value\n2020-01-02,TERM,-0.4\n".as_bytes(), CsvKind::Macros, "m").unwrap();
        assert_eq!(out[0].observations[0].price, -0.4);
    }

    #[test]
    fn interleaved_tickers_are_split_and_sorted() {
        let text = "date,ticker,price\n2020-01-03,BBB,2\n2020-01-02,AAA,1\n2020-01-02,BBB,3\n2020-01-03,AAA,4\n";
        let out = parse_csv(text.as_bytes(), CsvKind::Prices, "mem").unwrap();
        let expected = vec![
            series("AAA", &[("2020-01-02", 1.0, None), ("2020-01-03", 4.0, None)]),
            series("BBB", &[("2020-01-02", 3.0, None), ("2020-01-03", 2.0, None)]),
        ];
        assert_eq!(out, expected);
    }

    #[test]
    fn duplicate_dates_rejected() {
        let text = "date,ticker,price\n2020-01-02,AAA,1\n2020-01-02,AAA,2\n";
        assert!(matches!(
            parse_csv(text.as_bytes(), CsvKind::Prices, "mem"),
            Err(DataError::DuplicateDate { .. })
        ));
    }

    #[test]
    fn constant_and_known_returns() {
        let a = series("A", &[("2020-01-02", 5.0, Some(1.0)), ("2020-01-03", 5.0, Some(1.0)), ("2020-01-06", 5.0, Some(1.0))]);
        let b = series("B", &[("2020-01-02", 100.0, Some(2.0)), ("2020-01-03", 110.0, Some(2.0)), ("2020-01-06", 110.0, Some(2.0))]);
        let panel = build_panel(&[b, a], &[]).unwrap();
        assert_eq!(panel.institutions, vec!["A", "B"]);
        assert_eq!(panel.len(), 2);
        assert!(panel.institution_returns().column(0).iter().all(|&r| r == 0.0));
        assert!((panel.returns[[0, 1]] - 1.1f64.ln()).abs() < 1e-15);
        assert!((panel.returns[[0, 1]] - 0.09531).abs() < 1e-5);
    }

    #[test]
    fn macro_gap_is_forward_filled() {
        let days = ["2020-01-02", "2020-01-03", "2020-01-06", "2020-01-07", "2020-01-08", "2020-01-09"];
        let inst = series("A", &days.iter().enumerate().map(|(i, &d)| (d, 10.0 + i as f64, Some(1.0))).collect::<Vec<_>>());
        // macro missing on 01-06 and 01-07: 01-03 value carried forward
        let mac = series("M", &[("2020-01-02", 1.0, None), ("2020-01-03", 2.0, None), ("2020-01-08", 3.0, None), ("2020-01-09", 4.0, None)]);
        let panel = build_panel(&[inst, mac], &["M".to_string()]).unwrap();
        assert_eq!(panel.len(), 5);
        let lagged: Vec<f64> = panel.macro_values().column(0).to_vec();
        assert_eq!(lagged, vec![1.0, 2.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn stale_macro_drops_row() {
        let inst = series("A", &[("2020-01-02", 1.0, Some(1.0)), ("2020-01-03", 1.1, Some(1.0)), ("2020-01-13", 1.2, Some(1.0)), ("2020-01-14", 1.3, Some(1.0))]);
        let mac = series("M", &[("2020-01-02", 1.0, None), ("2020-01-14", 2.0, None)]);
        let panel = build_panel(&[inst, mac], &["M".to_string()]).unwrap();
        // lag date 01-13 is 11 days after the last macro print
        assert_eq!(panel.dates, vec![d("2020-01-03"), d("2020-01-13")]);
    }

    #[test]
    fn too_little_overlap() {
        let a = series("A", &[("2020-01-02", 1.0, Some(1.0)), ("2020-01-03", 1.0, Some(1.0))]);
        let b = series("B", &[("2020-01-06", 1.0, Some(1.0)), ("2020-01-07", 1.0, Some(1.0))]);
        assert!(matches!(build_panel(&[a, b], &[]), Err(DataError::InsufficientOverlap { common: 0 })));
    }

    fn cap_panel(tickers: &[&str], caps: Vec<Vec<f64>>) -> ReturnPanel {
        let t = caps.len();
        let j = tickers.len();
        ReturnPanel {
            dates: (0..t).map(|i| d("2020-01-01") + chrono::Days::new(i as u64)).collect(),
            institutions: tickers.iter().map(|s| s.to_string()).collect(),
            macros: vec![],
            returns: Array2::zeros((t, j)),
            market_caps: Array2::from_shape_vec((t, j), caps.concat()).unwrap(),
        }
    }

    #[test]
    fn top_j_by_cap_and_tie() {
        let spec = WindowSpec { length_n: 2, top_j: 2, tau: 0.05 };
        let panel = cap_panel(&["A", "B", "C"], vec![vec![5.0, 9.0, 1.0], vec![5.0, 9.0, 1.0]]);
        assert_eq!(select_top_j(&panel, 0, &spec).unwrap(), vec![0, 1]);
        let panel = cap_panel(&["X", "W"], vec![vec![7.0, 7.0], vec![7.0, 7.0]]);
        let one = WindowSpec { top_j: 1, ..spec };
        assert_eq!(select_top_j(&panel, 0, &one).unwrap(), vec![1]);
        let three = WindowSpec { top_j: 3, ..spec };
        assert!(matches!(
            select_top_j(&panel, 0, &three),
            Err(DataError::NotEnoughInstitutions { available: 2, requested: 3 })
        ));
    }

    #[test]
    fn selection_ignores_cap_crossover_inside_window() {
        let spec = WindowSpec { length_n: 3, top_j: 1, tau: 0.05 };
        let panel = cap_panel(&["A", "B"], vec![vec![5.0, 4.0], vec![3.0, 6.0], vec![1.0, 9.0]]);
        assert_eq!(select_top_j(&panel, 0, &spec).unwrap(), vec![0]);
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::default();
        let panel = cap_panel(&["A", "B"], vec![vec![1.0, 1.0]; 63]);
        assert_eq!(windows(&panel, &spec).count(), 1);
        let panel = cap_panel(&["A", "B"], vec![vec![1.0, 1.0]; 65]);
        let w: Vec<_> = windows(&panel, &spec).collect();
        assert_eq!(w.len(), 3);
        // second window (s = 2 in one-based terms) covers one-based rows 2..=64
        assert_eq!(w[1].1, 1..64);
    }

    #[test]
    fn spec_validation() {
        assert!(WindowSpec::new(1, 25, 0.05).is_err());
        assert!(WindowSpec::new(63, 1, 0.05).is_err());
        assert!(WindowSpec::new(63, 25, 1.0).is_err());
        assert!(WindowSpec::new(63, 25, 0.5).is_ok());
    }
}
