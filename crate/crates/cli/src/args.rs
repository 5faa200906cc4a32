use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use frm_core::portfolio::Strategy;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "frm", version, about = "Financial Risk Meter pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rolling FRM: lambdas, FRM index, adjacency, macro shares, centralities
    Frm(Options),
    /// Two-step VaR / CoVaR over the full sample
    Covar(Options),
    /// Edge lists and centralities from FRM outputs
    Network(Options),
    /// As-of allocations, dendrograms and a backtest
    Portfolio(Options),
    /// Rolling backtest of the allocation strategies
    Backtest(Options),
    /// Write a seeded synthetic dataset
    Synth(Options),
    /// Summarise an output directory
    Report(Options),
}

impl Command {
    pub fn options(&self) -> &Options {
        match self {
            Command::Frm(o)
            | Command::Covar(o)
            | Command::Network(o)
            | Command::Portfolio(o)
            | Command::Backtest(o)
            | Command::Synth(o)
            | Command::Report(o) => o,
        }
    }
}

/// Every flag may also be given as `name = value` in the config file; flags
/// win over the file.
#[derive(Args, Debug, Default, Clone)]
pub struct Options {
    /// Flat key = value file with defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub prices: Option<PathBuf>,
    #[arg(long)]
    pub caps: Option<PathBuf>,
    #[arg(long)]
    pub macros: Option<PathBuf>,
    /// Quantile level, repeatable
    #[arg(long)]
    pub tau: Vec<f64>,
    /// Estimation window length in rows
    #[arg(long)]
    pub window: Option<usize>,
    /// Institutions per window, largest by market cap
    #[arg(long)]
    pub top: Option<usize>,
    /// Number of penalties on the GACV grid
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub rebalance: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of MinVar,IVP,HRP,InvLambda,upHRP
    #[arg(long)]
    pub strategies: Option<String>,
    /// Directory holding FRM outputs (defaults to --out)
    #[arg(long)]
    pub frm_dir: Option<PathBuf>,
    /// Moving-average length for macro shares
    #[arg(long)]
    pub smoothing: Option<usize>,
    /// As-of date for portfolio weights or edge lists
    #[arg(long)]
    pub date: Option<String>,
    /// CoVaR target: ticker or SYSTEM
    #[arg(long)]
    pub target: Option<String>,
    /// CoVaR conditioning institution; all institutions when absent
    #[arg(long)]
    pub condition: Option<String>,
    /// Synthetic institutions
    #[arg(long)]
    pub institutions: Option<usize>,
    /// Synthetic return days
    #[arg(long)]
    pub days: Option<usize>,
    /// Synthetic volatility multiplier in the middle third
    #[arg(long)]
    pub vol_factor: Option<f64>,
    /// Weight log returns instead of simple returns
    #[arg(long)]
    pub log_returns: bool,
    /// Keep negative MinVar weights
    #[arg(long)]
    pub allow_short: bool,
    /// Also render SVG charts in `report`
    #[arg(long)]
    pub svg: bool,
}

/// Resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub caps: Option<PathBuf>,
    pub macros: Option<PathBuf>,
    pub taus: Vec<f64>,
    pub window: usize,
    pub top: usize,
    pub grid: usize,
    pub rebalance: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub frm_dir: PathBuf,
    pub smoothing: usize,
    pub date: Option<NaiveDate>,
    pub target: String,
    pub condition: Option<String>,
    pub institutions: usize,
    pub days: usize,
    pub vol_factor: f64,
    pub log_returns: bool,
    pub long_only: bool,
    pub svg: bool,
}

const KEYS: [&str; 23] = [
    "prices",
    "caps",
    "macros",
    "tau",
    "window",
    "top",
    "grid",
    "rebalance",
    "out",
    "seed",
    "strategies",
    "frm_dir",
    "smoothing",
    "date",
    "target",
    "condition",
    "institutions",
    "days",
    "vol_factor",
    "log_returns",
    "allow_short",
    "svg",
    "config",
];

/// Parse `key = value` lines; `#` starts a comment, dashes in keys are
/// treated as underscores and repeated keys accumulate.
pub fn parse_config(text: &str, source: &Path) -> Result<HashMap<String, Vec<String>>, CliError> {
    let mut map: HashMap<String, Vec<String>> = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!("{}:{}: expected key = value", source.display(), k + 1))
        })?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) || key == "config" {
            return Err(CliError::usage(format!("{}:{}: unknown key `{key}`", source.display(), k + 1)));
        }
        map.entry(key).or_default().push(value.trim().to_string());
    }
    Ok(map)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::usage(format!("invalid value `{value}` for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::usage(format!("invalid value `{value}` for {key}"))),
    }
}

fn parse_strategies(value: &str) -> Result<Vec<Strategy>, CliError> {
    let mut out = Vec::new();
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let s: Strategy = name.parse().map_err(|_| CliError::usage(format!("unknown strategy `{name}`")))?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("empty strategy list"));
    }
    Ok(out)
}

impl RunConfig {
    pub fn resolve(opts: &Options) -> Result<Self, CliError> {
        let file = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Data {
                    kind: "Io".into(),
                    message: format!("cannot read config: {e}"),
                    path: Some(path.display().to_string()),
                })?;
                parse_config(&text, path)?
            }
            None => HashMap::new(),
        };
        let last = |key: &str| file.get(key).and_then(|v| v.last()).map(String::as_str);
        fn pick<T: FromStr>(flag: Option<T>, file: Option<&str>, key: &str, default: T) -> Result<T, CliError> {
            match (flag, file) {
                (Some(v), _) => Ok(v),
                (None, Some(s)) => parse(key, s),
                (None, None) => Ok(default),
            }
        }
        let path = |flag: &Option<PathBuf>, key: &str| flag.clone().or_else(|| last(key).map(PathBuf::from));

        let taus = if !opts.tau.is_empty() {
            opts.tau.clone()
        } else if let Some(values) = file.get("tau") {
            values
                .iter()
                .flat_map(|v| v.split(','))
                .map(|v| parse::<f64>("tau", v.trim()))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            vec![0.05]
        };
        if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(CliError::usage(format!("tau {t} outside (0, 1)")));
        }
        let mut dedup = Vec::new();
        for t in taus {
            if !dedup.contains(&t) {
                dedup.push(t);
            }
        }

        let strategies = match (&opts.strategies, last("strategies")) {
            (Some(s), _) => parse_strategies(s)?,
            (None, Some(s)) => parse_strategies(s)?,
            (None, None) => Strategy::ALL.to_vec(),
        };
        let date = match opts.date.as_deref().or(last("date")) {
            Some(d) => Some(
                NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| CliError::usage(format!("invalid date `{d}`")))?,
            ),
            None => None,
        };
        let out = path(&opts.out, "out").unwrap_or_else(|| PathBuf::from("out"));
        let frm_dir = path(&opts.frm_dir, "frm_dir").unwrap_or_else(|| out.clone());
        let log_returns = opts.log_returns || last("log_returns").map(|v| parse_bool("log_returns", v)).transpose()?.unwrap_or(false);
        let allow_short = opts.allow_short || last("allow_short").map(|v| parse_bool("allow_short", v)).transpose()?.unwrap_or(false);

        let svg = opts.svg || last("svg").map(|v| parse_bool("svg", v)).transpose()?.unwrap_or(false);
        let cfg = RunConfig {
            prices: path(&opts.prices, "prices"),
            caps: path(&opts.caps, "caps"),
            macros: path(&opts.macros, "macros"),
            taus: dedup,
            window: pick(opts.window, last("window"), "window", 63)?,
            top: pick(opts.top, last("top"), "top", 25)?,
            grid: pick(opts.grid, last("grid"), "grid", frm_core::quantile::DEFAULT_GRID_SIZE)?,
            rebalance: pick(opts.rebalance, last("rebalance"), "rebalance", 30)?,
            out,
            seed: pick(opts.seed, last("seed"), "seed", 0)?,
            strategies,
            frm_dir,
            smoothing: pick(opts.smoothing, last("smoothing"), "smoothing", 7)?,
            date,
            target: opts.target.clone().or_else(|| last("target").map(String::from)).unwrap_or_else(|| "SYSTEM".into()),
            condition: opts.condition.clone().or_else(|| last("condition").map(String::from)),
            institutions: pick(opts.institutions, last("institutions"), "institutions", 25)?,
            days: pick(opts.days, last("days"), "days", 252)?,
            vol_factor: pick(opts.vol_factor, last("vol_factor"), "vol_factor", 3.0)?,
            log_returns,
            long_only: !allow_short,
            svg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.window < 2 {
            return Err(CliError::usage("--window must be at least 2"));
        }
        if self.top < 2 {
            return Err(CliError::usage("--top must be at least 2"));
        }
        if self.grid < 2 {
            return Err(CliError::usage("--grid must be at least 2"));
        }
        if self.rebalance == 0 {
            return Err(CliError::usage("--rebalance must be at least 1"));
        }
        if self.smoothing == 0 {
            return Err(CliError::usage("--smoothing must be at least 1"));
        }
        if self.institutions < 2 || self.days < 3 {
            return Err(CliError::usage("synthetic data needs at least 2 institutions and 3 days"));
        }
        if !(self.vol_factor > 0.0) {
            return Err(CliError::usage("--vol-factor must be positive"));
        }
        Ok(())
    }
}
