//! Seeded synthetic market: institutions driven by a global and a regional
//! factor, AR(1) macro levels, and a high-volatility regime in the middle
//! third of the sample.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::market_data::{Observation, PriceSeries};

pub const REGIONS: [&str; 6] = ["BR", "RU", "IN", "MX", "ZA", "TR"];

pub const MACROS: [&str; 13] = [
    "vix",
    "vstoxx",
    "term_spread",
    "credit_spread",
    "ted_spread",
    "us3m",
    "us10y",
    "sp500_ret",
    "em_equity_ret",
    "dxy",
    "oil",
    "gold",
    "em_bond_spread",
];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub institutions: usize,
    /// Number of return days; one more price date is emitted.
    pub days: usize,
    /// Volatility multiplier inside the middle third.
    pub vol_factor: f64,
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            institutions: 25,
            days: 252,
            vol_factor: 3.0,
            start: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
        }
    }
}

impl SynthConfig {
    /// Return-day indices `[lo, hi)` of the high-volatility regime.
    pub fn regime(&self) -> (usize, usize) {
        (self.days / 3, 2 * self.days / 3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// `days + 1` rows per institution
    pub prices: Vec<Vec<f64>>,
    pub caps: Vec<Vec<f64>>,
    pub macro_names: Vec<String>,
    pub macros: Vec<Vec<f64>>,
}

impl SynthData {
    /// Institutions with caps attached, followed by the macro series.
    pub fn series(&self) -> Vec<PriceSeries> {
        let mut out = Vec::with_capacity(self.tickers.len() + self.macro_names.len());
        for (k, ticker) in self.tickers.iter().enumerate() {
            let obs = self
                .dates
                .iter()
                .enumerate()
                .map(|(t, &date)| Observation { date, price: self.prices[k][t], market_cap: Some(self.caps[k][t]) })
                .collect();
            out.push(PriceSeries::new(ticker.clone(), obs).expect("generated dates are unique"));
        }
        for (k, name) in self.macro_names.iter().enumerate() {
            let obs = self
                .dates
                .iter()
                .enumerate()
                .map(|(t, &date)| Observation { date, price: self.macros[k][t], market_cap: None })
                .collect();
            out.push(PriceSeries::new(name.clone(), obs).expect("generated dates are unique"));
        }
        out
    }
}

fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn generate(config: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let j = config.institutions;
    let days = config.days;
    let dates = business_days(config.start, days + 1);
    let (lo, hi) = config.regime();
    let scale = |t: usize| if (lo..hi).contains(&t) { config.vol_factor } else { 1.0 };

    let tickers: Vec<String> = (0..j).map(|k| format!("{}{:02}", REGIONS[k % REGIONS.len()], k)).collect();
    let global_beta: Vec<f64> = (0..j).map(|_| rng.random_range(0.6..1.2)).collect();
    let region_beta: Vec<f64> = (0..j).map(|_| rng.random_range(0.5..1.0)).collect();
    let shares: Vec<f64> = (0..j)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) * 0.8 + 20.0).exp())
        .collect();
    let mut prices: Vec<Vec<f64>> = (0..j).map(|_| vec![rng.random_range(5.0..100.0)]).collect();

    let global = Normal::new(0.0, 0.008).expect("valid sd");
    let regional = Normal::new(0.0, 0.006).expect("valid sd");
    let idio = Normal::new(0.0, 0.01).expect("valid sd");
    for t in 0..days {
        let s = scale(t);
        let g: f64 = global.sample(&mut rng);
        let reg: Vec<f64> = (0..REGIONS.len()).map(|_| regional.sample(&mut rng)).collect();
        for k in 0..j {
            let e: f64 = idio.sample(&mut rng);
            let r = s * (global_beta[k] * g + region_beta[k] * reg[k % REGIONS.len()] + e);
            let last = *prices[k].last().expect("seeded");
            prices[k].push(last * r.exp());
        }
    }
    let caps = prices
        .iter()
        .zip(&shares)
        .map(|(p, &sh)| p.iter().map(|v| v * sh).collect())
        .collect();

    // AR(1) levels; the first two rise during the regime
    let macros = (0..MACROS.len())
        .map(|m| {
            let mean = rng.random_range(0.5..3.0);
            let sd = rng.random_range(0.02..0.1);
            let mut x = mean;
            (0..=days)
                .map(|t| {
                    let stress = if m < 2 && t > 0 && (lo..hi).contains(&(t - 1)) { mean } else { 0.0 };
                    x = mean + stress + 0.95 * (x - mean - stress) + sd * rng.sample::<f64, _>(StandardNormal);
                    x
                })
                .collect()
        })
        .collect();

    SynthData {
        dates,
        tickers,
        prices,
        caps,
        macro_names: MACROS.iter().map(|s| s.to_string()).collect(),
        macros,
    }
}
