pub mod quantile;
pub mod market_data;
pub mod frm;
pub mod covar;
pub mod network;
pub mod portfolio;
pub mod backtest;
pub mod synth;
pub mod io;
