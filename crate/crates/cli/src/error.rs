use frm_core::backtest::BacktestError;
use frm_core::frm::FrmError;
use frm_core::market_data::DataError;
use frm_core::portfolio::PortfolioError;
use frm_core::quantile::QuantileError;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { kind: String, message: String, path: Option<String> },
    Numerical { kind: String, message: String },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn data(kind: &str, message: impl Into<String>) -> Self {
        CliError::Data { kind: kind.into(), message: message.into(), path: None }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Usage(m) => json!({ "error": "Usage", "message": m, "exit_code": 1 }),
            CliError::Data { kind, message, path } => {
                let mut v = json!({ "error": kind, "message": message, "exit_code": 2 });
                if let Some(p) = path {
                    v["path"] = json!(p);
                }
                v
            }
            CliError::Numerical { kind, message } => json!({ "error": kind, "message": message, "exit_code": 3 }),
        }
    }
}

fn variant<T: std::fmt::Debug>(e: &T) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let path = match &e {
            DataError::Io { path, .. } | DataError::MissingColumn { path, .. } => Some(path.clone()),
            _ => None,
        };
        CliError::Data { kind: variant(&e), message: e.to_string(), path }
    }
}

impl From<QuantileError> for CliError {
    fn from(e: QuantileError) -> Self {
        CliError::Numerical { kind: variant(&e), message: e.to_string() }
    }
}

impl From<FrmError> for CliError {
    fn from(e: FrmError) -> Self {
        match e {
            FrmError::Data(d) => d.into(),
            FrmError::Solver { .. } => CliError::Numerical { kind: "SolverFailure".into(), message: e.to_string() },
            FrmError::Empty => CliError::data("Empty", e.to_string()),
        }
    }
}

impl From<PortfolioError> for CliError {
    fn from(e: PortfolioError) -> Self {
        match e {
            PortfolioError::InvalidInput(_) => CliError::data("InvalidInput", e.to_string()),
            _ => CliError::Numerical { kind: variant(&e), message: e.to_string() },
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::Data(d) => d.into(),
            BacktestError::InvalidConfig(m) => CliError::Usage(m),
            BacktestError::Portfolio { ref source, .. } => {
                let mut inner: CliError = source.clone().into();
                match &mut inner {
                    CliError::Data { message, .. } | CliError::Numerical { message, .. } => *message = e.to_string(),
                    CliError::Usage(m) => *m = e.to_string(),
                }
                inner
            }
            BacktestError::ZeroVolatility => CliError::Numerical { kind: variant(&e), message: e.to_string() },
            _ => CliError::data(&variant(&e), e.to_string()),
        }
    }
}
