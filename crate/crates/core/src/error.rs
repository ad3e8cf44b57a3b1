use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("line {line}: cannot parse `{text}`: {reason}")]
    Parse {
        line: usize,
        text: String,
        reason: String,
    },

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error(
        "infeasible slot: tau = {tau} s does not exceed control overhead tau_ctl = {tau_ctl} s"
    )]
    InfeasibleSlot { tau: f64, tau_ctl: f64 },

    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        SimError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
