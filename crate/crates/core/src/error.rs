use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical divergence at step {step} (t = {t:e} s)")]
    Divergence { step: u64, t: f64 },

    #[error("frequency {freq:.1} Hz outside achievable band [{f_min:.1}, {f_max:.1}] Hz")]
    OutOfBand { freq: f64, f_min: f64, f_max: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible design band: {0}")]
    InfeasibleBand(String),

    #[error("calibration at {freq:.1} Hz did not converge after {iterations} iterations (last phase {phase_deg:.2} deg)")]
    Calibration {
        freq: f64,
        iterations: usize,
        phase_deg: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undefined phase: {0}")]
    UndefinedPhase(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            msg: err.to_string(),
        }
    }
}
