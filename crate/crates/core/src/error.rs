use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The nonlinearity does not have the increasing/decreasing/increasing shape.
    #[error("nonlinearity shape violation: {0}")]
    Shape(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid field: {0}")]
    Field(String),

    #[error("newton iteration did not converge in cell {cell} after {iterations} iterations")]
    NewtonDiverged { cell: usize, iterations: usize },

    #[error("{quantity} left the invariant region in cell {cell}: value {value} not in [{lower}, {upper}]")]
    BoundViolation {
        quantity: &'static str,
        cell: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("time step {dt} exceeds the stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("unknown initial data generator `{0}`")]
    UnknownGenerator(String),

    #[error("invalid initial data: {0}")]
    InitialData(String),

    #[error("empty sample list")]
    EmptySamples,

    #[error("cell holds {found} samples, at least {required} required")]
    CellTooSmall { found: usize, required: usize },

    #[error("invalid binning: {0}")]
    Binning(String),

    #[error("bin edges are not aligned with the branch thresholds")]
    MisalignedBinning,

    #[error("value {0} falls in a bin without push-forward mass")]
    MaskedBin(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config validation failed: {0}")]
    ConfigValidation(String),

    #[error("report needs at least {required} epsilon entries, found {found}")]
    TooFewEntries { found: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration problems map to exit code 1, solver failures to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ConfigParse { .. }
                | Error::ConfigValidation(_)
                | Error::Shape(_)
                | Error::Grid(_)
                | Error::UnknownGenerator(_)
                | Error::InitialData(_)
                | Error::Binning(_)
        )
    }
}
