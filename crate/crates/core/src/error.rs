use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix shape {rows}x{cols} is not square of even dimension")]
    BadShape { rows: usize, cols: usize },

    #[error("matrix is not symplectic: residual {residual:.3e} exceeds {tol:.1e}")]
    NotSymplectic { residual: f64, tol: f64 },

    #[error("symplectic matrix has determinant {det}, expected 1")]
    Determinant { det: f64 },

    #[error("eigenproblem is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("splitting numbers are only tabulated for N1(1,1) and N1(1,-1), got {0}")]
    UnsupportedBlock(String),

    #[error("profile structure error: {0}")]
    Structure(String),

    #[error("formula dispatch error: {0}")]
    FormulaDispatch(String),

    #[error("family {0} has no index iteration formula")]
    UnsupportedFamily(String),

    #[error("angle needs an exact rational declaration: {0}")]
    NeedsExactAngle(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("integration accuracy error: {0}")]
    Accuracy(String),

    #[error("Newton refinement did not converge after {iterations} iterations (residuals {history:?})")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("shooting Jacobian is singular (smallest singular value {sigma:.3e}); orbit is not transversally isolated")]
    Degenerate { sigma: f64 },

    #[error("rotation tracking lost continuity at sample {index} (jump {jump:.3} rad); refine the path sampling")]
    Resolution { index: usize, jump: f64 },

    #[error("critical type data refused: {0}")]
    InvalidTypes(String),

    #[error("missing critical type numbers for degenerate iterate m={m} of orbit {orbit}")]
    MissingTypes { orbit: usize, m: u64 },

    #[error("common index jump search exhausted T <= {t_max}; best near miss {near_miss}")]
    JumpExhausted { t_max: u64, near_miss: String },

    #[error("unknown scenario label `{0}`")]
    UnknownScenario(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
