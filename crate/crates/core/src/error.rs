use thiserror::Error;

pub type Result<T> = std::result::Result<T, GwError>;

#[derive(Debug, Error)]
pub enum GwError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invariant violated ({check}): {detail}")]
    Invariant { check: &'static str, detail: String },

    #[error("degenerate HOMO-LUMO gap: {gap:e} Ha")]
    GapDegeneracy { gap: f64 },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("frequency {omega} is within {distance:e} of a pole of {what}")]
    PoleProximity {
        what: &'static str,
        omega: String,
        distance: f64,
    },

    #[error("shifted operator is singular at shift {shift}")]
    SingularShift { shift: String },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("ill-conditioned middle factor (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("integration path at Re = {shift} passes within {distance:e} of a pole")]
    PoleOnPath { shift: f64, distance: f64 },

    #[error("contour would enclose a pole of W_p at {pole}; only G0 residues are supported")]
    EnclosesScreeningPole { pole: f64 },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("problem size {size} exceeds the dense budget {budget}")]
    Budget { size: usize, budget: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing exchange-correlation matrix elements")]
    MissingVxc,
}

impl GwError {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            GwError::Io { .. } => "io",
            GwError::Manifest(_) => "manifest",
            GwError::DimensionMismatch { .. } => "dimension_mismatch",
            GwError::Invariant { .. } => "invariant",
            GwError::GapDegeneracy { .. } => "gap_degeneracy",
            GwError::IndexOutOfRange { .. } => "index_out_of_range",
            GwError::PoleProximity { .. } => "pole_proximity",
            GwError::SingularShift { .. } => "singular_shift",
            GwError::Singular(_) => "singular",
            GwError::IllConditioned { .. } => "ill_conditioned",
            GwError::PoleOnPath { .. } => "pole_on_path",
            GwError::EnclosesScreeningPole { .. } => "encloses_wp_pole",
            GwError::Eigensolver(_) => "eigensolver",
            GwError::Budget { .. } => "budget",
            GwError::InvalidArgument(_) => "invalid_argument",
            GwError::MissingVxc => "missing_vxc",
        }
    }
}
