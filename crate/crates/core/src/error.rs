use thiserror::Error;

/// Errors raised by the synthesis, analysis and simulation routines.
///
/// Numeric payloads are carried as `f64` regardless of the working scalar so
/// the error type stays non-generic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid time interval [{t1}, {t2}]")]
    InvalidInterval { t1: f64, t2: f64 },
    #[error("schedule is not cyclic; reachability beyond {horizon} s is undecidable")]
    UndecidableHorizon { horizon: f64 },
    #[error("set distance of an empty set")]
    EmptySet,
    #[error("eigenvalue computation did not converge")]
    EigenFailure,
    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,
    #[error("pair (C, A) is not detectable")]
    NotDetectable,
    #[error("Hamiltonian has eigenvalues within {distance:e} of the imaginary axis")]
    HamiltonianImaginaryAxis { distance: f64 },
    #[error("Riccati iteration failed: {0}")]
    Riccati(String),
    #[error("spectra overlap (separation {separation:e}); Sylvester solution not unique")]
    SpectraOverlap { separation: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("Rosenbrock pencil is identically rank deficient")]
    DegeneratePencil,
    #[error("rank decision inconclusive at degree {degree}: singular value ratio {ratio:e} inside the ambiguity band [{tol:e}, {band:e}]")]
    RankInconclusive {
        degree: usize,
        ratio: f64,
        tol: f64,
        band: f64,
    },
    #[error("root list is not closed under complex conjugation")]
    NotConjugateSymmetric,
    #[error("no feasible initial value after {attempts} draws")]
    InfeasibleInit { attempts: usize },
    #[error("Euler consensus step unstable: dt * max in-degree = {product} > 1")]
    EulerUnstable { product: f64 },
    #[error("eigenvalue estimate within {distance:e} of a transmission zero (margin {margin:e})")]
    NearTransmissionZero { distance: f64, margin: f64 },
    #[error("matrix not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },
    #[error("gain synthesis failed for agent {agent} at t = {time}: {source}")]
    Synthesis {
        agent: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("assumption audit failed: {0}")]
    AuditFailed(String),
    #[error("scenario error at {path}: {message}")]
    Scenario { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
