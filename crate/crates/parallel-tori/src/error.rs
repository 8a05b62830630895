use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("singular parameter: {0}")]
    SingularParameter(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("contour passes within {distance:.3e} of branch point {point}")]
    BranchTooClose { point: String, distance: f64 },
    #[error("sheet continuity lost: {0}")]
    SheetJump(String),
    #[error("degenerate cycle: {0}")]
    DegenerateCycle(String),
    #[error("chart point lies on a nodal locus: {0}")]
    NodalPoint(String),
    #[error("reconstructed branch points collide: {0}")]
    BranchCollision(String),
    #[error("residue product vanishes: {0}")]
    BExploded(String),
    #[error("datum does not close periods (residual {0:.3e})")]
    NotClosed(f64),
    #[error("newton diverged: {0}")]
    Diverged(String),
    #[error("jacobian is singular (condition {0:.3e})")]
    SingularJacobian(f64),
    #[error("continuation step could not be completed: {0}")]
    StepTooLarge(String),
    #[error("level {0} is too close to an end height")]
    DegenerateHeight(f64),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Input problems (as opposed to numerical failures on valid input).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Domain(_)
                | Error::SingularParameter(_)
                | Error::NodalPoint(_)
                | Error::BranchCollision(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
