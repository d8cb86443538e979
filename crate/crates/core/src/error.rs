use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::DroneId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    NonFinite,
    CoincidentPoints,
    ZeroDirection,
    ZeroVelocity,
    ObserverInsideObstacle,
    NonpositiveInterval,
    NoClosing,
    OutOfBounds,
    SizeMismatch {
        scene: usize,
        model: usize,
    },
    DegenerateKernel,
    NoFeasiblePlan,
    InfeasiblePlan,
    EmptyTrace,
    /// A scenario or configuration field failed validation.
    Invalid {
        field: &'static str,
        reason: String,
    },
    DuplicateDrone(DroneId),
    UnknownDrone(DroneId),
    MissingMove(Vec<DroneId>),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite => f.write_str("non-finite coordinate"),
            Error::CoincidentPoints => {
                f.write_str("bearing between coincident points is undefined")
            }
            Error::ZeroDirection => f.write_str("line direction has zero length"),
            Error::ZeroVelocity => f.write_str("swarm velocity has zero length"),
            Error::ObserverInsideObstacle => f.write_str("observer lies inside the obstacle disc"),
            Error::NonpositiveInterval => f.write_str("sample interval must be positive"),
            Error::NoClosing => f.write_str("relative speed does not close the gap"),
            Error::OutOfBounds => f.write_str("cell out of grid bounds"),
            Error::SizeMismatch { scene, model } => {
                write!(f, "point set sizes differ: scene {scene}, model {model}")
            }
            Error::DegenerateKernel => f.write_str("thin-plate spline system is singular"),
            Error::NoFeasiblePlan => f.write_str("no feasible avoidance plan found"),
            Error::InfeasiblePlan => f.write_str("plan is not feasible from the start state"),
            Error::EmptyTrace => f.write_str("trace is empty"),
            Error::Invalid { field, reason } => write!(f, "invalid `{field}`: {reason}"),
            Error::DuplicateDrone(id) => write!(f, "drone {id} appears more than once"),
            Error::UnknownDrone(id) => write!(f, "unknown drone {id}"),
            Error::MissingMove(ids) => write!(f, "no move given for drones {ids:?}"),
        }
    }
}

impl core::error::Error for Error {}
