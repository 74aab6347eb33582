//! Library surface of the pipeline CLI: configuration, commands, and
//! report artifacts. The `dcbc` binary is a thin argument-parsing wrapper.

pub mod commands;
pub mod config;
pub mod report;

use dcbc_core::error::Error;

/// Stable process exit codes (documented in the README).
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Richness { .. } => 3,
        Error::SdpInfeasible { .. } | Error::SdpFailure { .. } => 4,
        Error::LevelSeparation { .. }
        | Error::DecayTooLarge { .. }
        | Error::HorizonParams(_) => 5,
        Error::ScenarioCoupling(_)
        | Error::DeterministicCheck { .. }
        | Error::ScenarioParams(_)
        | Error::EmptySamples => 6,
        _ => 2,
    }
}

/// Exit code reported when verification checks ran and failed.
pub const EXIT_VERIFICATION_FAILED: i32 = 7;
