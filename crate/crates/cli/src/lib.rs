//! Configuration, pipeline and output plumbing behind the `resonances` binary.

pub mod config;
pub mod pipeline;

use resonance_core::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_CALIBRATION: i32 = 4;

fn core_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Arity(_) | Error::Config(_) => EXIT_SCHEMA,
        Error::NoConvergence { .. }
        | Error::Integration { .. }
        | Error::FixedPoint { .. }
        | Error::Period(_)
        | Error::Degeneracy(_)
        | Error::Numerical(_) => EXIT_NO_CONVERGENCE,
        Error::Calibration(_) => EXIT_CALIBRATION,
        _ => EXIT_OTHER,
    }
}

/// Process exit code for an error: 2 schema, 3 non-convergence, 4 calibration, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(s) = cause.downcast_ref::<pipeline::StageError>() {
            return s.code;
        }
        if cause.downcast_ref::<config::SchemaError>().is_some() {
            return EXIT_SCHEMA;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
    }
    EXIT_OTHER
}
