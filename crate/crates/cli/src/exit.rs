//! Process exit codes.
//!
//! | code | meaning                                                        |
//! |------|----------------------------------------------------------------|
//! | 0    | success                                                        |
//! | 1    | unclassified failure                                           |
//! | 2    | command-line usage error                                       |
//! | 3    | unreadable or malformed input file (I/O, JSON, CSV, numbers)   |
//! | 4    | invalid problem or power case                                  |
//! | 5    | infeasible starting parameter or infeasible point              |
//! | 6    | discovery failed (unresolvable transition, singular Jacobian)  |
//! | 7    | model does not belong to the problem or is malformed           |
//! | 8    | oracle size limit exceeded                                     |

use std::fmt;

use cfqp_core::Error as CoreError;
use cfqp_dcopf::CaseError;

pub const SUCCESS: u8 = 0;
pub const FAILURE: u8 = 1;
pub const USAGE: u8 = 2;
pub const INPUT: u8 = 3;
pub const INVALID_PROBLEM: u8 = 4;
pub const INFEASIBLE: u8 = 5;
pub const DISCOVERY: u8 = 6;
pub const MODEL_MISMATCH: u8 = 7;
pub const ORACLE_LIMIT: u8 = 8;

/// A problem with an input file, such as a bad number on some CSV line.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::InvalidProblem(_) | CoreError::Dimension(_) | CoreError::InvalidPattern(_) => {
            INVALID_PROBLEM
        }
        CoreError::Infeasible | CoreError::InfeasibleStart => INFEASIBLE,
        CoreError::SingularJacobian { .. }
        | CoreError::SingularActiveJacobian { .. }
        | CoreError::DuplicateRegion(_)
        | CoreError::UnresolvableTransition { .. }
        | CoreError::UnknownRegion(_) => DISCOVERY,
        CoreError::DigestMismatch { .. } | CoreError::MalformedModel(_) => MODEL_MISMATCH,
        CoreError::OracleTooLarge { .. } => ORACLE_LIMIT,
        CoreError::Io(_) | CoreError::Json(_) => INPUT,
    }
}

/// Exit code for the first recognised error in the chain.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<CaseError>() {
            return match e {
                CaseError::Core(inner) => core_code(inner),
                CaseError::Io(_) | CaseError::Json(_) | CaseError::Parse { .. } => INPUT,
                _ => INVALID_PROBLEM,
            };
        }
        if cause.is::<InputError>()
            || cause.is::<csv::Error>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
        {
            return INPUT;
        }
    }
    FAILURE
}
