//! Command failures and their process exit codes.

use std::fmt;

use extctrl_core::{Error, ErrorFamily};

#[derive(Debug)]
pub enum Failure {
    /// The plan or the command line asks for something invalid.
    PlanInvalid(String),
    /// Overlap is insufficient and the plan asked to stop on it.
    PositivityHardFail(String),
    Core(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::PlanInvalid(_) => 2,
            Failure::PositivityHardFail(_) => 5,
            Failure::Core(e) => match e.family() {
                ErrorFamily::Invalid => 2,
                ErrorFamily::Data => 3,
                ErrorFamily::Solver => 4,
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::PlanInvalid(m) => write!(f, "invalid plan: {m}"),
            Failure::PositivityHardFail(m) => write!(f, "positivity check failed: {m}"),
            Failure::Core(e) => e.fmt(f),
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> Failure {
    Failure::PlanInvalid(msg.into())
}
