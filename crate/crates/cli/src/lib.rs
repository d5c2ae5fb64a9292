//! Command implementations behind the `posobs` binary.
//!
//! Exit codes: 0 pass, 1 method-level failure, 2 input error.

pub mod commands;
pub mod problem;

use thiserror::Error;

pub const CONTINUOUS_EXAMPLE: &str = include_str!("../examples/continuous_4_1.json");
pub const DISCRETE_EXAMPLE: &str = include_str!("../examples/discrete_4_2.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Method(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Method(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    pub fn from_pass(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
        }
    }
}
