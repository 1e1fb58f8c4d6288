//! Experiment runner for `langevin-core`: configuration files, the
//! certify/lsi/plan/sample/verify pipelines and the verification suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod suite;

pub use error::{LabError, Result};
