//! Client side of the neural data server: fetches experts, scores them on a
//! local target set and turns the scores into a data recommendation.

pub mod bundle;
pub mod client;
pub mod commands;
pub mod error;

pub use client::Client;
pub use error::{CliError, ExitCode};
