//! Command-line front end for `rslab-core`: configuration, run manifests,
//! command dispatch and the acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod verify;
