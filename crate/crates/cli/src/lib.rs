//! Library surface of the command-line pipeline, exposed so integration
//! tests can drive the commands in-process.

pub mod commands;
pub mod config;

pub use commands::{cmd_analyze, cmd_calibrate, cmd_reconstruct, cmd_simulate};
pub use config::{PsfSource, RunConfig, SceneSpec};
