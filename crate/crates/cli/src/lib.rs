//! Library surface of the command-line tool; the binary in `main.rs` is a
//! thin argument-parsing shell over these functions so integration tests
//! can drive every subcommand in-process.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    argmax_lowest, cmd_ablation, cmd_embed, cmd_evaluate, cmd_preprocess, cmd_synth, cmd_train,
    SynthSpec,
};
pub use config::{DataKind, RunConfig, SamplerKind, SplitModeKind};
pub use error::{CliError, Result};
