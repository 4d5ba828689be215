//! Subcommand implementations.

pub mod bench;
pub mod eval;
pub mod extract;
pub mod fixtures;
pub mod oracle;
pub mod train;
