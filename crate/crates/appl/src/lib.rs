//! Compiler and asynchronous runtime for APPL-script, a prompt-programming
//! language where prompts are built by capturing expression statements and
//! generations run concurrently behind lazy string futures.

pub mod backends;
pub mod cli;
pub mod compiler;
pub mod context;
pub mod error;
pub mod frontend;
pub mod futures;
pub mod interpreter;
pub mod trace;

pub use cli::run_cli;
