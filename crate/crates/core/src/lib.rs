//! Multi-modal vulnerability detection for EVM contracts.
//!
//! The crate is organised as a pipeline:
//!
//! - [`evm`]: decode, re-encode and execute runtime bytecode.
//! - [`preprocess`]: opcode and source normalisation, tokenisation and
//!   sliding-window chunking.
//! - [`cfg`]: basic-block control-flow graphs with DOT and COO export.
//! - [`obfuscate`]: semantics-preserving bytecode and source transforms,
//!   checked against the interpreter.
//! - [`autodiff`]: dense 2-D arrays with a reverse-mode gradient tape.
//! - [`encoders`]: source transformer, exponentially gated recurrent opcode
//!   encoder, and GATv2 graph encoder.
//! - [`fusion`]: hierarchical self/cross-attention fusion and the
//!   multi-label classification head.
//! - [`harness`]: datasets, synthetic corpora, training, metrics and the
//!   obfuscation robustness workflow.

pub mod autodiff;
pub mod cfg;
pub mod encoders;
pub mod evm;
pub mod fusion;
pub mod harness;
pub mod obfuscate;
pub mod preprocess;

mod lex;
