//! EVM bytecode decoding, re-encoding and a reference interpreter.

mod interp;
mod opcode;
mod program;

pub use interp::{execute, ExecResult, ExecStatus, STUB_GAS, STUB_NUMBER, STUB_TIMESTAMP};
pub use opcode::{Opcode, INVALID_MNEMONIC};
pub use program::{
    assemble, assemble_text, disassemble, minimal_be_bytes, parse_hex, to_hex, Instruction, Program,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvmError {
    #[error("illegal program at offset {offset:#x}: {reason}")]
    IllegalProgram { offset: usize, reason: &'static str },
    #[error("{mnemonic} expects a {expected}-byte immediate, got {found}")]
    ImmediateWidth {
        mnemonic: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("missing operand for {0}")]
    MissingOperand(String),
}
