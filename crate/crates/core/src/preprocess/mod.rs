//! Normalisation of opcode streams and Solidity source, hash tokenisation,
//! and sliding-window chunking for the source encoder.

mod opcodes;
mod source;
mod tokens;

pub use opcodes::{normalize_mnemonic, normalize_opcodes, NormalizedOpcodes, OpcodeVocab};
pub use source::{normalize_source, NormalizedSource, DEFAULT_STOPWORDS};
pub use tokens::{
    chunk_count, chunk_tokens, hash_tokenize, split_words, stable_hash, ChunkedTokens, CLS_ID,
    PAD_ID, SEP_ID, UNK_ID,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PreprocessError {
    #[error("token sequence is empty")]
    EmptyInput,
    #[error(
        "invalid window/stride: window={window}, stride={stride} (need 1 <= stride <= window)"
    )]
    BadWindow { window: usize, stride: usize },
    #[error("vocabulary size {0} is below the minimum of 16")]
    VocabTooSmall(usize),
}
