use std::collections::BTreeSet;

use crate::evm::{Opcode, Program};

/// Mnemonic stream with immediates dropped and numeric suffixes stripped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NormalizedOpcodes {
    pub mnemonics: Vec<String>,
}

impl NormalizedOpcodes {
    pub fn text(&self) -> String {
        self.mnemonics.join(" ")
    }
}

/// `PUSH1..PUSH32 -> PUSH`, `DUP1..DUP16 -> DUP`, `SWAP1..SWAP16 -> SWAP`,
/// `LOG0..LOG4 -> LOG`; in general trailing decimal digits are removed.
pub fn normalize_mnemonic(mnemonic: &str) -> &str {
    mnemonic.trim_end_matches(|c: char| c.is_ascii_digit())
}

pub fn normalize_opcodes(program: &Program) -> NormalizedOpcodes {
    NormalizedOpcodes {
        mnemonics: program
            .instructions
            .iter()
            .map(|i| normalize_mnemonic(i.opcode.mnemonic()).to_string())
            .collect(),
    }
}

/// Exact vocabulary over normalised mnemonics. Ids 0..=3 are reserved to
/// line up with the special ids of the source tokenizer; unknown words map
/// to [`super::UNK_ID`].
#[derive(Debug, Clone)]
pub struct OpcodeVocab {
    words: Vec<&'static str>,
}

impl Default for OpcodeVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl OpcodeVocab {
    pub fn new() -> Self {
        let set: BTreeSet<&'static str> = (0..=255u8)
            .map(|b| normalize_mnemonic(Opcode::from_byte(b).mnemonic()))
            .collect();
        OpcodeVocab {
            words: set.into_iter().collect(),
        }
    }

    /// Total id range, including the reserved ids.
    pub fn size(&self) -> usize {
        self.words.len() + 4
    }

    pub fn id(&self, word: &str) -> usize {
        self.words
            .binary_search(&word)
            .map(|i| i + 4)
            .unwrap_or(super::UNK_ID as usize)
    }

    pub fn ids<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        words.into_iter().map(|w| self.id(w)).collect()
    }
}
