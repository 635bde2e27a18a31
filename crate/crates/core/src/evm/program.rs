use std::fmt::Write as _;

use super::opcode::Opcode;
use super::EvmError;

/// One decoded instruction.
///
/// `immediate` always has `opcode.immediate_len()` bytes. When the bytecode
/// ends before the immediate is complete the missing bytes read as zero and
/// `truncated` is set; this can only happen for the final instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub offset: usize,
    pub opcode: Opcode,
    pub immediate: Vec<u8>,
    pub truncated: bool,
}

impl Instruction {
    /// A complete (non-truncated) instruction at offset 0; offsets are
    /// assigned when the instruction is placed into a [`Program`].
    pub fn new(opcode: Opcode, immediate: Vec<u8>) -> Result<Self, EvmError> {
        if immediate.len() != opcode.immediate_len() {
            return Err(EvmError::ImmediateWidth {
                mnemonic: opcode.mnemonic(),
                expected: opcode.immediate_len(),
                found: immediate.len(),
            });
        }
        Ok(Instruction {
            offset: 0,
            opcode,
            immediate,
            truncated: false,
        })
    }

    pub fn op(opcode: Opcode) -> Self {
        debug_assert_eq!(opcode.immediate_len(), 0);
        Instruction {
            offset: 0,
            opcode,
            immediate: Vec::new(),
            truncated: false,
        }
    }

    /// Minimal-width `PUSHk` of `value` (at least one byte).
    pub fn push_u64(value: u64) -> Self {
        let bytes = minimal_be_bytes(value);
        Instruction {
            offset: 0,
            opcode: Opcode::push(bytes.len()).expect("1..=8 bytes"),
            immediate: bytes,
            truncated: false,
        }
    }

    /// Encoded size in bytes, counting the full immediate.
    pub fn size(&self) -> usize {
        1 + self.opcode.immediate_len()
    }

    /// The immediate interpreted as an unsigned integer, if it fits in 64 bits.
    pub fn immediate_u64(&self) -> Option<u64> {
        let significant: Vec<u8> = self
            .immediate
            .iter()
            .copied()
            .skip_while(|&b| b == 0)
            .collect();
        if significant.len() > 8 {
            return None;
        }
        Some(
            significant
                .iter()
                .fold(0u64, |acc, &b| (acc << 8) | b as u64),
        )
    }
}

/// Big-endian bytes of `value` without leading zeros; zero encodes as `[0]`.
pub fn minimal_be_bytes(value: u64) -> Vec<u8> {
    let bytes = value.to_be_bytes();
    let first = bytes.iter().position(|&b| b != 0).unwrap_or(7);
    bytes[first..].to_vec()
}

/// A decoded instruction stream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    pub byte_len: usize,
}

impl Program {
    /// Lays instructions out back to back, recomputing offsets.
    pub fn from_instructions(mut instructions: Vec<Instruction>) -> Self {
        let mut offset = 0;
        for ins in &mut instructions {
            ins.offset = offset;
            offset += ins.size();
        }
        Program {
            instructions,
            byte_len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Offsets of every `JUMPDEST` that sits on an instruction boundary.
    pub fn jumpdests(&self) -> Vec<usize> {
        self.instructions
            .iter()
            .filter(|i| i.opcode == Opcode::JUMPDEST)
            .map(|i| i.offset)
            .collect()
    }

    /// Index of the instruction starting at `offset`, if any.
    pub fn index_of_offset(&self, offset: usize) -> Option<usize> {
        self.instructions
            .binary_search_by_key(&offset, |i| i.offset)
            .ok()
    }

    /// One line per instruction: `<offset-hex>: <MNEMONIC> [<immediate-hex>]`.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for ins in &self.instructions {
            let _ = write!(out, "{:04x}: {}", ins.offset, ins.opcode.mnemonic());
            if !ins.immediate.is_empty() {
                let _ = write!(out, " {}", hex::encode(&ins.immediate));
            }
            out.push('\n');
        }
        out
    }
}

/// Linear-sweep decoding. Total over all byte strings.
pub fn disassemble(bytecode: &[u8]) -> Program {
    let mut instructions = Vec::new();
    let mut pc = 0;
    while pc < bytecode.len() {
        let opcode = Opcode::from_byte(bytecode[pc]);
        let width = opcode.immediate_len();
        let available = bytecode.len() - pc - 1;
        let take = width.min(available);
        let mut immediate = bytecode[pc + 1..pc + 1 + take].to_vec();
        let truncated = take < width;
        immediate.resize(width, 0);
        instructions.push(Instruction {
            offset: pc,
            opcode,
            immediate,
            truncated,
        });
        pc += 1 + width;
    }
    Program {
        instructions,
        byte_len: bytecode.len(),
    }
}

/// Re-encodes a program. A truncated final instruction contributes only the
/// bytes that were actually present (`byte_len` bounds it).
pub fn assemble(program: &Program) -> Result<Vec<u8>, EvmError> {
    let mut out = Vec::with_capacity(program.byte_len);
    let last = program.instructions.len().saturating_sub(1);
    for (idx, ins) in program.instructions.iter().enumerate() {
        if ins.truncated && idx != last {
            return Err(EvmError::IllegalProgram {
                offset: ins.offset,
                reason: "truncated instruction before the end of the program",
            });
        }
        if ins.immediate.len() != ins.opcode.immediate_len() {
            return Err(EvmError::ImmediateWidth {
                mnemonic: ins.opcode.mnemonic(),
                expected: ins.opcode.immediate_len(),
                found: ins.immediate.len(),
            });
        }
        out.push(ins.opcode.byte());
        if ins.truncated {
            let present = program
                .byte_len
                .saturating_sub(ins.offset + 1)
                .min(ins.immediate.len().saturating_sub(1));
            out.extend_from_slice(&ins.immediate[..present]);
        } else {
            out.extend_from_slice(&ins.immediate);
        }
    }
    Ok(out)
}

/// Parses hex with or without a `0x` prefix, case-insensitive, ignoring
/// surrounding and embedded whitespace.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, EvmError> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let digits = compact
        .strip_prefix("0x")
        .or_else(|| compact.strip_prefix("0X"))
        .unwrap_or(&compact);
    hex::decode(digits).map_err(|e| EvmError::Hex(e.to_string()))
}

/// Lowercase hex without prefix.
pub fn to_hex(bytes: &[u8]) -> String {
    hex::encode(bytes)
}

/// `0x`-prefixed operands are hex, anything else is decimal.
fn parse_operand(operand: &str) -> Result<Vec<u8>, EvmError> {
    if let Some(digits) = operand
        .strip_prefix("0x")
        .or_else(|| operand.strip_prefix("0X"))
    {
        let digits = if digits.len() % 2 == 1 {
            format!("0{digits}")
        } else {
            digits.to_string()
        };
        return hex::decode(&digits).map_err(|e| EvmError::Hex(e.to_string()));
    }
    let value = ruint::aliases::U256::from_str_radix(operand, 10)
        .map_err(|e| EvmError::Hex(format!("{operand}: {e}")))?;
    let be = value.to_be_bytes::<32>();
    let first = be.iter().position(|&b| b != 0).unwrap_or(31);
    Ok(be[first..].to_vec())
}

/// Assembles a whitespace/semicolon separated mnemonic listing such as
/// `"PUSH1 0x02 PUSH1 3 ADD"`. `PUSHk` takes one operand which is
/// left-padded to `k` bytes.
pub fn assemble_text(source: &str) -> Result<Vec<u8>, EvmError> {
    let mut words = source
        .split(|c: char| c.is_whitespace() || c == ';' || c == ',')
        .filter(|w| !w.is_empty())
        .peekable();
    let mut out = Vec::new();
    while let Some(word) = words.next() {
        let opcode = Opcode::from_mnemonic(word)
            .ok_or_else(|| EvmError::UnknownMnemonic(word.to_string()))?;
        out.push(opcode.byte());
        let width = opcode.immediate_len();
        if width == 0 {
            continue;
        }
        let operand = words
            .next()
            .ok_or_else(|| EvmError::MissingOperand(word.to_string()))?;
        let bytes = parse_operand(operand)?;
        if bytes.len() > width {
            return Err(EvmError::ImmediateWidth {
                mnemonic: opcode.mnemonic(),
                expected: width,
                found: bytes.len(),
            });
        }
        out.extend(std::iter::repeat_n(0, width - bytes.len()));
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}
