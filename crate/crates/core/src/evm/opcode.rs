use std::fmt;

/// Mnemonic reported for every byte without an assigned instruction.
pub const INVALID_MNEMONIC: &str = "INVALID";

static PUSH_NAMES: [&str; 32] = [
    "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9", "PUSH10",
    "PUSH11", "PUSH12", "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18", "PUSH19",
    "PUSH20", "PUSH21", "PUSH22", "PUSH23", "PUSH24", "PUSH25", "PUSH26", "PUSH27", "PUSH28",
    "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];

static DUP_NAMES: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11",
    "DUP12", "DUP13", "DUP14", "DUP15", "DUP16",
];

static SWAP_NAMES: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10",
    "SWAP11", "SWAP12", "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];

static LOG_NAMES: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

// Pre-Shanghai instruction set: 0x5f (PUSH0) is unassigned.
const fn assigned(byte: u8) -> Option<&'static str> {
    Some(match byte {
        0x00 => "STOP",
        0x01 => "ADD",
        0x02 => "MUL",
        0x03 => "SUB",
        0x04 => "DIV",
        0x05 => "SDIV",
        0x06 => "MOD",
        0x07 => "SMOD",
        0x08 => "ADDMOD",
        0x09 => "MULMOD",
        0x0a => "EXP",
        0x0b => "SIGNEXTEND",
        0x10 => "LT",
        0x11 => "GT",
        0x12 => "SLT",
        0x13 => "SGT",
        0x14 => "EQ",
        0x15 => "ISZERO",
        0x16 => "AND",
        0x17 => "OR",
        0x18 => "XOR",
        0x19 => "NOT",
        0x1a => "BYTE",
        0x1b => "SHL",
        0x1c => "SHR",
        0x1d => "SAR",
        0x20 => "SHA3",
        0x30 => "ADDRESS",
        0x31 => "BALANCE",
        0x32 => "ORIGIN",
        0x33 => "CALLER",
        0x34 => "CALLVALUE",
        0x35 => "CALLDATALOAD",
        0x36 => "CALLDATASIZE",
        0x37 => "CALLDATACOPY",
        0x38 => "CODESIZE",
        0x39 => "CODECOPY",
        0x3a => "GASPRICE",
        0x3b => "EXTCODESIZE",
        0x3c => "EXTCODECOPY",
        0x3d => "RETURNDATASIZE",
        0x3e => "RETURNDATACOPY",
        0x3f => "EXTCODEHASH",
        0x40 => "BLOCKHASH",
        0x41 => "COINBASE",
        0x42 => "TIMESTAMP",
        0x43 => "NUMBER",
        0x44 => "DIFFICULTY",
        0x45 => "GASLIMIT",
        0x46 => "CHAINID",
        0x47 => "SELFBALANCE",
        0x48 => "BASEFEE",
        0x50 => "POP",
        0x51 => "MLOAD",
        0x52 => "MSTORE",
        0x53 => "MSTORE8",
        0x54 => "SLOAD",
        0x55 => "SSTORE",
        0x56 => "JUMP",
        0x57 => "JUMPI",
        0x58 => "PC",
        0x59 => "MSIZE",
        0x5a => "GAS",
        0x5b => "JUMPDEST",
        0x60..=0x7f => PUSH_NAMES[(byte - 0x60) as usize],
        0x80..=0x8f => DUP_NAMES[(byte - 0x80) as usize],
        0x90..=0x9f => SWAP_NAMES[(byte - 0x90) as usize],
        0xa0..=0xa4 => LOG_NAMES[(byte - 0xa0) as usize],
        0xf0 => "CREATE",
        0xf1 => "CALL",
        0xf2 => "CALLCODE",
        0xf3 => "RETURN",
        0xf4 => "DELEGATECALL",
        0xf5 => "CREATE2",
        0xfa => "STATICCALL",
        0xfd => "REVERT",
        0xfe => "INVALID",
        0xff => "SELFDESTRUCT",
        _ => return None,
    })
}

/// A single EVM opcode: the raw byte together with its decoded mnemonic.
///
/// Every byte decodes; unassigned bytes keep their value but report the
/// `INVALID` mnemonic so that re-encoding is lossless.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Opcode {
    byte: u8,
}

impl Opcode {
    pub const STOP: Opcode = Opcode { byte: 0x00 };
    pub const ADD: Opcode = Opcode { byte: 0x01 };
    pub const MUL: Opcode = Opcode { byte: 0x02 };
    pub const SUB: Opcode = Opcode { byte: 0x03 };
    pub const POP: Opcode = Opcode { byte: 0x50 };
    pub const JUMP: Opcode = Opcode { byte: 0x56 };
    pub const JUMPI: Opcode = Opcode { byte: 0x57 };
    pub const JUMPDEST: Opcode = Opcode { byte: 0x5b };
    pub const PUSH1: Opcode = Opcode { byte: 0x60 };
    pub const DUP1: Opcode = Opcode { byte: 0x80 };
    pub const SWAP1: Opcode = Opcode { byte: 0x90 };
    pub const RETURN: Opcode = Opcode { byte: 0xf3 };
    pub const REVERT: Opcode = Opcode { byte: 0xfd };
    pub const INVALID: Opcode = Opcode { byte: 0xfe };

    pub const fn from_byte(byte: u8) -> Self {
        Opcode { byte }
    }

    /// Looks up an assigned mnemonic (case-insensitive). `INVALID` maps to 0xfe.
    pub fn from_mnemonic(name: &str) -> Option<Self> {
        let upper = name.to_ascii_uppercase();
        (0..=255u8)
            .find(|&b| assigned(b) == Some(upper.as_str()))
            .map(Opcode::from_byte)
    }

    /// `PUSHk` for `1 <= k <= 32`.
    pub fn push(width: usize) -> Option<Self> {
        (1..=32)
            .contains(&width)
            .then(|| Opcode::from_byte(0x5f + width as u8))
    }

    pub const fn byte(self) -> u8 {
        self.byte
    }

    pub fn mnemonic(self) -> &'static str {
        assigned(self.byte).unwrap_or(INVALID_MNEMONIC)
    }

    /// True when the byte has an instruction assigned to it (0xfe counts).
    pub fn is_assigned(self) -> bool {
        assigned(self.byte).is_some()
    }

    pub const fn immediate_len(self) -> usize {
        match self.byte {
            0x60..=0x7f => (self.byte - 0x5f) as usize,
            _ => 0,
        }
    }

    pub const fn is_push(self) -> bool {
        matches!(self.byte, 0x60..=0x7f)
    }

    pub fn is_invalid(self) -> bool {
        self.mnemonic() == INVALID_MNEMONIC
    }

    /// Instructions after which control never falls through to the next byte.
    pub fn halts(self) -> bool {
        matches!(self.byte, 0x00 | 0xf3 | 0xfd | 0xff) || self.is_invalid()
    }

    /// Block-ending instructions for CFG recovery.
    pub fn ends_block(self) -> bool {
        self.halts() || self == Opcode::JUMP || self == Opcode::JUMPI
    }
}

impl fmt::Debug for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(0x{:02x})", self.mnemonic(), self.byte)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}
