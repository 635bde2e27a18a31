//! A small EVM interpreter used as the equivalence oracle for obfuscation.
//!
//! Covers stack, arithmetic/logic, control flow and memory instructions with
//! 256-bit modular arithmetic. The execution environment is a fixed stub:
//! block/transaction queries return constants, storage is a transient map
//! local to one execution, and external calls always succeed without side
//! effects. Anything else halts with [`ExecStatus::Reverted`] and no data.

use std::collections::{BTreeMap, HashSet};

use ruint::aliases::U256;

use super::program::Program;

const STACK_LIMIT: usize = 1024;
const MEMORY_LIMIT: usize = 1 << 20;

pub const STUB_TIMESTAMP: u64 = 1_700_000_000;
pub const STUB_NUMBER: u64 = 18_000_000;
pub const STUB_GAS: u64 = 1_000_000;
pub const STUB_GASLIMIT: u64 = 30_000_000;
const STUB_CALLER: u64 = 0xca11e4;
const STUB_ADDRESS: u64 = 0xc0de;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ExecStatus {
    Stopped,
    Returned,
    Reverted,
    InvalidJump,
    StackError,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    pub status: ExecStatus,
    pub return_data: Vec<u8>,
    pub steps: usize,
}

impl ExecResult {
    /// The observable outcome compared by equivalence checks.
    pub fn outcome(&self) -> (ExecStatus, &[u8]) {
        (self.status, &self.return_data)
    }
}

enum Halt {
    Status(ExecStatus),
    Data(ExecStatus, Vec<u8>),
}

struct Machine<'a> {
    program: &'a Program,
    calldata: &'a [u8],
    jumpdests: HashSet<usize>,
    stack: Vec<U256>,
    memory: Vec<u8>,
    storage: BTreeMap<U256, U256>,
}

fn small(x: U256) -> Option<usize> {
    let limbs = x.as_limbs();
    if limbs[1..].iter().any(|&l| l != 0) || limbs[0] > usize::MAX as u64 {
        None
    } else {
        Some(limbs[0] as usize)
    }
}

fn bool_word(b: bool) -> U256 {
    if b {
        U256::from(1u8)
    } else {
        U256::ZERO
    }
}

impl<'a> Machine<'a> {
    fn pop(&mut self) -> Result<U256, Halt> {
        self.stack.pop().ok_or(Halt::Status(ExecStatus::StackError))
    }

    fn push(&mut self, v: U256) -> Result<(), Halt> {
        if self.stack.len() >= STACK_LIMIT {
            return Err(Halt::Status(ExecStatus::StackError));
        }
        self.stack.push(v);
        Ok(())
    }

    fn binary(&mut self, f: impl FnOnce(U256, U256) -> U256) -> Result<(), Halt> {
        let a = self.pop()?;
        let b = self.pop()?;
        self.push(f(a, b))
    }

    fn expand(&mut self, offset: U256, len: usize) -> Result<usize, Halt> {
        if len == 0 {
            return Ok(0);
        }
        let offset = small(offset)
            .filter(|o| o.saturating_add(len) <= MEMORY_LIMIT)
            .ok_or(Halt::Status(ExecStatus::Reverted))?;
        let end = offset + len;
        if self.memory.len() < end {
            let rounded = end.div_ceil(32) * 32;
            self.memory.resize(rounded, 0);
        }
        Ok(offset)
    }

    fn mem_slice(&mut self, offset: U256, len: U256) -> Result<Vec<u8>, Halt> {
        let len = small(len)
            .filter(|&l| l <= MEMORY_LIMIT)
            .ok_or(Halt::Status(ExecStatus::Reverted))?;
        let start = self.expand(offset, len)?;
        Ok(self.memory[start..start + len].to_vec())
    }

    fn calldata_word(&self, offset: U256) -> U256 {
        let mut word = [0u8; 32];
        if let Some(start) = small(offset) {
            for (i, slot) in word.iter_mut().enumerate() {
                if let Some(&b) = start.checked_add(i).and_then(|p| self.calldata.get(p)) {
                    *slot = b;
                }
            }
        }
        U256::from_be_bytes(word)
    }

    fn jump_target(&self, dest: U256) -> Result<usize, Halt> {
        small(dest)
            .filter(|d| self.jumpdests.contains(d))
            .and_then(|d| self.program.index_of_offset(d))
            .ok_or(Halt::Status(ExecStatus::InvalidJump))
    }

    fn discard(&mut self, n: usize) -> Result<(), Halt> {
        for _ in 0..n {
            self.pop()?;
        }
        Ok(())
    }

    /// Executes instruction `idx`; returns the index of the next instruction.
    fn step(&mut self, idx: usize) -> Result<usize, Halt> {
        let ins = &self.program.instructions[idx];
        let op = ins.opcode;
        let next = idx + 1;
        match op.byte() {
            0x00 => return Err(Halt::Status(ExecStatus::Stopped)),
            0x01 => self.binary(|a, b| a.wrapping_add(b))?,
            0x02 => self.binary(|a, b| a.wrapping_mul(b))?,
            0x03 => self.binary(|a, b| a.wrapping_sub(b))?,
            0x04 => self.binary(|a, b| a.checked_div(b).unwrap_or(U256::ZERO))?,
            0x06 => self.binary(|a, b| a.checked_rem(b).unwrap_or(U256::ZERO))?,
            0x08 => {
                let (a, b, n) = (self.pop()?, self.pop()?, self.pop()?);
                self.push(a.add_mod(b, n))?;
            }
            0x09 => {
                let (a, b, n) = (self.pop()?, self.pop()?, self.pop()?);
                self.push(a.mul_mod(b, n))?;
            }
            0x0a => self.binary(|a, b| a.wrapping_pow(b))?,
            0x10 => self.binary(|a, b| bool_word(a < b))?,
            0x11 => self.binary(|a, b| bool_word(a > b))?,
            0x14 => self.binary(|a, b| bool_word(a == b))?,
            0x15 => {
                let a = self.pop()?;
                self.push(bool_word(a.is_zero()))?;
            }
            0x16 => self.binary(|a, b| a & b)?,
            0x17 => self.binary(|a, b| a | b)?,
            0x18 => self.binary(|a, b| a ^ b)?,
            0x19 => {
                let a = self.pop()?;
                self.push(!a)?;
            }
            0x1a => self.binary(|i, x| match small(i) {
                Some(i) if i < 32 => U256::from(x.to_be_bytes::<32>()[i]),
                _ => U256::ZERO,
            })?,
            0x1b => self.binary(|shift, v| match small(shift) {
                Some(s) if s < 256 => v.wrapping_shl(s),
                _ => U256::ZERO,
            })?,
            0x1c => self.binary(|shift, v| match small(shift) {
                Some(s) if s < 256 => v.wrapping_shr(s),
                _ => U256::ZERO,
            })?,
            0x30 => self.push(U256::from(STUB_ADDRESS))?,
            0x31 => {
                self.pop()?;
                self.push(U256::ZERO)?;
            }
            0x32 | 0x33 => self.push(U256::from(STUB_CALLER))?,
            0x34 => self.push(U256::ZERO)?,
            0x35 => {
                let off = self.pop()?;
                let w = self.calldata_word(off);
                self.push(w)?;
            }
            0x36 => self.push(U256::from(self.calldata.len()))?,
            0x3a => self.push(U256::from(1u8))?,
            0x3d => self.push(U256::ZERO)?,
            0x41 => self.push(U256::ZERO)?,
            0x42 => self.push(U256::from(STUB_TIMESTAMP))?,
            0x43 => self.push(U256::from(STUB_NUMBER))?,
            0x44 | 0x47 | 0x48 => self.push(U256::ZERO)?,
            0x45 => self.push(U256::from(STUB_GASLIMIT))?,
            0x46 => self.push(U256::from(1u8))?,
            0x50 => {
                self.pop()?;
            }
            0x51 => {
                let off = self.pop()?;
                let start = self.expand(off, 32)?;
                let mut word = [0u8; 32];
                word.copy_from_slice(&self.memory[start..start + 32]);
                self.push(U256::from_be_bytes(word))?;
            }
            0x52 => {
                let off = self.pop()?;
                let val = self.pop()?;
                let start = self.expand(off, 32)?;
                self.memory[start..start + 32].copy_from_slice(&val.to_be_bytes::<32>());
            }
            0x53 => {
                let off = self.pop()?;
                let val = self.pop()?;
                let start = self.expand(off, 1)?;
                self.memory[start] = val.to_be_bytes::<32>()[31];
            }
            0x54 => {
                let key = self.pop()?;
                let v = self.storage.get(&key).copied().unwrap_or(U256::ZERO);
                self.push(v)?;
            }
            0x55 => {
                let key = self.pop()?;
                let val = self.pop()?;
                self.storage.insert(key, val);
            }
            0x56 => {
                let dest = self.pop()?;
                return self.jump_target(dest);
            }
            0x57 => {
                let dest = self.pop()?;
                let cond = self.pop()?;
                if !cond.is_zero() {
                    return self.jump_target(dest);
                }
            }
            0x58 => self.push(U256::from(ins.offset))?,
            0x59 => self.push(U256::from(self.memory.len()))?,
            0x5a => self.push(U256::from(STUB_GAS))?,
            0x5b => {}
            0x60..=0x7f => {
                let v = U256::from_be_slice(&ins.immediate);
                self.push(v)?;
            }
            0x80..=0x8f => {
                let depth = (op.byte() - 0x7f) as usize;
                if self.stack.len() < depth {
                    return Err(Halt::Status(ExecStatus::StackError));
                }
                let v = self.stack[self.stack.len() - depth];
                self.push(v)?;
            }
            0x90..=0x9f => {
                let depth = (op.byte() - 0x8f) as usize;
                let len = self.stack.len();
                if len < depth + 1 {
                    return Err(Halt::Status(ExecStatus::StackError));
                }
                self.stack.swap(len - 1, len - 1 - depth);
            }
            0xa0..=0xa4 => self.discard(2 + (op.byte() - 0xa0) as usize)?,
            0xf1 | 0xf2 => {
                self.discard(7)?;
                self.push(U256::from(1u8))?;
            }
            0xf4 | 0xfa => {
                self.discard(6)?;
                self.push(U256::from(1u8))?;
            }
            0xf3 => {
                let off = self.pop()?;
                let len = self.pop()?;
                let data = self.mem_slice(off, len)?;
                return Err(Halt::Data(ExecStatus::Returned, data));
            }
            0xfd => {
                let off = self.pop()?;
                let len = self.pop()?;
                let data = self.mem_slice(off, len)?;
                return Err(Halt::Data(ExecStatus::Reverted, data));
            }
            // INVALID, unassigned bytes, and everything outside the supported set.
            _ => return Err(Halt::Status(ExecStatus::Reverted)),
        }
        Ok(next)
    }
}

/// Runs `program` against `calldata` for at most `step_limit` instructions.
///
/// Pure: the result depends only on the arguments. Running off the end of
/// the code behaves as `STOP`.
pub fn execute(program: &Program, calldata: &[u8], step_limit: usize) -> ExecResult {
    let mut m = Machine {
        program,
        calldata,
        jumpdests: program.jumpdests().into_iter().collect(),
        stack: Vec::new(),
        memory: Vec::new(),
        storage: BTreeMap::new(),
    };
    let mut idx = 0;
    let mut steps = 0;
    loop {
        if idx >= program.instructions.len() {
            return ExecResult {
                status: ExecStatus::Stopped,
                return_data: Vec::new(),
                steps,
            };
        }
        if steps >= step_limit {
            return ExecResult {
                status: ExecStatus::StepLimit,
                return_data: Vec::new(),
                steps,
            };
        }
        steps += 1;
        match m.step(idx) {
            Ok(next) => idx = next,
            Err(Halt::Status(status)) => {
                return ExecResult {
                    status,
                    return_data: Vec::new(),
                    steps,
                }
            }
            Err(Halt::Data(status, return_data)) => {
                return ExecResult {
                    status,
                    return_data,
                    steps,
                }
            }
        }
    }
}
