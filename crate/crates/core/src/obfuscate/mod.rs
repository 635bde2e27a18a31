//! Semantics-preserving transforms over bytecode and Solidity source.
//!
//! Bytecode passes work on a [`LiftedProgram`], where jump targets are
//! symbolic labels, and are lowered back to bytes afterwards. Results can
//! be checked against the reference interpreter with [`verify_equivalence`].

mod bytecode;
mod lifted;
mod source;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::evm::{execute, EvmError, Program};

pub use bytecode::{obf_false_branch, obf_incomplete, obf_junk, obf_reorder};
pub use lifted::{check_static_jumps, lift, lower, Item, LabelId, LiftedProgram};
pub use source::{expand_constant, obf_source, SourcePass, RENAME_DIGEST};

pub use crate::lex::LexError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObfError {
    #[error("jump at offset {offset} has a computed target; refusing to relocate")]
    ComputedJump { offset: usize },
    #[error("label layout did not converge")]
    Unresolvable,
    #[error("label {0} is referenced but never defined")]
    UndefinedLabel(LabelId),
    #[error("label {0} is defined twice")]
    DuplicateLabel(LabelId),
    #[error("junk density must be within [0, 1], got {0}")]
    BadDensity(f64),
    #[error("unknown pass `{0}`")]
    UnknownPass(String),
    #[error(transparent)]
    Evm(#[from] EvmError),
    #[error(transparent)]
    Lex(#[from] LexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BytecodePass {
    FalseBranch,
    Reorder,
    Junk,
    Incomplete,
}

impl BytecodePass {
    pub const ALL: [BytecodePass; 4] = [
        BytecodePass::FalseBranch,
        BytecodePass::Reorder,
        BytecodePass::Junk,
        BytecodePass::Incomplete,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BytecodePass::FalseBranch => "false_branch",
            BytecodePass::Reorder => "reorder",
            BytecodePass::Junk => "junk",
            BytecodePass::Incomplete => "incomplete",
        }
    }
}

impl std::str::FromStr for BytecodePass {
    type Err = ObfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        BytecodePass::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or(ObfError::UnknownPass(s))
    }
}

/// Parses a comma separated pass list; `all` selects every pass.
pub fn parse_passes<P>(csv: &str, all: &[P]) -> Result<Vec<P>, String>
where
    P: Copy + std::str::FromStr,
    P::Err: std::fmt::Display,
{
    if csv.trim().eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    csv.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<P>().map_err(|e| e.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObfuscationReport {
    pub transform: String,
    pub size_before: usize,
    pub size_after: usize,
    pub verified: bool,
    pub trials: usize,
}

/// Junk insertion probability used when none is given.
pub const DEFAULT_JUNK_DENSITY: f64 = 0.3;

/// Step budget used by equivalence checks.
pub const VERIFY_STEP_LIMIT: usize = 100_000;

/// Random calldata of 0..=96 bytes. Word-aligned lengths are favoured so
/// that typical argument decoding paths are exercised.
pub fn random_calldata(rng: &mut impl Rng) -> Vec<u8> {
    let len = if rng.gen_bool(0.5) {
        32 * rng.gen_range(0..=3)
    } else {
        rng.gen_range(0..=96)
    };
    let mut data = vec![0u8; len];
    rng.fill(data.as_mut_slice());
    data
}

/// Runs both programs on `trials` random inputs and compares status and
/// return data.
pub fn verify_equivalence(a: &Program, b: &Program, trials: usize, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).all(|_| {
        let cd = random_calldata(&mut rng);
        let ra = execute(a, &cd, VERIFY_STEP_LIMIT);
        let rb = execute(b, &cd, VERIFY_STEP_LIMIT);
        ra.outcome() == rb.outcome()
    })
}

fn pass_seed(seed: u64, pass: BytecodePass) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ pass as u64
}

/// Applies the selected passes in the canonical order (false branch,
/// reorder, junk, then incomplete on the lowered bytes).
pub fn obfuscate_bytecode(
    program: &Program,
    passes: &[BytecodePass],
    seed: u64,
    density: f64,
) -> Result<Program, ObfError> {
    check_static_jumps(program)?;
    let mut lifted = lift(program);
    if passes.contains(&BytecodePass::FalseBranch) {
        lifted = obf_false_branch(&lifted, pass_seed(seed, BytecodePass::FalseBranch));
    }
    if passes.contains(&BytecodePass::Reorder) {
        lifted = obf_reorder(&lifted, pass_seed(seed, BytecodePass::Reorder));
    }
    if passes.contains(&BytecodePass::Junk) {
        lifted = obf_junk(&lifted, pass_seed(seed, BytecodePass::Junk), density)?;
    }
    let mut out = lower(&lifted)?;
    if passes.contains(&BytecodePass::Incomplete) {
        out = obf_incomplete(&out, pass_seed(seed, BytecodePass::Incomplete));
    }
    Ok(out)
}

/// [`obfuscate_bytecode`] followed by an interpreter check.
pub fn obfuscate_and_verify(
    program: &Program,
    passes: &[BytecodePass],
    seed: u64,
    density: f64,
    trials: usize,
) -> Result<(Program, ObfuscationReport), ObfError> {
    let out = obfuscate_bytecode(program, passes, seed, density)?;
    let verified = verify_equivalence(program, &out, trials, seed ^ 0xa5a5);
    let transform = BytecodePass::ALL
        .iter()
        .filter(|p| passes.contains(p))
        .map(|p| p.name())
        .collect::<Vec<_>>()
        .join("+");
    let report = ObfuscationReport {
        transform,
        size_before: program.byte_len,
        size_after: out.byte_len,
        verified,
        trials,
    };
    Ok((out, report))
}
