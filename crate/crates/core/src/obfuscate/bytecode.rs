use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evm::{disassemble, Instruction, Opcode, Program};

use super::lifted::{Item, LiftedProgram};
use super::ObfError;

fn op(byte: u8) -> Item {
    Item::Instr(Instruction::op(Opcode::from_byte(byte)))
}

fn push(value: u64) -> Item {
    Item::Instr(Instruction::push_u64(value))
}

const POP: u8 = 0x50;
const ADD: u8 = 0x01;
const SWAP1: u8 = 0x90;
const JUMPDEST: u8 = 0x5b;

/// A stack-neutral snippet that is safe to run from any stack depth below
/// the limit.
fn junk_sequence(rng: &mut ChaCha8Rng) -> Vec<Item> {
    let a = rng.gen_range(0..=255);
    let b = rng.gen_range(0..=255);
    match rng.gen_range(0..4) {
        0 => vec![push(a), op(POP)],
        1 => vec![push(a), push(b), op(ADD), op(POP)],
        2 => vec![push(a), push(b), op(SWAP1), op(POP), op(POP)],
        _ => vec![op(JUMPDEST)],
    }
}

fn is_instr(item: &Item, opcode: Opcode) -> bool {
    matches!(item, Item::Instr(i) if i.opcode == opcode)
}

/// Inserts junk at block entry points: program start, after each
/// `JUMPDEST`, and on the fall-through side of each `JUMPI`. Each site is
/// taken with probability `density`.
pub fn obf_junk(
    lifted: &LiftedProgram,
    seed: u64,
    density: f64,
) -> Result<LiftedProgram, ObfError> {
    if !(0.0..=1.0).contains(&density) || density.is_nan() {
        return Err(ObfError::BadDensity(density));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = lifted.clone();
    out.items.clear();
    let maybe_insert = |items: &mut Vec<Item>, rng: &mut ChaCha8Rng| {
        if density > 0.0 && rng.gen_bool(density) {
            items.extend(junk_sequence(rng));
        }
    };
    maybe_insert(&mut out.items, &mut rng);
    for item in &lifted.items {
        out.items.push(item.clone());
        if is_instr(item, Opcode::JUMPDEST) || is_instr(item, Opcode::JUMPI) {
            maybe_insert(&mut out.items, &mut rng);
        }
    }
    Ok(out)
}

/// Rewrites unconditional jumps as `PUSH1 1; SWAP1; JUMPI` followed by a
/// dead self-loop `Ld: JUMPDEST; PUSH Ld; JUMP`. About half the jumps are
/// picked, and at least one whenever the program has any.
pub fn obf_false_branch(lifted: &LiftedProgram, seed: u64) -> LiftedProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jumps: Vec<usize> = (0..lifted.items.len())
        .filter(|&i| is_instr(&lifted.items[i], Opcode::JUMP))
        .collect();
    let mut picked: Vec<bool> = jumps.iter().map(|_| rng.gen_bool(0.5)).collect();
    if !jumps.is_empty() && !picked.iter().any(|&p| p) {
        let k = rng.gen_range(0..jumps.len());
        picked[k] = true;
    }

    let mut out = lifted.clone();
    out.items.clear();
    let mut next = jumps.iter().zip(&picked).peekable();
    for (idx, item) in lifted.items.iter().enumerate() {
        let selected = match next.peek() {
            Some((&j, &p)) if j == idx => {
                next.next();
                p
            }
            _ => false,
        };
        if !selected {
            out.items.push(item.clone());
            continue;
        }
        let decoy = out.fresh_label();
        out.items.extend([
            push(1),
            op(SWAP1),
            Item::Instr(Instruction::op(Opcode::JUMPI)),
            Item::Label(decoy),
            op(JUMPDEST),
            Item::PushLabel {
                label: decoy,
                min_width: 1,
            },
            Item::Instr(Instruction::op(Opcode::JUMP)),
        ]);
    }
    out
}

const COMMUTATIVE: [u8; 6] = [0x01, 0x02, 0x16, 0x17, 0x18, 0x14];

fn is_raw_push(item: &Item) -> bool {
    matches!(item, Item::Instr(i) if i.opcode.is_push() && !i.truncated)
}

/// Swaps the operand pushes of `PUSH a; PUSH b; OP` for commutative `OP`.
/// The seed picks a random non-empty subset of eligible sites.
pub fn obf_reorder(lifted: &LiftedProgram, seed: u64) -> LiftedProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = &lifted.items;
    let mut sites = Vec::new();
    let mut i = 0;
    while i + 2 < items.len() {
        let commutative =
            matches!(&items[i + 2], Item::Instr(ins) if COMMUTATIVE.contains(&ins.opcode.byte()));
        if commutative && is_raw_push(&items[i]) && is_raw_push(&items[i + 1]) {
            sites.push(i);
            i += 3;
        } else {
            i += 1;
        }
    }
    let mut chosen: Vec<usize> = sites
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(0.5))
        .collect();
    if chosen.is_empty() {
        if let Some(&s) = sites.choose(&mut rng) {
            chosen.push(s);
        }
    }
    let mut out = lifted.clone();
    for s in chosen {
        out.items.swap(s, s + 1);
    }
    out
}

/// Appends an unreachable, deliberately truncated `PUSHk`. A `STOP` is
/// emitted first when control could otherwise fall into it.
pub fn obf_incomplete(program: &Program, seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = crate::evm::assemble(program).expect("decoded programs re-encode");
    if let Some(last) = program.instructions.last() {
        if last.truncated {
            // Zero padding keeps the value the interpreter already saw.
            let missing = last.offset + last.size() - program.byte_len;
            bytes.extend(std::iter::repeat_n(0, missing));
        }
        if !(last.opcode.halts() || last.opcode == Opcode::JUMP) {
            bytes.push(Opcode::STOP.byte());
        }
    }
    let k = rng.gen_range(2..=32usize);
    let present = rng.gen_range(0..k);
    bytes.push(Opcode::push(k).expect("1..=32").byte());
    bytes.extend((0..present).map(|_| rng.gen::<u8>()));
    disassemble(&bytes)
}
