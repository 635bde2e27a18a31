use std::collections::{HashMap, HashSet};

use crate::evm::{assemble, disassemble, Instruction, Opcode, Program};

use super::ObfError;

pub type LabelId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    /// Marks the position of the next emitted byte.
    Label(LabelId),
    Instr(Instruction),
    /// A `PUSHk` whose immediate is the final offset of `label`; `k` is at
    /// least `min_width` and grows as needed.
    PushLabel {
        label: LabelId,
        min_width: usize,
    },
}

/// A program with symbolic jump targets, so code can be inserted without
/// breaking control flow.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LiftedProgram {
    pub items: Vec<Item>,
    /// Raw bytes of a truncated final instruction, re-emitted verbatim.
    pub trailing: Vec<u8>,
    next_label: LabelId,
}

impl LiftedProgram {
    pub fn fresh_label(&mut self) -> LabelId {
        self.next_label += 1;
        self.next_label - 1
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.items.iter().filter_map(|i| match i {
            Item::Instr(ins) => Some(ins),
            _ => None,
        })
    }
}

fn static_push_target(program: &Program, idx: usize, dests: &HashSet<usize>) -> Option<usize> {
    let next = program.instructions.get(idx + 1)?;
    if next.opcode != Opcode::JUMP && next.opcode != Opcode::JUMPI {
        return None;
    }
    let ins = &program.instructions[idx];
    if !ins.opcode.is_push() || ins.truncated {
        return None;
    }
    let value = usize::try_from(ins.immediate_u64()?).ok()?;
    dests.contains(&value).then_some(value)
}

/// Refuses programs whose jumps cannot be relocated: every `JUMP`/`JUMPI`
/// must be directly preceded by a push of a `JUMPDEST` offset.
pub fn check_static_jumps(program: &Program) -> Result<(), ObfError> {
    let dests: HashSet<usize> = program.jumpdests().into_iter().collect();
    for (idx, ins) in program.instructions.iter().enumerate() {
        if ins.opcode == Opcode::JUMP || ins.opcode == Opcode::JUMPI {
            let ok = idx > 0 && static_push_target(program, idx - 1, &dests).is_some();
            if !ok {
                return Err(ObfError::ComputedJump { offset: ins.offset });
            }
        }
    }
    Ok(())
}

pub fn lift(program: &Program) -> LiftedProgram {
    let dests: HashSet<usize> = program.jumpdests().into_iter().collect();
    let mut labels: HashMap<usize, LabelId> = HashMap::new();
    let mut lifted = LiftedProgram::default();
    let mut dest_list: Vec<usize> = dests.iter().copied().collect();
    dest_list.sort_unstable();
    for d in dest_list {
        let l = lifted.fresh_label();
        labels.insert(d, l);
    }

    let mut body = program.instructions.as_slice();
    if let Some(last) = body.last().filter(|i| i.truncated) {
        let present = program.byte_len.saturating_sub(last.offset + 1);
        lifted.trailing.push(last.opcode.byte());
        lifted
            .trailing
            .extend_from_slice(&last.immediate[..present.min(last.immediate.len())]);
        body = &body[..body.len() - 1];
    }

    for (idx, ins) in body.iter().enumerate() {
        if ins.opcode == Opcode::JUMPDEST {
            lifted.items.push(Item::Label(labels[&ins.offset]));
        }
        match static_push_target(program, idx, &dests) {
            Some(target) => lifted.items.push(Item::PushLabel {
                label: labels[&target],
                min_width: ins.opcode.immediate_len(),
            }),
            None => lifted.items.push(Item::Instr(ins.clone())),
        }
    }
    lifted
}

fn width_for(offset: usize) -> usize {
    let mut w = 1;
    while w < 8 && offset >> (8 * w) != 0 {
        w += 1;
    }
    w
}

const MAX_ROUNDS: usize = 16;

/// Lays the program out and resolves labels. Label pushes only ever widen,
/// so the iteration is monotone.
pub fn lower(lifted: &LiftedProgram) -> Result<Program, ObfError> {
    let mut widths: Vec<usize> = lifted
        .items
        .iter()
        .map(|it| match it {
            Item::PushLabel { min_width, .. } => (*min_width).max(1),
            _ => 0,
        })
        .collect();

    let mut positions: HashMap<LabelId, usize> = HashMap::new();
    let mut stable = false;
    for _ in 0..MAX_ROUNDS {
        positions.clear();
        let mut pc = 0;
        for (it, w) in lifted.items.iter().zip(&widths) {
            match it {
                Item::Label(l) => {
                    if positions.insert(*l, pc).is_some() {
                        return Err(ObfError::DuplicateLabel(*l));
                    }
                }
                Item::Instr(ins) => pc += ins.size(),
                Item::PushLabel { .. } => pc += 1 + w,
            }
        }
        let mut changed = false;
        for (it, w) in lifted.items.iter().zip(widths.iter_mut()) {
            if let Item::PushLabel { label, .. } = it {
                let target = *positions
                    .get(label)
                    .ok_or(ObfError::UndefinedLabel(*label))?;
                let need = width_for(target);
                if need > *w {
                    *w = need;
                    changed = true;
                }
            }
        }
        if !changed {
            stable = true;
            break;
        }
    }
    if !stable {
        return Err(ObfError::Unresolvable);
    }

    let mut instructions = Vec::with_capacity(lifted.items.len());
    for (it, &w) in lifted.items.iter().zip(&widths) {
        match it {
            Item::Label(_) => {}
            Item::Instr(ins) => instructions.push(ins.clone()),
            Item::PushLabel { label, .. } => {
                let target = positions[label] as u64;
                let be = target.to_be_bytes();
                let mut imm = vec![0u8; w];
                let n = w.min(8);
                imm[w - n..].copy_from_slice(&be[8 - n..]);
                instructions.push(
                    Instruction::new(Opcode::push(w).expect("width in 1..=8"), imm)
                        .expect("width matches"),
                );
            }
        }
    }
    let mut bytes = assemble(&Program::from_instructions(instructions))?;
    bytes.extend_from_slice(&lifted.trailing);
    Ok(disassemble(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::{assemble_text, execute};

    fn prog(asm: &str) -> Program {
        disassemble(&assemble_text(asm).unwrap())
    }

    #[test]
    fn lift_marks_push_then_jump() {
        let p = prog("PUSH1 4 JUMP INVALID JUMPDEST STOP");
        let l = lift(&p);
        assert_eq!(
            l.items[0],
            Item::PushLabel {
                label: 0,
                min_width: 1
            }
        );
        assert_eq!(l.items[3], Item::Label(0));
        assert_eq!(
            assemble(&lower(&l).unwrap()).unwrap(),
            assemble(&p).unwrap()
        );
    }

    #[test]
    fn plain_constant_stays_raw() {
        let p = prog("PUSH1 4 POP JUMPDEST STOP");
        let l = lift(&p);
        assert!(matches!(l.items[0], Item::Instr(_)));
        assert!(check_static_jumps(&p).is_ok());
    }

    #[test]
    fn identity_round_trip_keeps_truncated_tail() {
        let bytes = vec![0x60, 0x04, 0x56, 0xfe, 0x5b, 0x00, 0x62, 0xaa];
        let p = disassemble(&bytes);
        let l = lift(&p);
        assert_eq!(l.trailing, [0x62, 0xaa]);
        assert_eq!(assemble(&lower(&l).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn insertion_relocates_targets() {
        let p =
            prog("PUSH1 4 JUMP INVALID JUMPDEST PUSH1 1 PUSH1 0 MSTORE PUSH1 32 PUSH1 0 RETURN");
        let mut l = lift(&p);
        let junk = [Instruction::push_u64(7), Instruction::op(Opcode::POP)];
        l.items.splice(0..0, junk.into_iter().map(Item::Instr));
        let q = lower(&l).unwrap();
        assert_eq!(q.byte_len, p.byte_len + 3);
        assert_eq!(q.instructions[2].immediate, [7]);
        assert_eq!(
            execute(&p, &[], 1000).outcome(),
            execute(&q, &[], 1000).outcome()
        );
    }

    #[test]
    fn widening_across_255() {
        let mut asm = String::from("PUSH1 0x06 JUMP ");
        for _ in 0..3 {
            asm.push_str("JUMPDEST ");
        }
        asm.push_str("JUMPDEST PUSH1 1 PUSH1 0 MSTORE PUSH1 32 PUSH1 0 RETURN");
        let p = prog(&asm);
        let mut l = lift(&p);
        // 300 junk bytes before the target push it past 255.
        let pad: Vec<Item> = (0..100)
            .flat_map(|_| {
                [
                    Item::Instr(Instruction::push_u64(1)),
                    Item::Instr(Instruction::op(Opcode::POP)),
                ]
            })
            .collect();
        l.items.splice(2..2, pad);
        let q = lower(&l).unwrap();
        assert_eq!(q.instructions[0].opcode, Opcode::push(2).unwrap());
        assert_eq!(
            execute(&p, &[], 10_000).outcome(),
            execute(&q, &[], 10_000).outcome()
        );
        assert_eq!(execute(&q, &[], 10_000).return_data[31], 1);
    }

    #[test]
    fn computed_jump_refused() {
        let p = prog("PUSH1 0 MLOAD JUMP");
        assert!(matches!(
            check_static_jumps(&p),
            Err(ObfError::ComputedJump { offset: 3 })
        ));
    }

    #[test]
    fn undefined_label_is_an_error() {
        let mut l = LiftedProgram::default();
        l.items.push(Item::PushLabel {
            label: 5,
            min_width: 1,
        });
        assert_eq!(lower(&l), Err(ObfError::UndefinedLabel(5)));
    }
}
