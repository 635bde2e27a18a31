//! Control-flow graph recovery over decoded bytecode.
//!
//! Blocks start at offset 0, at every `JUMPDEST`, and right after any
//! `JUMP`, `JUMPI` or halting instruction. Jump targets are resolved only
//! for the push-then-jump idiom; anything else is routed to the synthetic
//! exit block, which also receives an edge from every halting block.

mod dot;

pub use dot::{export_dot, parse_dot, DotError};

use crate::evm::{Opcode, Program};
use crate::preprocess::normalize_mnemonic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Normal,
    Exit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: usize,
    /// First byte of the block.
    pub start_offset: usize,
    /// One past the last byte of the block.
    pub end_offset: usize,
    pub opcode_text: String,
    pub kind: BlockKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    /// Sorted, duplicate-free `(src, dst)` pairs.
    pub edges: Vec<(usize, usize)>,
}

/// Edge list in coordinate form: `rows[0]` holds sources, `rows[1]` targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooEdges {
    pub rows: [Vec<usize>; 2],
}

impl CooEdges {
    pub fn shape(&self) -> (usize, usize) {
        (2, self.rows[0].len())
    }
}

impl Cfg {
    pub fn num_nodes(&self) -> usize {
        self.blocks.len()
    }

    /// Id of the exit block; it is always the last block.
    pub fn exit_id(&self) -> usize {
        self.blocks
            .iter()
            .rposition(|b| b.kind == BlockKind::Exit)
            .expect("every graph has an exit block")
    }

    pub fn successors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == id).map(|e| e.1)
    }

    pub fn out_degree(&self, id: usize) -> usize {
        self.successors(id).count()
    }
}

/// Assembly for a small contract whose first block is the usual
/// free-memory-pointer prologue followed by a revert. It has nine normal
/// blocks, so the exit block gets id 9 and block 0 has the single edge
/// `0 -> 9`.
pub const SAMPLE_CONTRACT_ASM: &str = "\
PUSH1 0x80 PUSH1 0x40 MSTORE PUSH1 0x00 DUP1 REVERT \
JUMPDEST PUSH1 0x00 CALLDATALOAD PUSH1 0x13 JUMPI \
PUSH1 0x18 JUMP \
JUMPDEST CALLVALUE PUSH1 0x1f JUMPI \
JUMPDEST PUSH1 0x01 PUSH1 0x00 SSTORE STOP \
JUMPDEST PUSH1 0x25 JUMP \
JUMPDEST INVALID \
JUMPDEST PUSH1 0x20 PUSH1 0x00 RETURN \
JUMPDEST PUSH1 0x00 MLOAD JUMP";

fn block_ranges(program: &Program) -> Vec<std::ops::Range<usize>> {
    let mut ranges = Vec::new();
    let mut start = 0;
    for (idx, ins) in program.instructions.iter().enumerate() {
        if ins.opcode == Opcode::JUMPDEST && idx > start {
            ranges.push(start..idx);
            start = idx;
        }
        if ins.opcode.ends_block() {
            ranges.push(start..idx + 1);
            start = idx + 1;
        }
    }
    if start < program.instructions.len() {
        ranges.push(start..program.instructions.len());
    }
    ranges
}

pub fn build_cfg(program: &Program) -> Cfg {
    let ranges = block_ranges(program);
    let exit = ranges.len();
    let ins = &program.instructions;

    let mut blocks: Vec<BasicBlock> = ranges
        .iter()
        .enumerate()
        .map(|(id, r)| {
            let last = &ins[r.end - 1];
            BasicBlock {
                id,
                start_offset: ins[r.start].offset,
                end_offset: (last.offset + last.size()).min(program.byte_len),
                opcode_text: ins[r.clone()]
                    .iter()
                    .map(|i| normalize_mnemonic(i.opcode.mnemonic()))
                    .collect::<Vec<_>>()
                    .join(" "),
                kind: BlockKind::Normal,
            }
        })
        .collect();
    blocks.push(BasicBlock {
        id: exit,
        start_offset: program.byte_len,
        end_offset: program.byte_len,
        opcode_text: String::new(),
        kind: BlockKind::Exit,
    });

    let block_at = |offset: usize| blocks.iter().position(|b| b.start_offset == offset);
    let mut edges = Vec::new();
    for (id, r) in ranges.iter().enumerate() {
        let last = &ins[r.end - 1];
        let fall_through = if id + 1 < exit { id + 1 } else { exit };
        let target = || {
            if r.end - r.start < 2 {
                return exit;
            }
            let prev = &ins[r.end - 2];
            if !prev.opcode.is_push() || prev.truncated {
                return exit;
            }
            prev.immediate_u64()
                .and_then(|t| usize::try_from(t).ok())
                .and_then(|t| program.index_of_offset(t))
                .filter(|&i| ins[i].opcode == Opcode::JUMPDEST)
                .and_then(|i| block_at(ins[i].offset))
                .unwrap_or(exit)
        };
        if last.opcode == Opcode::JUMP {
            edges.push((id, target()));
        } else if last.opcode == Opcode::JUMPI {
            edges.push((id, target()));
            edges.push((id, fall_through));
        } else if last.opcode.halts() {
            edges.push((id, exit));
        } else {
            edges.push((id, fall_through));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Cfg { blocks, edges }
}

pub fn export_coo(cfg: &Cfg) -> CooEdges {
    let mut edges = cfg.edges.clone();
    edges.sort_unstable();
    CooEdges {
        rows: [
            edges.iter().map(|e| e.0).collect(),
            edges.iter().map(|e| e.1).collect(),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::{assemble_text, disassemble};

    fn cfg_of(asm: &str) -> Cfg {
        build_cfg(&disassemble(&assemble_text(asm).unwrap()))
    }

    #[test]
    fn empty_program_is_exit_only() {
        let g = build_cfg(&Program::default());
        assert_eq!(g.blocks.len(), 1);
        assert_eq!(g.blocks[0].kind, BlockKind::Exit);
        assert!(g.edges.is_empty());
        assert_eq!(export_coo(&g).shape(), (2, 0));
    }

    #[test]
    fn straight_line() {
        let g = cfg_of("PUSH1 0 POP STOP");
        assert_eq!(g.blocks.len(), 2);
        assert_eq!(g.edges, [(0, 1)]);
        assert_eq!(g.blocks[0].opcode_text, "PUSH POP STOP");
    }

    #[test]
    fn jumpi_has_two_successors() {
        let g = cfg_of("PUSH1 1 PUSH1 6 JUMPI STOP JUMPDEST STOP");
        // blocks: [0..5) JUMPI, [5] STOP, [6] JUMPDEST STOP, exit = 3
        assert_eq!(g.blocks.len(), 4);
        assert_eq!(g.blocks[2].start_offset, 6);
        let succ: Vec<_> = g.successors(0).collect();
        assert_eq!(succ, [1, 2]);
        assert_eq!(g.edges, [(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn unresolved_and_bogus_targets_go_to_exit() {
        // Target is computed.
        let g = cfg_of("PUSH1 0 MLOAD JUMP JUMPDEST STOP");
        assert_eq!(g.successors(0).collect::<Vec<_>>(), [2]);
        // Target is not a JUMPDEST.
        let g = cfg_of("PUSH1 3 JUMP STOP");
        assert_eq!(g.successors(0).collect::<Vec<_>>(), [2]);
    }

    #[test]
    fn fall_through_into_jumpdest_and_off_the_end() {
        let g = cfg_of("PUSH1 0 JUMPDEST PUSH1 1");
        assert_eq!(g.blocks.len(), 3);
        assert_eq!(g.edges, [(0, 1), (1, 2)]);
    }

    #[test]
    fn sample_contract() {
        let g = cfg_of(SAMPLE_CONTRACT_ASM);
        assert_eq!(g.exit_id(), 9);
        assert_eq!(g.blocks[0].opcode_text, "PUSH PUSH MSTORE PUSH DUP REVERT");
        assert_eq!(g.successors(0).collect::<Vec<_>>(), [9]);
        assert_eq!(g.successors(1).collect::<Vec<_>>(), [2, 3]);
        assert_eq!(g.successors(2).collect::<Vec<_>>(), [4]);
        assert_eq!(g.successors(3).collect::<Vec<_>>(), [4, 5]);
        assert_eq!(g.successors(5).collect::<Vec<_>>(), [7]);
        assert_eq!(g.successors(8).collect::<Vec<_>>(), [9]);
        assert_eq!(g.out_degree(9), 0);
    }

    #[test]
    fn coo_is_sorted_columns() {
        let g = cfg_of(SAMPLE_CONTRACT_ASM);
        let coo = export_coo(&g);
        assert_eq!(coo.shape(), (2, g.edges.len()));
        assert_eq!(coo.rows[0][0], 0);
        assert_eq!(coo.rows[1][0], 9);
    }

    #[test]
    fn partition_covers_every_instruction() {
        let p = disassemble(&assemble_text(SAMPLE_CONTRACT_ASM).unwrap());
        let g = build_cfg(&p);
        for ins in &p.instructions {
            let owners = g
                .blocks
                .iter()
                .filter(|b| b.kind == BlockKind::Normal)
                .filter(|b| (b.start_offset..b.end_offset).contains(&ins.offset))
                .count();
            assert_eq!(owners, 1);
        }
    }
}
