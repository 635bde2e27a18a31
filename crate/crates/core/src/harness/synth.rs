//! Seeded generator of small labelled contracts.
//!
//! Every sample is a runnable program plus a Solidity-like source that
//! mirrors it. Labels are drawn independently and each positive label
//! plants one pattern:
//!
//! | label | bytecode pattern                                   |
//! |-------|----------------------------------------------------|
//! | 0     | `CALL` followed by `SSTORE`                        |
//! | 1     | two or more `ADD`/`MUL` in a row with no guard     |
//! | 2     | `TIMESTAMP` compared against a constant            |
//! | 3     | loop bounded by `CALLDATASIZE` reading calldata    |
//! | 4     | `PC GAS GT`                                        |
//!
//! Negatives may carry near-miss distractors: a trailing `CALL` with no
//! store after it, guarded single additions, `NUMBER` reads and loops with
//! constant bounds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::ContractSample;
use crate::evm::{assemble, Instruction, Opcode};
use crate::obfuscate::{lower, Item, LabelId, LiftedProgram};

/// Probability of each planted label.
pub const PRIORS: [f64; 5] = [0.45, 0.5, 0.35, 0.4, 0.3];

/// Chance that a negative sample carries the near-miss for that label.
const DISTRACTOR: f64 = 0.35;

const MEM: [u64; 3] = [0x80, 0xa0, 0xc0];
const FUNCS: [&str; 8] = [
    "withdraw", "deposit", "claim", "payout", "settle", "update", "collect", "release",
];
const VARS: [&str; 12] = [
    "balance", "total", "rate", "fee", "deadline", "owner", "counter", "buffer", "flag", "limit",
    "reward", "last",
];
const CONTRACTS: [&str; 5] = ["Wallet", "Vault", "Auction", "Bank", "Lottery"];

struct Asm {
    prog: LiftedProgram,
}

impl Asm {
    fn op(&mut self, name: &str) -> &mut Self {
        let op = Opcode::from_mnemonic(name).expect("known mnemonic");
        self.prog.items.push(Item::Instr(Instruction::op(op)));
        self
    }

    fn push(&mut self, v: u64) -> &mut Self {
        self.prog.items.push(Item::Instr(Instruction::push_u64(v)));
        self
    }

    fn label(&mut self) -> LabelId {
        self.prog.fresh_label()
    }

    fn jumpdest(&mut self, l: LabelId) -> &mut Self {
        self.prog.items.push(Item::Label(l));
        self.op("JUMPDEST")
    }

    fn push_label(&mut self, l: LabelId) -> &mut Self {
        self.prog.items.push(Item::PushLabel {
            label: l,
            min_width: 1,
        });
        self
    }
}

/// Names shared between the bytecode snippets and the source text.
struct Names {
    amount: String,
    vars: Vec<String>,
}

impl Names {
    fn var(&self, k: usize) -> &str {
        &self.vars[k % self.vars.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Snippet {
    MemWrite,
    SingleOp,
    GuardedAdd,
    StorageWrite,
    BlockNumber,
    ConstLoop,
    CallThenStore,
    CallOnly,
    ArithChain,
    Timestamp,
    CalldataLoop,
    PcGas,
}

const FILLERS: [Snippet; 4] = [
    Snippet::MemWrite,
    Snippet::SingleOp,
    Snippet::GuardedAdd,
    Snippet::StorageWrite,
];

/// Pushes one value: a constant or a calldata word.
fn value(a: &mut Asm, rng: &mut ChaCha8Rng) {
    if rng.gen_bool(0.5) {
        a.push(rng.gen_range(1..=255));
    } else {
        a.push(32 * rng.gen_range(0..3)).op("CALLDATALOAD");
    }
}

fn emit(s: Snippet, a: &mut Asm, src: &mut Vec<String>, n: &Names, rng: &mut ChaCha8Rng) {
    let m = *MEM.choose(rng).expect("nonempty");
    let amt = &n.amount;
    let (v0, v1, v2) = (n.var(rng.gen()), n.var(rng.gen()), n.var(rng.gen()));
    match s {
        Snippet::MemWrite => {
            value(a, rng);
            a.push(m).op("MSTORE");
            src.push(format!("{v0} = {amt};"));
        }
        Snippet::SingleOp => {
            let op = *["SUB", "DIV", "AND", "OR", "XOR"]
                .choose(rng)
                .expect("nonempty");
            value(a, rng);
            value(a, rng);
            a.op(op).push(m).op("MSTORE");
            let sym = match op {
                "SUB" => "-",
                "DIV" => "/",
                "AND" => "&",
                "OR" => "|",
                _ => "^",
            };
            src.push(format!("{v0} = {amt} {sym} {v1};"));
        }
        Snippet::GuardedAdd => {
            let (skip, end) = (a.label(), a.label());
            value(a, rng);
            value(a, rng);
            a.op("ADD").op("DUP1").push(rng.gen_range(1..=255)).op("LT");
            a.push_label(skip).op("JUMPI");
            a.push(m).op("MSTORE").push_label(end).op("JUMP");
            a.jumpdest(skip).op("POP").jumpdest(end);
            src.push(format!("require({v0} + {amt} >= {v0});"));
            src.push(format!("{v0} += {amt};"));
        }
        Snippet::StorageWrite => {
            value(a, rng);
            a.push(rng.gen_range(0..8)).op("SSTORE");
            src.push(format!("{v0} = msg.sender;"));
        }
        Snippet::BlockNumber => {
            a.op("NUMBER").push(m).op("MSTORE");
            src.push(format!("{v0} = block.number;"));
        }
        Snippet::ConstLoop => {
            let top = a.label();
            let bound = rng.gen_range(2..=4);
            a.push(0)
                .jumpdest(top)
                .push(1)
                .op("ADD")
                .op("DUP1")
                .push(bound)
                .op("GT");
            a.push_label(top).op("JUMPI").op("POP");
            src.push(format!(
                "for (uint j = 0; j < {bound}; j++) {{ {v0} += 1; }}"
            ));
        }
        Snippet::CallThenStore | Snippet::CallOnly => {
            for _ in 0..5 {
                a.push(0);
            }
            a.op("CALLER").push(10_000).op("CALL").op("POP");
            if s == Snippet::CallThenStore {
                src.push(format!("msg.sender.call.value({amt})();"));
                a.push(0).push(rng.gen_range(0..8)).op("SSTORE");
                src.push(format!("{v0}[msg.sender] = 0;"));
            } else {
                src.push(format!("msg.sender.send({amt});"));
            }
        }
        Snippet::ArithChain => {
            value(a, rng);
            let ops = rng.gen_range(2..=3);
            let mut expr = amt.clone();
            for k in 0..ops {
                value(a, rng);
                let mul = rng.gen_bool(0.5);
                a.op(if mul { "MUL" } else { "ADD" });
                let rhs = [v1, v2][k % 2];
                expr = format!("{expr} {} {rhs}", if mul { "*" } else { "+" });
            }
            a.push(m).op("MSTORE");
            src.push(format!("{v0} = {expr};"));
        }
        Snippet::Timestamp => {
            let skip = a.label();
            a.op("TIMESTAMP")
                .push(rng.gen_range(1_600_000_000..1_800_000_000))
                .op("GT")
                .op("ISZERO");
            a.push_label(skip)
                .op("JUMPI")
                .push(1)
                .push(m)
                .op("MSTORE")
                .jumpdest(skip);
            src.push(format!("if (block.timestamp > {v0}) {{ {v1} = 1; }}"));
        }
        Snippet::CalldataLoop => {
            let top = a.label();
            a.push(0)
                .jumpdest(top)
                .op("DUP1")
                .op("CALLDATALOAD")
                .push(m)
                .op("MSTORE");
            a.push(32).op("ADD").op("DUP1").op("CALLDATASIZE").op("GT");
            a.push_label(top).op("JUMPI").op("POP");
            src.push(format!(
                "for (uint i = 0; i < msg.data.length; i += 32) {{ {v0} = {amt}[i]; }}"
            ));
        }
        Snippet::PcGas => {
            let skip = a.label();
            a.op("PC").op("GAS").op("GT").push_label(skip).op("JUMPI");
            a.push(0).push(m).op("MSTORE").jumpdest(skip);
            src.push(format!("assembly {{ {v0} := gt(gas(), pc()) }}"));
        }
    }
}

fn planted(label: usize) -> Snippet {
    [
        Snippet::CallThenStore,
        Snippet::ArithChain,
        Snippet::Timestamp,
        Snippet::CalldataLoop,
        Snippet::PcGas,
    ][label]
}

fn sample(id: String, rng: &mut ChaCha8Rng, labels: usize) -> ContractSample {
    let y: Vec<bool> = (0..labels)
        .map(|k| k < PRIORS.len() && rng.gen_bool(PRIORS[k]))
        .collect();
    let mut body: Vec<Snippet> = (0..rng.gen_range(2..=5))
        .map(|_| *FILLERS.choose(rng).expect("nonempty"))
        .collect();
    for (k, &pos) in y.iter().enumerate().take(PRIORS.len()) {
        if pos {
            body.push(planted(k));
        } else if k != 0 && k != 4 && rng.gen_bool(DISTRACTOR) {
            body.push(match k {
                1 => Snippet::GuardedAdd,
                2 => Snippet::BlockNumber,
                _ => Snippet::ConstLoop,
            });
        }
    }
    body.shuffle(rng);
    // A bare call must come after every store, otherwise it would plant label 0.
    if y.first() == Some(&false) && rng.gen_bool(DISTRACTOR) {
        body.push(Snippet::CallOnly);
    }

    let mut vars: Vec<String> = VARS.iter().map(|s| s.to_string()).collect();
    vars.shuffle(rng);
    let names = Names {
        amount: "amount".into(),
        vars: vars[..4].to_vec(),
    };
    let mut asm = Asm {
        prog: LiftedProgram::default(),
    };
    asm.push(0x80).push(0x40).op("MSTORE");
    let mut stmts = Vec::new();
    for s in body {
        emit(s, &mut asm, &mut stmts, &names, rng);
    }
    if rng.gen_bool(0.5) {
        asm.op("STOP");
    } else {
        asm.push(32).push(0x80).op("RETURN");
    }
    let program = lower(&asm.prog).expect("generated labels resolve");
    let bytes = assemble(&program).expect("generated program assembles");

    let contract = CONTRACTS.choose(rng).expect("nonempty");
    let func = FUNCS.choose(rng).expect("nonempty");
    let mut src = format!("pragma solidity ^0.4.{};\n", rng.gen_range(20..=26));
    src.push_str(&format!("// {contract} logic\ncontract {contract} {{\n"));
    for v in &names.vars {
        src.push_str(&format!("    uint {v};\n"));
    }
    src.push_str(&format!(
        "    function {func}(uint {}) public {{\n",
        names.amount
    ));
    for s in stmts {
        src.push_str(&format!("        {s}\n"));
    }
    src.push_str("    }\n}\n");

    ContractSample {
        id,
        source: Some(src),
        bytecode_hex: crate::evm::to_hex(&bytes),
        labels: y,
    }
}

/// `n` samples, byte-identical for a given `seed`. Labels past the fifth
/// carry no pattern and are always negative.
pub fn gen_synthetic(n: usize, seed: u64, labels: usize) -> Vec<ContractSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| sample(format!("synth-{seed}-{i}"), &mut rng, labels))
        .collect()
}
