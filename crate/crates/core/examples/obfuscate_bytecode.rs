//! Apply each bytecode pass and their composition, checking every result
//! against the original on random calldata.

use evmfuse::evm::{assemble, disassemble, execute, to_hex, Opcode};
use evmfuse::harness::gen_synthetic;
use evmfuse::obfuscate::{obfuscate_and_verify, BytecodePass};

const DENSITY: f64 = 0.8;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A sample with jumps, so every pass has somewhere to act.
    let corpus = gen_synthetic(20, 7, 5);
    let (sample, program) = corpus
        .iter()
        .map(|s| (s, disassemble(&s.bytecode().expect("generated hex"))))
        .find(|(_, p)| p.instructions.iter().any(|i| i.opcode == Opcode::JUMP))
        .expect("corpus has a jumping program");
    let mut runs: Vec<Vec<BytecodePass>> = BytecodePass::ALL.iter().map(|&p| vec![p]).collect();
    runs.push(BytecodePass::ALL.to_vec());

    for passes in runs {
        let (obf, report) = obfuscate_and_verify(&program, &passes, 11, DENSITY, 20)?;
        println!(
            "{:<40} {:>4} -> {:>4} bytes  verified {}",
            report.transform, report.size_before, report.size_after, report.verified
        );
        let a = execute(&program, &[], 100_000);
        let b = execute(&obf, &[], 100_000);
        assert_eq!(a.outcome(), b.outcome());
    }

    let (obf, _) = obfuscate_and_verify(&program, &BytecodePass::ALL, 11, DENSITY, 20)?;
    println!("original   {}", sample.bytecode_hex);
    println!("obfuscated {}", to_hex(&assemble(&obf)?));
    Ok(())
}
