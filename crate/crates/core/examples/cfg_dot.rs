//! Build the control-flow graph of a small contract and export it.

use evmfuse::cfg::{build_cfg, export_coo, export_dot, parse_dot, SAMPLE_CONTRACT_ASM};
use evmfuse::evm::{assemble_text, disassemble};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = build_cfg(&disassemble(&assemble_text(SAMPLE_CONTRACT_ASM)?));
    for b in &cfg.blocks {
        println!(
            "block {} [{:#x}..{:#x}) {}",
            b.id, b.start_offset, b.end_offset, b.opcode_text
        );
    }
    println!("edge_index {:?}", export_coo(&cfg).rows);

    let dot = export_dot(&cfg);
    print!("{dot}");
    assert_eq!(parse_dot(&dot)?, cfg);
    Ok(())
}
