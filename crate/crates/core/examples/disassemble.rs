//! Decode bytecode, print the listing, and check the byte-exact round trip.

use evmfuse::evm::{assemble, disassemble, parse_hex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hex = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "0x6080604052348015600f57600080fd5b5000fe61ff".into());
    let bytes = parse_hex(&hex)?;
    let program = disassemble(&bytes);
    print!("{}", program.listing());
    assert_eq!(assemble(&program)?, bytes);
    println!("{} instructions, round trip exact", program.len());
    Ok(())
}
