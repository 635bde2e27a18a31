//! Opcode and source normalisation, then hash tokenisation and chunking.

use evmfuse::evm::{assemble_text, disassemble};
use evmfuse::preprocess::{
    chunk_tokens, hash_tokenize, normalize_opcodes, normalize_source, DEFAULT_STOPWORDS,
};

const SOURCE: &str = r#"pragma solidity ^0.4.24;
// Simple wallet
contract Wallet {
    mapping(address => uint) balances;
    function withdraw(uint amount) public {
        require(balances[msg.sender] >= amount);
        msg.sender.call.value(amount)();
        balances[msg.sender] -= amount;
    }
}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let program = disassemble(&assemble_text(
        "PUSH1 0x80 PUSH1 0x40 MSTORE CALLVALUE DUP1 ISZERO SWAP2 LOG1 STOP",
    )?);
    println!("opcodes: {}", normalize_opcodes(&program).text());

    let norm = normalize_source(SOURCE, DEFAULT_STOPWORDS);
    println!("source:\n{}", norm.text);

    let ids = hash_tokenize(&norm.text, 4096)?;
    let chunks = chunk_tokens(&ids, 16, 8)?;
    println!(
        "{} tokens -> {} chunks of {}",
        ids.len(),
        chunks.chunks.len(),
        chunks.chunk_len()
    );
    Ok(())
}
