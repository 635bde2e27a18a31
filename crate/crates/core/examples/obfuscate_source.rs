//! Source-level transforms: identifier renaming, comment and layout
//! changes, and constant expansion.

use evmfuse::obfuscate::{expand_constant, obf_source, SourcePass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SOURCE: &str = r#"pragma solidity ^0.4.24;
contract Token {
    uint total = 1000;
    // credit an account
    function mint(uint amount) public {
        total = total + amount * 2;
    }
}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for pass in SourcePass::ALL {
        println!("--- {}\n{}", pass.name(), obf_source(SOURCE, 5, &[pass])?);
    }
    println!("--- all\n{}", obf_source(SOURCE, 5, &SourcePass::ALL)?);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [0u128, 7, 1000] {
        println!("{n} = {}", expand_constant(n, &mut rng, 2));
    }
    Ok(())
}
