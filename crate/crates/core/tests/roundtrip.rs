use evmfuse::evm::{assemble, disassemble, parse_hex, to_hex};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn assemble_inverts_disassemble(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let program = disassemble(&bytes);
        prop_assert_eq!(assemble(&program).unwrap(), bytes.clone());
        prop_assert_eq!(program.byte_len, bytes.len());
    }

    #[test]
    fn hex_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..64), prefix in any::<bool>(), upper in any::<bool>()) {
        let mut text = to_hex(&bytes);
        if upper {
            text = text.to_uppercase();
        }
        if prefix {
            text.insert_str(0, "0x");
        }
        prop_assert_eq!(parse_hex(&text).unwrap(), bytes);
    }
}
