//! Compare clean and obfuscated Hamming scores for the trimodal model and
//! the opcode-only ablation under the composed bytecode obfuscation.
//!
//! cargo run --release --example robustness -- [seeds] [train_n] [test_n] [epochs]

use evmfuse::harness::{gen_synthetic, robustness_eval, train, Config, Modality, Transforms};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let seeds = args.first().copied().unwrap_or(3) as u64;
    let n_train = args.get(1).copied().unwrap_or(500);
    let n_test = args.get(2).copied().unwrap_or(100);
    let epochs = args.get(3).copied().unwrap_or(Config::default().epochs);
    let transforms = Transforms::all_bytecode();

    for seed in 1..=seeds {
        let train_set = gen_synthetic(n_train, 100 + seed, 5);
        let test_set = gen_synthetic(n_test, 200 + seed, 5);
        let mut degradation = Vec::new();
        for modalities in [Modality::ALL.to_vec(), vec![Modality::Opcode]] {
            let config = Config {
                seed,
                epochs,
                modalities,
                ..Config::default()
            };
            let model = train(&config, &train_set)?.model;
            let r = robustness_eval(&model, &test_set, &transforms, seed, 10)?;
            println!("{}", serde_json::to_string(&r)?);
            degradation.push(r.degradation);
        }
        println!(
            "seed {seed}: trimodal {:+.4}  opcode-only {:+.4}  {}",
            degradation[0],
            degradation[1],
            if degradation[0] <= degradation[1] {
                "holds"
            } else {
                "violated"
            }
        );
    }
    Ok(())
}
