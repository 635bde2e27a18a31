//! Train on a synthetic corpus and report test metrics.
//!
//! cargo run --release --example train_synthetic -- [train_n] [test_n] [epochs]

use evmfuse::harness::{evaluate, gen_synthetic, train_with, Config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let n_train = args.first().copied().unwrap_or(500);
    let n_test = args.get(1).copied().unwrap_or(100);
    let mut config = Config::default();
    config.epochs = args.get(2).copied().unwrap_or(config.epochs);

    let train_set = gen_synthetic(n_train, 1, config.labels);
    let test_set = gen_synthetic(n_test, 2, config.labels);
    let out = train_with(&config, &train_set, |e| {
        println!(
            "epoch {:>3}  loss {:.4}  holdout hs {:.4}  {:.1}s",
            e.epoch,
            e.train_loss,
            e.holdout_hs.unwrap_or(f64::NAN),
            e.seconds
        );
    })?;
    let report = evaluate(&out.model, &test_set)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
