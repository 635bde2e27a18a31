//! Central finite-difference check of a small two-layer network.

use evmfuse::autodiff::{grad_check, Array2D, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let x = Array2D::uniform(4, 6, 1.0, &mut rng);
    let w1 = store.add("w1", Array2D::xavier(6, 8, &mut rng));
    let w2 = store.add("w2", Array2D::xavier(8, 3, &mut rng));

    let report = grad_check(
        &mut store,
        |t| {
            let xv = t.constant(x.clone());
            let (a, b) = (t.param(w1), t.param(w2));
            let h = t.matmul(xv, a)?;
            let h = t.tanh(h);
            let h = t.layer_norm(h, 1e-5);
            let y = t.matmul(h, b)?;
            let y = t.row_softmax(y);
            Ok(t.sum(y))
        },
        1e-5,
        1e-4,
        16,
        3,
    )?;
    println!(
        "checked {} coordinates, skipped {}, max relative error {:.2e}, passed {}",
        report.checked,
        report.skipped_kinks,
        report.max_rel_err(),
        report.passed()
    );
    Ok(())
}
