//! Encode one contract through all three encoders, fuse, and classify.

use evmfuse::autodiff::Tape;
use evmfuse::cfg::build_cfg;
use evmfuse::encoders::{encode_graph, encode_opcode, encode_source, node_features};
use evmfuse::evm::disassemble;
use evmfuse::fusion::{bce_loss, classify, fuse, FusionMode};
use evmfuse::harness::{gen_synthetic, Config, Model};
use evmfuse::preprocess::OpcodeVocab;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(&Config::default())?;
    let sample = &gen_synthetic(1, 3, 5)[0];
    let feats = model.featurize_sample(sample)?;
    let program = disassemble(&sample.bytecode()?);
    let cfg = build_cfg(&program);

    let mut t = Tape::new(&model.store);
    let chunks = feats
        .chunks
        .as_ref()
        .expect("synthetic samples carry source");
    let m_src = encode_source(&mut t, &model.encoders.source, chunks)?;
    let m_op = encode_opcode(&mut t, &model.encoders.opcode, &feats.opcode_ids)?;
    let nf = node_features(&mut t, &cfg, &model.encoders.graph, &OpcodeVocab::new())?;
    let m_graph = encode_graph(&mut t, &cfg, nf, &model.encoders.graph)?;
    for (name, m) in [("source", m_src), ("opcode", m_op), ("graph", m_graph)] {
        println!("{name:<7} embedding {:?}", t.shape(m));
    }

    let out = fuse(
        &mut t,
        &[m_src, m_op, m_graph],
        &model.fusion,
        FusionMode::Full,
    )?;
    println!("modality weights {:?}", t.value(out.alpha).data());
    let p = classify(&mut t, out.f, &model.head)?;
    let loss = bce_loss(&mut t, p, &sample.labels)?;
    println!("probabilities {:?}", t.value(p).data());
    println!("labels        {:?}", sample.labels);
    println!("loss {:.4}, tape length {}", t.scalar(loss), t.len());

    let grads = t.backward(loss)?;
    println!("gradient norm {:.4}", grads.global_norm());
    Ok(())
}
