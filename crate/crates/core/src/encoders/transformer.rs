use rand::Rng;

use super::attention::{multi_head_attention, AttnWeights};
use super::{cap_rows, EncodeError, EncoderConfig};
use crate::autodiff::{Array2D, ParamId, ParamStore, Tape, Var};
use crate::preprocess::ChunkedTokens;

const LN_EPS: f64 = 1e-5;
const MASKED: f64 = -1e9;

#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub attn: AttnWeights,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Token and position tables plus a stack of post-norm encoder layers.
#[derive(Debug, Clone)]
pub struct SourceParams {
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub layers: Vec<TransformerLayer>,
    pub heads: usize,
    pub s_max: usize,
}

impl SourceParams {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.model_dim;
        let tok_emb = store.add("src.tok_emb", Array2D::xavier(cfg.vocab, d, rng));
        let pos_emb = store.add("src.pos_emb", Array2D::xavier(cfg.window + 2, d, rng));
        let layers = (0..cfg.src_layers)
            .map(|l| {
                let p = format!("src.l{l}");
                TransformerLayer {
                    attn: AttnWeights::new(store, &format!("{p}.attn"), d, rng),
                    w1: store.add(format!("{p}.w1"), Array2D::xavier(d, cfg.ff_dim, rng)),
                    b1: store.add(format!("{p}.b1"), Array2D::zeros(1, cfg.ff_dim)),
                    w2: store.add(format!("{p}.w2"), Array2D::xavier(cfg.ff_dim, d, rng)),
                    b2: store.add(format!("{p}.b2"), Array2D::zeros(1, d)),
                }
            })
            .collect();
        SourceParams {
            tok_emb,
            pos_emb,
            layers,
            heads: cfg.heads,
            s_max: cfg.s_max,
        }
    }
}

fn encode_chunk(
    t: &mut Tape,
    p: &SourceParams,
    chunk: &[u32],
    pad_id: u32,
) -> Result<Var, EncodeError> {
    let ids: Vec<usize> = chunk.iter().map(|&i| i as usize).collect();
    let emb = t.param(p.tok_emb);
    let pos = t.param(p.pos_emb);
    let tok = t.gather_rows(emb, &ids)?;
    let pos = t.slice_rows(pos, 0, ids.len())?;
    let mut x = t.add(tok, pos)?;

    let mut mask = Array2D::zeros(ids.len(), ids.len());
    for (c, &id) in chunk.iter().enumerate() {
        if id == pad_id {
            for r in 0..ids.len() {
                mask.set(r, c, MASKED);
            }
        }
    }
    let mask = chunk.contains(&pad_id).then_some(mask);

    for layer in &p.layers {
        let (a, _) = multi_head_attention(t, x, x, &layer.attn, p.heads, mask.as_ref())?;
        let r = t.add(x, a)?;
        x = t.layer_norm(r, LN_EPS);
        let (w1, b1, w2, b2) = (
            t.param(layer.w1),
            t.param(layer.b1),
            t.param(layer.w2),
            t.param(layer.b2),
        );
        let h = t.matmul(x, w1)?;
        let h = t.add_bias_row(h, b1)?;
        let h = t.relu(h);
        let h = t.matmul(h, w2)?;
        let h = t.add_bias_row(h, b2)?;
        let r = t.add(x, h)?;
        x = t.layer_norm(r, LN_EPS);
    }
    Ok(t.slice_rows(x, 0, 1)?)
}

/// One row per chunk, taken at the CLS position, capped to `s_max` rows.
pub fn encode_source(
    t: &mut Tape,
    p: &SourceParams,
    chunks: &ChunkedTokens,
) -> Result<Var, EncodeError> {
    if chunks.chunks.is_empty() {
        return Err(EncodeError::EmptyInput);
    }
    let rows = chunks
        .chunks
        .iter()
        .map(|c| encode_chunk(t, p, c, chunks.pad_id))
        .collect::<Result<Vec<_>, _>>()?;
    let stacked = t.concat_rows(&rows)?;
    Ok(cap_rows(t, stacked, p.s_max)?)
}
