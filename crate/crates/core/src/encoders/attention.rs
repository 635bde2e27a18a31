use rand::Rng;

use crate::autodiff::{AdError, Array2D, ParamId, ParamStore, Tape, Var};

/// Query, key, value and output projections of one multi-head attention
/// block. All four are `d × d`; there are no biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnWeights {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl AttnWeights {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut impl Rng) -> Self {
        let mut w = |n: &str| store.add(format!("{prefix}.{n}"), Array2D::xavier(d, d, rng));
        AttnWeights {
            wq: w("wq"),
            wk: w("wk"),
            wv: w("wv"),
            wo: w("wo"),
        }
    }
}

/// Scaled dot-product attention with `heads` heads of width `d / heads`.
///
/// Queries come from `q_in`, keys and values from `kv_in`. `key_mask`, when
/// given, is added to every score row before the softmax; use large
/// negative entries to hide keys. Returns the `q_in.rows() × d` output and
/// the per-head attention matrices.
pub fn multi_head_attention(
    t: &mut Tape,
    q_in: Var,
    kv_in: Var,
    w: &AttnWeights,
    heads: usize,
    key_mask: Option<&Array2D>,
) -> Result<(Var, Vec<Var>), AdError> {
    let (wq, wk, wv, wo) = (t.param(w.wq), t.param(w.wk), t.param(w.wv), t.param(w.wo));
    let q = t.matmul(q_in, wq)?;
    let k = t.matmul(kv_in, wk)?;
    let v = t.matmul(kv_in, wv)?;
    let d = t.shape(q).1;
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(AdError::ShapeMismatch {
            op: "multi_head_attention",
            left: (d, d),
            right: (heads, 0),
        });
    }
    let dh = d / heads;
    let mask = key_mask.map(|m| t.constant(m.clone()));
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = t.slice_cols(q, h * dh, (h + 1) * dh)?;
        let kh = t.slice_cols(k, h * dh, (h + 1) * dh)?;
        let vh = t.slice_cols(v, h * dh, (h + 1) * dh)?;
        let kt = t.transpose(kh);
        let scores = t.matmul(qh, kt)?;
        let mut scores = t.scale(scores, scale);
        if let Some(m) = mask {
            scores = t.add(scores, m)?;
        }
        let a = t.row_softmax(scores);
        outs.push(t.matmul(a, vh)?);
        attn.push(a);
    }
    let cat = t.concat_cols(&outs)?;
    Ok((t.matmul(cat, wo)?, attn))
}
