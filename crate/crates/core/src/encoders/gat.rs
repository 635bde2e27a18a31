use rand::Rng;

use super::{EncodeError, EncoderConfig};
use crate::autodiff::{Array2D, ParamId, ParamStore, Tape, Var};
use crate::cfg::{BlockKind, Cfg};
use crate::preprocess::{split_words, OpcodeVocab};

const LN_EPS: f64 = 1e-5;
const SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct GatHead {
    pub ws: ParamId,
    pub wt: ParamId,
    pub a: ParamId,
}

#[derive(Debug, Clone)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub wo: ParamId,
    pub bo: ParamId,
}

#[derive(Debug, Clone)]
pub struct GraphParams {
    pub op_emb: ParamId,
    pub exit_vec: ParamId,
    pub layers: Vec<GatLayer>,
    pub s_max: usize,
}

impl GraphParams {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.model_dim;
        let dh = d / cfg.heads;
        let op_emb = store.add("gnn.op_emb", Array2D::xavier(cfg.op_vocab, d, rng));
        let exit_vec = store.add("gnn.exit", Array2D::xavier(1, d, rng));
        let layers = (0..cfg.gnn_layers)
            .map(|l| GatLayer {
                heads: (0..cfg.heads)
                    .map(|h| {
                        let p = format!("gnn.l{l}.h{h}");
                        GatHead {
                            ws: store.add(format!("{p}.ws"), Array2D::xavier(d, dh, rng)),
                            wt: store.add(format!("{p}.wt"), Array2D::xavier(d, dh, rng)),
                            a: store.add(format!("{p}.a"), Array2D::xavier(dh, 1, rng)),
                        }
                    })
                    .collect(),
                wo: store.add(format!("gnn.l{l}.wo"), Array2D::xavier(d, d, rng)),
                bo: store.add(format!("gnn.l{l}.bo"), Array2D::zeros(1, d)),
            })
            .collect();
        GraphParams {
            op_emb,
            exit_vec,
            layers,
            s_max: cfg.s_max,
        }
    }
}

/// Mean opcode embedding per block; the exit block gets the learned exit
/// vector. Blocks without opcodes get a zero row.
pub fn node_features(
    t: &mut Tape,
    cfg: &Cfg,
    p: &GraphParams,
    vocab: &OpcodeVocab,
) -> Result<Var, EncodeError> {
    let emb = t.param(p.op_emb);
    let exit = t.param(p.exit_vec);
    let exit_row = t.shape(emb).0;
    let table = t.concat_rows(&[emb, exit])?;
    let mut ids = Vec::new();
    let mut pool = Vec::with_capacity(cfg.blocks.len());
    for b in &cfg.blocks {
        let start = ids.len();
        if b.kind == BlockKind::Exit {
            ids.push(exit_row);
        } else {
            ids.extend(split_words(&b.opcode_text).into_iter().map(|w| vocab.id(w)));
        }
        pool.push(start..ids.len());
    }
    if ids.is_empty() {
        return Ok(t.constant(Array2D::zeros(cfg.blocks.len(), t.shape(emb).1)));
    }
    let mut avg = Array2D::zeros(cfg.blocks.len(), ids.len());
    for (r, range) in pool.iter().enumerate() {
        let w = 1.0 / range.len().max(1) as f64;
        for c in range.clone() {
            avg.set(r, c, w);
        }
    }
    let rows = t.gather_rows(table, &ids)?;
    let avg = t.constant(avg);
    Ok(t.matmul(avg, rows)?)
}

/// `(target, source)` pairs each node attends over: its in-neighbours plus
/// itself, sorted.
pub fn attention_pairs(cfg: &Cfg, nodes: usize) -> Result<Vec<(usize, usize)>, EncodeError> {
    let mut pairs: Vec<(usize, usize)> = (0..nodes).map(|i| (i, i)).collect();
    for &(s, d) in &cfg.edges {
        if s >= nodes || d >= nodes {
            return Err(EncodeError::DanglingEdge {
                from: s,
                to: d,
                nodes,
            });
        }
        pairs.push((d, s));
    }
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

/// One GATv2 layer. Returns the projected output and each head's
/// `|V| × |V|` attention matrix.
pub fn gat_layer(
    t: &mut Tape,
    h: Var,
    pairs: &[(usize, usize)],
    layer: &GatLayer,
) -> Result<(Var, Vec<Var>), EncodeError> {
    let n = t.shape(h).0;
    let tgt: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let src: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut outs = Vec::with_capacity(layer.heads.len());
    let mut attn = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let (ws, wt, a) = (t.param(head.ws), t.param(head.wt), t.param(head.a));
        let s = t.matmul(h, ws)?;
        let tv = t.matmul(h, wt)?;
        let si = t.gather_rows(s, &tgt)?;
        let tj = t.gather_rows(tv, &src)?;
        let e = t.add(si, tj)?;
        let e = t.leaky_relu(e, SLOPE);
        let e = t.matmul(e, a)?;
        let logits = t.scatter_matrix(e, n, n, pairs, f64::NEG_INFINITY)?;
        let alpha = t.row_softmax(logits);
        outs.push(t.matmul(alpha, tv)?);
        attn.push(alpha);
    }
    let cat = t.concat_cols(&outs)?;
    let (wo, bo) = (t.param(layer.wo), t.param(layer.bo));
    let out = t.matmul(cat, wo)?;
    Ok((t.add_bias_row(out, bo)?, attn))
}

/// Node states after every layer, `|V| × d`, in node-id order.
pub fn graph_states(
    t: &mut Tape,
    cfg: &Cfg,
    feats: Var,
    p: &GraphParams,
) -> Result<Var, EncodeError> {
    let n = t.shape(feats).0;
    if n != cfg.num_nodes() {
        return Err(EncodeError::Ad(crate::autodiff::AdError::ShapeMismatch {
            op: "encode_graph",
            left: t.shape(feats),
            right: (cfg.num_nodes(), t.shape(feats).1),
        }));
    }
    let pairs = attention_pairs(cfg, n)?;
    let mut h = feats;
    for layer in &p.layers {
        let (out, _) = gat_layer(t, h, &pairs, layer)?;
        let sum = t.add(h, out)?;
        h = t.layer_norm(sum, LN_EPS);
    }
    Ok(h)
}

/// Node ids ordered by out-degree, highest first, ties by id.
pub fn degree_ranking(cfg: &Cfg) -> Vec<usize> {
    let mut deg = vec![0usize; cfg.num_nodes()];
    for &(s, _) in &cfg.edges {
        if s < deg.len() {
            deg[s] += 1;
        }
    }
    let mut ids: Vec<usize> = (0..deg.len()).collect();
    ids.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
    ids
}

/// The `s_max - 1` highest-degree node states followed by the mean of all
/// node states.
pub fn encode_graph(
    t: &mut Tape,
    cfg: &Cfg,
    feats: Var,
    p: &GraphParams,
) -> Result<Var, EncodeError> {
    if cfg.num_nodes() == 0 {
        return Err(EncodeError::EmptyInput);
    }
    let h = graph_states(t, cfg, feats, p)?;
    let mut top = degree_ranking(cfg);
    top.truncate(p.s_max.saturating_sub(1));
    let mean = t.col_mean(h);
    if top.is_empty() {
        return Ok(mean);
    }
    let picked = t.gather_rows(h, &top)?;
    Ok(t.concat_rows(&[picked, mean])?)
}
