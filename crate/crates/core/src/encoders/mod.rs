//! The three modality encoders. Each turns one view of a contract into an
//! `S × d` sequence of rows with `S <= s_max`:
//!
//! - source: transformer layers over hash-tokenised chunks, one row per chunk;
//! - opcode: exponentially gated recurrent blocks over normalised mnemonics;
//! - graph: GATv2 layers over the control-flow graph.

mod attention;
mod gat;
mod slstm;
mod transformer;

pub use attention::{multi_head_attention, AttnWeights};
pub use gat::{
    attention_pairs, degree_ranking, encode_graph, gat_layer, graph_states, node_features, GatHead,
    GatLayer, GraphParams,
};
pub use slstm::{
    encode_opcode, opcode_states, readout_positions, slstm_recurrence, OpcodeParams, SlstmBlock,
};
pub use transformer::{encode_source, SourceParams, TransformerLayer};

use rand::Rng;

use crate::autodiff::{AdError, ParamStore, Tape, Var};
use crate::preprocess::OpcodeVocab;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub src_layers: usize,
    pub op_blocks: usize,
    pub gnn_layers: usize,
    pub s_max: usize,
    /// Source token vocabulary, including the four reserved ids.
    pub vocab: usize,
    /// Source chunk width without CLS and SEP.
    pub window: usize,
    pub ff_dim: usize,
    pub op_vocab: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            model_dim: 32,
            heads: 4,
            src_layers: 2,
            op_blocks: 2,
            gnn_layers: 3,
            s_max: 16,
            vocab: 4096,
            window: 64,
            ff_dim: 64,
            op_vocab: OpcodeVocab::new().size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("encoder input is empty")]
    EmptyInput,
    #[error("edge {from} -> {to} references a node outside 0..{nodes}")]
    DanglingEdge {
        from: usize,
        to: usize,
        nodes: usize,
    },
}

/// Keeps the first `s_max - 1` rows and replaces the rest by their
/// elementwise max. Inputs with at most `s_max` rows pass through.
pub fn cap_rows(t: &mut Tape, rows: Var, s_max: usize) -> Result<Var, AdError> {
    let n = t.shape(rows).0;
    if n <= s_max {
        return Ok(rows);
    }
    let keep = s_max.saturating_sub(1);
    let rest = t.slice_rows(rows, keep, n)?;
    let pooled = t.col_max(rest);
    if keep == 0 {
        return Ok(pooled);
    }
    let head = t.slice_rows(rows, 0, keep)?;
    t.concat_rows(&[head, pooled])
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub source: SourceParams,
    pub opcode: OpcodeParams,
    pub graph: GraphParams,
}

impl EncoderParams {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        EncoderParams {
            source: SourceParams::new(store, cfg, rng),
            opcode: OpcodeParams::new(store, cfg, rng),
            graph: GraphParams::new(store, cfg, rng),
        }
    }
}
