//! Exponentially gated recurrent encoder over opcode ids.
//!
//! Each unit keeps a cell `c`, a normaliser `n` and a log-space stabiliser
//! `m`. With input and forget pre-activations `ĩ`, `f̃`:
//!
//! ```text
//! m_t = max(f̃ + m_{t-1}, ĩ)          (m_0 = -inf)
//! i_t = exp(ĩ - m_t),  f_t = exp(f̃ + m_{t-1} - m_t)
//! c_t = f_t c_{t-1} + i_t tanh(z̃)
//! n_t = f_t n_{t-1} + i_t
//! h_t = sigmoid(õ) * c_t / n_t
//! ```
//!
//! `c_t` and `n_t` are both the unstabilised quantities scaled by
//! `exp(-m_t)`, so `h_t` does not depend on `m` at all. The backward pass
//! therefore treats `m` as a constant, which is exact. Since one of `i_t`,
//! `f_t` is always 1, `n_t >= 1` and `|h_t| <= 1`.

use rand::Rng;

use super::{EncodeError, EncoderConfig};
use crate::autodiff::{sigmoid, Array2D, CustomOp, ParamId, ParamStore, Tape, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct SlstmBlock {
    /// Input weights, `d × 4d`, gate order z, i, f, o.
    pub w: ParamId,
    /// Recurrent weights, `d × 4d`.
    pub r: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub struct OpcodeParams {
    pub emb: ParamId,
    pub blocks: Vec<SlstmBlock>,
    pub s_max: usize,
}

impl OpcodeParams {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.model_dim;
        let emb = store.add("op.emb", Array2D::xavier(cfg.op_vocab, d, rng));
        let blocks = (0..cfg.op_blocks)
            .map(|k| {
                let mut b = Array2D::zeros(1, 4 * d);
                for j in 2 * d..3 * d {
                    b.data_mut()[j] = 1.0;
                }
                SlstmBlock {
                    w: store.add(format!("op.b{k}.w"), Array2D::xavier(d, 4 * d, rng)),
                    r: store.add(format!("op.b{k}.r"), Array2D::xavier(d, 4 * d, rng)),
                    b: store.add(format!("op.b{k}.b"), b),
                }
            })
            .collect();
        OpcodeParams {
            emb,
            blocks,
            s_max: cfg.s_max,
        }
    }
}

/// Saved per-step state of one recurrence.
#[derive(Debug)]
struct Recurrence {
    d: usize,
    z: Array2D,
    i: Array2D,
    f: Array2D,
    o: Array2D,
    c: Array2D,
    n: Array2D,
}

impl Recurrence {
    /// Runs the cell over `pre` (`T × 4d` input pre-activations, bias
    /// included) with recurrent weights `r`. Returns the op and `T × d`
    /// hidden states.
    fn run(pre: &Array2D, r: &Array2D) -> (Self, Array2D) {
        let (steps, d) = (pre.rows(), r.rows());
        let mut st = Recurrence {
            d,
            z: Array2D::zeros(steps, d),
            i: Array2D::zeros(steps, d),
            f: Array2D::zeros(steps, d),
            o: Array2D::zeros(steps, d),
            c: Array2D::zeros(steps, d),
            n: Array2D::zeros(steps, d),
        };
        let mut h = Array2D::zeros(steps, d);
        let mut m = vec![f64::NEG_INFINITY; d];
        let mut g = vec![0.0; 4 * d];
        for t in 0..steps {
            g.copy_from_slice(pre.row(t));
            if t > 0 {
                let hp = h.row(t - 1);
                for (k, &hk) in hp.iter().enumerate() {
                    if hk != 0.0 {
                        for (gj, &rj) in g.iter_mut().zip(r.row(k)) {
                            *gj += hk * rj;
                        }
                    }
                }
            }
            for u in 0..d {
                let (zt, it, ft, ot) = (g[u], g[d + u], g[2 * d + u], g[3 * d + u]);
                let m_new = if t == 0 { it } else { (ft + m[u]).max(it) };
                let ig = (it - m_new).exp();
                let fg = if t == 0 {
                    0.0
                } else {
                    (ft + m[u] - m_new).exp()
                };
                m[u] = m_new;
                let z = zt.tanh();
                let o = sigmoid(ot);
                let (cp, np) = if t == 0 {
                    (0.0, 0.0)
                } else {
                    (st.c.get(t - 1, u), st.n.get(t - 1, u))
                };
                let c = fg * cp + ig * z;
                let n = fg * np + ig;
                st.z.set(t, u, z);
                st.i.set(t, u, ig);
                st.f.set(t, u, fg);
                st.o.set(t, u, o);
                st.c.set(t, u, c);
                st.n.set(t, u, n);
                h.set(t, u, o * c / n);
            }
        }
        (st, h)
    }
}

impl CustomOp for Recurrence {
    fn backward(&self, inputs: &[&Array2D], h: &Array2D, grad: &Array2D) -> Vec<Array2D> {
        let (pre, r) = (inputs[0], inputs[1]);
        let (steps, d) = (pre.rows(), self.d);
        let mut dpre = Array2D::zeros(steps, 4 * d);
        let mut dr = Array2D::zeros(d, 4 * d);
        let mut dh_next = vec![0.0; d];
        let mut dc_next = vec![0.0; d];
        let mut dn_next = vec![0.0; d];
        for t in (0..steps).rev() {
            let f_next = |u: usize| {
                if t + 1 < steps {
                    self.f.get(t + 1, u)
                } else {
                    0.0
                }
            };
            let row = dpre.row_mut(t);
            for u in 0..d {
                let dh = grad.get(t, u) + dh_next[u];
                let (z, ig, fg, o) = (
                    self.z.get(t, u),
                    self.i.get(t, u),
                    self.f.get(t, u),
                    self.o.get(t, u),
                );
                let (c, n) = (self.c.get(t, u), self.n.get(t, u));
                let (cp, np) = if t == 0 {
                    (0.0, 0.0)
                } else {
                    (self.c.get(t - 1, u), self.n.get(t - 1, u))
                };
                let dc = dh * o / n + dc_next[u] * f_next(u);
                let dn = -dh * o * c / (n * n) + dn_next[u] * f_next(u);
                let d_ig = dc * z + dn;
                let d_fg = dc * cp + dn * np;
                row[u] = dc * ig * (1.0 - z * z);
                row[d + u] = d_ig * ig;
                row[2 * d + u] = d_fg * fg;
                row[3 * d + u] = dh * (c / n) * o * (1.0 - o);
                dc_next[u] = dc;
                dn_next[u] = dn;
            }
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            if t > 0 {
                let g = dpre.row(t);
                for (k, dh) in dh_next.iter_mut().enumerate() {
                    *dh = r.row(k).iter().zip(g).map(|(a, b)| a * b).sum();
                }
                let hp = h.row(t - 1);
                for (k, &hk) in hp.iter().enumerate() {
                    if hk != 0.0 {
                        for (dj, &gj) in dr.row_mut(k).iter_mut().zip(g) {
                            *dj += hk * gj;
                        }
                    }
                }
            }
        }
        vec![dpre, dr]
    }
}

/// Runs one block: input projection, recurrence, then residual and norm.
fn apply_block(t: &mut Tape, x: Var, blk: &SlstmBlock) -> Result<Var, EncodeError> {
    let (w, r, b) = (t.param(blk.w), t.param(blk.r), t.param(blk.b));
    let pre = t.matmul(x, w)?;
    let pre = t.add_bias_row(pre, b)?;
    let (op, h) = Recurrence::run(t.value(pre), t.value(r));
    let h = t.custom(&[pre, r], h, Box::new(op));
    let sum = t.add(x, h)?;
    Ok(t.layer_norm(sum, LN_EPS))
}

/// Hidden states of the last block for every position, `T × d`.
pub fn opcode_states(t: &mut Tape, p: &OpcodeParams, ids: &[usize]) -> Result<Var, EncodeError> {
    if ids.is_empty() {
        return Err(EncodeError::EmptyInput);
    }
    let emb = t.param(p.emb);
    let mut x = t.gather_rows(emb, ids)?;
    for blk in &p.blocks {
        x = apply_block(t, x, blk)?;
    }
    Ok(x)
}

/// Positions kept by the readout: all of them when `len <= s_max`,
/// otherwise `s_max - 1` evenly spaced ones plus the last.
pub fn readout_positions(len: usize, s_max: usize) -> Vec<usize> {
    if len <= s_max {
        return (0..len).collect();
    }
    let k = s_max - 1;
    let mut pos: Vec<usize> = (0..k).map(|j| j * len / k.max(1)).collect();
    pos.push(len - 1);
    pos
}

pub fn encode_opcode(t: &mut Tape, p: &OpcodeParams, ids: &[usize]) -> Result<Var, EncodeError> {
    let states = opcode_states(t, p, ids)?;
    let pos = readout_positions(ids.len(), p.s_max);
    Ok(t.gather_rows(states, &pos)?)
}

/// Bare recurrence on explicit pre-activations, for tests and inspection.
pub fn slstm_recurrence(t: &mut Tape, pre: Var, r: Var) -> Var {
    let (op, h) = Recurrence::run(t.value(pre), t.value(r));
    t.custom(&[pre, r], h, Box::new(op))
}
