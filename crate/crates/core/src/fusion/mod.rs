//! Hierarchical cross-modal fusion and the multi-label head.
//!
//! Per modality `i` the pipeline is
//!
//! ```text
//! Z_i  = SelfAttn_i(M_i)
//! C_ij = CrossAttn(Z_i, Z_j)                       j != i, shared weights
//! H_i  = Z_i + 1/(N-1) * sum_{j != i} C_ij          (H_1 = Z_1 when N = 1)
//! H'_i = relu(mean_rows(H_i) W_i + b_i)
//! F    = sum_i softmax(w)_i H'_i
//! p    = sigmoid(relu(F W_1 + b_1) W_2 + b_2)
//! ```
//!
//! Vectors are rows, so every weight is stored input-major.

use rand::Rng;

use crate::autodiff::{AdError, Array2D, ParamId, ParamStore, Tape, Var};
use crate::encoders::{multi_head_attention, AttnWeights};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub n_modalities: usize,
    pub hidden: usize,
    pub labels: usize,
    pub tau: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            model_dim: 32,
            heads: 4,
            n_modalities: 3,
            hidden: 32,
            labels: 5,
            tau: 0.5,
        }
    }
}

/// `NoCross` skips pairwise cross-attention and aggregation, so `H_i = Z_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    #[default]
    Full,
    NoCross,
}

#[derive(Debug, Clone)]
pub struct FusionParams {
    pub self_attn: Vec<AttnWeights>,
    pub cross: AttnWeights,
    /// Modality logits, `1 × N`.
    pub w: ParamId,
    pub proj_w: Vec<ParamId>,
    pub proj_b: Vec<ParamId>,
    pub heads: usize,
}

impl FusionParams {
    pub fn new(store: &mut ParamStore, cfg: &FusionConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.model_dim;
        let n = cfg.n_modalities;
        let self_attn = (0..n)
            .map(|i| AttnWeights::new(store, &format!("fusion.self{i}"), d, rng))
            .collect();
        let cross = AttnWeights::new(store, "fusion.cross", d, rng);
        let w = store.add("fusion.w", Array2D::zeros(1, n));
        let proj_w = (0..n)
            .map(|i| store.add(format!("fusion.proj{i}.w"), Array2D::xavier(d, d, rng)))
            .collect();
        let proj_b = (0..n)
            .map(|i| store.add(format!("fusion.proj{i}.b"), Array2D::zeros(1, d)))
            .collect();
        FusionParams {
            self_attn,
            cross,
            w,
            proj_w,
            proj_b,
            heads: cfg.heads,
        }
    }

    pub fn n_modalities(&self) -> usize {
        self.self_attn.len()
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub tau: f64,
}

impl ClassifierParams {
    pub fn new(store: &mut ParamStore, cfg: &FusionConfig, rng: &mut impl Rng) -> Self {
        assert!(
            cfg.tau > 0.0 && cfg.tau < 1.0,
            "threshold must lie in (0, 1)"
        );
        ClassifierParams {
            w1: store.add("head.w1", Array2D::xavier(cfg.model_dim, cfg.hidden, rng)),
            b1: store.add("head.b1", Array2D::zeros(1, cfg.hidden)),
            w2: store.add("head.w2", Array2D::xavier(cfg.hidden, cfg.labels, rng)),
            b2: store.add("head.b2", Array2D::zeros(1, cfg.labels)),
            tau: cfg.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub labels: Vec<bool>,
}

impl Prediction {
    pub fn from_probs(probs: Vec<f64>, tau: f64) -> Self {
        let labels = probs.iter().map(|&p| p >= tau).collect();
        Prediction { probs, labels }
    }
}

fn non_empty(t: &Tape, v: Var, op: &'static str) -> Result<(), AdError> {
    if t.shape(v).0 == 0 {
        return Err(AdError::ShapeMismatch {
            op,
            left: t.shape(v),
            right: (1, t.shape(v).1),
        });
    }
    Ok(())
}

pub fn self_attend(t: &mut Tape, m: Var, w: &AttnWeights, heads: usize) -> Result<Var, AdError> {
    non_empty(t, m, "self_attend")?;
    Ok(multi_head_attention(t, m, m, w, heads, None)?.0)
}

/// Queries from `zi`, keys and values from `zj`; output has `zi`'s rows.
pub fn cross_attend(
    t: &mut Tape,
    zi: Var,
    zj: Var,
    w: &AttnWeights,
    heads: usize,
) -> Result<Var, AdError> {
    non_empty(t, zi, "cross_attend")?;
    non_empty(t, zj, "cross_attend")?;
    Ok(multi_head_attention(t, zi, zj, w, heads, None)?.0)
}

/// `cross[i]` holds `C_ij` for every `j != i`, in increasing `j`.
pub fn aggregate(t: &mut Tape, z: &[Var], cross: &[Vec<Var>]) -> Result<Vec<Var>, AdError> {
    let n = z.len();
    if n <= 1 {
        return Ok(z.to_vec());
    }
    z.iter()
        .zip(cross)
        .map(|(&zi, ci)| {
            let mut acc = ci[0];
            for &c in &ci[1..] {
                acc = t.add(acc, c)?;
            }
            let acc = if n == 2 {
                acc
            } else {
                t.scale(acc, 1.0 / (n - 1) as f64)
            };
            t.add(zi, acc)
        })
        .collect()
}

/// Returns `F` (`1 × d`) and the modality weights `alpha` (`1 × N`).
pub fn adaptive_fuse(t: &mut Tape, h: &[Var], p: &FusionParams) -> Result<(Var, Var), AdError> {
    let w = t.param(p.w);
    if t.shape(w).1 != h.len() {
        return Err(AdError::ShapeMismatch {
            op: "adaptive_fuse",
            left: t.shape(w),
            right: (1, h.len()),
        });
    }
    let alpha = t.row_softmax(w);
    let mut f = None;
    for (i, &hi) in h.iter().enumerate() {
        let pooled = t.col_mean(hi);
        let (pw, pb) = (t.param(p.proj_w[i]), t.param(p.proj_b[i]));
        let x = t.matmul(pooled, pw)?;
        let x = t.add_bias_row(x, pb)?;
        let x = t.relu(x);
        let a = t.slice_cols(alpha, i, i + 1)?;
        let term = t.scale_by(x, a)?;
        f = Some(match f {
            None => term,
            Some(acc) => t.add(acc, term)?,
        });
    }
    let f = f.ok_or(AdError::ShapeMismatch {
        op: "adaptive_fuse",
        left: (0, 0),
        right: (1, 1),
    })?;
    Ok((f, alpha))
}

/// Label probabilities, `1 × L`.
pub fn classify(t: &mut Tape, f: Var, p: &ClassifierParams) -> Result<Var, AdError> {
    let (w1, b1, w2, b2) = (t.param(p.w1), t.param(p.b1), t.param(p.w2), t.param(p.b2));
    let h = t.matmul(f, w1)?;
    let h = t.add_bias_row(h, b1)?;
    let h = t.relu(h);
    let o = t.matmul(h, w2)?;
    let o = t.add_bias_row(o, b2)?;
    Ok(t.sigmoid(o))
}

/// Mean binary cross-entropy over the `L` labels.
pub fn bce_loss(t: &mut Tape, p: Var, y: &[bool]) -> Result<Var, AdError> {
    let shape = t.shape(p);
    if shape != (1, y.len()) {
        return Err(AdError::ShapeMismatch {
            op: "bce_loss",
            left: shape,
            right: (1, y.len()),
        });
    }
    let yv: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let ones = Array2D::filled(1, y.len(), 1.0);
    let not_y = t.constant(ones.zip_map(&Array2D::row_vector(yv.clone()), |a, b| a - b));
    let yc = t.constant(Array2D::row_vector(yv));
    let pc = t.clamp(p, BCE_EPS, 1.0 - BCE_EPS);
    let lp = t.log(pc);
    let neg = t.scale(pc, -1.0);
    let q = t.add_scalar(neg, 1.0);
    let lq = t.log(q);
    let a = t.mul(yc, lp)?;
    let b = t.mul(not_y, lq)?;
    let s = t.add(a, b)?;
    let s = t.sum(s);
    Ok(t.scale(s, -1.0 / y.len() as f64))
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub z: Vec<Var>,
    pub h: Vec<Var>,
    pub f: Var,
    pub alpha: Var,
}

/// Runs self-attention, cross-attention, aggregation and adaptive fusion
/// over one embedding per modality, in parameter order.
pub fn fuse(
    t: &mut Tape,
    modalities: &[Var],
    p: &FusionParams,
    mode: FusionMode,
) -> Result<FusionOutput, AdError> {
    if modalities.len() != p.n_modalities() {
        return Err(AdError::ShapeMismatch {
            op: "fuse",
            left: (modalities.len(), 0),
            right: (p.n_modalities(), 0),
        });
    }
    let z = modalities
        .iter()
        .zip(&p.self_attn)
        .map(|(&m, w)| self_attend(t, m, w, p.heads))
        .collect::<Result<Vec<_>, _>>()?;
    let h = match mode {
        FusionMode::NoCross => z.clone(),
        FusionMode::Full => {
            let mut cross = Vec::with_capacity(z.len());
            for i in 0..z.len() {
                let mut ci = Vec::with_capacity(z.len().saturating_sub(1));
                for j in (0..z.len()).filter(|&j| j != i) {
                    ci.push(cross_attend(t, z[i], z[j], &p.cross, p.heads)?);
                }
                cross.push(ci);
            }
            aggregate(t, &z, &cross)?
        }
    };
    let (f, alpha) = adaptive_fuse(t, &h, p)?;
    Ok(FusionOutput { z, h, f, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn toy(seed: u64) -> (ParamStore, FusionParams, ClassifierParams, FusionConfig) {
        let cfg = FusionConfig {
            model_dim: 8,
            heads: 2,
            n_modalities: 3,
            hidden: 6,
            labels: 5,
            tau: 0.5,
        };
        let mut store = ParamStore::new();
        let mut r = rng(seed);
        let fp = FusionParams::new(&mut store, &cfg, &mut r);
        let cp = ClassifierParams::new(&mut store, &cfg, &mut r);
        (store, fp, cp, cfg)
    }

    fn inputs(seed: u64, d: usize) -> Vec<Array2D> {
        let mut r = rng(seed);
        (1..=3)
            .map(|s| Array2D::uniform(s, d, 1.0, &mut r))
            .collect()
    }

    #[test]
    fn single_row_self_attention() {
        let (store, fp, _, cfg) = toy(0);
        let m = Array2D::uniform(1, cfg.model_dim, 1.0, &mut rng(1));
        let mut t = Tape::new(&store);
        let mv = t.constant(m.clone());
        let z = self_attend(&mut t, mv, &fp.self_attn[0], cfg.heads).unwrap();
        let w = &fp.self_attn[0];
        let expected = m.matmul(store.get(w.wv)).matmul(store.get(w.wo));
        assert!(t.value(z).max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn identical_rows_stay_identical() {
        let (store, fp, _, cfg) = toy(2);
        let row = Array2D::uniform(1, cfg.model_dim, 1.0, &mut rng(3));
        let other = Array2D::uniform(1, cfg.model_dim, 1.0, &mut rng(4));
        let m = Array2D::from_vec(
            3,
            cfg.model_dim,
            [row.data(), other.data(), row.data()].concat(),
        );
        let mut t = Tape::new(&store);
        let mv = t.constant(m);
        let z = self_attend(&mut t, mv, &fp.self_attn[1], cfg.heads).unwrap();
        assert_eq!(t.value(z).row(0), t.value(z).row(2));
    }

    #[test]
    fn cross_attention_special_cases() {
        let (store, fp, _, cfg) = toy(5);
        let zi = Array2D::uniform(3, cfg.model_dim, 1.0, &mut rng(6));
        let mut t = Tape::new(&store);
        let a = t.constant(zi.clone());
        let c = cross_attend(&mut t, a, a, &fp.cross, cfg.heads).unwrap();
        let s = self_attend(&mut t, a, &fp.cross, cfg.heads).unwrap();
        assert_eq!(t.value(c), t.value(s));

        let zj = Array2D::uniform(1, cfg.model_dim, 1.0, &mut rng(7));
        let b = t.constant(zj.clone());
        let c = cross_attend(&mut t, a, b, &fp.cross, cfg.heads).unwrap();
        assert_eq!(t.shape(c), (3, cfg.model_dim));
        let one = zj
            .matmul(store.get(fp.cross.wv))
            .matmul(store.get(fp.cross.wo));
        for r in 0..3 {
            for (x, y) in t.value(c).row(r).iter().zip(one.row(0)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let empty = t.constant(Array2D::zeros(0, cfg.model_dim));
        assert!(cross_attend(&mut t, empty, b, &fp.cross, cfg.heads).is_err());
    }

    #[test]
    fn aggregate_cases() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let mut r = rng(8);
        let z1 = t.constant(Array2D::uniform(2, 3, 1.0, &mut r));
        let z2 = t.constant(Array2D::uniform(1, 3, 1.0, &mut r));
        let c12 = t.constant(Array2D::uniform(2, 3, 1.0, &mut r));
        let c21 = t.constant(Array2D::uniform(1, 3, 1.0, &mut r));
        let h = aggregate(&mut t, &[z1, z2], &[vec![c12], vec![c21]]).unwrap();
        let expected = t.value(z1).zip_map(t.value(c12), |a, b| a + b);
        assert_eq!(t.value(h[0]), &expected);

        let h = aggregate(&mut t, &[z1], &[vec![]]).unwrap();
        assert_eq!(h, vec![z1]);

        let z3 = t.constant(Array2D::uniform(2, 3, 1.0, &mut r));
        let zero = |t: &mut Tape, rows| t.constant(Array2D::zeros(rows, 3));
        let cross = vec![
            vec![zero(&mut t, 2), zero(&mut t, 2)],
            vec![zero(&mut t, 1), zero(&mut t, 1)],
            vec![zero(&mut t, 2), zero(&mut t, 2)],
        ];
        let h = aggregate(&mut t, &[z1, z2, z3], &cross).unwrap();
        for (hi, zi) in h.iter().zip([z1, z2, z3]) {
            assert_eq!(t.value(*hi), t.value(zi));
        }
    }

    #[test]
    fn equal_logits_give_equal_weights() {
        let (store, fp, _, cfg) = toy(9);
        let mut t = Tape::new(&store);
        let ms: Vec<Var> = inputs(10, cfg.model_dim)
            .into_iter()
            .map(|m| t.constant(m))
            .collect();
        let out = fuse(&mut t, &ms, &fp, FusionMode::Full).unwrap();
        for &a in t.value(out.alpha).data() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_rule() {
        let p = Prediction::from_probs(vec![0.7, 0.2, 0.5, 0.5, 0.1], 0.5);
        assert_eq!(p.labels, vec![true, false, true, true, false]);
    }

    #[test]
    fn zero_head_predicts_half() {
        let (mut store, _, cp, cfg) = toy(11);
        for id in [cp.w1, cp.b1, cp.w2, cp.b2] {
            store
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|x| *x = 0.0);
        }
        let mut t = Tape::new(&store);
        let f = t.constant(Array2D::uniform(1, cfg.model_dim, 1.0, &mut rng(12)));
        let p = classify(&mut t, f, &cp).unwrap();
        let pred = Prediction::from_probs(t.value(p).data().to_vec(), cp.tau);
        assert!(pred.probs.iter().all(|&x| x == 0.5));
        assert!(pred.labels.iter().all(|&b| b));
    }

    #[test]
    fn bce_values() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let p = t.constant(Array2D::row_vector(vec![1.0 - BCE_EPS]));
        let l = bce_loss(&mut t, p, &[true]).unwrap();
        assert!(t.scalar(l) < 1e-11);
        let p = t.constant(Array2D::row_vector(vec![0.5, 0.5]));
        let l = bce_loss(&mut t, p, &[true, false]).unwrap();
        let hand = -0.5 * (0.5f64.ln() + 0.5f64.ln());
        assert!((t.scalar(l) - hand).abs() < 1e-15);
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(&mut t, p, &[true]).is_err());
    }

    fn end_to_end(
        t: &mut Tape,
        fp: &FusionParams,
        cp: &ClassifierParams,
        ms: &[Array2D],
        y: &[bool],
    ) -> Result<Var, AdError> {
        let vars: Vec<Var> = ms.iter().map(|m| t.constant(m.clone())).collect();
        let out = fuse(t, &vars, fp, FusionMode::Full)?;
        let p = classify(t, out.f, cp)?;
        bce_loss(t, p, y)
    }

    #[test]
    fn fusion_and_head_gradients_match_fd() {
        let (mut store, fp, cp, cfg) = toy(13);
        // Nudge the logits off the symmetric start so their gradient is not trivial.
        store
            .get_mut(fp.w)
            .data_mut()
            .copy_from_slice(&[0.3, -0.2, 0.1]);
        let ms = inputs(14, cfg.model_dim);
        let y = [true, false, true, false, false];
        let report = grad_check(
            &mut store,
            |t| end_to_end(t, &fp, &cp, &ms, &y),
            1e-5,
            1e-4,
            20,
            15,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn bce_minimised_at_target() {
        let store = ParamStore::new();
        let loss = |p: f64, y: bool| {
            let mut t = Tape::new(&store);
            let pv = t.constant(Array2D::scalar(p));
            let l = bce_loss(&mut t, pv, &[y]).unwrap();
            t.scalar(l)
        };
        for y in [true, false] {
            let at = loss(if y { 1.0 } else { 0.0 }, y);
            for k in 1..10 {
                assert!(loss(k as f64 / 10.0, y) > at);
            }
        }
    }

    fn fuse_values(
        store: &ParamStore,
        fp: &FusionParams,
        cp: &ClassifierParams,
        ms: &[Array2D],
    ) -> (Array2D, Array2D, Array2D, Vec<Array2D>) {
        let mut t = Tape::new(store);
        let vars: Vec<Var> = ms.iter().map(|m| t.constant(m.clone())).collect();
        let out = fuse(&mut t, &vars, fp, FusionMode::Full).unwrap();
        let p = classify(&mut t, out.f, cp).unwrap();
        let hs = out.h.iter().map(|h| t.value(*h).clone()).collect();
        (
            t.value(out.f).clone(),
            t.value(out.alpha).clone(),
            t.value(p).clone(),
            hs,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn alpha_is_a_distribution(w in proptest::collection::vec(-20.0f64..20.0, 3), seed in any::<u64>()) {
            let (mut store, fp, cp, cfg) = toy(seed);
            store.get_mut(fp.w).data_mut().copy_from_slice(&w);
            let (_, alpha, _, _) = fuse_values(&store, &fp, &cp, &inputs(seed, cfg.model_dim));
            prop_assert!((alpha.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(alpha.data().iter().all(|&a| a > 0.0 && a < 1.0));
        }

        #[test]
        fn logit_shift_changes_nothing(c in -50.0f64..50.0, seed in any::<u64>()) {
            let (mut store, fp, cp, cfg) = toy(seed);
            let ms = inputs(seed ^ 1, cfg.model_dim);
            let (f0, a0, p0, _) = fuse_values(&store, &fp, &cp, &ms);
            store.get_mut(fp.w).data_mut().iter_mut().for_each(|x| *x += c);
            let (f1, a1, p1, _) = fuse_values(&store, &fp, &cp, &ms);
            prop_assert!(a0.max_abs_diff(&a1) <= 1e-12);
            prop_assert!(f0.max_abs_diff(&f1) <= 1e-12);
            let l0: Vec<bool> = p0.data().iter().map(|&p| p >= 0.5).collect();
            let l1: Vec<bool> = p1.data().iter().map(|&p| p >= 0.5).collect();
            prop_assert!(p0.max_abs_diff(&p1) <= 1e-12);
            prop_assert_eq!(l0, l1);
        }
    }
}
