use std::collections::HashMap;

use super::array::{matmul_nt_acc, matmul_tn_acc, Array2D};
use super::AdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, shaped trainable arrays.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2D>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics if `name` is already taken.
    pub fn add(&mut self, name: impl Into<String>, value: Array2D) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn get(&self, id: ParamId) -> &Array2D {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2D {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Array2D)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array2D::len).sum()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Backward rule for an operation defined outside the engine.
pub trait CustomOp: std::fmt::Debug {
    /// Returns one gradient per input, shaped like that input.
    fn backward(&self, inputs: &[&Array2D], output: &Array2D, grad: &Array2D) -> Vec<Array2D>;
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddBiasRow(usize, usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    AddScalar(usize),
    Transpose(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    GatherRows(usize, Vec<usize>),
    Scatter(usize, Vec<(usize, usize)>),
    RowSoftmax(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Clamp(usize, f64, f64),
    RowMean(usize),
    RowMax(usize, Vec<usize>),
    ColMean(usize),
    ColMax(usize, Vec<usize>),
    Sum(usize),
    LayerNorm(usize, Vec<f64>),
    Custom(Vec<usize>, Box<dyn CustomOp>),
}

#[derive(Debug)]
struct Node {
    value: Option<Array2D>,
    op: Op,
}

/// Gradients indexed by parameter, in id order.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: Vec<Option<Array2D>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Array2D> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Array2D)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn global_norm(&self) -> f64 {
        self.iter().map(|(_, g)| g.sq_norm()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(k);
        }
    }

    /// Adds `other` into `self`, parameter by parameter.
    pub fn accumulate(&mut self, other: &Gradients) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.add_assign(t),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }
}

/// Records a computation over parameters from a [`ParamStore`] for one
/// reverse sweep. Parameter values are borrowed, not copied.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn mismatch(op: &'static str, a: &Array2D, b: &Array2D) -> AdError {
    AdError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn val(&self, i: usize) -> &Array2D {
        let node = &self.nodes[i];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn value(&self, v: Var) -> &Array2D {
        self.val(v.0)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.val(v.0).shape()
    }

    /// The single entry of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.val(v.0);
        debug_assert_eq!(a.shape(), (1, 1));
        a.data()[0]
    }

    fn push(&mut self, value: Array2D, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2D) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn custom(&mut self, inputs: &[Var], output: Array2D, op: Box<dyn CustomOp>) -> Var {
        self.push(output, Op::Custom(inputs.iter().map(|v| v.0).collect(), op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (x, y) = (self.val(a.0), self.val(b.0));
        if x.cols() != y.rows() {
            return Err(mismatch("matmul", x, y));
        }
        let out = x.matmul(y);
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    fn same_shape(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AdError> {
        let (x, y) = (self.val(a.0), self.val(b.0));
        if x.shape() != y.shape() {
            return Err(mismatch(name, x, y));
        }
        let out = x.zip_map(y, f);
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.same_shape("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.same_shape("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.same_shape("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.same_shape("div", a, b, |x, y| x / y, Op::Div(a.0, b.0))
    }

    /// `a + 1·bias` where `bias` is a single row.
    pub fn add_bias_row(&mut self, a: Var, bias: Var) -> Result<Var, AdError> {
        let (x, b) = (self.val(a.0), self.val(bias.0));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(mismatch("add_bias_row", x, b));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (o, &bb) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddBiasRow(a.0, bias.0)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.val(a.0).map(|x| x * k);
        self.push(out, Op::Scale(a.0, k))
    }

    /// `s · a` for a 1×1 node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var, AdError> {
        let (x, k) = (self.val(a.0), self.val(s.0));
        if k.shape() != (1, 1) {
            return Err(mismatch("scale_by", x, k));
        }
        let k = k.data()[0];
        let out = x.map(|v| v * k);
        Ok(self.push(out, Op::ScaleBy(a.0, s.0)))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.val(a.0).map(|x| x + k);
        self.push(out, Op::AddScalar(a.0))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.val(a.0).transpose();
        self.push(out, Op::Transpose(a.0))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        let first = self.val(parts[0].0);
        let rows = first.rows();
        for p in parts {
            if self.val(p.0).rows() != rows {
                return Err(mismatch("concat_cols", first, self.val(p.0)));
            }
        }
        let cols: usize = parts.iter().map(|p| self.val(p.0).cols()).sum();
        let mut out = Array2D::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for p in parts {
                let src = self.val(p.0);
                out.row_mut(r)[c0..c0 + src.cols()].copy_from_slice(src.row(r));
                c0 += src.cols();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.iter().map(|p| p.0).collect())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        let first = self.val(parts[0].0);
        let cols = first.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.val(p.0);
            if v.cols() != cols {
                return Err(mismatch("concat_rows", first, v));
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let out = Array2D::from_vec(rows, cols, data);
        Ok(self.push(out, Op::ConcatRows(parts.iter().map(|p| p.0).collect())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AdError> {
        let x = self.val(a.0);
        if start > end || end > x.cols() {
            return Err(AdError::OutOfRange {
                op: "slice_cols",
                shape: x.shape(),
                start,
                end,
            });
        }
        let mut out = Array2D::zeros(x.rows(), end - start);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        Ok(self.push(out, Op::SliceCols(a.0, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AdError> {
        let x = self.val(a.0);
        if start > end || end > x.rows() {
            return Err(AdError::OutOfRange {
                op: "slice_rows",
                shape: x.shape(),
                start,
                end,
            });
        }
        let c = x.cols();
        let out = Array2D::from_vec(end - start, c, x.data()[start * c..end * c].to_vec());
        Ok(self.push(out, Op::SliceRows(a.0, start)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, AdError> {
        let x = self.val(a.0);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(AdError::OutOfRange {
                op: "gather_rows",
                shape: x.shape(),
                start: bad,
                end: bad + 1,
            });
        }
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let out = Array2D::from_vec(idx.len(), c, data);
        Ok(self.push(out, Op::GatherRows(a.0, idx.to_vec())))
    }

    /// Places the entries of an E×1 column at `positions` inside a
    /// `rows × cols` matrix whose other entries are `fill`. With
    /// `fill = -inf` this builds the logits of a masked softmax.
    pub fn scatter_matrix(
        &mut self,
        values: Var,
        rows: usize,
        cols: usize,
        positions: &[(usize, usize)],
        fill: f64,
    ) -> Result<Var, AdError> {
        let x = self.val(values.0);
        if x.cols() != 1 || x.rows() != positions.len() {
            return Err(AdError::ShapeMismatch {
                op: "scatter_matrix",
                left: x.shape(),
                right: (positions.len(), 1),
            });
        }
        if let Some(&(r, c)) = positions.iter().find(|&&(r, c)| r >= rows || c >= cols) {
            return Err(AdError::OutOfRange {
                op: "scatter_matrix",
                shape: (rows, cols),
                start: r,
                end: c,
            });
        }
        let mut out = Array2D::filled(rows, cols, fill);
        for (k, &(r, c)) in positions.iter().enumerate() {
            out.set(r, c, x.data()[k]);
        }
        Ok(self.push(out, Op::Scatter(values.0, positions.to_vec())))
    }

    /// Softmax along each row, max-shifted.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let x = self.val(a.0);
        let mut out = x.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        self.push(out, Op::RowSoftmax(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.val(a.0).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.val(a.0).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a.0, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.val(a.0).map(sigmoid);
        self.push(out, Op::Sigmoid(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.val(a.0).map(f64::exp);
        self.push(out, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.val(a.0).map(f64::ln);
        self.push(out, Op::Log(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.val(a.0).map(f64::tanh);
        self.push(out, Op::Tanh(a.0))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.val(a.0).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a.0, lo, hi))
    }

    /// rows×1 column of row means.
    pub fn row_mean(&mut self, a: Var) -> Var {
        let x = self.val(a.0);
        let n = x.cols() as f64;
        let data = (0..x.rows())
            .map(|r| x.row(r).iter().sum::<f64>() / n)
            .collect();
        let out = Array2D::from_vec(x.rows(), 1, data);
        self.push(out, Op::RowMean(a.0))
    }

    /// rows×1 column of row maxima.
    pub fn row_max(&mut self, a: Var) -> Var {
        let x = self.val(a.0);
        let mut arg = Vec::with_capacity(x.rows());
        let mut data = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let (i, v) = argmax(x.row(r).iter().copied());
            arg.push(i);
            data.push(v);
        }
        let out = Array2D::from_vec(x.rows(), 1, data);
        self.push(out, Op::RowMax(a.0, arg))
    }

    /// 1×cols row of column means.
    pub fn col_mean(&mut self, a: Var) -> Var {
        let x = self.val(a.0);
        let mut out = Array2D::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        out.scale_assign(1.0 / x.rows() as f64);
        self.push(out, Op::ColMean(a.0))
    }

    /// 1×cols row of column maxima.
    pub fn col_max(&mut self, a: Var) -> Var {
        let x = self.val(a.0);
        let mut arg = Vec::with_capacity(x.cols());
        let mut data = Vec::with_capacity(x.cols());
        for c in 0..x.cols() {
            let (i, v) = argmax((0..x.rows()).map(|r| x.get(r, c)));
            arg.push(i);
            data.push(v);
        }
        let out = Array2D::from_vec(1, x.cols(), data);
        self.push(out, Op::ColMax(a.0, arg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2D::scalar(self.val(a.0).sum());
        self.push(out, Op::Sum(a.0))
    }

    /// Per-row standardisation without affine parameters.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.val(a.0);
        let n = x.cols() as f64;
        let mut out = x.clone();
        let mut inv = Vec::with_capacity(x.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv.push(is);
        }
        self.push(out, Op::LayerNorm(a.0, inv))
    }

    /// Reverse sweep from a 1×1 node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AdError> {
        let shape = self.val(loss.0).shape();
        if shape != (1, 1) {
            return Err(AdError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Array2D>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2D::scalar(1.0));
        let mut out = Gradients {
            grads: vec![None; self.params.len()],
        };

        fn acc(grads: &mut [Option<Array2D>], i: usize, g: Array2D) {
            match &mut grads[i] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        fn slot(grads: &mut [Option<Array2D>], i: usize, shape: (usize, usize)) -> &mut Array2D {
            grads[i].get_or_insert_with(|| Array2D::zeros(shape.0, shape.1))
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = || node.value.as_ref().expect("op nodes own their value");
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.grads[id.0] = Some(g),
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.val(*a).shape(), self.val(*b).shape());
                    matmul_nt_acc(&g, self.val(*b), slot(&mut grads, *a, sa));
                    matmul_tn_acc(self.val(*a), &g, slot(&mut grads, *b, sb));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.val(*b), |g, y| g * y);
                    let gb = g.zip_map(self.val(*a), |g, x| g * x);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let ga = g.zip_map(self.val(*b), |g, d| g / d);
                    let gb = ga.zip_map(y(), |gd, q| -gd * q);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBiasRow(a, bias) => {
                    let mut gb = Array2D::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g.map(|v| v * k)),
                Op::ScaleBy(a, s) => {
                    let k = self.val(*s).data()[0];
                    let gs: f64 = g
                        .data()
                        .iter()
                        .zip(self.val(*a).data())
                        .map(|(g, x)| g * x)
                        .sum();
                    acc(&mut grads, *s, Array2D::scalar(gs));
                    acc(&mut grads, *a, g.map(|v| v * k));
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let w = self.val(p).cols();
                        let mut gp = Array2D::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + w]);
                        }
                        acc(&mut grads, p, gp);
                        c0 += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    let c = g.cols();
                    for &p in parts {
                        let h = self.val(p).rows();
                        let gp = Array2D::from_vec(h, c, g.data()[r0 * c..(r0 + h) * c].to_vec());
                        acc(&mut grads, p, gp);
                        r0 += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let shape = self.val(*a).shape();
                    let ga = slot(&mut grads, *a, shape);
                    for r in 0..g.rows() {
                        for (o, v) in ga.row_mut(r)[*start..*start + g.cols()]
                            .iter_mut()
                            .zip(g.row(r))
                        {
                            *o += v;
                        }
                    }
                }
                Op::SliceRows(a, start) => {
                    let shape = self.val(*a).shape();
                    let c = shape.1;
                    let ga = slot(&mut grads, *a, shape);
                    for (o, v) in ga.data_mut()[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *o += v;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let shape = self.val(*a).shape();
                    let ga = slot(&mut grads, *a, shape);
                    for (k, &r) in idx.iter().enumerate() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                }
                Op::Scatter(a, positions) => {
                    let data = positions.iter().map(|&(r, c)| g.get(r, c)).collect();
                    acc(&mut grads, *a, Array2D::from_vec(positions.len(), 1, data));
                }
                Op::RowSoftmax(a) => {
                    let y = y();
                    let mut ga = Array2D::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr
                            .iter()
                            .zip(gr)
                            .filter(|(y, _)| **y != 0.0)
                            .map(|(y, g)| y * g)
                            .sum();
                        for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = if yv == 0.0 { 0.0 } else { yv * (gv - dot) };
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.val(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let ga = g.zip_map(self.val(*a), |g, x| if x > 0.0 { g } else { g * slope });
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip_map(y(), |g, y| g * y * (1.0 - y))),
                Op::Exp(a) => acc(&mut grads, *a, g.zip_map(y(), |g, y| g * y)),
                Op::Log(a) => acc(&mut grads, *a, g.zip_map(self.val(*a), |g, x| g / x)),
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(y(), |g, y| g * (1.0 - y * y))),
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(
                        self.val(*a),
                        |g, x| if x >= *lo && x <= *hi { g } else { 0.0 },
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::RowMean(a) => {
                    let (rows, cols) = self.val(*a).shape();
                    let mut ga = Array2D::zeros(rows, cols);
                    for r in 0..rows {
                        let v = g.data()[r] / cols as f64;
                        ga.row_mut(r).fill(v);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowMax(a, arg) => {
                    let shape = self.val(*a).shape();
                    let ga = slot(&mut grads, *a, shape);
                    for (r, &c) in arg.iter().enumerate() {
                        let v = ga.get(r, c) + g.data()[r];
                        ga.set(r, c, v);
                    }
                }
                Op::ColMean(a) => {
                    let (rows, cols) = self.val(*a).shape();
                    let mut ga = Array2D::zeros(rows, cols);
                    let scaled: Vec<f64> = g.data().iter().map(|v| v / rows as f64).collect();
                    for r in 0..rows {
                        ga.row_mut(r).copy_from_slice(&scaled);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ColMax(a, arg) => {
                    let shape = self.val(*a).shape();
                    let ga = slot(&mut grads, *a, shape);
                    for (c, &r) in arg.iter().enumerate() {
                        let v = ga.get(r, c) + g.data()[c];
                        ga.set(r, c, v);
                    }
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.val(*a).shape();
                    acc(&mut grads, *a, Array2D::filled(rows, cols, g.data()[0]));
                }
                Op::LayerNorm(a, inv) => {
                    let y = y();
                    let n = y.cols() as f64;
                    let mut ga = Array2D::zeros(y.rows(), y.cols());
                    for (r, &inv_r) in inv.iter().enumerate() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let sg: f64 = gr.iter().sum();
                        let sgy: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                        let k = inv_r / n;
                        for ((o, &gv), &yv) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o = k * (n * gv - sg - yv * sgy);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Custom(inputs, op) => {
                    let vals: Vec<&Array2D> = inputs.iter().map(|&j| self.val(j)).collect();
                    let gs = op.backward(&vals, y(), &g);
                    debug_assert_eq!(gs.len(), inputs.len());
                    for (&j, gj) in inputs.iter().zip(gs) {
                        acc(&mut grads, j, gj);
                    }
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
