use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use super::{Matrix, NdiffError, ParamStore, Segments, SparsePattern};

/// Lower clamp for probabilities inside cross-entropy.
pub const PROB_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Square(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<Segments>),
    SegmentSoftmax(Var, Arc<Segments>),
    Aggregate { weights: Var, values: Var, pattern: Arc<SparsePattern> },
    AdditiveScore { src: Var, dst: Var, v: Var, pattern: Arc<SparsePattern>, act: Matrix },
    Bce { pred: Var, target: Arc<[f64]>, weight: Arc<[f64]> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode recording of dense matrix operations.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the backward pass is a single reverse sweep.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    names: Vec<(String, Var)>,
    trap_non_finite: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), names: Vec::new(), trap_non_finite: true }
    }

    /// Disable the per-op finiteness check.
    pub fn without_nan_trap(mut self) -> Self {
        self.trap_non_finite = false;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Matrix, op: Op, requires_grad: bool) -> Result<Var, NdiffError> {
        if self.trap_non_finite && !value.iter().all(|x| x.is_finite()) {
            return Err(NdiffError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives gradients.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Bind a named parameter from `store` as a gradient-tracking leaf.
    ///
    /// Binding the same name twice returns the existing handle.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NdiffError> {
        if let Some((_, v)) = self.names.iter().find(|(n, _)| n == name) {
            return Ok(*v);
        }
        let value = store.get(name).ok_or_else(|| NdiffError::MissingParam(name.to_string()))?;
        let v = self.variable(value.clone());
        self.names.push((name.to_string(), v));
        Ok(v)
    }

    fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> NdiffError {
        NdiffError::Shape { op, lhs, rhs }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NdiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::shape_err(op, sa, sb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Self::shape_err("matmul", sa, sb));
        }
        let value = self.value(a).dot(self.value(b));
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push("matmul", value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push("add", value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push("sub", value, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push("mul", value, Op::Mul(a, b), rg)
    }

    /// Add a `1 × cols` bias row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NdiffError> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.0 != 1 || sb.1 != sa.1 {
            return Err(Self::shape_err("add_row", sa, sb));
        }
        let value = self.value(a) + self.value(bias);
        let rg = self.requires_grad(a) || self.requires_grad(bias);
        self.push("add_row", value, Op::AddRow(a, bias), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NdiffError> {
        let value = self.value(a) * c;
        let rg = self.requires_grad(a);
        self.push("scale", value, Op::Scale(a, c), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NdiffError> {
        let value = self.value(a).mapv(f64::tanh);
        let rg = self.requires_grad(a);
        self.push("tanh", value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NdiffError> {
        let value = self.value(a).mapv(sigmoid);
        let rg = self.requires_grad(a);
        self.push("sigmoid", value, Op::Sigmoid(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, NdiffError> {
        let value = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.requires_grad(a);
        self.push("leaky_relu", value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NdiffError> {
        let value = self.value(a).mapv(|x| x * x);
        let rg = self.requires_grad(a);
        self.push("square", value, Op::Square(a), rg)
    }

    /// Sum of all entries, as a 1×1 value.
    pub fn sum(&mut self, a: Var) -> Result<Var, NdiffError> {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.requires_grad(a);
        self.push("sum", value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NdiffError> {
        let (r, c) = self.shape(a);
        if r * c == 0 {
            return Err(NdiffError::InvalidArgument("mean of an empty tensor".into()));
        }
        let value = Array2::from_elem((1, 1), self.value(a).sum() / (r * c) as f64);
        let rg = self.requires_grad(a);
        self.push("mean", value, Op::Mean(a), rg)
    }

    pub fn gather_rows(&mut self, a: Var, index: impl Into<Arc<[usize]>>) -> Result<Var, NdiffError> {
        let index: Arc<[usize]> = index.into();
        let src = self.value(a);
        let (rows, cols) = src.dim();
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(NdiffError::IndexOutOfRange { op: "gather_rows", index: bad, len: rows });
        }
        let mut value = Array2::zeros((index.len(), cols));
        for (r, &i) in index.iter().enumerate() {
            value.row_mut(r).assign(&src.row(i));
        }
        let rg = self.requires_grad(a);
        self.push("gather_rows", value, Op::GatherRows(a, index), rg)
    }

    /// Sum rows within each segment.
    pub fn segment_sum(&mut self, a: Var, segments: Arc<Segments>) -> Result<Var, NdiffError> {
        let src = self.value(a);
        let (rows, cols) = src.dim();
        if segments.n_rows() != rows {
            return Err(Self::shape_err("segment_sum", (rows, cols), (segments.n_rows(), segments.len())));
        }
        let mut value = Array2::zeros((segments.len(), cols));
        for s in 0..segments.len() {
            let mut out = value.row_mut(s);
            for r in segments.range(s) {
                out += &src.row(r);
            }
        }
        let rg = self.requires_grad(a);
        self.push("segment_sum", value, Op::SegmentSum(a, segments), rg)
    }

    /// Column-wise softmax within each segment of rows.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<Segments>) -> Result<Var, NdiffError> {
        let src = self.value(a);
        let (rows, cols) = src.dim();
        if segments.n_rows() != rows {
            return Err(Self::shape_err("segment_softmax", (rows, cols), (segments.n_rows(), segments.len())));
        }
        let value = segment_softmax_values(src, &segments);
        let rg = self.requires_grad(a);
        self.push("segment_softmax", value, Op::SegmentSoftmax(a, segments), rg)
    }

    /// Sparse-dense product: `out[i] = Σ_e weights[e] · values[col(e)]` over
    /// the entries `e` of row `i`.
    pub fn aggregate(&mut self, weights: Var, values: Var, pattern: Arc<SparsePattern>) -> Result<Var, NdiffError> {
        let (sw, sv) = (self.shape(weights), self.shape(values));
        if sw != (pattern.nnz(), 1) {
            return Err(Self::shape_err("aggregate.weights", sw, (pattern.nnz(), 1)));
        }
        if sv.0 != pattern.n_cols() {
            return Err(Self::shape_err("aggregate.values", sv, (pattern.n_cols(), sv.1)));
        }
        let w = self.value(weights);
        let vals = self.value(values);
        let mut value = Array2::zeros((pattern.n_rows(), sv.1));
        let cols = pattern.cols();
        for i in 0..pattern.n_rows() {
            let mut out = value.row_mut(i);
            for e in pattern.segments().range(i) {
                out.scaled_add(w[[e, 0]], &vals.row(cols[e]));
            }
        }
        let rg = self.requires_grad(weights) || self.requires_grad(values);
        self.push("aggregate", value, Op::Aggregate { weights, values, pattern }, rg)
    }

    /// Additive attention logits: `out[e] = Σ_k v[k] · tanh(src[row(e), k] + dst[col(e), k])`.
    pub fn additive_score(
        &mut self,
        src: Var,
        dst: Var,
        v: Var,
        pattern: Arc<SparsePattern>,
    ) -> Result<Var, NdiffError> {
        let (ss, sd, sv) = (self.shape(src), self.shape(dst), self.shape(v));
        if ss.0 != pattern.n_rows() || sd.0 != pattern.n_cols() || ss.1 != sd.1 {
            return Err(Self::shape_err("additive_score", ss, sd));
        }
        if sv != (ss.1, 1) {
            return Err(Self::shape_err("additive_score.v", sv, (ss.1, 1)));
        }
        let (s, d, vv) = (self.value(src), self.value(dst), self.value(v));
        let vcol = vv.column(0);
        let mut value = Array2::zeros((pattern.nnz(), 1));
        // per-edge activations, kept for the backward pass
        let mut act = Array2::zeros((pattern.nnz(), ss.1));
        for (e, (&i, &j)) in pattern.rows().iter().zip(pattern.cols()).enumerate() {
            let mut acc = 0.0;
            Zip::from(act.row_mut(e)).and(s.row(i)).and(d.row(j)).and(&vcol).for_each(|t, &a, &b, &w| {
                *t = (a + b).tanh();
                acc += w * *t;
            });
            value[[e, 0]] = acc;
        }
        let rg = self.requires_grad(src) || self.requires_grad(dst) || self.requires_grad(v);
        self.push("additive_score", value, Op::AdditiveScore { src, dst, v, pattern, act }, rg)
    }

    /// Weighted binary cross-entropy summed over rows of an `n × 1` probability
    /// column. Rows with zero weight contribute nothing.
    pub fn binary_cross_entropy(
        &mut self,
        pred: Var,
        target: impl Into<Arc<[f64]>>,
        weight: impl Into<Arc<[f64]>>,
    ) -> Result<Var, NdiffError> {
        let (target, weight): (Arc<[f64]>, Arc<[f64]>) = (target.into(), weight.into());
        let sp = self.shape(pred);
        if sp.1 != 1 || target.len() != sp.0 || weight.len() != sp.0 {
            return Err(Self::shape_err("binary_cross_entropy", sp, (target.len(), 1)));
        }
        let p = self.value(pred);
        let mut loss = 0.0;
        for r in 0..sp.0 {
            if weight[r] == 0.0 {
                continue;
            }
            let q = p[[r, 0]].clamp(PROB_EPS, 1.0 - PROB_EPS);
            loss -= weight[r] * (target[r] * q.ln() + (1.0 - target[r]) * (1.0 - q).ln());
        }
        let rg = self.requires_grad(pred);
        self.push("binary_cross_entropy", Array2::from_elem((1, 1), loss), Op::Bce { pred, target, weight }, rg)
    }

    /// Run the backward pass from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, NdiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NdiffError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, g, &mut grads);
        }
        Ok(Gradients { grads, names: self.names })
    }

    fn propagate(&self, node: &Node, g: Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, m: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &m,
                slot @ None => *slot = Some(m),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if wants(*b) {
                    acc(*b, val(*a).t().dot(&g));
                }
            }
            Op::Add(a, b) => {
                if wants(*b) {
                    acc(*b, g.clone());
                }
                acc(*a, g);
            }
            Op::Sub(a, b) => {
                if wants(*b) {
                    acc(*b, -&g);
                }
                acc(*a, g);
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, &g * val(*b));
                }
                if wants(*b) {
                    acc(*b, &g * val(*a));
                }
            }
            Op::AddRow(a, b) => {
                if wants(*b) {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                acc(*a, g);
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::Tanh(a) => {
                let mut ga = g;
                Zip::from(&mut ga).and(&node.value).for_each(|gi, &y| *gi *= 1.0 - y * y);
                acc(*a, ga);
            }
            Op::Sigmoid(a) => {
                let mut ga = g;
                Zip::from(&mut ga).and(&node.value).for_each(|gi, &y| *gi *= y * (1.0 - y));
                acc(*a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let mut ga = g;
                Zip::from(&mut ga).and(val(*a)).for_each(|gi, &x| {
                    if x <= 0.0 {
                        *gi *= slope
                    }
                });
                acc(*a, ga);
            }
            Op::Square(a) => {
                let mut ga = g;
                Zip::from(&mut ga).and(val(*a)).for_each(|gi, &x| *gi *= 2.0 * x);
                acc(*a, ga);
            }
            Op::Sum(a) => acc(*a, Array2::from_elem(val(*a).dim(), g[[0, 0]])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(*a, Array2::from_elem(val(*a).dim(), g[[0, 0]] / n));
            }
            Op::GatherRows(a, index) => {
                let mut ga = Array2::zeros(val(*a).dim());
                for (r, &i) in index.iter().enumerate() {
                    let mut dst = ga.row_mut(i);
                    dst += &g.row(r);
                }
                acc(*a, ga);
            }
            Op::SegmentSum(a, segments) => {
                let mut ga = Array2::zeros(val(*a).dim());
                for s in 0..segments.len() {
                    for r in segments.range(s) {
                        ga.row_mut(r).assign(&g.row(s));
                    }
                }
                acc(*a, ga);
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = &node.value;
                let mut ga = Array2::zeros(y.dim());
                for s in 0..segments.len() {
                    let range = segments.range(s);
                    for c in 0..y.ncols() {
                        let dot: f64 = range.clone().map(|r| g[[r, c]] * y[[r, c]]).sum();
                        for r in range.clone() {
                            ga[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::Aggregate { weights, values, pattern } => {
                let (w, vals) = (val(*weights), val(*values));
                let cols = pattern.cols();
                if wants(*weights) {
                    let mut gw = Array2::zeros(w.dim());
                    for (e, (&i, &j)) in pattern.rows().iter().zip(cols).enumerate() {
                        gw[[e, 0]] = g.row(i).dot(&vals.row(j));
                    }
                    acc(*weights, gw);
                }
                if wants(*values) {
                    let mut gv = Array2::zeros(vals.dim());
                    for (e, (&i, &j)) in pattern.rows().iter().zip(cols).enumerate() {
                        gv.row_mut(j).scaled_add(w[[e, 0]], &g.row(i));
                    }
                    acc(*values, gv);
                }
            }
            Op::AdditiveScore { src, dst, v, pattern, act } => {
                let (s, d, vv) = (val(*src), val(*dst), val(*v));
                let mut gs = Array2::<f64>::zeros(s.dim());
                let mut gd = Array2::<f64>::zeros(d.dim());
                let mut gv = Array2::<f64>::zeros(vv.dim());
                for (e, (&i, &j)) in pattern.rows().iter().zip(pattern.cols()).enumerate() {
                    let ge = g[[e, 0]];
                    if ge == 0.0 {
                        continue;
                    }
                    for (k, &tk) in act.row(e).iter().enumerate() {
                        let dk = ge * vv[[k, 0]] * (1.0 - tk * tk);
                        gs[[i, k]] += dk;
                        gd[[j, k]] += dk;
                        gv[[k, 0]] += ge * tk;
                    }
                }
                acc(*src, gs);
                acc(*dst, gd);
                acc(*v, gv);
            }
            Op::Bce { pred, target, weight } => {
                let p = val(*pred);
                let scale = g[[0, 0]];
                let mut gp = Array2::zeros(p.dim());
                for r in 0..p.nrows() {
                    if weight[r] == 0.0 {
                        continue;
                    }
                    let q = p[[r, 0]].clamp(PROB_EPS, 1.0 - PROB_EPS);
                    gp[[r, 0]] = scale * weight[r] * (q - target[r]) / (q * (1.0 - q));
                }
                acc(*pred, gp);
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    names: Vec<(String, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of a parameter bound via [`Tape::param`].
    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().find(|(n, _)| n == name).and_then(|(_, v)| self.get(*v))
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, Option<&Matrix>)> {
        self.names.iter().map(|(n, v)| (n.as_str(), self.get(*v)))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn segment_softmax_values(src: &Matrix, segments: &Segments) -> Matrix {
    let mut out = Array2::zeros(src.dim());
    for s in 0..segments.len() {
        let range = segments.range(s);
        for c in 0..src.ncols() {
            let max = range.clone().map(|r| src[[r, c]]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for r in range.clone() {
                let e = (src[[r, c]] - max).exp();
                out[[r, c]] = e;
                total += e;
            }
            for r in range.clone() {
                out[[r, c]] /= total;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_of_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
        let mut tape = Tape::new();
        let x = tape.constant(array![[0.0]]);
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.scalar(y), 0.5);
    }

    #[test]
    fn softmax_of_equal_values_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[3.0], [3.0]]);
        let seg = Arc::new(Segments::from_ids(&[0, 0], 1).unwrap());
        let y = tape.segment_softmax(x, seg).unwrap();
        assert_eq!(tape.value(y), &array![[0.5], [0.5]]);
    }

    #[test]
    fn softmax_matches_scalar_recomputation() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0], [2.0], [3.0]]);
        let seg = Arc::new(Segments::from_ids(&[0, 0, 0], 1).unwrap());
        let y = tape.segment_softmax(x, seg).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (r, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((tape.value(y)[[r, 0]] - v.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let w = tape.variable(array![[3.0]]);
        let y = tape.square(w).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap()[[0, 0]], 6.0);
    }

    #[test]
    fn linear_map_gradient() {
        // loss = sum(W x): d/dW_ij = x_j for every row i
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.5], [-2.0], [0.25]]);
        let w = tape.variable(Array2::from_elem((2, 3), 0.3));
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &array![[1.5, -2.0, 0.25], [1.5, -2.0, 0.25]]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Array2::zeros((2, 3)));
        let b = tape.constant(Array2::zeros((2, 3)));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(err, NdiffError::Shape { op: "matmul", lhs: (2, 3), rhs: (2, 3) });
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.variable(Array2::zeros((2, 1)));
        assert_eq!(tape.backward(a).unwrap_err(), NdiffError::NonScalarLoss((2, 1)));
    }

    #[test]
    fn nan_is_trapped() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[f64::MAX]]);
        assert!(matches!(tape.scale(a, 10.0), Err(NdiffError::NonFinite { op: "scale" })));
        let mut loose = Tape::new().without_nan_trap();
        let a = loose.constant(array![[f64::MAX]]);
        assert!(loose.scale(a, 10.0).is_ok());
    }

    #[test]
    fn bce_at_half_is_ln2_per_row() {
        let mut tape = Tape::new();
        let p = tape.constant(Array2::from_elem((3, 1), 0.5));
        let l = tape.binary_cross_entropy(p, vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]).unwrap();
        assert!((tape.scalar(l) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }
}
