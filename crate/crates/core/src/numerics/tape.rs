//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every value lives in the tape as a row-major matrix. Parameters enter as
//! leaves (their data is copied in), intermediate results are appended in
//! execution order, and [`Tape::backward`] walks the record in reverse.

use crate::error::{Error, Result};

use super::tensor::dims2;
use super::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias { a: Var, bias: Var },
    Scale { a: Var, c: F },
    Sigmoid(Var),
    Tanh(Var),
    SliceCols { a: Var, start: usize },
    SliceRows { a: Var, start: usize },
    ConcatRows(Vec<Var>),
    Gather { table: Var, ids: Vec<usize> },
    ScaleRows { a: Var, scale: Vec<F> },
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<F> },
}

#[derive(Debug, Clone)]
struct Node<F> {
    shape: Vec<usize>,
    value: Vec<F>,
    op: Op<F>,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

/// Gradients of one scalar with respect to every differentiable node.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `tensor.grad`. Nodes that received no
    /// gradient contribute zero.
    pub fn accumulate_into(&self, v: Var, tensor: &mut Tensor<F>) -> Result<()> {
        match self.get(v) {
            Some(g) => tensor.accumulate_grad(g),
            None => tensor.accumulate_grad(&vec![F::zero(); tensor.numel()]),
        }
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Natural-log probability of `targets[r]` under the softmax of each row of
/// `logits` (`rows x cols`), computed in `f64`.
pub fn row_log_softmax_at<F: Scalar>(logits: &[F], cols: usize, targets: &[usize]) -> Vec<f64> {
    logits
        .chunks_exact(cols)
        .zip(targets)
        .map(|(row, &t)| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.as_f64()));
            let lse = row.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln() + max;
            row[t].as_f64() - lse
        })
        .collect()
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<F>, op: Op<F>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<F> {
        &self.nodes[v.0]
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        dims2(&self.node(v).shape)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).needs_grad)
    }

    /// Records a tensor. It is differentiable iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: &Tensor<F>) -> Var {
        self.push(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            Op::Leaf,
            tensor.requires_grad(),
        )
    }

    /// Records constant data (no gradient flows into it).
    pub fn constant(&mut self, tensor: &Tensor<F>) -> Var {
        self.push(tensor.shape().to_vec(), tensor.data().to_vec(), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, shape: &[usize], data: Vec<F>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.constant(&t))
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<F> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node shape")
    }

    pub fn scalar(&self, v: Var) -> F {
        self.node(v).value[0]
    }

    /// `a · b`, or `a · bᵀ` when `trans_b` is set (b stored as `n x k`).
    pub fn matmul_opt(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (br, bc) = self.dims(b);
        let (bk, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != bk {
            return Err(mismatch("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![F::zero(); m * n];
        F::gemm(m, k, n, self.value(a), false, self.value(b), trans_b, &mut out, false);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, trans_b }, g))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_opt(a, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_opt(a, b, true)
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, op: Op<F>, f: impl Fn(F, F) -> F) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(name, self.shape(a), self.shape(b)));
        }
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let g = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), value, op, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`cols` bias to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (_, c) = self.dims(a);
        if self.node(bias).value.len() != c {
            return Err(mismatch("add_row_bias", self.shape(a), self.shape(bias)));
        }
        let b = &self.node(bias).value;
        let value = self
            .value(a)
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        let g = self.any_grad(&[a, bias]);
        Ok(self.push(self.shape(a).to_vec(), value, Op::AddRowBias { a, bias }, g))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let value = self.value(a).iter().map(|&x| x * c).collect();
        let g = self.node(a).needs_grad;
        self.push(self.shape(a).to_vec(), value, Op::Scale { a, c }, g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let g = self.node(a).needs_grad;
        self.push(self.shape(a).to_vec(), value, Op::Sigmoid(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| x.tanh()).collect();
        let g = self.node(a).needs_grad;
        self.push(self.shape(a).to_vec(), value, Op::Tanh(a), g)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start >= end || end > c {
            return Err(mismatch("slice_cols", self.shape(a), &[start, end]));
        }
        let value = self
            .value(a)
            .chunks_exact(c)
            .flat_map(|row| row[start..end].iter().copied())
            .collect();
        let g = self.node(a).needs_grad;
        Ok(self.push(vec![r, end - start], value, Op::SliceCols { a, start }, g))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start >= end || end > r {
            return Err(mismatch("slice_rows", self.shape(a), &[start, end]));
        }
        let value = self.value(a)[start * c..end * c].to_vec();
        let g = self.node(a).needs_grad;
        Ok(self.push(vec![end - start, c], value, Op::SliceRows { a, start }, g))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| crate::error::invalid("concat_rows needs at least one input"))?;
        let (_, c) = self.dims(first);
        let mut rows = 0;
        let mut value = Vec::new();
        for &p in parts {
            let (r, pc) = self.dims(p);
            if pc != c {
                return Err(mismatch("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
            value.extend_from_slice(self.value(p));
        }
        let g = self.any_grad(parts);
        Ok(self.push(vec![rows, c], value, Op::ConcatRows(parts.to_vec()), g))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, c) = self.dims(table);
        if let Some(&id) = ids.iter().find(|&&id| id >= v) {
            return Err(Error::TokenOutOfRange { id, vocab: v });
        }
        let t = self.value(table);
        let value = ids
            .iter()
            .flat_map(|&id| t[id * c..(id + 1) * c].iter().copied())
            .collect();
        let g = self.node(table).needs_grad;
        Ok(self.push(
            vec![ids.len(), c],
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            g,
        ))
    }

    /// Multiplies row `i` of `a` by the constant `scale[i]`.
    pub fn scale_rows(&mut self, a: Var, scale: &[F]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if scale.len() != r {
            return Err(mismatch("scale_rows", self.shape(a), &[scale.len()]));
        }
        let value = self
            .value(a)
            .chunks_exact(c)
            .zip(scale)
            .flat_map(|(row, &s)| row.iter().map(move |&x| x * s))
            .collect();
        let g = self.node(a).needs_grad;
        Ok(self.push(
            self.shape(a).to_vec(),
            value,
            Op::ScaleRows {
                a,
                scale: scale.to_vec(),
            },
            g,
        ))
    }

    /// Euclidean norm of each row, shape `rows x 1`.
    pub fn row_l2_norm(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let value = self
            .value(a)
            .chunks_exact(c)
            .map(|row| row.iter().map(|&x| x * x).sum::<F>().sqrt())
            .collect();
        let g = self.node(a).needs_grad;
        self.push(vec![r, 1], value, Op::RowNorm(a), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum::<F>();
        let g = self.node(a).needs_grad;
        self.push(vec![1], vec![s], Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = F::from_usize(self.value(a).len()).unwrap();
        let s = self.value(a).iter().copied().sum::<F>() / n;
        let g = self.node(a).needs_grad;
        self.push(vec![1], vec![s], Op::Mean(a), g)
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(logits);
        if targets.len() != r {
            return Err(mismatch("softmax_cross_entropy", self.shape(logits), &[targets.len()]));
        }
        if let Some(&id) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::TokenOutOfRange { id, vocab: c });
        }
        let mut probs = Vec::with_capacity(r * c);
        let mut total = F::zero();
        for (row, &t) in self.value(logits).chunks_exact(c).zip(targets) {
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let exps: Vec<F> = row.iter().map(|&x| (x - max).exp()).collect();
            let z: F = exps.iter().copied().sum();
            total = total - ((row[t] - max) - z.ln());
            probs.extend(exps.into_iter().map(|e| e / z));
        }
        let loss = total / F::from_usize(r).unwrap();
        let g = self.node(logits).needs_grad;
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            g,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every differentiable
    /// node. Contributions from multiple uses of a node are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let ln = self.node(loss);
        if ln.value.len() != 1 {
            return Err(Error::NonScalarLoss(ln.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = self.dims(*a);
                let n = node.shape[1];
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                if let Some(da) = slot(grads, nodes, *a) {
                    if *trans_b {
                        F::gemm(m, n, k, g, false, bv, false, da, true);
                    } else {
                        F::gemm(m, n, k, g, false, bv, true, da, true);
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    if *trans_b {
                        F::gemm(n, m, k, g, true, av, false, db, true);
                    } else {
                        F::gemm(k, m, n, av, true, g, false, db, true);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x);
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    db.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x);
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    db.iter_mut().zip(g).for_each(|(d, &x)| *d = *d - x);
                }
            }
            Op::Mul(a, b) => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(bv) {
                        *d = *d + x * y;
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    for ((d, &x), &y) in db.iter_mut().zip(g).zip(av) {
                        *d = *d + x * y;
                    }
                }
            }
            Op::AddRowBias { a, bias } => {
                if let Some(da) = slot(grads, nodes, *a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x);
                }
                if let Some(db) = slot(grads, nodes, *bias) {
                    let c = db.len();
                    for row in g.chunks_exact(c) {
                        db.iter_mut().zip(row).for_each(|(d, &x)| *d = *d + x);
                    }
                }
            }
            Op::Scale { a, c } => {
                if let Some(da) = slot(grads, nodes, *a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x * *c);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(&node.value) {
                        *d = *d + x * y * (F::one() - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(&node.value) {
                        *d = *d + x * (F::one() - y * y);
                    }
                }
            }
            Op::SliceCols { a, start } => {
                let (_, c) = self.dims(*a);
                let w = node.shape[1];
                if let Some(da) = slot(grads, nodes, *a) {
                    for (drow, grow) in da.chunks_exact_mut(c).zip(g.chunks_exact(w)) {
                        for (d, &x) in drow[*start..*start + w].iter_mut().zip(grow) {
                            *d = *d + x;
                        }
                    }
                }
            }
            Op::SliceRows { a, start } => {
                let (_, c) = self.dims(*a);
                if let Some(da) = slot(grads, nodes, *a) {
                    for (d, &x) in da[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *d = *d + x;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(dp) = slot(grads, nodes, *p) {
                        for (d, &x) in dp.iter_mut().zip(&g[offset..offset + len]) {
                            *d = *d + x;
                        }
                    }
                    offset += len;
                }
            }
            Op::Gather { table, ids } => {
                let (_, c) = self.dims(*table);
                if let Some(dt) = slot(grads, nodes, *table) {
                    for (grow, &id) in g.chunks_exact(c).zip(ids) {
                        for (d, &x) in dt[id * c..(id + 1) * c].iter_mut().zip(grow) {
                            *d = *d + x;
                        }
                    }
                }
            }
            Op::ScaleRows { a, scale } => {
                let (_, c) = self.dims(*a);
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((drow, grow), &s) in da.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(scale) {
                        drow.iter_mut().zip(grow).for_each(|(d, &x)| *d = *d + x * s);
                    }
                }
            }
            Op::RowNorm(a) => {
                let (_, c) = self.dims(*a);
                let av = &nodes[a.0].value;
                if let Some(da) = slot(grads, nodes, *a) {
                    for (((drow, arow), &gn), &norm) in da
                        .chunks_exact_mut(c)
                        .zip(av.chunks_exact(c))
                        .zip(g)
                        .zip(&node.value)
                    {
                        // subgradient 0 at the origin
                        if norm > F::zero() {
                            let s = gn / norm;
                            drow.iter_mut().zip(arow).for_each(|(d, &x)| *d = *d + s * x);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    da.iter_mut().for_each(|d| *d = *d + g[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    let s = g[0] / F::from_usize(da.len()).unwrap();
                    da.iter_mut().for_each(|d| *d = *d + s);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (r, c) = self.dims(*logits);
                let s = g[0] / F::from_usize(r).unwrap();
                if let Some(dl) = slot(grads, nodes, *logits) {
                    for (i, &t) in targets.iter().enumerate() {
                        let row = &mut dl[i * c..(i + 1) * c];
                        for (d, &p) in row.iter_mut().zip(&probs[i * c..(i + 1) * c]) {
                            *d = *d + s * p;
                        }
                        row[t] = row[t] - s;
                    }
                }
            }
        }
    }
}

/// Zero-initialised gradient slot for `v`, or None when `v` is constant.
fn slot<'a, F: Scalar>(grads: &'a mut [Option<Vec<F>>], nodes: &[Node<F>], v: Var) -> Option<&'a mut Vec<F>> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); nodes[v.0].value.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_shape_algebra() {
        let mut tape = Tape::new();
        let a = tape.constant(&Tensor::<f64>::zeros(&[2, 3]));
        let b = tape.constant(&Tensor::<f64>::zeros(&[3, 4]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(c), &[2, 4]);
        let err = tape.matmul(b, b).unwrap_err().to_string();
        assert!(err.contains("[3, 4]"), "{err}");
    }

    #[test]
    fn activations_at_zero() {
        let mut tape = Tape::new();
        let z = tape.constant(&Tensor::<f64>::zeros(&[2, 2]));
        let s = tape.sigmoid(z);
        let h = tape.tanh(z);
        assert!(tape.value(s).iter().all(|&x| x == 0.5));
        assert!(tape.value(h).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn square_norm_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(&t(&[2], &[1.0, 2.0]).into_param());
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn linear_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1], &[5.0]).into_param());
        let y = tape.scale(x, 3.0);
        let loss = tape.sum(y);
        assert_eq!(tape.backward(loss).unwrap().get(x).unwrap(), &[3.0]);
    }

    #[test]
    fn reuse_accumulates() {
        let x0 = t(&[3], &[0.5, -1.0, 2.0]).into_param();
        let mut tape = Tape::new();
        let x = tape.leaf(&x0);
        let y = tape.add(x, x).unwrap();
        let l1 = tape.sum(y);
        let g1 = tape.backward(l1).unwrap().get(x).unwrap().to_vec();

        let mut tape = Tape::new();
        let x = tape.leaf(&x0);
        let y = tape.scale(x, 2.0);
        let l2 = tape.sum(y);
        let g2 = tape.backward(l2).unwrap().get(x).unwrap().to_vec();
        assert_eq!(g1, g2);
        assert_eq!(g1, vec![2.0; 3]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[2], &[1.0, 2.0]).into_param());
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(&t(&[1], &[3.0]));
        let x = tape.leaf(&t(&[1], &[5.0]).into_param());
        let y = tape.mul(c, x).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap(), &[3.0]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let mut tape = Tape::new();
        let z = tape.constant(&Tensor::<f64>::zeros(&[3, 4]));
        let l = tape.softmax_cross_entropy(z, &[0, 1, 3]).unwrap();
        assert!((tape.scalar(l) - 4f64.ln()).abs() < 1e-15);
        assert!(tape.softmax_cross_entropy(z, &[0, 1, 4]).is_err());
    }

    #[test]
    fn gather_checks_range() {
        let mut tape = Tape::new();
        let e = tape.constant(&Tensor::<f64>::zeros(&[3, 2]));
        assert!(matches!(
            tape.gather_rows(e, &[0, 3]),
            Err(Error::TokenOutOfRange { id: 3, vocab: 3 })
        ));
    }
}
