//! Reverse-mode tape.
//!
//! Every primitive application appends a node holding its output value. When
//! at least one input requires a gradient the node also keeps its op and the
//! activations its derivative needs; otherwise it is stored as a constant.
//! [`Tape::backward`] walks the nodes in exact reverse recording order.

use std::borrow::Cow;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Result, SanError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive set. Axis arguments refer to rank-2 values: `0` reduces
/// down each column, `1` along each row.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Mul,
    /// Matrix ⊕ column vector: the vector is added to every column.
    AddColumns,
    Tanh,
    Sigmoid,
    Softmax {
        axis: usize,
    },
    Max {
        axis: usize,
    },
    Concat {
        axis: usize,
    },
    /// Rows `ids` of a `[n, e]` table, laid out as the columns of an `[e, T]` matrix.
    LookupColumns {
        ids: Vec<usize>,
    },
    Scale(f64),
    Sum,
    SliceColumns {
        start: usize,
        len: usize,
    },
    Transpose,
    /// `-log softmax(logits)[target]`, fused.
    NllFromLogits {
        target: usize,
    },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Mul => "mul",
            Primitive::AddColumns => "add_columns",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Softmax { .. } => "softmax",
            Primitive::Max { .. } => "max",
            Primitive::Concat { .. } => "concat",
            Primitive::LookupColumns { .. } => "lookup_columns",
            Primitive::Scale(_) => "scale",
            Primitive::Sum => "sum",
            Primitive::SliceColumns { .. } => "slice_columns",
            Primitive::Transpose => "transpose",
            Primitive::NllFromLogits { .. } => "nll_from_logits",
        }
    }
}

#[derive(Debug)]
enum Saved {
    None,
    /// Argmax index for each output coordinate of `Max`.
    Argmax(Vec<usize>),
    /// Softmax probabilities of the logits for the fused NLL.
    Probs(Vec<f64>),
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    /// `None` for leaves and constants.
    op: Option<(Primitive, Vec<Var>, Saved)>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Tensor>>,
}

fn ensure_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if !t.is_matrix() {
        return Err(SanError::dim(op, format!("expected a matrix, got shape {:?}", t.shape())));
    }
    Ok((t.rows(), t.cols()))
}

fn ensure_axis(op: &'static str, axis: usize) -> Result<()> {
    if axis > 1 {
        return Err(SanError::dim(op, format!("axis {axis} out of range for a matrix")));
    }
    Ok(())
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(SanError::dim(op, format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Visits every lane of a rank-2 buffer along `axis`, yielding flat indices.
fn lanes(rows: usize, cols: usize, axis: usize) -> impl Iterator<Item = Vec<usize>> {
    let (n_lanes, lane_len) = if axis == 0 { (cols, rows) } else { (rows, cols) };
    (0..n_lanes).map(move |l| (0..lane_len).map(|i| if axis == 0 { i * cols + l } else { l * cols + i }).collect())
}

fn forward(prim: &Primitive, xs: &[&Tensor]) -> Result<(Tensor, Saved)> {
    let name = prim.name();
    let arity = match prim {
        Primitive::MatMul | Primitive::Add | Primitive::Mul | Primitive::AddColumns => Some(2),
        Primitive::Concat { .. } => None,
        _ => Some(1),
    };
    match arity {
        Some(n) if xs.len() != n => {
            return Err(SanError::dim(name, format!("expected {n} inputs, got {}", xs.len())));
        }
        None if xs.is_empty() => return Err(SanError::dim(name, "no inputs")),
        _ => {}
    }

    let out = match prim {
        Primitive::MatMul => {
            let (r, k) = ensure_matrix(name, xs[0])?;
            let (k2, c) = ensure_matrix(name, xs[1])?;
            if k != k2 {
                return Err(SanError::dim(name, format!("[{r}, {k}] x [{k2}, {c}]")));
            }
            Tensor::matrix(r, c, matmul_nn(xs[0].data(), xs[1].data(), r, k, c))?
        }
        Primitive::Add => {
            same_shape(name, xs[0], xs[1])?;
            let data = xs[0].data().iter().zip(xs[1].data()).map(|(a, b)| a + b).collect();
            Tensor::new(xs[0].shape().to_vec(), data)?
        }
        Primitive::Mul => {
            same_shape(name, xs[0], xs[1])?;
            let data = xs[0].data().iter().zip(xs[1].data()).map(|(a, b)| a * b).collect();
            Tensor::new(xs[0].shape().to_vec(), data)?
        }
        Primitive::AddColumns => {
            let (r, c) = ensure_matrix(name, xs[0])?;
            if xs[1].shape() != [r, 1] {
                return Err(SanError::dim(name, format!("vector {:?} does not fit matrix [{r}, {c}]", xs[1].shape())));
            }
            let v = xs[1].data();
            let mut data = xs[0].data().to_vec();
            for (i, row) in data.chunks_mut(c).enumerate() {
                for x in row {
                    *x += v[i];
                }
            }
            Tensor::matrix(r, c, data)?
        }
        Primitive::Tanh => xs[0].map(f64::tanh),
        Primitive::Sigmoid => xs[0].map(sigmoid),
        Primitive::Softmax { axis } => {
            ensure_axis(name, *axis)?;
            let (r, c) = ensure_matrix(name, xs[0])?;
            if r == 0 || c == 0 {
                return Err(SanError::dim(name, "empty softmax axis"));
            }
            let x = xs[0].data();
            let mut out = vec![0.0; x.len()];
            for lane in lanes(r, c, *axis) {
                let max = lane.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for &i in &lane {
                    out[i] = (x[i] - max).exp();
                    total += out[i];
                }
                for &i in &lane {
                    out[i] /= total;
                }
            }
            Tensor::matrix(r, c, out)?
        }
        Primitive::Max { axis } => {
            ensure_axis(name, *axis)?;
            let (r, c) = ensure_matrix(name, xs[0])?;
            if r == 0 || c == 0 {
                return Err(SanError::dim(name, "empty max axis"));
            }
            let x = xs[0].data();
            let mut vals = Vec::new();
            let mut arg = Vec::new();
            for lane in lanes(r, c, *axis) {
                // first maximum wins
                let mut best = lane[0];
                for &i in &lane[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                vals.push(x[best]);
                arg.push(best);
            }
            let shape = if *axis == 0 { vec![1, c] } else { vec![r, 1] };
            return finish(name, Tensor::new(shape, vals)?, Saved::Argmax(arg));
        }
        Primitive::Concat { axis } => {
            ensure_axis(name, *axis)?;
            let mut dims = Vec::with_capacity(xs.len());
            for x in xs {
                dims.push(ensure_matrix(name, x)?);
            }
            if *axis == 0 {
                let c = dims[0].1;
                if dims.iter().any(|d| d.1 != c) {
                    return Err(SanError::dim(name, format!("column counts differ: {dims:?}")));
                }
                let r = dims.iter().map(|d| d.0).sum();
                let data = xs.iter().flat_map(|x| x.data().iter().copied()).collect();
                Tensor::matrix(r, c, data)?
            } else {
                let r = dims[0].0;
                if dims.iter().any(|d| d.0 != r) {
                    return Err(SanError::dim(name, format!("row counts differ: {dims:?}")));
                }
                let c: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r * c);
                for i in 0..r {
                    for (x, d) in xs.iter().zip(&dims) {
                        data.extend_from_slice(&x.data()[i * d.1..(i + 1) * d.1]);
                    }
                }
                Tensor::matrix(r, c, data)?
            }
        }
        Primitive::LookupColumns { ids } => {
            let (n, e) = ensure_matrix(name, xs[0])?;
            if ids.is_empty() {
                return Err(SanError::dim(name, "no ids"));
            }
            if let Some(&bad) = ids.iter().find(|&&id| id >= n) {
                return Err(SanError::dim(name, format!("id {bad} outside table of {n} rows")));
            }
            let t = ids.len();
            let table = xs[0].data();
            let mut data = vec![0.0; e * t];
            for (col, &id) in ids.iter().enumerate() {
                for j in 0..e {
                    data[j * t + col] = table[id * e + j];
                }
            }
            Tensor::matrix(e, t, data)?
        }
        Primitive::Scale(s) => xs[0].map(|v| v * s),
        Primitive::Sum => Tensor::scalar(xs[0].sum()),
        Primitive::SliceColumns { start, len } => {
            let (r, c) = ensure_matrix(name, xs[0])?;
            if *len == 0 || start + len > c {
                return Err(SanError::dim(name, format!("columns {start}..{} of {c}", start + len)));
            }
            let x = xs[0].data();
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&x[i * c + start..i * c + start + len]);
            }
            Tensor::matrix(r, *len, data)?
        }
        Primitive::Transpose => {
            ensure_matrix(name, xs[0])?;
            xs[0].transpose()
        }
        Primitive::NllFromLogits { target } => {
            let x = xs[0].data();
            if *target >= x.len() {
                return Err(SanError::dim(name, format!("target {target} outside {} logits", x.len())));
            }
            let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = x.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + total.ln();
            let probs = x.iter().map(|v| (v - max).exp() / total).collect();
            return finish(name, Tensor::scalar(log_z - x[*target]), Saved::Probs(probs));
        }
    };
    finish(name, out, Saved::None)
}

fn finish(name: &'static str, out: Tensor, saved: Saved) -> Result<(Tensor, Saved)> {
    if !out.all_finite() {
        return Err(SanError::Numeric { op: name });
    }
    Ok((out, saved))
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node<'a>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Node { value: Cow::Owned(value), op: None, requires_grad })
    }

    /// Leaf that borrows its value; used to bind parameters without copying.
    pub fn leaf_ref(&mut self, value: &'a Tensor, requires_grad: bool) -> Var {
        self.push(Node { value: Cow::Borrowed(value), op: None, requires_grad })
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`], if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let (out, saved) = {
            let xs: Vec<&Tensor> = inputs.iter().map(|v| &*self.nodes[v.0].value).collect();
            forward(&prim, &xs)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = requires_grad.then(|| (prim, inputs.to_vec(), saved));
        Ok(self.push(Node { value: Cow::Owned(out), op, requires_grad }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn add_columns(&mut self, matrix: Var, vector: Var) -> Result<Var> {
        self.apply(Primitive::AddColumns, &[matrix, vector])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::Softmax { axis }, &[x])
    }

    pub fn max(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::Max { axis }, &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat { axis }, xs)
    }

    pub fn lookup_columns(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.apply(Primitive::LookupColumns { ids: ids.to_vec() }, &[table])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::Scale(s), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[x])
    }

    pub fn slice_columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::SliceColumns { start, len }, &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Transpose, &[x])
    }

    pub fn nll_from_logits(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.apply(Primitive::NllFromLogits { target }, &[logits])
    }

    /// Accumulates `d output / d v` into every reachable node that requires
    /// a gradient. Gradients from earlier calls are discarded.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let out = &self.nodes[output.0];
        if out.value.numel() != 1 {
            return Err(SanError::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !out.requires_grad {
            return Ok(());
        }
        self.grads[output.0] = Some(Tensor::filled(out.value.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = self.grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let Some((prim, inputs, saved)) = &node.op else {
                self.grads[idx] = Some(g);
                continue;
            };
            let contributions = self.input_grads(prim, inputs, saved, &node.value, &g)?;
            self.grads[idx] = Some(g);
            for (input, contrib) in inputs.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                if !contrib.all_finite() {
                    return Err(SanError::Numeric { op: prim.name() });
                }
                match &mut self.grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn input_grads(
        &self,
        prim: &Primitive,
        inputs: &[Var],
        saved: &Saved,
        y: &Tensor,
        g: &Tensor,
    ) -> Result<Vec<Option<Tensor>>> {
        let x = |i: usize| -> &Tensor { &self.nodes[inputs[i].0].value };
        let wants = |i: usize| self.nodes[inputs[i].0].requires_grad;
        let gd = g.data();
        let grads = match prim {
            Primitive::MatMul => {
                let (a, b) = (x(0), x(1));
                let (r, k, c) = (a.rows(), a.cols(), b.cols());
                let ga = wants(0).then(|| Tensor::matrix(r, k, matmul_nt(gd, b.data(), r, c, k)));
                let gb = wants(1).then(|| Tensor::matrix(k, c, matmul_tn(a.data(), gd, r, k, c)));
                vec![ga.transpose()?, gb.transpose()?]
            }
            Primitive::Add => vec![Some(g.clone()), Some(g.clone())],
            Primitive::Mul => {
                let prod = |other: &Tensor| {
                    let data = gd.iter().zip(other.data()).map(|(a, b)| a * b).collect();
                    Tensor::new(g.shape().to_vec(), data)
                };
                let ga = wants(0).then(|| prod(x(1))).transpose()?;
                let gb = wants(1).then(|| prod(x(0))).transpose()?;
                vec![ga, gb]
            }
            Primitive::AddColumns => {
                let c = g.cols();
                let gv = gd.chunks(c).map(|row| row.iter().sum()).collect();
                vec![Some(g.clone()), Some(Tensor::column(gv))]
            }
            Primitive::Tanh => {
                let data = gd.iter().zip(y.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                vec![Some(Tensor::new(y.shape().to_vec(), data)?)]
            }
            Primitive::Sigmoid => {
                let data = gd.iter().zip(y.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                vec![Some(Tensor::new(y.shape().to_vec(), data)?)]
            }
            Primitive::Softmax { axis } => {
                let (r, c) = (y.rows(), y.cols());
                let yd = y.data();
                let mut out = vec![0.0; yd.len()];
                for lane in lanes(r, c, *axis) {
                    let dot: f64 = lane.iter().map(|&i| gd[i] * yd[i]).sum();
                    for &i in &lane {
                        out[i] = yd[i] * (gd[i] - dot);
                    }
                }
                vec![Some(Tensor::matrix(r, c, out)?)]
            }
            Primitive::Max { .. } => {
                let Saved::Argmax(arg) = saved else { unreachable!("max saves argmax") };
                let mut out = Tensor::zeros(x(0).shape());
                for (&i, gv) in arg.iter().zip(gd) {
                    out.data_mut()[i] += gv;
                }
                vec![Some(out)]
            }
            Primitive::Concat { axis } => {
                let mut parts = Vec::with_capacity(inputs.len());
                if *axis == 0 {
                    let mut offset = 0;
                    for i in 0..inputs.len() {
                        let n = x(i).numel();
                        parts.push(Some(Tensor::new(x(i).shape().to_vec(), gd[offset..offset + n].to_vec())?));
                        offset += n;
                    }
                } else {
                    let total_c = g.cols();
                    let mut col = 0;
                    for i in 0..inputs.len() {
                        let (r, c) = (x(i).rows(), x(i).cols());
                        let mut data = Vec::with_capacity(r * c);
                        for row in 0..r {
                            data.extend_from_slice(&gd[row * total_c + col..row * total_c + col + c]);
                        }
                        parts.push(Some(Tensor::matrix(r, c, data)?));
                        col += c;
                    }
                }
                parts
            }
            Primitive::LookupColumns { ids } => {
                let e = x(0).cols();
                let t = ids.len();
                let mut out = Tensor::zeros(x(0).shape());
                let od = out.data_mut();
                for (col, &id) in ids.iter().enumerate() {
                    for j in 0..e {
                        od[id * e + j] += gd[j * t + col];
                    }
                }
                vec![Some(out)]
            }
            Primitive::Scale(s) => vec![Some(g.map(|v| v * s))],
            Primitive::Sum => vec![Some(Tensor::filled(x(0).shape(), g.item()))],
            Primitive::SliceColumns { start, len } => {
                let (r, c) = (x(0).rows(), x(0).cols());
                let mut out = Tensor::zeros(&[r, c]);
                let od = out.data_mut();
                for i in 0..r {
                    od[i * c + start..i * c + start + len].copy_from_slice(&gd[i * len..(i + 1) * len]);
                }
                vec![Some(out)]
            }
            Primitive::Transpose => vec![Some(g.transpose())],
            Primitive::NllFromLogits { target } => {
                let Saved::Probs(p) = saved else { unreachable!("nll saves probabilities") };
                let up = g.item();
                let mut data: Vec<f64> = p.iter().map(|v| v * up).collect();
                data[*target] -= up;
                vec![Some(Tensor::new(x(0).shape().to_vec(), data)?)]
            }
        };
        Ok(grads)
    }
}
