use std::collections::{BTreeMap, HashMap};

use super::kernels::{self, ScanDims};
use super::{NumError, ParamStore, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input(String),
    Param(String),
    Const,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Silu,
    Tanh,
    Softplus,
    Exp,
    Sum,
    MeanPool(usize),
    Reshape(Vec<usize>),
    Slice { start: usize, len: usize },
    Concat,
    Reverse,
    Transpose01,
    ConvSame { dilation: usize },
    ConvCausal,
    SelectiveScan,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Const => "const",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Silu => "silu",
            Op::Tanh => "tanh",
            Op::Softplus => "softplus",
            Op::Exp => "exp",
            Op::Sum => "sum",
            Op::MeanPool(_) => "mean_pool",
            Op::Reshape(_) => "reshape",
            Op::Slice { .. } => "slice",
            Op::Concat => "concat",
            Op::Reverse => "reverse",
            Op::Transpose01 => "transpose01",
            Op::ConvSame { .. } => "conv_same",
            Op::ConvCausal => "conv_causal",
            Op::SelectiveScan => "selective_scan",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
}

/// Gradients produced by [`Graph::backward`], keyed by leaf name.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub params: BTreeMap<String, Tensor>,
    pub inputs: BTreeMap<String, Tensor>,
}

/// Reverse-mode autodiff graph. Nodes are evaluated eagerly as they are
/// inserted; insertion order is the topological order.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: BTreeMap<String, Var>,
    bound: HashMap<String, Var>,
    inference: bool,
    released: bool,
}

fn shape_err(op: &'static str, detail: String) -> NumError {
    NumError::ShapeMismatch { op, detail }
}

fn silu(v: f64) -> f64 {
    v / (1.0 + (-v).exp())
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(crate) fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else if v < -30.0 {
        v.exp()
    } else {
        v.exp().ln_1p()
    }
}

/// `b`'s shape must equal `a`'s shape or a suffix of it.
fn check_broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NumError> {
    let (sa, sb) = (a.shape(), b.shape());
    if sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb {
        Ok(())
    } else {
        Err(shape_err(op, format!("{sa:?} with {sb:?}")))
    }
}

fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let inner = b.numel().max(1);
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, b.data()[i % inner]))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

/// Sum `g` (shaped like the broadcast output) down to `shape`.
fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    let inner: usize = shape.iter().product();
    if inner == g.numel() {
        return Tensor::new(shape.to_vec(), g.data().to_vec()).expect("same size");
    }
    let mut out = vec![0.0; inner];
    for chunk in g.data().chunks(inner) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Tensor::new(shape.to_vec(), out).expect("suffix shape")
}

fn rank3(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize), NumError> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        ref s => Err(shape_err(op, format!("expected rank 3, got {s:?}"))),
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), NumError> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        ref s => Err(shape_err(op, format!("expected rank 2, got {s:?}"))),
    }
}

fn eval(op: &Op, xs: &[&Tensor]) -> Result<Tensor, NumError> {
    let name = op.name();
    let t = match op {
        Op::Input(_) | Op::Param(_) | Op::Const => unreachable!("leaves are not evaluated"),
        Op::MatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (k, n) = rank2(name, b)?;
            if a.shape().is_empty() || a.last_dim() != k {
                return Err(shape_err(name, format!("{:?} x {:?}", a.shape(), b.shape())));
            }
            let m = a.rows();
            let mut out = vec![0.0; m * n];
            kernels::gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut out);
            let mut shape = a.shape().to_vec();
            *shape.last_mut().expect("rank >= 1") = n;
            Tensor::new(shape, out)?
        }
        Op::Add | Op::Sub | Op::Mul => {
            check_broadcast(name, xs[0], xs[1])?;
            match op {
                Op::Add => binary(xs[0], xs[1], |x, y| x + y),
                Op::Sub => binary(xs[0], xs[1], |x, y| x - y),
                _ => binary(xs[0], xs[1], |x, y| x * y),
            }
        }
        Op::Scale(s) => xs[0].map(|v| v * s),
        Op::Silu => xs[0].map(silu),
        Op::Tanh => xs[0].map(f64::tanh),
        Op::Softplus => xs[0].map(softplus),
        Op::Exp => xs[0].map(f64::exp),
        Op::Sum => Tensor::scalar(xs[0].sum()),
        Op::MeanPool(factor) => {
            let a = xs[0];
            let (rows, rest) = match a.shape().split_first() {
                Some((&r, rest)) => (r, rest.to_vec()),
                None => return Err(shape_err(name, "scalar input".into())),
            };
            if *factor == 0 || rows < *factor {
                return Err(shape_err(name, format!("{rows} rows, factor {factor}")));
            }
            let out_rows = rows / factor;
            let width: usize = rest.iter().product();
            let mut out = vec![0.0; out_rows * width];
            let scale = 1.0 / *factor as f64;
            for j in 0..out_rows {
                let dst = &mut out[j * width..(j + 1) * width];
                for i in 0..*factor {
                    let src = &a.data()[(j * factor + i) * width..][..width];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s * scale;
                    }
                }
            }
            let mut shape = vec![out_rows];
            shape.extend(rest);
            Tensor::new(shape, out)?
        }
        Op::Reshape(shape) => xs[0].clone().reshape(shape)?,
        Op::Slice { start, len } => {
            let a = xs[0];
            let width = a.last_dim();
            if a.shape().is_empty() || start + len > width {
                return Err(shape_err(name, format!("{start}+{len} of {:?}", a.shape())));
            }
            let mut out = Vec::with_capacity(a.rows() * len);
            for row in a.data().chunks(width) {
                out.extend_from_slice(&row[*start..start + len]);
            }
            let mut shape = a.shape().to_vec();
            *shape.last_mut().expect("rank >= 1") = *len;
            Tensor::new(shape, out)?
        }
        Op::Concat => {
            let first = xs[0];
            if first.shape().is_empty() {
                return Err(shape_err(name, "scalar input".into()));
            }
            let lead = &first.shape()[..first.shape().len() - 1];
            let mut total = 0;
            for x in xs {
                if x.shape().len() != first.shape().len() || &x.shape()[..lead.len()] != lead {
                    return Err(shape_err(name, format!("{:?} vs {:?}", first.shape(), x.shape())));
                }
                total += x.last_dim();
            }
            let rows = first.rows();
            let mut out = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for x in xs {
                    let w = x.last_dim();
                    out.extend_from_slice(&x.data()[r * w..(r + 1) * w]);
                }
            }
            let mut shape = lead.to_vec();
            shape.push(total);
            Tensor::new(shape, out)?
        }
        Op::Reverse => {
            let a = xs[0];
            let (b, l, c) = rank3(name, a)?;
            let mut out = vec![0.0; a.numel()];
            for bi in 0..b {
                for t in 0..l {
                    let src = &a.data()[(bi * l + t) * c..][..c];
                    out[(bi * l + (l - 1 - t)) * c..][..c].copy_from_slice(src);
                }
            }
            Tensor::new(vec![b, l, c], out)?
        }
        Op::Transpose01 => {
            let a = xs[0];
            let (p, q, c) = rank3(name, a)?;
            let mut out = vec![0.0; a.numel()];
            for i in 0..p {
                for j in 0..q {
                    let src = &a.data()[(i * q + j) * c..][..c];
                    out[(j * p + i) * c..][..c].copy_from_slice(src);
                }
            }
            Tensor::new(vec![q, p, c], out)?
        }
        Op::ConvSame { dilation } => {
            let (x, w) = (xs[0], xs[1]);
            let (b, l, cin) = rank3(name, x)?;
            let (taps, wcin, cout) = rank3(name, w)?;
            if wcin != cin || taps % 2 == 0 || *dilation == 0 {
                return Err(shape_err(name, format!("{:?} with kernel {:?}", x.shape(), w.shape())));
            }
            let y = kernels::conv_same_forward(x.data(), w.data(), b, l, cin, cout, taps, *dilation);
            Tensor::new(vec![b, l, cout], y)?
        }
        Op::ConvCausal => {
            let (x, w) = (xs[0], xs[1]);
            let (b, l, c) = rank3(name, x)?;
            let (wc, taps) = rank2(name, w)?;
            if wc != c || taps == 0 {
                return Err(shape_err(name, format!("{:?} with kernel {:?}", x.shape(), w.shape())));
            }
            Tensor::new(
                vec![b, l, c],
                kernels::conv_causal_forward(x.data(), w.data(), b, l, c, taps),
            )?
        }
        Op::SelectiveScan => {
            let dims = scan_dims(xs)?;
            let y = kernels::selective_scan_forward(
                xs[0].data(),
                xs[1].data(),
                xs[2].data(),
                xs[3].data(),
                xs[4].data(),
                dims,
            );
            Tensor::new(xs[0].shape().to_vec(), y)?
        }
    };
    Ok(t)
}

fn scan_dims(xs: &[&Tensor]) -> Result<ScanDims, NumError> {
    let name = "selective_scan";
    let (batch, len, channels) = rank3(name, xs[0])?;
    let (ad, state) = rank2(name, xs[2])?;
    let ok = xs[1].shape() == xs[0].shape()
        && ad == channels
        && xs[3].shape() == [batch, len, state]
        && xs[4].shape() == [batch, len, state];
    if !ok {
        return Err(shape_err(
            name,
            format!(
                "u {:?} delta {:?} a {:?} b {:?} c {:?}",
                xs[0].shape(),
                xs[1].shape(),
                xs[2].shape(),
                xs[3].shape(),
                xs[4].shape()
            ),
        ));
    }
    Ok(ScanDims {
        batch,
        len,
        channels,
        state,
    })
}

/// Vector-Jacobian product: gradients for each input given the output gradient.
fn vjp(op: &Op, xs: &[&Tensor], out: &Tensor, g: &Tensor) -> Vec<Tensor> {
    let like = |src: &Tensor, data: Vec<f64>| Tensor::new(src.shape().to_vec(), data).expect("vjp shape");
    let zip = |a: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Tensor {
        like(a, a.data().iter().zip(g.data()).map(|(&x, &gy)| f(x, gy)).collect())
    };
    match op {
        Op::Input(_) | Op::Param(_) | Op::Const => vec![],
        Op::MatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (k, n) = (b.shape()[0], b.shape()[1]);
            let m = a.rows();
            let mut da = vec![0.0; m * k];
            kernels::gemm(m, n, k, g.data(), false, b.data(), true, 0.0, &mut da);
            let mut db = vec![0.0; k * n];
            kernels::gemm(k, m, n, a.data(), true, g.data(), false, 0.0, &mut db);
            vec![like(a, da), like(b, db)]
        }
        Op::Add => vec![g.clone(), reduce_to(g, xs[1].shape())],
        Op::Sub => vec![g.clone(), reduce_to(&g.map(|v| -v), xs[1].shape())],
        Op::Mul => {
            let (a, b) = (xs[0], xs[1]);
            let inner = b.numel().max(1);
            let da = g
                .data()
                .iter()
                .enumerate()
                .map(|(i, gy)| gy * b.data()[i % inner])
                .collect();
            let prod = Tensor::new(
                a.shape().to_vec(),
                g.data().iter().zip(a.data()).map(|(gy, x)| gy * x).collect(),
            )
            .expect("same shape");
            vec![like(a, da), reduce_to(&prod, b.shape())]
        }
        Op::Scale(s) => vec![g.map(|v| v * s)],
        Op::Silu => vec![zip(xs[0], &|x, gy| {
            let s = sigmoid(x);
            gy * (s + x * s * (1.0 - s))
        })],
        Op::Tanh => vec![like(
            xs[0],
            out.data()
                .iter()
                .zip(g.data())
                .map(|(y, gy)| gy * (1.0 - y * y))
                .collect(),
        )],
        Op::Softplus => vec![zip(xs[0], &|x, gy| gy * sigmoid(x))],
        Op::Exp => vec![like(
            xs[0],
            out.data().iter().zip(g.data()).map(|(y, gy)| gy * y).collect(),
        )],
        Op::Sum => vec![Tensor::full(xs[0].shape(), g.item())],
        Op::MeanPool(factor) => {
            let a = xs[0];
            let width: usize = a.shape()[1..].iter().product();
            let out_rows = out.shape()[0];
            let mut da = vec![0.0; a.numel()];
            let scale = 1.0 / *factor as f64;
            for j in 0..out_rows {
                let src = &g.data()[j * width..(j + 1) * width];
                for i in 0..*factor {
                    let dst = &mut da[(j * factor + i) * width..][..width];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s * scale;
                    }
                }
            }
            vec![like(a, da)]
        }
        Op::Reshape(_) => vec![like(xs[0], g.data().to_vec())],
        Op::Slice { start, len } => {
            let a = xs[0];
            let width = a.last_dim();
            let mut da = vec![0.0; a.numel()];
            for (r, row) in g.data().chunks(*len).enumerate() {
                da[r * width + start..r * width + start + len].copy_from_slice(row);
            }
            vec![like(a, da)]
        }
        Op::Concat => {
            let total = out.last_dim();
            let rows = out.rows();
            let mut grads: Vec<Vec<f64>> = xs.iter().map(|x| Vec::with_capacity(x.numel())).collect();
            for r in 0..rows {
                let mut off = 0;
                for (x, gx) in xs.iter().zip(grads.iter_mut()) {
                    let w = x.last_dim();
                    gx.extend_from_slice(&g.data()[r * total + off..r * total + off + w]);
                    off += w;
                }
            }
            xs.iter().zip(grads).map(|(x, d)| like(x, d)).collect()
        }
        Op::Reverse => {
            let (b, l, c) = (xs[0].shape()[0], xs[0].shape()[1], xs[0].shape()[2]);
            let mut da = vec![0.0; g.numel()];
            for bi in 0..b {
                for t in 0..l {
                    da[(bi * l + t) * c..][..c].copy_from_slice(&g.data()[(bi * l + (l - 1 - t)) * c..][..c]);
                }
            }
            vec![like(xs[0], da)]
        }
        Op::Transpose01 => {
            let (p, q, c) = (xs[0].shape()[0], xs[0].shape()[1], xs[0].shape()[2]);
            let mut da = vec![0.0; g.numel()];
            for i in 0..p {
                for j in 0..q {
                    da[(i * q + j) * c..][..c].copy_from_slice(&g.data()[(j * p + i) * c..][..c]);
                }
            }
            vec![like(xs[0], da)]
        }
        Op::ConvSame { dilation } => {
            let (x, w) = (xs[0], xs[1]);
            let s = x.shape();
            let ws = w.shape();
            let (dx, dw) =
                kernels::conv_same_backward(x.data(), w.data(), g.data(), s[0], s[1], s[2], ws[2], ws[0], *dilation);
            vec![like(x, dx), like(w, dw)]
        }
        Op::ConvCausal => {
            let (x, w) = (xs[0], xs[1]);
            let s = x.shape();
            let (dx, dw) = kernels::conv_causal_backward(x.data(), w.data(), g.data(), s[0], s[1], s[2], w.shape()[1]);
            vec![like(x, dx), like(w, dw)]
        }
        Op::SelectiveScan => {
            let dims = scan_dims(xs).expect("validated in forward");
            let grads = kernels::selective_scan_backward(
                xs[0].data(),
                xs[1].data(),
                xs[2].data(),
                xs[3].data(),
                xs[4].data(),
                g.data(),
                dims,
            );
            xs.iter().zip(grads).map(|(x, d)| like(x, d)).collect()
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph meant for a single eager pass; intermediates may be released
    /// with [`Graph::release_since`], after which replay and backward fail.
    pub fn inference() -> Self {
        Self {
            inference: true,
            ..Self::default()
        }
    }

    pub fn is_inference(&self) -> bool {
        self.inference
    }

    /// Drops the values of non-leaf nodes created at or after `mark`, except
    /// those in `keep`. No-op on training graphs.
    pub fn release_since(&mut self, mark: usize, keep: &[Var]) {
        if !self.inference {
            return;
        }
        for i in mark..self.nodes.len() {
            if self.nodes[i].inputs.is_empty() || keep.iter().any(|v| v.0 == i) {
                continue;
            }
            self.nodes[i].value = Tensor::zeros(&[0]);
            self.released = true;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn leaf(&mut self, op: Op, value: Tensor) -> Result<Var, NumError> {
        if !value.is_finite() {
            return Err(NumError::NonFinite {
                op: op.name(),
                node: self.nodes.len(),
            });
        }
        self.nodes.push(Node {
            op,
            inputs: vec![],
            value,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Named input; its shape is fixed by the tensor given here.
    pub fn input(&mut self, name: &str, value: Tensor) -> Result<Var, NumError> {
        self.leaf(Op::Input(name.to_string()), value)
    }

    /// Named trainable parameter.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<Var, NumError> {
        self.leaf(Op::Param(name.to_string()), value)
    }

    /// Parameter leaf for `name` taken from `store`, created once per graph.
    pub fn bind(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumError> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.param(name, value)?;
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var, NumError> {
        self.leaf(Op::Const, value)
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>) -> Result<Var, NumError> {
        let value = {
            let xs: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            eval(&op, &xs)?
        };
        if !value.is_finite() {
            return Err(NumError::NonFinite {
                op: op.name(),
                node: self.nodes.len(),
            });
        }
        self.nodes.push(Node { op, inputs, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `a[.., k] · b[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.push(Op::MatMul, vec![a, b])
    }

    /// Elementwise sum; `b` may broadcast over `a`'s leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.push(Op::Sub, vec![a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.push(Op::Mul, vec![a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NumError> {
        self.push(Op::Scale(s), vec![a])
    }

    pub fn silu(&mut self, a: Var) -> Result<Var, NumError> {
        self.push(Op::Silu, vec![a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumError> {
        self.push(Op::Tanh, vec![a])
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, NumError> {
        self.push(Op::Softplus, vec![a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumError> {
        self.push(Op::Exp, vec![a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumError> {
        self.push(Op::Sum, vec![a])
    }

    /// Mean over consecutive groups of `factor` rows along axis 0; a
    /// trailing partial group is dropped.
    pub fn mean_pool(&mut self, a: Var, factor: usize) -> Result<Var, NumError> {
        self.push(Op::MeanPool(factor), vec![a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumError> {
        self.push(Op::Reshape(shape.to_vec()), vec![a])
    }

    /// `len` columns of the last axis starting at `start`.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumError> {
        self.push(Op::Slice { start, len }, vec![a])
    }

    /// Concatenation along the last axis.
    pub fn concat_last(&mut self, xs: &[Var]) -> Result<Var, NumError> {
        if xs.is_empty() {
            return Err(shape_err("concat", "no inputs".into()));
        }
        self.push(Op::Concat, xs.to_vec())
    }

    /// Reverses axis 1 of a `[batch][len][ch]` tensor.
    pub fn reverse_seq(&mut self, a: Var) -> Result<Var, NumError> {
        self.push(Op::Reverse, vec![a])
    }

    /// Swaps the first two axes of a rank-3 tensor.
    pub fn transpose01(&mut self, a: Var) -> Result<Var, NumError> {
        self.push(Op::Transpose01, vec![a])
    }

    /// Centred dilated convolution along axis 1; see [`kernels::conv_same_forward`].
    pub fn conv_same(&mut self, x: Var, w: Var, dilation: usize) -> Result<Var, NumError> {
        self.push(Op::ConvSame { dilation }, vec![x, w])
    }

    /// Depthwise causal convolution along axis 1.
    pub fn conv_causal(&mut self, x: Var, w: Var) -> Result<Var, NumError> {
        self.push(Op::ConvCausal, vec![x, w])
    }

    /// Fused discretize + sequential scan; see [`kernels::selective_scan_forward`].
    pub fn selective_scan(&mut self, u: Var, delta: Var, a: Var, b: Var, c: Var) -> Result<Var, NumError> {
        self.push(Op::SelectiveScan, vec![u, delta, a, b, c])
    }

    pub fn set_output(&mut self, name: &str, v: Var) {
        self.outputs.insert(name.to_string(), v);
    }

    pub fn output(&self, name: &str) -> Option<Var> {
        self.outputs.get(name).copied()
    }

    /// Current value of the first parameter leaf called `name`.
    pub fn param_value(&self, name: &str) -> Option<&Tensor> {
        self.nodes.iter().find_map(|n| match &n.op {
            Op::Param(p) if p == name => Some(&n.value),
            _ => None,
        })
    }

    /// Names of every parameter leaf, in insertion order.
    pub fn param_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Param(name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Re-evaluates every node with new feeds and returns the named outputs.
    ///
    /// Every `Input` leaf must be fed; `Param` leaves are replaced when a
    /// feed with their name is present and otherwise keep their value.
    pub fn forward(&mut self, feeds: &HashMap<String, Tensor>) -> Result<BTreeMap<String, Tensor>, NumError> {
        if self.released {
            return Err(NumError::Released);
        }
        for i in 0..self.nodes.len() {
            let value = match &self.nodes[i].op {
                Op::Input(name) | Op::Param(name) => {
                    let is_input = matches!(self.nodes[i].op, Op::Input(_));
                    match feeds.get(name) {
                        Some(t) => {
                            if t.shape() != self.nodes[i].value.shape() {
                                return Err(shape_err(
                                    "forward",
                                    format!(
                                        "feed {name}: declared {:?}, got {:?}",
                                        self.nodes[i].value.shape(),
                                        t.shape()
                                    ),
                                ));
                            }
                            t.clone()
                        }
                        None if is_input => return Err(NumError::MissingInput(name.clone())),
                        None => continue,
                    }
                }
                Op::Const => continue,
                op => {
                    let xs: Vec<&Tensor> = self.nodes[i].inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                    eval(op, &xs)?
                }
            };
            if !value.is_finite() {
                return Err(NumError::NonFinite {
                    op: self.nodes[i].op.name(),
                    node: i,
                });
            }
            self.nodes[i].value = value;
        }
        Ok(self
            .outputs
            .iter()
            .map(|(k, v)| (k.clone(), self.nodes[v.0].value.clone()))
            .collect())
    }

    /// Gradients of the scalar `loss` with respect to every named leaf.
    /// Leaves that do not influence the loss receive zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        if self.released {
            return Err(NumError::Released);
        }
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(NumError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.inputs.is_empty() {
                grads[i] = Some(g);
                continue;
            }
            if !g.is_finite() {
                return Err(NumError::NonFinite {
                    op: "backward",
                    node: i,
                });
            }
            let xs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let gin = vjp(&node.op, &xs, &node.value, &g);
            for (v, gx) in node.inputs.iter().zip(gin) {
                if matches!(self.nodes[v.0].op, Op::Const) {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&gx),
                    slot => *slot = Some(gx),
                }
            }
        }
        let mut out = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate() {
            let (map, name) = match &node.op {
                Op::Param(name) => (&mut out.params, name),
                Op::Input(name) => (&mut out.inputs, name),
                _ => continue,
            };
            let g = grads
                .get_mut(i)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
            if !g.is_finite() {
                return Err(NumError::NonFinite {
                    op: "backward",
                    node: i,
                });
            }
            match map.get_mut(name) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    map.insert(name.clone(), g);
                }
            }
        }
        Ok(out)
    }
}
