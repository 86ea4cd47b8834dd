//! Wengert-list tape. Every op validates shapes, computes its value eagerly,
//! rejects non-finite results and records enough to replay its adjoint.

use crate::element::{gemm, Element};
use crate::error::{shape_err, Result, TensorError};
use crate::kernels::{
    adaptive_windows, col2im, im2col, max_pool, pool_windows, ConvGeom, Windows,
};
use crate::tensor::{numel, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    AddSuffix,
    MulSuffix,
    Scale(f64),
    AddScalar,
    Square,
    Relu,
    Gelu,
    Sigmoid,
    LogClamp(f64),
    Softmax,
    LayerNorm { mean: Vec<f64>, rstd: Vec<f64> },
    MatMul { m: usize, k: usize, n: usize },
    Bmm { g: usize, m: usize, k: usize, n: usize },
    Reshape,
    Permute(Vec<usize>),
    Concat { axis: usize },
    Narrow { axis: usize, start: usize },
    BroadcastLeading(usize),
    Conv2d(ConvGeom),
    MaxPool(Vec<usize>),
    Sum,
    Mean,
    SumLast,
    MeanLast,
    WeightedSum,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    inputs: Vec<Var>,
    needs_grad: bool,
}

/// Ordered record of executed ops. Inputs always precede the ops that use
/// them, so a single reverse sweep visits every node once.
pub struct Tape<T: Element = f32> {
    nodes: Vec<Node<T>>,
    macs: u64,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn permute_data<T: Copy>(data: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let nd = shape.len();
    let n = data.len();
    if n == 0 {
        return Vec::new();
    }
    let mut in_strides = vec![1usize; nd];
    for d in (0..nd.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut idx = vec![0usize; nd];
    let mut off = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(data[off]);
        let mut d = nd;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            macs: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulates performed by conv/matmul ops recorded so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// Records a leaf. Gradients are collected for it iff `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            inputs: Vec::new(),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let mut t = t;
        t.set_requires_grad(false);
        self.leaf(t)
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let mut t = self.nodes[v.0].value.clone();
        t.clear_grad();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    /// Discrete choices made by the piecewise ops on this tape: ReLU signs,
    /// clamp activity and pooling argmaxes. Two evaluations with equal
    /// patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match &n.op {
                Op::Relu => {
                    let x = self.data(n.inputs[0]);
                    out.extend(x.iter().map(|&v| u64::from(v > T::zero())));
                }
                Op::LogClamp(eps) => {
                    let x = self.data(n.inputs[0]);
                    out.extend(x.iter().map(|&v| u64::from(v.f64() > *eps)));
                }
                Op::MaxPool(arg) => out.extend(arg.iter().map(|&i| i as u64)),
                _ => {}
            }
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, name: &'static str, op: Op, inputs: Vec<Var>, shape: &[usize], data: Vec<T>) -> Result<Var> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let value = Tensor::new(shape, data)?;
        self.nodes.push(Node {
            value,
            op,
            inputs,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&mut self, name: &'static str, op: Op, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(name, op, vec![a, b], &shape, data)
    }

    fn map(&mut self, name: &'static str, op: Op, x: Var, f: impl Fn(T) -> T) -> Result<Var> {
        let data = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(name, op, vec![x], &shape, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("add", Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("sub", Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("mul", Op::Mul, a, b, |x, y| x * y)
    }

    fn check_suffix(&self, op: &'static str, x: Var, y: Var) -> Result<usize> {
        let (xs, ys) = (self.shape(x), self.shape(y));
        if ys.len() > xs.len() || xs[xs.len() - ys.len()..] != *ys {
            return shape_err(op, format!("{ys:?} is not a trailing sub-shape of {xs:?}"));
        }
        Ok(numel(ys))
    }

    /// `x + y` with `y` broadcast over the leading axes of `x`.
    pub fn add_suffix(&mut self, x: Var, y: Var) -> Result<Var> {
        let len = self.check_suffix("add_suffix", x, y)?;
        let yd = self.data(y);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + yd[i % len])
            .collect();
        let shape = self.shape(x).to_vec();
        self.push("add_suffix", Op::AddSuffix, vec![x, y], &shape, data)
    }

    /// `x * y` with `y` broadcast over the leading axes of `x`.
    pub fn mul_suffix(&mut self, x: Var, y: Var) -> Result<Var> {
        let len = self.check_suffix("mul_suffix", x, y)?;
        let yd = self.data(y);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v * yd[i % len])
            .collect();
        let shape = self.shape(x).to_vec();
        self.push("mul_suffix", Op::MulSuffix, vec![x, y], &shape, data)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let st = T::lit(s);
        self.map("scale", Op::Scale(s), x, |v| v * st)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Result<Var> {
        let st = T::lit(s);
        self.map("add_scalar", Op::AddScalar, x, |v| v + st)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.map("square", Op::Square, x, |v| v * v)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map("relu", Op::Relu, x, |v| if v > T::zero() { v } else { T::zero() })
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map("gelu", Op::Gelu, x, |v| T::lit(gelu_fwd(v.f64())))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map("sigmoid", Op::Sigmoid, x, |v| {
            let v = v.f64();
            T::lit(if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            })
        })
    }

    /// `ln(max(x, eps))`; the gradient is zero where the clamp is active.
    pub fn log_clamp(&mut self, x: Var, eps: f64) -> Result<Var> {
        self.map("log_clamp", Op::LogClamp(eps), x, |v| T::lit(v.f64().max(eps).ln()))
    }

    /// Softmax over the trailing axis, max-subtracted, f64 normaliser.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap_or(&0);
        if d == 0 {
            return shape_err("softmax", "trailing axis must be non-empty");
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(src.len());
        for row in src.chunks(d) {
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b.f64()));
            let e: Vec<f64> = row.iter().map(|&v| (v.f64() - m).exp()).collect();
            let s: f64 = e.iter().sum();
            data.extend(e.iter().map(|&v| T::lit(v / s)));
        }
        self.push("softmax", Op::Softmax, vec![x], &shape, data)
    }

    /// Layer normalisation over the trailing axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap_or(&0);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return shape_err(
                "layer_norm",
                format!(
                    "affine params {:?}/{:?} do not match trailing axis {d}",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            );
        }
        let (src, g, b) = (self.data(x), self.data(gamma), self.data(beta));
        let rows = src.len() / d;
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(src.len());
        for row in src.chunks(d) {
            let mu = row.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.f64() - mu).powi(2)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + eps).sqrt();
            for (j, v) in row.iter().enumerate() {
                data.push(T::lit((v.f64() - mu) * r * g[j].f64() + b[j].f64()));
            }
            mean.push(mu);
            rstd.push(r);
        }
        self.push("layer_norm", Op::LayerNorm { mean, rstd }, vec![x, gamma, beta], &shape, data)
    }

    /// `[m,k] × [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err("matmul", format!("{sa:?} × {sb:?}: inner axes must agree"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, false);
        self.macs += (m * k * n) as u64;
        self.push("matmul", Op::MatMul { m, k, n }, vec![a, b], &[m, n], out)
    }

    /// Batched `[g,m,k] × [g,k,n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return shape_err("bmm", format!("{sa:?} × {sb:?}: batch and inner axes must agree"));
        }
        let (g, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); g * m * n];
        let (ad, bd) = (self.data(a), self.data(b));
        for i in 0..g {
            gemm(
                m,
                k,
                n,
                &ad[i * m * k..],
                false,
                &bd[i * k * n..],
                false,
                &mut out[i * m * n..],
                false,
            );
        }
        self.macs += (g * m * k * n) as u64;
        self.push("bmm", Op::Bmm { g, m, k, n }, vec![a, b], &[g, m, n], out)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).numel() {
            return shape_err("reshape", format!("cannot view {:?} as {:?}", self.shape(x), shape));
        }
        let data = self.data(x).to_vec();
        self.push("reshape", Op::Reshape, vec![x], shape, data)
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return shape_err("permute", format!("{axes:?} is not a permutation of the axes of {shape:?}"));
        }
        let data = permute_data(self.data(x), &shape, axes);
        let out: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        self.push("permute", Op::Permute(axes.to_vec()), vec![x], &out, data)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return shape_err("concat", "no inputs");
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return shape_err("concat", format!("axis {axis} out of range for {base:?}"));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let ok = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return shape_err("concat", format!("{s:?} incompatible with {base:?} along axis {axis}"));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for &v in xs {
                let len = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.data(v)[o * len..(o + 1) * len]);
            }
        }
        self.push("concat", Op::Concat { axis }, xs.to_vec(), &shape, data)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return shape_err("narrow", format!("[{start}, {}) on axis {axis} of {shape:?}", start + len));
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.data(x);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * n + start) * inner;
            data.extend_from_slice(&src[off..off + len * inner]);
        }
        let mut out = shape.clone();
        out[axis] = len;
        self.push("narrow", Op::Narrow { axis, start }, vec![x], &out, data)
    }

    /// Repeats `x` along a new leading axis of extent `n`.
    pub fn broadcast_leading(&mut self, x: Var, n: usize) -> Result<Var> {
        let mut shape = vec![n];
        shape.extend_from_slice(self.shape(x));
        let src = self.data(x);
        let mut data = Vec::with_capacity(src.len() * n);
        for _ in 0..n {
            data.extend_from_slice(src);
        }
        self.push("broadcast_leading", Op::BroadcastLeading(n), vec![x], &shape, data)
    }

    /// 2-D convolution (cross-correlation) of `[B,Cin,H,W]` with `[Cout,Cin,kh,kw]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: (usize, usize),
    ) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        if xs.len() != 4 {
            return shape_err("conv2d", format!("input must be [B,Cin,H,W], got {xs:?}"));
        }
        if ks.len() != 4 {
            return shape_err("conv2d", format!("kernel must be [Cout,Cin,kh,kw], got {ks:?}"));
        }
        if xs[1] != ks[1] {
            return shape_err(
                "conv2d",
                format!("input channels (axis 1) = {} but kernel in-channels (axis 1) = {}", xs[1], ks[1]),
            );
        }
        if stride == 0 {
            return Err(TensorError::Contract("conv2d: stride must be >= 1".into()));
        }
        let (b, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ks[0], ks[2], ks[3]);
        let (ph, pw) = padding;
        if kh > h + 2 * ph {
            return shape_err("conv2d", format!("kernel height (axis 2) {kh} exceeds padded input height {}", h + 2 * ph));
        }
        if kw > w + 2 * pw {
            return shape_err("conv2d", format!("kernel width (axis 3) {kw} exceeds padded input width {}", w + 2 * pw));
        }
        if let Some(bv) = bias {
            if self.shape(bv) != [cout] {
                return shape_err("conv2d", format!("bias {:?} does not match Cout {cout}", self.shape(bv)));
            }
        }
        let g = ConvGeom {
            cin,
            h,
            w,
            kh,
            kw,
            stride,
            ph,
            pw,
            ho: (h + 2 * ph - kh) / stride + 1,
            wo: (w + 2 * pw - kw) / stride + 1,
        };
        let (kk, p) = (g.col_rows(), g.col_cols());
        let mut out = vec![T::zero(); b * cout * p];
        let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * p] };
        let (xd, kd) = (self.data(x), self.data(kernel));
        for i in 0..b {
            let xb = &xd[i * cin * h * w..(i + 1) * cin * h * w];
            let ob = &mut out[i * cout * p..(i + 1) * cout * p];
            if g.is_pointwise() {
                gemm(cout, kk, p, kd, false, xb, false, ob, false);
            } else {
                im2col(xb, &g, &mut col);
                gemm(cout, kk, p, kd, false, &col, false, ob, false);
            }
        }
        if let Some(bv) = bias {
            let bd = self.data(bv);
            for (j, chunk) in out.chunks_mut(p).enumerate() {
                let bias = bd[j % cout];
                chunk.iter_mut().for_each(|v| *v = *v + bias);
            }
        }
        self.macs += (b * cout * kk * p) as u64;
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        self.push("conv2d", Op::Conv2d(g), inputs, &[b, cout, g.ho, g.wo], out)
    }

    fn pool(&mut self, name: &'static str, x: Var, rows: Windows, cols: Windows) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (out, arg) = max_pool(self.data(x), s[0] * s[1], s[2], s[3], &rows, &cols);
        self.push(name, Op::MaxPool(arg), vec![x], &[s[0], s[1], rows.len(), cols.len()], out)
    }

    fn check_4d(&self, op: &'static str, x: Var) -> Result<()> {
        let s = self.shape(x);
        if s.len() != 4 || s[2] == 0 || s[3] == 0 {
            return shape_err(op, format!("input must be non-empty [B,C,H,W], got {s:?}"));
        }
        Ok(())
    }

    /// Max pooling with ceil-mode coverage of the border.
    pub fn max_pool2d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        self.check_4d("max_pool2d", x)?;
        if kernel == 0 || stride == 0 {
            return Err(TensorError::Contract("max_pool2d: kernel and stride must be >= 1".into()));
        }
        let s = self.shape(x);
        let (rows, cols) = (pool_windows(s[2], kernel, stride), pool_windows(s[3], kernel, stride));
        self.pool("max_pool2d", x, rows, cols)
    }

    pub fn adaptive_max_pool2d(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        self.check_4d("adaptive_max_pool2d", x)?;
        if out_h == 0 || out_w == 0 {
            return Err(TensorError::Contract("adaptive_max_pool2d: output extent must be >= 1".into()));
        }
        let s = self.shape(x);
        let (rows, cols) = (adaptive_windows(s[2], out_h), adaptive_windows(s[3], out_w));
        self.pool("adaptive_max_pool2d", x, rows, cols)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.data(x).iter().map(|v| v.f64()).sum();
        self.push("sum", Op::Sum, vec![x], &[], vec![T::lit(s)])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        if n == 0 {
            return shape_err("mean", "empty tensor");
        }
        let s: f64 = self.data(x).iter().map(|v| v.f64()).sum();
        self.push("mean", Op::Mean, vec![x], &[], vec![T::lit(s / n as f64)])
    }

    fn reduce_last(&mut self, name: &'static str, op: Op, x: Var, div: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let Some((&d, lead)) = shape.split_last() else {
            return shape_err(name, "scalar has no trailing axis");
        };
        if d == 0 {
            return shape_err(name, "empty trailing axis");
        }
        let data = self
            .data(x)
            .chunks(d)
            .map(|r| {
                let s: f64 = r.iter().map(|v| v.f64()).sum();
                T::lit(if div { s / d as f64 } else { s })
            })
            .collect();
        self.push(name, op, vec![x], lead, data)
    }

    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        self.reduce_last("sum_last", Op::SumLast, x, false)
    }

    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        self.reduce_last("mean_last", Op::MeanLast, x, true)
    }

    /// `Σ_k w[k] · xs[k]` for same-shape `xs` and a length-N weight vector.
    pub fn weighted_sum(&mut self, xs: &[Var], weights: Var) -> Result<Var> {
        if xs.is_empty() || self.shape(weights) != [xs.len()] {
            return shape_err(
                "weighted_sum",
                format!("{} terms vs weights {:?}", xs.len(), self.shape(weights)),
            );
        }
        for &v in &xs[1..] {
            self.same_shape("weighted_sum", xs[0], v)?;
        }
        let shape = self.shape(xs[0]).to_vec();
        let w = self.data(weights).to_vec();
        let mut data = vec![T::zero(); numel(&shape)];
        for (&v, &wk) in xs.iter().zip(&w) {
            for (o, &x) in data.iter_mut().zip(self.data(v)) {
                *o = *o + wk * x;
            }
        }
        let mut inputs = xs.to_vec();
        inputs.push(weights);
        self.push("weighted_sum", Op::WeightedSum, inputs, &shape, data)
    }

    /// Reverse sweep from a one-element `loss`. Leaf gradients accumulate
    /// (`+=`) into their tensors; call [`Tape::zero_grads`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].needs_grad {
            return Ok(());
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaves = Vec::new();
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaves.push((i, g));
            } else {
                self.backward_node(i, &g, &mut grads);
            }
        }
        for (i, g) in leaves {
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Gradient buffer of `v`, zero-initialised on first touch.
    fn buf<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> &'g mut Vec<T> {
        let len = self.value(v).numel();
        grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
    }

    /// Adds `f(j)` into the gradient of `v` for every element `j`.
    fn add_into(&self, grads: &mut [Option<Vec<T>>], v: Var, f: &dyn Fn(usize) -> T) {
        if !self.wants(v) {
            return;
        }
        for (j, b) in self.buf(grads, v).iter_mut().enumerate() {
            *b = *b + f(j);
        }
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let ins = &node.inputs;
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add => {
                self.add_into(grads, ins[0], &|j| g[j]);
                self.add_into(grads, ins[1], &|j| g[j]);
            }
            Op::Sub => {
                self.add_into(grads, ins[0], &|j| g[j]);
                self.add_into(grads, ins[1], &|j| -g[j]);
            }
            Op::Mul => {
                let (a, b) = (self.data(ins[0]), self.data(ins[1]));
                self.add_into(grads, ins[0], &|j| g[j] * b[j]);
                self.add_into(grads, ins[1], &|j| g[j] * a[j]);
            }
            Op::AddSuffix | Op::MulSuffix => {
                let mul = matches!(node.op, Op::MulSuffix);
                let (xd, yd) = (self.data(ins[0]), self.data(ins[1]));
                let len = yd.len();
                if mul {
                    self.add_into(grads, ins[0], &|j| g[j] * yd[j % len]);
                } else {
                    self.add_into(grads, ins[0], &|j| g[j]);
                }
                if self.wants(ins[1]) {
                    let mut acc = vec![0.0f64; len];
                    for (j, gv) in g.iter().enumerate() {
                        let t = if mul { gv.f64() * xd[j].f64() } else { gv.f64() };
                        acc[j % len] += t;
                    }
                    self.add_into(grads, ins[1], &|j| T::lit(acc[j]));
                }
            }
            Op::Scale(s) => {
                let s = T::lit(*s);
                self.add_into(grads, ins[0], &|j| g[j] * s);
            }
            Op::AddScalar | Op::Reshape => self.add_into(grads, ins[0], &|j| g[j]),
            Op::Square => {
                let x = self.data(ins[0]);
                let two = T::lit(2.0);
                self.add_into(grads, ins[0], &|j| two * x[j] * g[j]);
            }
            Op::Relu => {
                let x = self.data(ins[0]);
                self.add_into(grads, ins[0], &|j| if x[j] > T::zero() { g[j] } else { T::zero() });
            }
            Op::Gelu => {
                let x = self.data(ins[0]);
                self.add_into(grads, ins[0], &|j| T::lit(gelu_grad(x[j].f64())) * g[j]);
            }
            Op::Sigmoid => self.add_into(grads, ins[0], &|j| y[j] * (T::one() - y[j]) * g[j]),
            Op::LogClamp(eps) => {
                let x = self.data(ins[0]);
                self.add_into(grads, ins[0], &|j| {
                    if x[j].f64() > *eps {
                        g[j] / x[j]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::Softmax => {
                let d = *node.value.shape().last().unwrap();
                let dots: Vec<f64> = y
                    .chunks(d)
                    .zip(g.chunks(d))
                    .map(|(yr, gr)| yr.iter().zip(gr).map(|(a, b)| a.f64() * b.f64()).sum())
                    .collect();
                self.add_into(grads, ins[0], &|j| y[j] * (g[j] - T::lit(dots[j / d])));
            }
            Op::LayerNorm { mean, rstd } => {
                let x = self.data(ins[0]);
                let gamma = self.data(ins[1]);
                let d = gamma.len();
                let xhat = |j: usize| (x[j].f64() - mean[j / d]) * rstd[j / d];
                if self.wants(ins[0]) {
                    let mut dx = vec![T::zero(); x.len()];
                    for r in 0..x.len() / d {
                        let (mut m1, mut m2) = (0.0, 0.0);
                        for c in 0..d {
                            let j = r * d + c;
                            let dxh = g[j].f64() * gamma[c].f64();
                            m1 += dxh;
                            m2 += dxh * xhat(j);
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        for c in 0..d {
                            let j = r * d + c;
                            let dxh = g[j].f64() * gamma[c].f64();
                            dx[j] = T::lit(rstd[r] * (dxh - m1 - xhat(j) * m2));
                        }
                    }
                    self.add_into(grads, ins[0], &|j| dx[j]);
                }
                if self.wants(ins[1]) || self.wants(ins[2]) {
                    let (mut dg, mut db) = (vec![0.0f64; d], vec![0.0f64; d]);
                    for (j, gv) in g.iter().enumerate() {
                        dg[j % d] += gv.f64() * xhat(j);
                        db[j % d] += gv.f64();
                    }
                    self.add_into(grads, ins[1], &|j| T::lit(dg[j]));
                    self.add_into(grads, ins[2], &|j| T::lit(db[j]));
                }
            }
            Op::MatMul { m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (a, b) = (self.data(ins[0]), self.data(ins[1]));
                if self.wants(ins[0]) {
                    let buf = self.buf(grads, ins[0]);
                    gemm(m, n, k, g, false, b, true, buf, true);
                }
                if self.wants(ins[1]) {
                    let buf = self.buf(grads, ins[1]);
                    gemm(k, m, n, a, true, g, false, buf, true);
                }
            }
            Op::Bmm { g: batch, m, k, n } => {
                let (batch, m, k, n) = (*batch, *m, *k, *n);
                let (a, b) = (self.data(ins[0]), self.data(ins[1]));
                if self.wants(ins[0]) {
                    let buf = self.buf(grads, ins[0]);
                    for i in 0..batch {
                        gemm(m, n, k, &g[i * m * n..], false, &b[i * k * n..], true, &mut buf[i * m * k..], true);
                    }
                }
                if self.wants(ins[1]) {
                    let buf = self.buf(grads, ins[1]);
                    for i in 0..batch {
                        gemm(k, m, n, &a[i * m * k..], true, &g[i * m * n..], false, &mut buf[i * k * n..], true);
                    }
                }
            }
            Op::Permute(axes) => {
                let mut inv = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inv[a] = i;
                }
                let back = permute_data(g, node.value.shape(), &inv);
                self.add_into(grads, ins[0], &|j| back[j]);
            }
            Op::Concat { axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = axis_split(shape, *axis);
                let mut offset = 0;
                for &v in ins {
                    let len = self.shape(v)[*axis];
                    let blk = len * inner;
                    let off = offset;
                    self.add_into(grads, v, &|j| {
                        let (o, r) = (j / blk, j % blk);
                        g[o * total * inner + off * inner + r]
                    });
                    offset += len;
                }
                let _ = outer;
            }
            Op::Narrow { axis, start } => {
                let src_shape = self.shape(ins[0]);
                let (_, n, inner) = axis_split(src_shape, *axis);
                let len = node.value.shape()[*axis];
                let (start, blk) = (*start, len * inner);
                self.add_into(grads, ins[0], &|j| {
                    let (o, r) = (j / (n * inner), j % (n * inner));
                    let a = r / inner;
                    if a >= start && a < start + len {
                        g[o * blk + (a - start) * inner + r % inner]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::BroadcastLeading(n) => {
                let len = self.value(ins[0]).numel();
                let mut acc = vec![0.0f64; len];
                for r in 0..*n {
                    for (a, gv) in acc.iter_mut().zip(&g[r * len..(r + 1) * len]) {
                        *a += gv.f64();
                    }
                }
                self.add_into(grads, ins[0], &|j| T::lit(acc[j]));
            }
            Op::Conv2d(geom) => self.conv_backward(geom, ins, g, grads),
            Op::MaxPool(arg) => {
                if self.wants(ins[0]) {
                    let buf = self.buf(grads, ins[0]);
                    for (o, &src) in arg.iter().enumerate() {
                        buf[src] = buf[src] + g[o];
                    }
                }
            }
            Op::Sum => self.add_into(grads, ins[0], &|_| g[0]),
            Op::Mean => {
                let n = T::lit(self.value(ins[0]).numel() as f64);
                self.add_into(grads, ins[0], &|_| g[0] / n);
            }
            Op::SumLast | Op::MeanLast => {
                let d = *self.shape(ins[0]).last().unwrap();
                let div = if matches!(node.op, Op::MeanLast) { d as f64 } else { 1.0 };
                let div = T::lit(div);
                self.add_into(grads, ins[0], &|j| g[j / d] / div);
            }
            Op::WeightedSum => {
                let (terms, w) = ins.split_at(ins.len() - 1);
                let wd = self.data(w[0]);
                for (k, &v) in terms.iter().enumerate() {
                    self.add_into(grads, v, &|j| wd[k] * g[j]);
                }
                if self.wants(w[0]) {
                    let dw: Vec<f64> = terms
                        .iter()
                        .map(|&v| self.data(v).iter().zip(g).map(|(a, b)| a.f64() * b.f64()).sum())
                        .collect();
                    self.add_into(grads, w[0], &|k| T::lit(dw[k]));
                }
            }
        }
    }

    fn conv_backward(
        &self,
        geom: &ConvGeom,
        ins: &[Var],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let (x, kernel) = (ins[0], ins[1]);
        let xd = self.data(x);
        let kd = self.data(kernel);
        let cout = self.shape(kernel)[0];
        let batch = self.shape(x)[0];
        let (kk, p) = (geom.col_rows(), geom.col_cols());
        let in_len = geom.cin * geom.h * geom.w;
        let need_x = self.wants(x);
        let need_w = self.wants(kernel);
        let mut col = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * p] };
        if need_w {
            let dw = self.buf(grads, kernel);
            for i in 0..batch {
                let gb = &g[i * cout * p..(i + 1) * cout * p];
                let xb = &xd[i * in_len..(i + 1) * in_len];
                if geom.is_pointwise() {
                    gemm(cout, p, kk, gb, false, xb, true, dw, true);
                } else {
                    im2col(xb, geom, &mut col);
                    gemm(cout, p, kk, gb, false, &col, true, dw, true);
                }
            }
        }
        if need_x {
            let dx = self.buf(grads, x);
            for i in 0..batch {
                let gb = &g[i * cout * p..(i + 1) * cout * p];
                let dxb = &mut dx[i * in_len..(i + 1) * in_len];
                if geom.is_pointwise() {
                    gemm(kk, cout, p, kd, true, gb, false, dxb, true);
                } else {
                    gemm(kk, cout, p, kd, true, gb, false, &mut col, false);
                    col2im(&col, geom, dxb);
                }
            }
        }
        if let Some(&b) = ins.get(2) {
            if self.wants(b) {
                let mut acc = vec![0.0f64; cout];
                for (j, chunk) in g.chunks(p).enumerate() {
                    acc[j % cout] += chunk.iter().map(|v| v.f64()).sum::<f64>();
                }
                let db = self.buf(grads, b);
                for (d, a) in db.iter_mut().zip(&acc) {
                    *d = *d + T::lit(*a);
                }
            }
        }
    }
}
