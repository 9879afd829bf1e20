//! Reverse-mode differentiation over dense arrays.
//!
//! A [`Tape`] records every array produced during a forward pass together
//! with the primitive that produced it. [`Tape::backward`] walks the record
//! in reverse and returns a [`Gradients`] table, which can be folded into a
//! [`ParameterStore`].
//!
//! Arrays are row-major. Values on the tape are never mutated after they
//! are recorded.

use crate::autodiff::params::ParameterStore;
use crate::error::{Error, Result};

/// Handle to an array recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Padding and dilation for [`Tape::conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvSpec {
    /// Left-only padding so output step `l` sees inputs `<= l`.
    pub fn causal(kernel: usize, dilation: usize) -> Self {
        Self {
            dilation,
            pad_left: dilation * (kernel - 1),
            pad_right: 0,
        }
    }

    /// Symmetric padding that keeps the length for odd kernels.
    pub fn same(kernel: usize) -> Self {
        Self {
            dilation: 1,
            pad_left: (kernel - 1) / 2,
            pad_right: kernel / 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    outer: usize,
    dim: usize,
    inner: usize,
}

impl Axis {
    fn of(shape: &[usize], axis: usize) -> Self {
        Self {
            outer: shape[..axis].iter().product(),
            dim: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        }
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Leaf,
    Param(String),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        inner: usize,
        dims: Vec<usize>,
    },
    Slice {
        input: Var,
        axis: Axis,
        start: usize,
        len: usize,
    },
    Reshape(Var),
    Permute {
        input: Var,
        perm: Vec<usize>,
    },
    Softmax(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumAxis {
        input: Var,
        axis: Axis,
    },
    MinAxis {
        input: Var,
        axis: Axis,
        argmin: Vec<usize>,
    },
    Conv1d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
        batch: usize,
        cin: usize,
        len: usize,
        cout: usize,
        kernel: usize,
        lout: usize,
    },
    OuterSum {
        a: Var,
        b: Var,
        batch: usize,
        n: usize,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every recorded array.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, String)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` influenced it.
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into the store's `grad` buffers.
    pub fn accumulate_into(&self, store: &mut ParameterStore) -> Result<()> {
        for (node, name) in &self.params {
            let Some(g) = self.grads[*node].as_ref() else {
                continue;
            };
            let p = store.get_mut(name)?;
            if !p.requires_grad() {
                continue;
            }
            for (dst, src) in p.grad_mut().iter_mut().zip(g) {
                *dst += src;
            }
        }
        Ok(())
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a single-element array.
    pub fn item(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn check_len(shape: &[usize], values: &[f64], op: &'static str) -> Result<()> {
        if numel(shape) != values.len() || shape.is_empty() {
            return Err(Error::shape(op, shape, &[values.len()]));
        }
        Ok(())
    }

    /// An array that takes no gradient.
    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        Self::check_len(shape, &values, "constant")?;
        Ok(self.push(shape.to_vec(), values, Op::Constant, false))
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(vec![1], vec![value], Op::Constant, false)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.push(shape.to_vec(), vec![0.0; numel(shape)], Op::Constant, false)
    }

    /// A free variable whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        Self::check_len(shape, &values, "leaf")?;
        Ok(self.push(shape.to_vec(), values, Op::Leaf, true))
    }

    /// Copies a stored parameter onto the tape.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        let p = store.get(name)?;
        Ok(self.push(
            p.shape().to_vec(),
            p.values().to_vec(),
            Op::Param(name.to_string()),
            p.requires_grad(),
        ))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        self.push(self.shape(a).to_vec(), value, op, rg)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "div")?;
        Ok(self.zip_with(a, b, Op::Div(a, b), |x, y| x / y))
    }

    /// Adds a vector along the last axis of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let last = *self.shape(a).last().unwrap();
        if self.shape(row) != [last] {
            return Err(Error::shape("add_row", self.shape(a), self.shape(row)));
        }
        let r = self.value(row).to_vec();
        let value = self
            .value(a)
            .chunks(last)
            .flat_map(|c| c.iter().zip(&r).map(|(x, y)| x + y))
            .collect();
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(self.shape(a).to_vec(), value, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `[..., k] x [k, n] -> [..., n]`; leading axes of `a` are flattened.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let k = *sa.last().unwrap();
        if sb.len() != 2 || sb[0] != k {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let n = sb[1];
        let m = numel(&sa) / k;
        let value = matmul_raw(self.value(a), self.value(b), m, k, n);
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("batch_matmul", &sa, &sb));
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (va, vb) = (self.value(a), self.value(b));
        let mut value = Vec::with_capacity(batch * m * n);
        for bi in 0..batch {
            value.extend(matmul_raw(
                &va[bi * m * k..(bi + 1) * m * k],
                &vb[bi * k * n..(bi + 1) * k * n],
                m,
                k,
                n,
            ));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            vec![batch, m, n],
            value,
            Op::BatchMatMul { a, b, batch, m, k, n },
            rg,
        ))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", &first, &[axis]));
        }
        let mut dims = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &first, s));
            }
            dims.push(s[axis]);
        }
        let ax = Axis::of(&first, axis);
        let total: usize = dims.iter().sum();
        let mut value = Vec::with_capacity(ax.outer * total * ax.inner);
        for o in 0..ax.outer {
            for (&v, &d) in inputs.iter().zip(&dims) {
                let chunk = d * ax.inner;
                value.extend_from_slice(&self.value(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            shape,
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer: ax.outer,
                inner: ax.inner,
                dims,
            },
            rg,
        ))
    }

    /// Stacks equal-shape arrays along a new leading axis.
    pub fn stack(&mut self, inputs: &[Var]) -> Result<Var> {
        let reshaped = inputs
            .iter()
            .map(|&v| {
                let mut s = vec![1];
                s.extend_from_slice(self.shape(v));
                self.reshape(v, &s)
            })
            .collect::<Result<Vec<_>>>()?;
        self.concat(&reshaped, 0)
    }

    /// Entries `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape("slice", &shape, &[axis, start, len]));
        }
        let ax = Axis::of(&shape, axis);
        let src = self.value(a);
        let mut value = Vec::with_capacity(ax.outer * len * ax.inner);
        for o in 0..ax.outer {
            let base = (o * ax.dim + start) * ax.inner;
            value.extend_from_slice(&src[base..base + len * ax.inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(
            out_shape,
            value,
            Op::Slice {
                input: a,
                axis: ax,
                start,
                len,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() || shape.is_empty() {
            return Err(Error::shape("reshape", self.shape(a), shape));
        }
        let value = self.value(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(a), rg))
    }

    /// Reorders axes: output axis `d` is input axis `perm[d]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len()) {
            return Err(Error::shape("permute", &shape, perm));
        }
        for &p in perm {
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::shape("permute", &shape, perm));
            }
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let value = permute_raw(self.value(a), &shape, perm);
        let rg = self.rg(a);
        Ok(self.push(
            out_shape,
            value,
            Op::Permute {
                input: a,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    /// Softmax over the last axis. Entries where `mask` is `false` are
    /// excluded and produce exactly zero; a fully masked row is all zero.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let last = *shape.last().unwrap();
        if let Some(m) = mask {
            if m.len() != numel(&shape) {
                return Err(Error::shape("softmax", &shape, &[m.len()]));
            }
        }
        let src = self.value(a);
        let mut value = vec![0.0; src.len()];
        for (r, row) in src.chunks(last).enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m[r * last + j]);
            let max = (0..last)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let out = &mut value[r * last..(r + 1) * last];
            let mut total = 0.0;
            for j in (0..last).filter(|&j| keep(j)) {
                out[j] = (row[j] - max).exp();
                total += out[j];
            }
            out.iter_mut().for_each(|x| *x /= total);
        }
        let rg = self.rg(a);
        Ok(self.push(shape, value, Op::Softmax(a), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(vec![1], vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(a);
        self.push(vec![1], vec![m], Op::Mean(a), rg)
    }

    /// Sums out `axis`. A rank-1 input yields shape `[1]`.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("sum_axis", &shape, &[axis]));
        }
        let ax = Axis::of(&shape, axis);
        let src = self.value(a);
        let mut value = vec![0.0; ax.outer * ax.inner];
        for o in 0..ax.outer {
            for d in 0..ax.dim {
                for i in 0..ax.inner {
                    value[o * ax.inner + i] += src[(o * ax.dim + d) * ax.inner + i];
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(reduced(&shape, axis), value, Op::SumAxis { input: a, axis: ax }, rg))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let dim = *self
            .shape(a)
            .get(axis)
            .ok_or_else(|| Error::shape("mean_axis", self.shape(a), &[axis]))?;
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(s, 1.0 / dim as f64))
    }

    /// Minimum along `axis`; the gradient flows to the first minimizer.
    pub fn min_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("min_axis", &shape, &[axis]));
        }
        let ax = Axis::of(&shape, axis);
        let src = self.value(a);
        let mut value = vec![f64::INFINITY; ax.outer * ax.inner];
        let mut argmin = vec![0; ax.outer * ax.inner];
        for o in 0..ax.outer {
            for d in 0..ax.dim {
                for i in 0..ax.inner {
                    let x = src[(o * ax.dim + d) * ax.inner + i];
                    let slot = o * ax.inner + i;
                    if x < value[slot] || d == 0 {
                        value[slot] = x;
                        argmin[slot] = d;
                    }
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            reduced(&shape, axis),
            value,
            Op::MinAxis {
                input: a,
                axis: ax,
                argmin,
            },
            rg,
        ))
    }

    /// 1-D convolution along the last axis.
    ///
    /// `input` is `[B, C_in, L]`, `weight` is `[C_out, C_in, K]`, `bias` is
    /// `[C_out]`. Output is `[B, C_out, L + pad_left + pad_right - d(K-1)]`.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    ) -> Result<Var> {
        let si = self.shape(input).to_vec();
        let sw = self.shape(weight).to_vec();
        if si.len() != 3 || sw.len() != 3 || si[1] != sw[1] || spec.dilation == 0 {
            return Err(Error::shape("conv1d", &si, &sw));
        }
        let (batch, cin, len) = (si[0], si[1], si[2]);
        let (cout, kernel) = (sw[0], sw[2]);
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv1d bias", &sw, self.shape(b)));
            }
        }
        let span = spec.dilation * (kernel - 1);
        let padded = len + spec.pad_left + spec.pad_right;
        if padded <= span {
            return Err(Error::shape("conv1d", &si, &sw));
        }
        let lout = padded - span;
        let x = self.value(input);
        let w = self.value(weight);
        let mut value = vec![0.0; batch * cout * lout];
        for b in 0..batch {
            for o in 0..cout {
                let out = &mut value[(b * cout + o) * lout..(b * cout + o + 1) * lout];
                if let Some(bv) = bias {
                    let bo = self.nodes[bv.0].value[o];
                    out.iter_mut().for_each(|y| *y = bo);
                }
                for c in 0..cin {
                    let xs = &x[(b * cin + c) * len..(b * cin + c + 1) * len];
                    for k in 0..kernel {
                        let wk = w[(o * cin + c) * kernel + k];
                        for (l, y) in out.iter_mut().enumerate() {
                            if let Some(src) = conv_src(l, k, spec, len) {
                                *y += wk * xs[src];
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(input) || self.rg(weight) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            vec![batch, cout, lout],
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                spec,
                batch,
                cin,
                len,
                cout,
                kernel,
                lout,
            },
            rg,
        ))
    }

    /// `[B, N] (+) [B, N] -> [B, N, N]` with `out[b, i, j] = a[b, i] + c[b, j]`.
    pub fn outer_sum(&mut self, a: Var, c: Var) -> Result<Var> {
        self.same_shape(a, c, "outer_sum")?;
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("outer_sum", &s, self.shape(c)));
        }
        let (batch, n) = (s[0], s[1]);
        let (va, vc) = (self.value(a), self.value(c));
        let mut value = Vec::with_capacity(batch * n * n);
        for b in 0..batch {
            for i in 0..n {
                for j in 0..n {
                    value.push(va[b * n + i] + vc[b * n + j]);
                }
            }
        }
        let rg = self.rg(a) || self.rg(c);
        Ok(self.push(
            vec![batch, n, n],
            value,
            Op::OuterSum { a, b: c, batch, n },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if numel(shape) != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let params = self.nodes[..=loss.0]
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match &n.op {
                Op::Param(name) => Some((i, name.clone())),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |ga| axpy(ga, g, 1.0));
                self.acc(grads, *b, |gb| axpy(gb, g, 1.0));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |ga| axpy(ga, g, 1.0));
                self.acc(grads, *b, |gb| axpy(gb, g, -1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * vb[i];
                    }
                });
                self.acc(grads, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * va[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let vb = self.value(*b);
                self.acc(grads, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] / vb[i];
                    }
                });
                self.acc(grads, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i] -= g[i] * out[i] / vb[i];
                    }
                });
            }
            Op::AddRow(a, row) => {
                self.acc(grads, *a, |ga| axpy(ga, g, 1.0));
                let last = self.value(*row).len();
                self.acc(grads, *row, |gr| {
                    for chunk in g.chunks(last) {
                        axpy(gr, chunk, 1.0);
                    }
                });
            }
            Op::Scale(a, c) => self.acc(grads, *a, |ga| axpy(ga, g, *c)),
            Op::AddScalar(a) | Op::Reshape(a) => self.acc(grads, *a, |ga| axpy(ga, g, 1.0)),
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (va, vb) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |ga| matmul_bt_acc(ga, g, vb, m, n, k));
                self.acc(grads, *b, |gb| matmul_at_acc(gb, va, g, m, k, n));
            }
            Op::BatchMatMul { a, b, batch, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (va, vb) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |ga| {
                    for bi in 0..*batch {
                        matmul_bt_acc(
                            &mut ga[bi * m * k..(bi + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &vb[bi * k * n..(bi + 1) * k * n],
                            m,
                            n,
                            k,
                        );
                    }
                });
                self.acc(grads, *b, |gb| {
                    for bi in 0..*batch {
                        matmul_at_acc(
                            &mut gb[bi * k * n..(bi + 1) * k * n],
                            &va[bi * m * k..(bi + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            m,
                            k,
                            n,
                        );
                    }
                });
            }
            Op::Concat {
                inputs,
                outer,
                inner,
                dims,
            } => {
                let total: usize = dims.iter().sum();
                let mut offset = 0;
                for (&v, &d) in inputs.iter().zip(dims) {
                    let chunk = d * inner;
                    self.acc(grads, v, |gv| {
                        for o in 0..*outer {
                            let src = o * total * inner + offset;
                            axpy(&mut gv[o * chunk..(o + 1) * chunk], &g[src..src + chunk], 1.0);
                        }
                    });
                    offset += chunk;
                }
            }
            Op::Slice {
                input,
                axis,
                start,
                len,
            } => {
                self.acc(grads, *input, |gi| {
                    for o in 0..axis.outer {
                        let dst = (o * axis.dim + start) * axis.inner;
                        let src = o * len * axis.inner;
                        let n = len * axis.inner;
                        axpy(&mut gi[dst..dst + n], &g[src..src + n], 1.0);
                    }
                });
            }
            Op::Permute { input, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (d, &p) in perm.iter().enumerate() {
                    inverse[p] = d;
                }
                let back = permute_raw(g, &node.shape, &inverse);
                self.acc(grads, *input, |gi| axpy(gi, &back, 1.0));
            }
            Op::Softmax(a) => {
                let last = *node.shape.last().unwrap();
                self.acc(grads, *a, |ga| {
                    for r in 0..g.len() / last {
                        let y = &out[r * last..(r + 1) * last];
                        let gy = &g[r * last..(r + 1) * last];
                        let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                        for j in 0..last {
                            ga[r * last + j] += y[j] * (gy[j] - dot);
                        }
                    }
                });
            }
            Op::LeakyRelu(a, slope) => {
                let va = self.value(*a);
                self.acc(grads, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += if va[i] > 0.0 { g[i] } else { slope * g[i] };
                    }
                });
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, |ga| {
                    for i in 0..g.len() {
                        if va[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => self.acc(grads, *a, |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }),
            Op::Tanh(a) => self.acc(grads, *a, |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }),
            Op::Exp(a) => self.acc(grads, *a, |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * out[i];
                }
            }),
            Op::Log(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] / va[i];
                    }
                });
            }
            Op::Sqrt(a) => self.acc(grads, *a, |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * 0.5 / out[i];
                }
            }),
            Op::Square(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += 2.0 * g[i] * va[i];
                    }
                });
            }
            Op::Sum(a) => self.acc(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let inv = 1.0 / self.value(*a).len() as f64;
                self.acc(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0] * inv));
            }
            Op::SumAxis { input, axis } => self.acc(grads, *input, |gi| {
                for o in 0..axis.outer {
                    for d in 0..axis.dim {
                        for i in 0..axis.inner {
                            gi[(o * axis.dim + d) * axis.inner + i] += g[o * axis.inner + i];
                        }
                    }
                }
            }),
            Op::MinAxis {
                input,
                axis,
                argmin,
            } => self.acc(grads, *input, |gi| {
                for o in 0..axis.outer {
                    for i in 0..axis.inner {
                        let slot = o * axis.inner + i;
                        gi[(o * axis.dim + argmin[slot]) * axis.inner + i] += g[slot];
                    }
                }
            }),
            Op::Conv1d {
                input,
                weight,
                bias,
                spec,
                batch,
                cin,
                len,
                cout,
                kernel,
                lout,
            } => {
                let (batch, cin, len, cout, kernel, lout) =
                    (*batch, *cin, *len, *cout, *kernel, *lout);
                let x = self.value(*input);
                let w = self.value(*weight);
                if let Some(b) = bias {
                    self.acc(grads, *b, |gb| {
                        for bi in 0..batch {
                            for o in 0..cout {
                                let row = &g[(bi * cout + o) * lout..(bi * cout + o + 1) * lout];
                                gb[o] += row.iter().sum::<f64>();
                            }
                        }
                    });
                }
                self.acc(grads, *weight, |gw| {
                    for bi in 0..batch {
                        for o in 0..cout {
                            let row = &g[(bi * cout + o) * lout..(bi * cout + o + 1) * lout];
                            for c in 0..cin {
                                let xs = &x[(bi * cin + c) * len..(bi * cin + c + 1) * len];
                                for k in 0..kernel {
                                    let mut s = 0.0;
                                    for (l, gy) in row.iter().enumerate() {
                                        if let Some(src) = conv_src(l, k, *spec, len) {
                                            s += gy * xs[src];
                                        }
                                    }
                                    gw[(o * cin + c) * kernel + k] += s;
                                }
                            }
                        }
                    }
                });
                self.acc(grads, *input, |gx| {
                    for bi in 0..batch {
                        for o in 0..cout {
                            let row = &g[(bi * cout + o) * lout..(bi * cout + o + 1) * lout];
                            for c in 0..cin {
                                let base = (bi * cin + c) * len;
                                for k in 0..kernel {
                                    let wk = w[(o * cin + c) * kernel + k];
                                    for (l, gy) in row.iter().enumerate() {
                                        if let Some(src) = conv_src(l, k, *spec, len) {
                                            gx[base + src] += wk * gy;
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::OuterSum { a, b, batch, n } => {
                let n = *n;
                self.acc(grads, *a, |ga| {
                    for bi in 0..*batch {
                        for i in 0..n {
                            let row = &g[(bi * n + i) * n..(bi * n + i + 1) * n];
                            ga[bi * n + i] += row.iter().sum::<f64>();
                        }
                    }
                });
                self.acc(grads, *b, |gb| {
                    for bi in 0..*batch {
                        for i in 0..n {
                            for j in 0..n {
                                gb[bi * n + j] += g[(bi * n + i) * n + j];
                            }
                        }
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }
}

fn reduced(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(d, _)| d != axis)
        .map(|(_, &s)| s)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

#[inline]
fn conv_src(l: usize, k: usize, spec: ConvSpec, len: usize) -> Option<usize> {
    let pos = (l + k * spec.dilation).checked_sub(spec.pad_left)?;
    (pos < len).then_some(pos)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn axpy(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            axpy(row, &b[p * n..(p + 1) * n], aip);
        }
    }
    out
}

/// `ga += g · bᵀ` for `g: [m, n]`, `b: [k, n]`.
fn matmul_bt_acc(ga: &mut [f64], g: &[f64], b: &[f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let bp = &b[p * n..(p + 1) * n];
            ga[i * k + p] += gi.iter().zip(bp).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `gb += aᵀ · g` for `a: [m, k]`, `g: [m, n]`.
fn matmul_at_acc(gb: &mut [f64], a: &[f64], g: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                axpy(&mut gb[p * n..(p + 1) * n], gi, aip);
            }
        }
    }
}

fn permute_raw(src: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0; rank];
    for _ in 0..src.len() {
        let offset: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(src[offset]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}
