// Forward and backward kernels for every primitive.
//
// Signals are laid out channel-major: a rank-2 tensor is [channels, frames].
// Backward functions return one optional gradient buffer per input; `None`
// means the caller did not ask for it.

use crate::error::{shape_err, AutodiffError, Result};
use crate::real::{gemm, MatMut, MatRef, Real};
use crate::tensor::Tensor;

/// Floor used for vector norms and normalisation denominators.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn new(stride: usize, pad: usize, dilation: usize) -> Self {
        ConvSpec { stride, pad, dilation }
    }

    /// `floor((len + 2 pad - dilation (k - 1) - 1) / stride) + 1`, or `None`
    /// when the kernel does not fit.
    pub fn output_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel.max(1) - 1) + 1;
        let padded = len + 2 * self.pad;
        if padded < span || self.stride == 0 {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// One mean/variance over channels and time.
    Global,
    /// Mean/variance over channels, separately for every frame.
    PerFrame,
}

/// Differentiable operation kinds with their static parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// inputs: x [Cin, T], w [Cout, Cin, K], optional bias [Cout]
    Conv1d(ConvSpec),
    /// inputs: x [C, T], w [C, K], optional bias [C]
    DepthwiseConv1d(ConvSpec),
    /// inputs: x [Cin, T], w [Cin, Cout, K], optional bias [Cout]; output length (T-1)*stride + K
    TransposedConv1d { stride: usize },
    /// inputs: x [In, T], w [Out, In], optional bias [Out]
    Linear,
    /// inputs: x [C, T], gamma [C], beta [C]
    LayerNorm(NormMode),
    /// inputs: x, alpha [1] or [C] for x [C, T]
    Prelu,
    Relu,
    Sigmoid,
    Tanh,
    Softmax { axis: usize },
    Add,
    Sub,
    Mul,
    Div,
    Mean { axis: Option<usize> },
    Sum { axis: Option<usize> },
    L2Norm { axis: usize },
    Scale(f64),
    Offset(f64),
    Log,
    Concat { axis: usize },
    /// Repeat every frame of the last axis `factor` times, then trim or
    /// edge-pad to exactly `len` frames.
    UpsampleRepeat { factor: usize, len: usize },
    Slice { axis: usize, start: usize, len: usize },
    Reshape(Vec<usize>),
    /// Zero-pad or trim the last axis to `len`.
    PadTrim { len: usize },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Conv1d(_) => "conv1d",
            Primitive::DepthwiseConv1d(_) => "depthwise_conv1d",
            Primitive::TransposedConv1d { .. } => "transposed_conv1d",
            Primitive::Linear => "linear",
            Primitive::LayerNorm(NormMode::Global) => "global_layer_norm",
            Primitive::LayerNorm(NormMode::PerFrame) => "frame_layer_norm",
            Primitive::Prelu => "prelu",
            Primitive::Relu => "relu",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Tanh => "tanh",
            Primitive::Softmax { .. } => "softmax_over_axis",
            Primitive::Add => "elem_add",
            Primitive::Sub => "elem_sub",
            Primitive::Mul => "elem_mul",
            Primitive::Div => "elem_div",
            Primitive::Mean { .. } => "mean_over_axis",
            Primitive::Sum { .. } => "sum_over_axis",
            Primitive::L2Norm { .. } => "l2_norm_over_axis",
            Primitive::Scale(_) => "scale",
            Primitive::Offset(_) => "offset",
            Primitive::Log => "log",
            Primitive::Concat { .. } => "concat",
            Primitive::UpsampleRepeat { .. } => "upsample_repeat",
            Primitive::Slice { .. } => "slice",
            Primitive::Reshape(_) => "reshape",
            Primitive::PadTrim { .. } => "pad_trim",
        }
    }
}

/// Result of a forward kernel: the output and any context saved for backward.
#[derive(Debug)]
pub struct Forward<F> {
    pub out: Tensor<F>,
    pub saved: Vec<F>,
}

fn done<F>(out: Tensor<F>) -> Result<Forward<F>> {
    Ok(Forward { out, saved: Vec::new() })
}

fn arity(op: &'static str, inputs: usize, lo: usize, hi: usize) -> Result<()> {
    if inputs < lo || inputs > hi {
        let expected = match (lo, hi) {
            (1, 1) => "1",
            (2, 2) => "2",
            (2, 3) => "2 or 3",
            (3, 3) => "3",
            _ => "at least 1",
        };
        return Err(AutodiffError::Arity { op, expected, got: inputs });
    }
    Ok(())
}

fn rank2<F: Real>(op: &'static str, t: &Tensor<F>, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        s => shape_err(op, format!("{what} must be rank 2, got {s:?}")),
    }
}

/// (outer, dim, inner) sizes around `axis`.
fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return shape_err(op, format!("axis {axis} out of range for shape {shape:?}"));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn pad_cols<F: Real>(x: &[F], rows: usize, cols: usize, pad: usize) -> Vec<F> {
    let pc = cols + 2 * pad;
    let mut out = vec![F::zero(); rows * pc];
    for r in 0..rows {
        out[r * pc + pad..r * pc + pad + cols].copy_from_slice(&x[r * cols..(r + 1) * cols]);
    }
    out
}

fn row_sums<F: Real>(g: &[F], rows: usize, cols: usize) -> Vec<F> {
    (0..rows).map(|r| g[r * cols..(r + 1) * cols].iter().copied().sum()).collect()
}

fn check_bias<F: Real>(op: &'static str, bias: Option<&Tensor<F>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            return shape_err(op, format!("bias shape {:?} does not match {channels} output channels", b.shape()));
        }
    }
    Ok(())
}

fn init_with_bias<F: Real>(bias: Option<&Tensor<F>>, rows: usize, cols: usize) -> Vec<F> {
    match bias {
        Some(b) => b.data().iter().flat_map(|&v| std::iter::repeat(v).take(cols)).collect(),
        None => vec![F::zero(); rows * cols],
    }
}

// ── broadcasting ─────────────────────────────────────────────────────

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return shape_err(op, format!("rank mismatch {a:?} vs {b:?}"));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => shape_err(op, format!("cannot broadcast {a:?} with {b:?}")),
        })
        .collect()
}

fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i] = if shape[i] == 1 && out[i] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

fn for_each_broadcast(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        let mut d = rank - 1;
        loop {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
            if d == 0 {
                break;
            }
            d -= 1;
        }
    }
}

// ── forward ──────────────────────────────────────────────────────────

pub fn forward<F: Real>(prim: &Primitive, inputs: &[&Tensor<F>]) -> Result<Forward<F>> {
    let op = prim.name();
    match prim {
        Primitive::Conv1d(spec) => {
            arity(op, inputs.len(), 2, 3)?;
            let (x, w, bias) = (inputs[0], inputs[1], inputs.get(2).copied());
            let (cin, t) = rank2(op, x, "input")?;
            let [cout, wcin, k] = *w.shape() else {
                return shape_err(op, format!("weight must be rank 3, got {:?}", w.shape()));
            };
            if wcin != cin {
                return shape_err(op, format!("input has {cin} channels, weight expects {wcin}"));
            }
            check_bias(op, bias, cout)?;
            let Some(tout) = spec.output_len(t, k) else {
                return shape_err(op, format!("kernel {k} (dilation {}) longer than padded input {t}", spec.dilation));
            };
            let tp = t + 2 * spec.pad;
            let padded;
            let xp: &[F] = if spec.pad == 0 {
                x.data()
            } else {
                padded = pad_cols(x.data(), cin, t, spec.pad);
                &padded
            };
            let mut out = init_with_bias(bias, cout, tout);
            for kk in 0..k {
                let wk = MatRef { data: w.data(), offset: kk, rows: cout, cols: cin, rs: cin * k, cs: k };
                let xk = MatRef { data: xp, offset: kk * spec.dilation, rows: cin, cols: tout, rs: tp, cs: spec.stride };
                gemm(F::one(), wk, xk, F::one(), MatMut::dense(&mut out, 0, cout, tout));
            }
            done(Tensor::new(vec![cout, tout], out)?)
        }
        Primitive::DepthwiseConv1d(spec) => {
            arity(op, inputs.len(), 2, 3)?;
            let (x, w, bias) = (inputs[0], inputs[1], inputs.get(2).copied());
            let (c, t) = rank2(op, x, "input")?;
            let (wc, k) = rank2(op, w, "weight")?;
            if wc != c {
                return shape_err(op, format!("input has {c} channels, weight has {wc}"));
            }
            check_bias(op, bias, c)?;
            let Some(tout) = spec.output_len(t, k) else {
                return shape_err(op, format!("kernel {k} (dilation {}) longer than padded input {t}", spec.dilation));
            };
            let tp = t + 2 * spec.pad;
            let xp = pad_cols(x.data(), c, t, spec.pad);
            let mut out = init_with_bias(bias, c, tout);
            let wd = w.data();
            for ch in 0..c {
                let row = &xp[ch * tp..(ch + 1) * tp];
                let orow = &mut out[ch * tout..(ch + 1) * tout];
                for kk in 0..k {
                    let wv = wd[ch * k + kk];
                    let off = kk * spec.dilation;
                    for (to, o) in orow.iter_mut().enumerate() {
                        *o += wv * row[to * spec.stride + off];
                    }
                }
            }
            done(Tensor::new(vec![c, tout], out)?)
        }
        Primitive::TransposedConv1d { stride } => {
            arity(op, inputs.len(), 2, 3)?;
            let (x, w, bias) = (inputs[0], inputs[1], inputs.get(2).copied());
            let (cin, t) = rank2(op, x, "input")?;
            let [wcin, cout, k] = *w.shape() else {
                return shape_err(op, format!("weight must be rank 3, got {:?}", w.shape()));
            };
            if wcin != cin {
                return shape_err(op, format!("input has {cin} channels, weight expects {wcin}"));
            }
            if *stride == 0 || t == 0 {
                return shape_err(op, "stride and input length must be positive");
            }
            check_bias(op, bias, cout)?;
            let tout = (t - 1) * stride + k;
            let mut out = init_with_bias(bias, cout, tout);
            for kk in 0..k {
                let wkt = MatRef { data: w.data(), offset: kk, rows: cout, cols: cin, rs: k, cs: cout * k };
                let oview = MatMut { data: &mut out, offset: kk, rows: cout, cols: t, rs: tout, cs: *stride };
                gemm(F::one(), wkt, MatRef::dense(x.data(), 0, cin, t), F::one(), oview);
            }
            done(Tensor::new(vec![cout, tout], out)?)
        }
        Primitive::Linear => {
            arity(op, inputs.len(), 2, 3)?;
            let (x, w, bias) = (inputs[0], inputs[1], inputs.get(2).copied());
            let (cin, t) = rank2(op, x, "input")?;
            let (cout, wcin) = rank2(op, w, "weight")?;
            if wcin != cin {
                return shape_err(op, format!("input has {cin} features, weight expects {wcin}"));
            }
            check_bias(op, bias, cout)?;
            let mut out = init_with_bias(bias, cout, t);
            gemm(
                F::one(),
                MatRef::dense(w.data(), 0, cout, cin),
                MatRef::dense(x.data(), 0, cin, t),
                F::one(),
                MatMut::dense(&mut out, 0, cout, t),
            );
            done(Tensor::new(vec![cout, t], out)?)
        }
        Primitive::LayerNorm(mode) => {
            arity(op, inputs.len(), 3, 3)?;
            let (x, gamma, beta) = (inputs[0], inputs[1], inputs[2]);
            let (c, t) = rank2(op, x, "input")?;
            if gamma.shape() != [c] || beta.shape() != [c] {
                return shape_err(op, format!("affine parameters must be [{c}], got {:?} / {:?}", gamma.shape(), beta.shape()));
            }
            let eps = F::c(NORM_EPS);
            let xd = x.data();
            let (g, b) = (gamma.data(), beta.data());
            let mut out = vec![F::zero(); c * t];
            let mut saved = Vec::new();
            match mode {
                NormMode::Global => {
                    let n = F::c((c * t) as f64);
                    let mean = xd.iter().copied().sum::<F>() / n;
                    let var = xd.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
                    let rstd = F::one() / (var + eps).sqrt();
                    for ch in 0..c {
                        for i in ch * t..(ch + 1) * t {
                            out[i] = g[ch] * (xd[i] - mean) * rstd + b[ch];
                        }
                    }
                    saved.extend([mean, rstd]);
                }
                NormMode::PerFrame => {
                    let n = F::c(c as f64);
                    let mut means = vec![F::zero(); t];
                    for ch in 0..c {
                        for (m, &v) in means.iter_mut().zip(&xd[ch * t..(ch + 1) * t]) {
                            *m += v;
                        }
                    }
                    means.iter_mut().for_each(|m| *m = *m / n);
                    let mut vars = vec![F::zero(); t];
                    for ch in 0..c {
                        for ((s, &v), &m) in vars.iter_mut().zip(&xd[ch * t..(ch + 1) * t]).zip(&means) {
                            *s += (v - m) * (v - m);
                        }
                    }
                    let rstds: Vec<F> = vars.iter().map(|&s| F::one() / (s / n + eps).sqrt()).collect();
                    for ch in 0..c {
                        for ti in 0..t {
                            let i = ch * t + ti;
                            out[i] = g[ch] * (xd[i] - means[ti]) * rstds[ti] + b[ch];
                        }
                    }
                    saved.extend(means);
                    saved.extend(rstds);
                }
            }
            Ok(Forward { out: Tensor::new(vec![c, t], out)?, saved })
        }
        Primitive::Prelu => {
            arity(op, inputs.len(), 2, 2)?;
            let (x, alpha) = (inputs[0], inputs[1]);
            let per = prelu_layout(op, x, alpha)?;
            let a = alpha.data();
            let out = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| if v > F::zero() { v } else { a[if a.len() == 1 { 0 } else { i / per }] * v })
                .collect();
            done(Tensor::new(x.shape().to_vec(), out)?)
        }
        Primitive::Relu => unary(op, inputs, |v| if v > F::zero() { v } else { F::zero() }),
        Primitive::Sigmoid => unary(op, inputs, sigmoid),
        Primitive::Tanh => unary(op, inputs, |v| v.tanh()),
        Primitive::Log => unary(op, inputs, |v| v.ln()),
        Primitive::Scale(s) => {
            let s = F::c(*s);
            unary(op, inputs, |v| v * s)
        }
        Primitive::Offset(s) => {
            let s = F::c(*s);
            unary(op, inputs, |v| v + s)
        }
        Primitive::Softmax { axis } => {
            arity(op, inputs.len(), 1, 1)?;
            let x = inputs[0];
            let (outer, d, inner) = split_axis(op, x.shape(), *axis)?;
            let xd = x.data();
            let mut out = vec![F::zero(); xd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| o * d * inner + j * inner + i;
                    let m = (0..d).map(|j| xd[at(j)]).fold(F::neg_infinity(), F::max);
                    let mut s = F::zero();
                    for j in 0..d {
                        let e = (xd[at(j)] - m).exp();
                        out[at(j)] = e;
                        s += e;
                    }
                    for j in 0..d {
                        out[at(j)] = out[at(j)] / s;
                    }
                }
            }
            done(Tensor::new(x.shape().to_vec(), out)?)
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div => {
            arity(op, inputs.len(), 2, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            let f: fn(F, F) -> F = match prim {
                Primitive::Add => |x, y| x + y,
                Primitive::Sub => |x, y| x - y,
                Primitive::Mul => |x, y| x * y,
                _ => |x, y| x / y,
            };
            if a.shape() == b.shape() {
                let out = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                return done(Tensor::new(a.shape().to_vec(), out)?);
            }
            let shape = broadcast_shape(op, a.shape(), b.shape())?;
            let (sa, sb) = (broadcast_strides(a.shape(), &shape), broadcast_strides(b.shape(), &shape));
            let mut out = vec![F::zero(); shape.iter().product()];
            let (ad, bd) = (a.data(), b.data());
            for_each_broadcast(&shape, &sa, &sb, |o, ia, ib| out[o] = f(ad[ia], bd[ib]));
            done(Tensor::new(shape, out)?)
        }
        Primitive::Sum { axis } | Primitive::Mean { axis } => {
            arity(op, inputs.len(), 1, 1)?;
            let x = inputs[0];
            let mean = matches!(prim, Primitive::Mean { .. });
            match axis {
                None => {
                    let s: F = x.data().iter().copied().sum();
                    let v = if mean { s / F::c(x.numel().max(1) as f64) } else { s };
                    done(Tensor::scalar(v))
                }
                Some(axis) => {
                    let (outer, d, inner) = split_axis(op, x.shape(), *axis)?;
                    let mut out = vec![F::zero(); outer * inner];
                    let xd = x.data();
                    for o in 0..outer {
                        for j in 0..d {
                            let row = &xd[(o * d + j) * inner..(o * d + j + 1) * inner];
                            for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                    }
                    if mean {
                        let n = F::c(d.max(1) as f64);
                        out.iter_mut().for_each(|v| *v = *v / n);
                    }
                    let mut shape = x.shape().to_vec();
                    shape[*axis] = 1;
                    done(Tensor::new(shape, out)?)
                }
            }
        }
        Primitive::L2Norm { axis } => {
            arity(op, inputs.len(), 1, 1)?;
            let x = inputs[0];
            let (outer, d, inner) = split_axis(op, x.shape(), *axis)?;
            let xd = x.data();
            let eps = F::c(NORM_EPS);
            let mut out = vec![F::zero(); outer * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let s: F = (0..d).map(|j| xd[o * d * inner + j * inner + i].powi(2)).sum();
                    out[o * inner + i] = s.sqrt().max(eps);
                }
            }
            let mut shape = x.shape().to_vec();
            shape[*axis] = 1;
            done(Tensor::new(shape, out)?)
        }
        Primitive::Concat { axis } => {
            if inputs.is_empty() {
                return Err(AutodiffError::Arity { op, expected: "at least 1", got: 0 });
            }
            let first = inputs[0].shape();
            let mut total = 0;
            for t in inputs {
                let s = t.shape();
                if s.len() != first.len() || *axis >= s.len() {
                    return shape_err(op, format!("rank/axis mismatch: {first:?} vs {s:?} on axis {axis}"));
                }
                if s.iter().zip(first).enumerate().any(|(i, (a, b))| i != *axis && a != b) {
                    return shape_err(op, format!("non-concat dims differ: {first:?} vs {s:?}"));
                }
                total += s[*axis];
            }
            let outer: usize = first[..*axis].iter().product();
            let inner: usize = first[axis + 1..].iter().product();
            let mut out = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for t in inputs {
                    let d = t.shape()[*axis];
                    out.extend_from_slice(&t.data()[o * d * inner..(o + 1) * d * inner]);
                }
            }
            let mut shape = first.to_vec();
            shape[*axis] = total;
            done(Tensor::new(shape, out)?)
        }
        Primitive::UpsampleRepeat { factor, len } => {
            arity(op, inputs.len(), 1, 1)?;
            let x = inputs[0];
            let Some(&t) = x.shape().last() else {
                return shape_err(op, "input must have at least one axis");
            };
            if t == 0 || *factor == 0 {
                return shape_err(op, "need at least one input frame and a positive factor");
            }
            let rows = x.numel() / t;
            let mut out = Vec::with_capacity(rows * len);
            for r in 0..rows {
                let row = &x.data()[r * t..(r + 1) * t];
                out.extend((0..*len).map(|j| row[(j / factor).min(t - 1)]));
            }
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = *len;
            done(Tensor::new(shape, out)?)
        }
        Primitive::Slice { axis, start, len } => {
            arity(op, inputs.len(), 1, 1)?;
            let x = inputs[0];
            let (outer, d, inner) = split_axis(op, x.shape(), *axis)?;
            if start + len > d {
                return shape_err(op, format!("slice {start}..{} exceeds axis length {d}", start + len));
            }
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                out.extend_from_slice(&x.data()[(o * d + start) * inner..(o * d + start + len) * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[*axis] = *len;
            done(Tensor::new(shape, out)?)
        }
        Primitive::Reshape(shape) => {
            arity(op, inputs.len(), 1, 1)?;
            done(inputs[0].clone().reshape(shape)?)
        }
        Primitive::PadTrim { len } => {
            arity(op, inputs.len(), 1, 1)?;
            let x = inputs[0];
            let Some(&t) = x.shape().last() else {
                return shape_err(op, "input must have at least one axis");
            };
            let rows = if t == 0 { 0 } else { x.numel() / t };
            let mut out = vec![F::zero(); rows * len];
            let keep = t.min(*len);
            for r in 0..rows {
                out[r * len..r * len + keep].copy_from_slice(&x.data()[r * t..r * t + keep]);
            }
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = *len;
            done(Tensor::new(shape, out)?)
        }
    }
}

pub(crate) fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

fn unary<F: Real>(op: &'static str, inputs: &[&Tensor<F>], f: impl Fn(F) -> F) -> Result<Forward<F>> {
    arity(op, inputs.len(), 1, 1)?;
    done(inputs[0].map(f))
}

/// Elements per alpha entry (x.numel() when alpha is shared).
fn prelu_layout<F: Real>(op: &'static str, x: &Tensor<F>, alpha: &Tensor<F>) -> Result<usize> {
    match alpha.numel() {
        1 => Ok(x.numel().max(1)),
        n => {
            let (c, t) = rank2(op, x, "input with per-channel alpha")?;
            if n != c {
                return shape_err(op, format!("alpha has {n} entries for {c} channels"));
            }
            Ok(t.max(1))
        }
    }
}

// ── backward ─────────────────────────────────────────────────────────

/// Gradients with respect to each input, given the upstream gradient `g` of
/// the output. Only inputs with `needs[i]` set receive a buffer.
pub fn backward<F: Real>(
    prim: &Primitive,
    inputs: &[&Tensor<F>],
    out: &Tensor<F>,
    saved: &[F],
    g: &[F],
    needs: &[bool],
) -> Vec<Option<Vec<F>>> {
    let zeros = |i: usize| -> Option<Vec<F>> { needs[i].then(|| vec![F::zero(); inputs[i].numel()]) };
    let mut grads: Vec<Option<Vec<F>>> = (0..inputs.len()).map(zeros).collect();
    match prim {
        Primitive::Conv1d(spec) => {
            let (x, w) = (inputs[0], inputs[1]);
            let (cin, t) = (x.shape()[0], x.shape()[1]);
            let (cout, k) = (w.shape()[0], w.shape()[2]);
            let tout = out.shape()[1];
            let tp = t + 2 * spec.pad;
            if let Some(gx) = grads[0].as_mut() {
                let mut gxp = vec![F::zero(); cin * tp];
                for kk in 0..k {
                    let wkt = MatRef { data: w.data(), offset: kk, rows: cin, cols: cout, rs: k, cs: cin * k };
                    let view = MatMut { data: &mut gxp, offset: kk * spec.dilation, rows: cin, cols: tout, rs: tp, cs: spec.stride };
                    gemm(F::one(), wkt, MatRef::dense(g, 0, cout, tout), F::one(), view);
                }
                for r in 0..cin {
                    gx[r * t..(r + 1) * t].copy_from_slice(&gxp[r * tp + spec.pad..r * tp + spec.pad + t]);
                }
            }
            if let Some(gw) = grads[1].as_mut() {
                let padded;
                let xp: &[F] = if spec.pad == 0 {
                    x.data()
                } else {
                    padded = pad_cols(x.data(), cin, t, spec.pad);
                    &padded
                };
                for kk in 0..k {
                    let xkt = MatRef { data: xp, offset: kk * spec.dilation, rows: tout, cols: cin, rs: spec.stride, cs: tp };
                    let view = MatMut { data: gw, offset: kk, rows: cout, cols: cin, rs: cin * k, cs: k };
                    gemm(F::one(), MatRef::dense(g, 0, cout, tout), xkt, F::one(), view);
                }
            }
            if let Some(Some(gb)) = grads.get_mut(2) {
                *gb = row_sums(g, cout, tout);
            }
        }
        Primitive::DepthwiseConv1d(spec) => {
            let (x, w) = (inputs[0], inputs[1]);
            let (c, t) = (x.shape()[0], x.shape()[1]);
            let k = w.shape()[1];
            let tout = out.shape()[1];
            let tp = t + 2 * spec.pad;
            let xp = pad_cols(x.data(), c, t, spec.pad);
            let wd = w.data();
            if let Some(gx) = grads[0].as_mut() {
                let mut gxp = vec![F::zero(); c * tp];
                for ch in 0..c {
                    for kk in 0..k {
                        let wv = wd[ch * k + kk];
                        let off = kk * spec.dilation;
                        for to in 0..tout {
                            gxp[ch * tp + to * spec.stride + off] += wv * g[ch * tout + to];
                        }
                    }
                    gx[ch * t..(ch + 1) * t].copy_from_slice(&gxp[ch * tp + spec.pad..ch * tp + spec.pad + t]);
                }
            }
            if let Some(gw) = grads[1].as_mut() {
                for ch in 0..c {
                    for kk in 0..k {
                        let off = kk * spec.dilation;
                        gw[ch * k + kk] =
                            (0..tout).map(|to| g[ch * tout + to] * xp[ch * tp + to * spec.stride + off]).sum();
                    }
                }
            }
            if let Some(Some(gb)) = grads.get_mut(2) {
                *gb = row_sums(g, c, tout);
            }
        }
        Primitive::TransposedConv1d { stride } => {
            let (x, w) = (inputs[0], inputs[1]);
            let (cin, t) = (x.shape()[0], x.shape()[1]);
            let (cout, k) = (w.shape()[1], w.shape()[2]);
            let tout = out.shape()[1];
            if let Some(gx) = grads[0].as_mut() {
                for kk in 0..k {
                    let wk = MatRef { data: w.data(), offset: kk, rows: cin, cols: cout, rs: cout * k, cs: k };
                    let gk = MatRef { data: g, offset: kk, rows: cout, cols: t, rs: tout, cs: *stride };
                    gemm(F::one(), wk, gk, F::one(), MatMut::dense(gx, 0, cin, t));
                }
            }
            if let Some(gw) = grads[1].as_mut() {
                for kk in 0..k {
                    let gkt = MatRef { data: g, offset: kk, rows: t, cols: cout, rs: *stride, cs: tout };
                    let view = MatMut { data: gw, offset: kk, rows: cin, cols: cout, rs: cout * k, cs: k };
                    gemm(F::one(), MatRef::dense(x.data(), 0, cin, t), gkt, F::one(), view);
                }
            }
            if let Some(Some(gb)) = grads.get_mut(2) {
                *gb = row_sums(g, cout, tout);
            }
        }
        Primitive::Linear => {
            let (x, w) = (inputs[0], inputs[1]);
            let (cin, t) = (x.shape()[0], x.shape()[1]);
            let cout = w.shape()[0];
            if let Some(gx) = grads[0].as_mut() {
                let wt = MatRef::dense(w.data(), 0, cout, cin).t();
                gemm(F::one(), wt, MatRef::dense(g, 0, cout, t), F::zero(), MatMut::dense(gx, 0, cin, t));
            }
            if let Some(gw) = grads[1].as_mut() {
                let xt = MatRef::dense(x.data(), 0, cin, t).t();
                gemm(F::one(), MatRef::dense(g, 0, cout, t), xt, F::zero(), MatMut::dense(gw, 0, cout, cin));
            }
            if let Some(Some(gb)) = grads.get_mut(2) {
                *gb = row_sums(g, cout, t);
            }
        }
        Primitive::LayerNorm(mode) => {
            let (x, gamma) = (inputs[0], inputs[1]);
            let (c, t) = (x.shape()[0], x.shape()[1]);
            let xd = x.data();
            let gm = gamma.data();
            let (mean_of, rstd_of): (Box<dyn Fn(usize) -> F>, Box<dyn Fn(usize) -> F>) = match mode {
                NormMode::Global => (Box::new(|_| saved[0]), Box::new(|_| saved[1])),
                NormMode::PerFrame => (Box::new(|ti| saved[ti]), Box::new(|ti| saved[t + ti])),
            };
            let xhat = |ch: usize, ti: usize| (xd[ch * t + ti] - mean_of(ti)) * rstd_of(ti);
            if let Some(gg) = grads[1].as_mut() {
                for ch in 0..c {
                    gg[ch] = (0..t).map(|ti| g[ch * t + ti] * xhat(ch, ti)).sum();
                }
            }
            if let Some(gb) = grads[2].as_mut() {
                *gb = row_sums(g, c, t);
            }
            if let Some(gx) = grads[0].as_mut() {
                match mode {
                    NormMode::Global => {
                        let n = F::c((c * t) as f64);
                        let (mut m1, mut m2) = (F::zero(), F::zero());
                        for ch in 0..c {
                            for ti in 0..t {
                                let gh = g[ch * t + ti] * gm[ch];
                                m1 += gh;
                                m2 += gh * xhat(ch, ti);
                            }
                        }
                        let (m1, m2) = (m1 / n, m2 / n);
                        let rstd = saved[1];
                        for ch in 0..c {
                            for ti in 0..t {
                                let gh = g[ch * t + ti] * gm[ch];
                                gx[ch * t + ti] = rstd * (gh - m1 - xhat(ch, ti) * m2);
                            }
                        }
                    }
                    NormMode::PerFrame => {
                        let n = F::c(c as f64);
                        for ti in 0..t {
                            let (mut m1, mut m2) = (F::zero(), F::zero());
                            for ch in 0..c {
                                let gh = g[ch * t + ti] * gm[ch];
                                m1 += gh;
                                m2 += gh * xhat(ch, ti);
                            }
                            let (m1, m2) = (m1 / n, m2 / n);
                            let rstd = rstd_of(ti);
                            for ch in 0..c {
                                let gh = g[ch * t + ti] * gm[ch];
                                gx[ch * t + ti] = rstd * (gh - m1 - xhat(ch, ti) * m2);
                            }
                        }
                    }
                }
            }
        }
        Primitive::Prelu => {
            let (x, alpha) = (inputs[0], inputs[1]);
            let a = alpha.data();
            let per = prelu_layout("prelu", x, alpha).unwrap_or(1);
            let ai = |i: usize| if a.len() == 1 { 0 } else { i / per };
            let xd = x.data();
            if let Some(gx) = grads[0].as_mut() {
                for i in 0..xd.len() {
                    gx[i] = if xd[i] > F::zero() { g[i] } else { a[ai(i)] * g[i] };
                }
            }
            if let Some(ga) = grads[1].as_mut() {
                for i in 0..xd.len() {
                    if xd[i] <= F::zero() {
                        ga[ai(i)] += g[i] * xd[i];
                    }
                }
            }
        }
        Primitive::Relu => map_grad(&mut grads, |i| if inputs[0].data()[i] > F::zero() { g[i] } else { F::zero() }),
        Primitive::Sigmoid => map_grad(&mut grads, |i| {
            let y = out.data()[i];
            g[i] * y * (F::one() - y)
        }),
        Primitive::Tanh => map_grad(&mut grads, |i| {
            let y = out.data()[i];
            g[i] * (F::one() - y * y)
        }),
        Primitive::Log => map_grad(&mut grads, |i| g[i] / inputs[0].data()[i]),
        Primitive::Scale(s) => {
            let s = F::c(*s);
            map_grad(&mut grads, |i| g[i] * s)
        }
        Primitive::Offset(_) | Primitive::Reshape(_) => map_grad(&mut grads, |i| g[i]),
        Primitive::Softmax { axis } => {
            let (outer, d, inner) = split_axis("softmax", out.shape(), *axis).expect("validated in forward");
            let y = out.data();
            if let Some(gx) = grads[0].as_mut() {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * d * inner + j * inner + i;
                        let dot: F = (0..d).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..d {
                            gx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            }
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div => {
            let (a, b) = (inputs[0], inputs[1]);
            let (ad, bd) = (a.data(), b.data());
            let shape = out.shape();
            let (sa, sb) = (broadcast_strides(a.shape(), shape), broadcast_strides(b.shape(), shape));
            let (need_a, need_b) = (needs[0], needs[1]);
            let mut ga = grads[0].take();
            let mut gb = grads[1].take();
            for_each_broadcast(shape, &sa, &sb, |o, ia, ib| {
                let (da, db) = match prim {
                    Primitive::Add => (g[o], g[o]),
                    Primitive::Sub => (g[o], -g[o]),
                    Primitive::Mul => (g[o] * bd[ib], g[o] * ad[ia]),
                    _ => (g[o] / bd[ib], -g[o] * ad[ia] / (bd[ib] * bd[ib])),
                };
                if need_a {
                    ga.as_mut().unwrap()[ia] += da;
                }
                if need_b {
                    gb.as_mut().unwrap()[ib] += db;
                }
            });
            grads[0] = ga;
            grads[1] = gb;
        }
        Primitive::Sum { axis } | Primitive::Mean { axis } => {
            let x = inputs[0];
            let mean = matches!(prim, Primitive::Mean { .. });
            if let Some(gx) = grads[0].as_mut() {
                match axis {
                    None => {
                        let v = if mean { g[0] / F::c(x.numel().max(1) as f64) } else { g[0] };
                        gx.iter_mut().for_each(|e| *e = v);
                    }
                    Some(axis) => {
                        let (outer, d, inner) = split_axis("reduce", x.shape(), *axis).expect("validated");
                        let scale = if mean { F::one() / F::c(d.max(1) as f64) } else { F::one() };
                        for o in 0..outer {
                            for j in 0..d {
                                for i in 0..inner {
                                    gx[(o * d + j) * inner + i] = g[o * inner + i] * scale;
                                }
                            }
                        }
                    }
                }
            }
        }
        Primitive::L2Norm { axis } => {
            let x = inputs[0];
            let (outer, d, inner) = split_axis("l2_norm", x.shape(), *axis).expect("validated");
            let (xd, n) = (x.data(), out.data());
            let eps = F::c(NORM_EPS);
            if let Some(gx) = grads[0].as_mut() {
                for o in 0..outer {
                    for i in 0..inner {
                        let norm = n[o * inner + i];
                        let raw: F = (0..d).map(|j| xd[o * d * inner + j * inner + i].powi(2)).sum::<F>().sqrt();
                        if raw <= eps {
                            continue;
                        }
                        for j in 0..d {
                            let idx = o * d * inner + j * inner + i;
                            gx[idx] = g[o * inner + i] * xd[idx] / norm;
                        }
                    }
                }
            }
        }
        Primitive::Concat { axis } => {
            let first = inputs[0].shape();
            let outer: usize = first[..*axis].iter().product();
            let inner: usize = first[axis + 1..].iter().product();
            let total = out.shape()[*axis];
            let mut start = 0;
            for (n, t) in inputs.iter().enumerate() {
                let d = t.shape()[*axis];
                if let Some(gt) = grads[n].as_mut() {
                    for o in 0..outer {
                        let src = (o * total + start) * inner;
                        gt[o * d * inner..(o + 1) * d * inner].copy_from_slice(&g[src..src + d * inner]);
                    }
                }
                start += d;
            }
        }
        Primitive::UpsampleRepeat { factor, len } => {
            let x = inputs[0];
            let t = *x.shape().last().unwrap();
            let rows = x.numel() / t;
            if let Some(gx) = grads[0].as_mut() {
                for r in 0..rows {
                    for j in 0..*len {
                        gx[r * t + (j / factor).min(t - 1)] += g[r * len + j];
                    }
                }
            }
        }
        Primitive::Slice { axis, start, len } => {
            let x = inputs[0];
            let (outer, d, inner) = split_axis("slice", x.shape(), *axis).expect("validated");
            if let Some(gx) = grads[0].as_mut() {
                for o in 0..outer {
                    let dst = (o * d + start) * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
            }
        }
        Primitive::PadTrim { len } => {
            let x = inputs[0];
            let t = *x.shape().last().unwrap();
            let rows = if t == 0 { 0 } else { x.numel() / t };
            let keep = t.min(*len);
            if let Some(gx) = grads[0].as_mut() {
                for r in 0..rows {
                    gx[r * t..r * t + keep].copy_from_slice(&g[r * len..r * len + keep]);
                }
            }
        }
    }
    grads
}

fn map_grad<F: Real>(grads: &mut [Option<Vec<F>>], f: impl Fn(usize) -> F) {
    if let Some(gx) = grads[0].as_mut() {
        for (i, v) in gx.iter_mut().enumerate() {
            *v = f(i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn identity_kernel_conv_is_identity() {
        let x = t(&[1, 8], &[0., 1., 2., 3., 4., 5., 6., 7.]);
        let w = t(&[1, 1, 1], &[1.0]);
        let y = forward(&Primitive::Conv1d(ConvSpec::new(1, 0, 1)), &[&x, &w]).unwrap().out;
        assert_eq!(y, x);
    }

    #[test]
    fn softmax_of_equal_entries_is_uniform() {
        for c in [-3.0, 0.0, 7.5] {
            let x = t(&[2, 1], &[c, c]);
            let y = forward(&Primitive::Softmax { axis: 0 }, &[&x]).unwrap().out;
            assert_eq!(y.data(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn global_layer_norm_of_constant_is_zero() {
        let x = Tensor::<f64>::full(&[3, 5], 2.5);
        let gamma = Tensor::full(&[3], 1.0);
        let beta = Tensor::zeros(&[3]);
        let y = forward(&Primitive::LayerNorm(NormMode::Global), &[&x, &gamma, &beta]).unwrap().out;
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_length_formula() {
        let spec = ConvSpec::new(8, 0, 1);
        assert_eq!(spec.output_len(8000, 16), Some(999));
        assert_eq!(spec.output_len(16, 16), Some(1));
        assert_eq!(spec.output_len(15, 16), None);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let x = t(&[2, 4], &[0.0; 8]);
        let w = t(&[1, 3, 1], &[1.0; 3]);
        let err = forward(&Primitive::Conv1d(ConvSpec::new(1, 0, 1)), &[&x, &w]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv1d") && msg.contains('2') && msg.contains('3'), "{msg}");
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        assert!(forward(&Primitive::Add, &[&a, &b]).unwrap_err().to_string().contains("elem_add"));
    }

    #[test]
    fn l2_norm_of_zero_vector_uses_floor() {
        let x = Tensor::<f64>::zeros(&[4, 2]);
        let y = forward(&Primitive::L2Norm { axis: 0 }, &[&x]).unwrap().out;
        assert_eq!(y.data(), &[NORM_EPS, NORM_EPS]);
    }

    #[test]
    fn upsample_repeats_then_edge_pads() {
        let x = t(&[1, 3], &[1., 2., 3.]);
        let y = forward(&Primitive::UpsampleRepeat { factor: 2, len: 8 }, &[&x]).unwrap().out;
        assert_eq!(y.data(), &[1., 1., 2., 2., 3., 3., 3., 3.]);
        let y = forward(&Primitive::UpsampleRepeat { factor: 2, len: 5 }, &[&x]).unwrap().out;
        assert_eq!(y.data(), &[1., 1., 2., 2., 3.]);
    }

    #[test]
    fn broadcast_mul_over_rows_and_columns() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let col = t(&[2, 1], &[10., 100.]);
        let row = t(&[1, 3], &[1., 0., -1.]);
        let y = forward(&Primitive::Mul, &[&a, &col]).unwrap().out;
        assert_eq!(y.data(), &[10., 20., 30., 400., 500., 600.]);
        let y = forward(&Primitive::Mul, &[&a, &row]).unwrap().out;
        assert_eq!(y.data(), &[1., 0., -3., 4., 0., -6.]);
    }

    #[test]
    fn transposed_conv_overlap_adds() {
        // Two frames, stride 2, kernel [1, 1, 1]: overlap at sample 2.
        let x = t(&[1, 2], &[1., 10.]);
        let w = t(&[1, 1, 3], &[1., 1., 1.]);
        let y = forward(&Primitive::TransposedConv1d { stride: 2 }, &[&x, &w]).unwrap().out;
        assert_eq!(y.data(), &[1., 1., 11., 10., 10.]);
    }
}
