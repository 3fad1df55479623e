//! Reverse-mode autodiff over a Wengert tape.
//!
//! Every differentiable operation appends a record holding its inputs and a
//! backward rule. `backward` replays the records in exact reverse execution
//! order, accumulating gradients per tensor. Forward and backward of a single
//! tape are single-threaded, which keeps accumulation order fixed and runs
//! bit-reproducible.

use super::tensor::{bcast_strides, broadcast_shape, for_each_pair, lit, Real, Tensor, CLAMP_FLOOR};
use crate::error::{Error, Result};
use std::rc::Rc;

/// Handle to a tensor stored on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Backward context handed to an op's gradient rule.
pub struct Ctx<'a, T: Real> {
    tape: &'a Tape<T>,
    inputs: &'a [Var],
    output: Var,
    out_grad: &'a Tensor<T>,
}

impl<'a, T: Real> Ctx<'a, T> {
    /// Forward value of the k-th input.
    pub fn input(&self, k: usize) -> &Tensor<T> {
        self.tape.value(self.inputs[k])
    }

    /// Forward value of the output.
    pub fn output(&self) -> &Tensor<T> {
        self.tape.value(self.output)
    }

    /// Gradient flowing into the output.
    pub fn out_grad(&self) -> &Tensor<T> {
        self.out_grad
    }
}

type BackFn<T> = Box<dyn Fn(&Ctx<'_, T>) -> Vec<Option<Tensor<T>>>>;

struct Record<T: Real> {
    inputs: Vec<Var>,
    output: Var,
    backward: BackFn<T>,
}

/// Wengert tape: tensor arena plus the op records needed for backward.
pub struct Tape<T: Real> {
    values: Vec<Tensor<T>>,
    needs_grad: Vec<bool>,
    records: Vec<Record<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            needs_grad: Vec::new(),
            records: Vec::new(),
            grads: Vec::new(),
        }
    }

    // ── Buffer management ────────────────────────────────────────────────

    /// Registers a tensor whose gradient should be tracked.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push_value(value, true)
    }

    /// Registers a tensor treated as a constant (stop-gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_value(value, false)
    }

    pub fn scalar(&mut self, value: T) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push_value(&mut self, value: Tensor<T>, needs_grad: bool) -> Var {
        self.values.push(value);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    /// Gradient of `v` after a `backward` call, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Appends an op with an explicit backward rule. The rule returns one
    /// optional gradient per input, each matching that input's shape.
    pub fn push_op(
        &mut self,
        inputs: &[Var],
        value: Tensor<T>,
        backward: impl Fn(&Ctx<'_, T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var {
        let needs = inputs.iter().any(|v| self.needs_grad[v.0]);
        let out = self.push_value(value, needs);
        if needs {
            self.records.push(Record {
                inputs: inputs.to_vec(),
                output: out,
                backward: Box::new(backward),
            });
        }
        out
    }

    // ── Backward pass ────────────────────────────────────────────────────

    /// Backpropagates from a scalar output, filling per-tensor gradients.
    pub fn backward(&mut self, from: Var) -> Result<()> {
        let out = &self.values[from.0];
        if out.numel() != 1 {
            return Err(Error::BadShape {
                op: "backward",
                shape: out.shape().to_vec(),
                reason: "backward seeds a scalar output".into(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.values.len()).map(|_| None).collect();
        grads[from.0] = Some(Tensor::full(out.shape().to_vec(), T::one()));

        for rec in self.records.iter().rev() {
            let Some(og) = grads[rec.output.0].clone() else {
                continue;
            };
            let ctx = Ctx {
                tape: self,
                inputs: &rec.inputs,
                output: rec.output,
                out_grad: &og,
            };
            let input_grads = (rec.backward)(&ctx);
            debug_assert_eq!(input_grads.len(), rec.inputs.len());
            for (k, g) in input_grads.into_iter().enumerate() {
                let id = rec.inputs[k];
                if !self.needs_grad[id.0] {
                    continue;
                }
                let Some(g) = g else { continue };
                debug_assert_eq!(
                    g.shape(),
                    self.values[id.0].shape(),
                    "gradient shape mismatch on input {k}"
                );
                match &mut grads[id.0] {
                    Some(acc) => acc.add_in_place(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    // ── Elementwise ops ──────────────────────────────────────────────────

    /// Shared elementwise binary op with trailing-dimension broadcasting.
    /// `df(a, b)` returns the partials (∂out/∂a, ∂out/∂b) at one element.
    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: fn(T, T) -> T,
        df: fn(T, T) -> (T, T),
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(op, &sa, &sb)?;
        let stra = bcast_strides(&sa, &out_shape);
        let strb = bcast_strides(&sb, &out_shape);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); out_shape.iter().product()];
        for_each_pair(&out_shape, &stra, &strb, |o, ia, ib| {
            out[o] = f(da[ia], db[ib]);
        });
        let out = Tensor::new(out_shape.clone(), out).expect("sized above");
        Ok(self.push_op(&[a, b], out, move |ctx| {
            let (va, vb) = (ctx.input(0), ctx.input(1));
            let og = ctx.out_grad().data();
            let mut ga = Tensor::zeros(va.shape().to_vec());
            let mut gb = Tensor::zeros(vb.shape().to_vec());
            {
                let (gad, gbd) = (ga.data_mut(), gb.data_mut());
                let (vad, vbd) = (va.data(), vb.data());
                for_each_pair(&out_shape, &stra, &strb, |o, ia, ib| {
                    let (pa, pb) = df(vad[ia], vbd[ib]);
                    gad[ia] += og[o] * pa;
                    gbd[ib] += og[o] * pb;
                });
            }
            vec![Some(ga), Some(gb)]
        }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |_, _| (T::one(), T::one()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |_, _| (T::one(), -T::one()))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |x, y| (y, x))
    }

    /// Division with the denominator magnitude clamped away from zero; the
    /// denominator gradient is zero inside the clamped region.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(
            "div",
            a,
            b,
            |x, y| x / clamp_mag(y),
            |x, y| {
                let c = clamp_mag(y);
                let dy = if y.abs() < lit(CLAMP_FLOOR) { T::zero() } else { -x / (c * c) };
                (T::one() / c, dy)
            },
        )
    }

    /// Shared elementwise unary op. `df(x, y)` receives input and output.
    fn unary(&mut self, a: Var, f: fn(T) -> T, df: fn(T, T) -> T) -> Var {
        let out = self.value(a).map(f);
        self.push_op(&[a], out, move |ctx| {
            let x = ctx.input(0).data();
            let y = ctx.output().data();
            let og = ctx.out_grad().data();
            let data = og
                .iter()
                .zip(x.iter().zip(y.iter()))
                .map(|(&g, (&xi, &yi))| g * df(xi, yi))
                .collect();
            vec![Some(
                Tensor::new(ctx.input(0).shape().to_vec(), data).expect("same shape"),
            )]
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    /// Natural log with the argument clamped to at least `CLAMP_FLOOR`.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.max(lit(CLAMP_FLOOR)).ln(),
            |x, _| {
                if x > lit(CLAMP_FLOOR) {
                    T::one() / x
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), |_, y| y)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, |x, _| lit::<T>(2.0) * x)
    }

    /// Square root of `max(x, 0)`, with zero gradient at the clamp.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.max(T::zero()).sqrt(),
            |x, y| {
                if x > lit(CLAMP_FLOOR) {
                    lit::<T>(0.5) / y
                } else {
                    T::zero()
                }
            },
        )
    }

    /// `scale * x + offset`.
    pub fn affine(&mut self, a: Var, scale: T, offset: T) -> Var {
        let out = self.value(a).map(|x| scale * x + offset);
        self.push_op(&[a], out, move |ctx| {
            vec![Some(ctx.out_grad().map(|g| g * scale))]
        })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -T::one(), T::zero())
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.affine(a, s, T::zero())
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.affine(a, T::one(), c)
    }

    /// Clamps into `[lo, hi]`; the gradient passes only strictly inside.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let out = self.value(a).map(|x| x.max(lo).min(hi));
        self.push_op(&[a], out, move |ctx| {
            let x = ctx.input(0).data();
            let og = ctx.out_grad().data();
            let data = og
                .iter()
                .zip(x.iter())
                .map(|(&g, &xi)| if xi > lo && xi < hi { g } else { T::zero() })
                .collect();
            vec![Some(
                Tensor::new(ctx.input(0).shape().to_vec(), data).expect("same shape"),
            )]
        })
    }

    // ── Matrix ops ───────────────────────────────────────────────────────

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        mm_nn(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let out = Tensor::new(vec![m, n], out).expect("sized above");
        Ok(self.push_op(&[a, b], out, move |ctx| {
            let g = ctx.out_grad().data();
            let (va, vb) = (ctx.input(0).data(), ctx.input(1).data());
            // dA = G Bᵀ, dB = Aᵀ G
            let mut ga = vec![T::zero(); m * k];
            mm_nt(g, vb, m, n, k, &mut ga);
            let mut gb = vec![T::zero(); k * n];
            mm_tn(va, g, k, m, n, &mut gb);
            vec![
                Some(Tensor::new(vec![m, k], ga).expect("sized")),
                Some(Tensor::new(vec![k, n], gb).expect("sized")),
            ]
        }))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::BadShape {
                op: "transpose",
                shape: s,
                reason: "expects rank 2".into(),
            });
        }
        let (m, n) = (s[0], s[1]);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let out = Tensor::new(vec![n, m], out).expect("sized above");
        Ok(self.push_op(&[a], out, move |ctx| {
            let g = ctx.out_grad().data();
            let mut gt = vec![T::zero(); m * n];
            for j in 0..n {
                for i in 0..m {
                    gt[i * n + j] = g[j * m + i];
                }
            }
            vec![Some(Tensor::new(vec![m, n], gt).expect("sized"))]
        }))
    }

    // ── Shape ops ────────────────────────────────────────────────────────

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        let in_shape = self.shape(a).to_vec();
        Ok(self.push_op(&[a], out, move |ctx| {
            vec![Some(
                ctx.out_grad()
                    .reshape(in_shape.clone())
                    .expect("same numel"),
            )]
        }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::BadArgument {
                op: "concat",
                reason: "needs at least one input".into(),
            });
        }
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::BadShape {
                op: "concat",
                shape: first,
                reason: format!("axis {axis} out of range"),
            });
        }
        let mut axis_total = 0usize;
        let mut axis_sizes = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len()
                || s.iter()
                    .enumerate()
                    .any(|(d, &v)| d != axis && v != first[d])
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: first,
                    right: s.to_vec(),
                });
            }
            axis_sizes.push(s[axis]);
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = vec![T::zero(); outer * axis_total * inner];
        let mut offset = 0usize;
        for (xi, &x) in xs.iter().enumerate() {
            let src = self.value(x).data();
            let len = axis_sizes[xi];
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * len * inner;
                out[dst_base..dst_base + len * inner]
                    .copy_from_slice(&src[src_base..src_base + len * inner]);
            }
            offset += len;
        }
        let out = Tensor::new(out_shape, out).expect("sized above");
        let sizes = axis_sizes.clone();
        Ok(self.push_op(xs, out, move |ctx| {
            let g = ctx.out_grad().data();
            let mut grads = Vec::with_capacity(sizes.len());
            let mut offset = 0usize;
            for (k, &len) in sizes.iter().enumerate() {
                let mut gx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    let src_base = (o * axis_total + offset) * inner;
                    let dst_base = o * len * inner;
                    gx[dst_base..dst_base + len * inner]
                        .copy_from_slice(&g[src_base..src_base + len * inner]);
                }
                grads.push(Some(
                    Tensor::new(ctx.input(k).shape().to_vec(), gx).expect("sized"),
                ));
                offset += len;
            }
            grads
        }))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::BadShape {
                op: "slice",
                shape: s,
                reason: format!("axis {axis}, range {start}..{}", start + len),
            });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let full = s[axis];
        let mut out_shape = s.clone();
        out_shape[axis] = len;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            let src_base = (o * full + start) * inner;
            let dst_base = o * len * inner;
            out[dst_base..dst_base + len * inner]
                .copy_from_slice(&src[src_base..src_base + len * inner]);
        }
        let out = Tensor::new(out_shape, out).expect("sized above");
        Ok(self.push_op(&[a], out, move |ctx| {
            let g = ctx.out_grad().data();
            let mut gx = Tensor::zeros(ctx.input(0).shape().to_vec());
            {
                let gd = gx.data_mut();
                for o in 0..outer {
                    let dst_base = (o * full + start) * inner;
                    let src_base = o * len * inner;
                    gd[dst_base..dst_base + len * inner]
                        .copy_from_slice(&g[src_base..src_base + len * inner]);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Row selection on a 2-D tensor; rows may repeat. Backward scatter-adds.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::BadShape {
                op: "gather_rows",
                shape: s,
                reason: "expects rank 2".into(),
            });
        }
        let (rows, cols) = (s[0], s[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::BadArgument {
                op: "gather_rows",
                reason: format!("row index {bad} out of range 0..{rows}"),
            });
        }
        let src = self.value(a).data();
        let mut out = vec![T::zero(); idx.len() * cols];
        for (k, &i) in idx.iter().enumerate() {
            out[k * cols..(k + 1) * cols].copy_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let out = Tensor::new(vec![idx.len(), cols], out).expect("sized above");
        let idx: Rc<[usize]> = idx.into();
        Ok(self.push_op(&[a], out, move |ctx| {
            let g = ctx.out_grad().data();
            let mut gx = Tensor::zeros(vec![rows, cols]);
            {
                let gd = gx.data_mut();
                for (k, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        gd[i * cols + c] += g[k * cols + c];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    // ── Reductions ───────────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push_op(&[a], Tensor::scalar(total), move |ctx| {
            let g = ctx.out_grad().item();
            vec![Some(Tensor::full(ctx.input(0).shape().to_vec(), g))]
        })
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1);
        let s = self.sum_all(a);
        self.scale(s, T::one() / lit(n as f64))
    }

    fn axis_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        (outer, shape[axis], inner)
    }

    fn reduced_shape(shape: &[usize], axis: usize, keepdim: bool) -> Vec<usize> {
        let mut s = shape.to_vec();
        if keepdim {
            s[axis] = 1;
        } else {
            s.remove(axis);
        }
        s
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(Error::BadShape {
                op: "sum_axis",
                shape: s,
                reason: format!("axis {axis} out of range"),
            });
        }
        let (outer, len, inner) = Self::axis_dims(&s, axis);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let base = (o * len + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let out = Tensor::new(Self::reduced_shape(&s, axis, keepdim), out).expect("sized above");
        Ok(self.push_op(&[a], out, move |ctx| {
            let g = ctx.out_grad().data();
            let mut gx = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                for k in 0..len {
                    let base = (o * len + k) * inner;
                    for i in 0..inner {
                        gx[base + i] = g[o * inner + i];
                    }
                }
            }
            vec![Some(
                Tensor::new(ctx.input(0).shape().to_vec(), gx).expect("sized"),
            )]
        }))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let len = self.shape(a)[axis].max(1);
        let s = self.sum_axis(a, axis, keepdim)?;
        Ok(self.scale(s, T::one() / lit(len as f64)))
    }

    /// Max along `axis`; the gradient routes to the first maximum per lane.
    pub fn max_axis(&mut self, a: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(Error::BadShape {
                op: "max_axis",
                shape: s,
                reason: format!("axis {axis} out of range or empty"),
            });
        }
        let (outer, len, inner) = Self::axis_dims(&s, axis);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = src[o * len * inner + i];
                let mut best_k = 0usize;
                for k in 1..len {
                    let v = src[(o * len + k) * inner + i];
                    if v > best {
                        best = v;
                        best_k = k;
                    }
                }
                out[o * inner + i] = best;
                argmax[o * inner + i] = best_k;
            }
        }
        let out = Tensor::new(Self::reduced_shape(&s, axis, keepdim), out).expect("sized above");
        Ok(self.push_op(&[a], out, move |ctx| {
            let g = ctx.out_grad().data();
            let mut gx = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let k = argmax[o * inner + i];
                    gx[(o * len + k) * inner + i] = g[o * inner + i];
                }
            }
            vec![Some(
                Tensor::new(ctx.input(0).shape().to_vec(), gx).expect("sized"),
            )]
        }))
    }

    // ── Softmax ──────────────────────────────────────────────────────────

    /// Numerically stable softmax along `axis` (max subtracted per lane).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(Error::BadShape {
                op: "softmax",
                shape: s,
                reason: format!("axis {axis} out of range or empty"),
            });
        }
        let (outer, len, inner) = Self::axis_dims(&s, axis);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let lane = |k: usize| (o * len + k) * inner + i;
                let mut mx = src[lane(0)];
                for k in 1..len {
                    mx = mx.max(src[lane(k)]);
                }
                let mut total = T::zero();
                for k in 0..len {
                    let e = (src[lane(k)] - mx).exp();
                    out[lane(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[lane(k)] = out[lane(k)] / total;
                }
            }
        }
        let out = Tensor::new(s, out).expect("same shape");
        Ok(self.push_op(&[a], out, move |ctx| {
            let y = ctx.output().data();
            let g = ctx.out_grad().data();
            let mut gx = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let lane = |k: usize| (o * len + k) * inner + i;
                    let mut dot = T::zero();
                    for k in 0..len {
                        dot += g[lane(k)] * y[lane(k)];
                    }
                    for k in 0..len {
                        gx[lane(k)] = y[lane(k)] * (g[lane(k)] - dot);
                    }
                }
            }
            vec![Some(
                Tensor::new(ctx.input(0).shape().to_vec(), gx).expect("sized"),
            )]
        }))
    }

    // ── Structured ops ───────────────────────────────────────────────────

    /// Bilinear sampling of a `[C,H,W]` map at `[N,2]` (x, y) positions.
    /// Texel centers sit at integer coordinates; samples outside the map read
    /// zero. Differentiable in both the map and the coordinates.
    pub fn grid_sample2d(&mut self, map: Var, coords: Var) -> Result<Var> {
        let ms = self.shape(map).to_vec();
        let cs = self.shape(coords).to_vec();
        if ms.len() != 3 {
            return Err(Error::BadShape {
                op: "grid_sample2d",
                shape: ms,
                reason: "map expects [C,H,W]".into(),
            });
        }
        if cs.len() != 2 || cs[1] != 2 {
            return Err(Error::BadShape {
                op: "grid_sample2d",
                shape: cs,
                reason: "coords expect [N,2]".into(),
            });
        }
        let (c, h, w) = (ms[0], ms[1], ms[2]);
        let n = cs[0];
        let md = self.value(map).data();
        let cd = self.value(coords).data();
        let mut out = vec![T::zero(); n * c];
        for k in 0..n {
            let (x, y) = (cd[k * 2], cd[k * 2 + 1]);
            let cell = BilinearCell::at(x, y, h, w);
            for ch in 0..c {
                out[k * c + ch] = cell.sample(md, ch, h, w);
            }
        }
        let out = Tensor::new(vec![n, c], out).expect("sized above");
        Ok(self.push_op(&[map, coords], out, move |ctx| {
            let md = ctx.input(0).data();
            let cd = ctx.input(1).data();
            let g = ctx.out_grad().data();
            let mut gmap = Tensor::zeros(vec![c, h, w]);
            let mut gcoord = Tensor::zeros(vec![n, 2]);
            {
                let gm = gmap.data_mut();
                let gc = gcoord.data_mut();
                for k in 0..n {
                    let (x, y) = (cd[k * 2], cd[k * 2 + 1]);
                    let cell = BilinearCell::at(x, y, h, w);
                    for ch in 0..c {
                        let go = g[k * c + ch];
                        cell.scatter(gm, ch, h, w, go);
                        let (dx, dy) = cell.coord_grad(md, ch, h, w);
                        gc[k * 2] += go * dx;
                        gc[k * 2 + 1] += go * dy;
                    }
                }
            }
            vec![Some(gmap), Some(gcoord)]
        }))
    }

    /// Row-wise 3-D cross product on `[N,3]` tensors.
    pub fn cross3(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb || sa.len() != 2 || sa[1] != 3 {
            return Err(Error::ShapeMismatch {
                op: "cross3",
                left: sa,
                right: sb,
            });
        }
        let n = sa[0];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); n * 3];
        for k in 0..n {
            cross_into(&da[k * 3..], &db[k * 3..], &mut out[k * 3..]);
        }
        let out = Tensor::new(vec![n, 3], out).expect("sized above");
        Ok(self.push_op(&[a, b], out, move |ctx| {
            let (da, db) = (ctx.input(0).data(), ctx.input(1).data());
            let g = ctx.out_grad().data();
            let mut ga = vec![T::zero(); n * 3];
            let mut gb = vec![T::zero(); n * 3];
            for k in 0..n {
                // d/da (a x b) applied to g is b x g; d/db is g x a.
                cross_into(&db[k * 3..], &g[k * 3..], &mut ga[k * 3..]);
                cross_into(&g[k * 3..], &da[k * 3..], &mut gb[k * 3..]);
            }
            vec![
                Some(Tensor::new(vec![n, 3], ga).expect("sized")),
                Some(Tensor::new(vec![n, 3], gb).expect("sized")),
            ]
        }))
    }

    /// Per-row sum of neighbor rows under a symmetric adjacency (CSR).
    /// Symmetry makes the operator self-adjoint, so backward reapplies it.
    pub fn neighbor_sum(&mut self, a: Var, adj: Rc<Csr>) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || s[0] != adj.rows() {
            return Err(Error::BadShape {
                op: "neighbor_sum",
                shape: s,
                reason: format!("expects [{}, D]", adj.rows()),
            });
        }
        let (rows, cols) = (s[0], s[1]);
        let out = adj.apply(self.value(a).data(), cols);
        let out = Tensor::new(vec![rows, cols], out).expect("sized above");
        Ok(self.push_op(&[a], out, move |ctx| {
            let g = adj.apply(ctx.out_grad().data(), cols);
            vec![Some(Tensor::new(vec![rows, cols], g).expect("sized"))]
        }))
    }
}

// ── Support types ────────────────────────────────────────────────────────

/// Compressed sparse rows over undirected neighbor lists.
#[derive(Clone, Debug)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<u32>,
}

impl Csr {
    /// Builds from per-row neighbor lists; panics if the relation is not
    /// symmetric since backward relies on self-adjointness.
    pub fn from_neighbors(neighbors: &[Vec<u32>]) -> Self {
        let mut offsets = Vec::with_capacity(neighbors.len() + 1);
        offsets.push(0usize);
        let mut indices = Vec::new();
        for ns in neighbors {
            indices.extend_from_slice(ns);
            offsets.push(indices.len());
        }
        let csr = Csr { offsets, indices };
        debug_assert!(csr.is_symmetric(), "neighbor relation must be symmetric");
        csr
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, row: usize) -> &[u32] {
        &self.indices[self.offsets[row]..self.offsets[row + 1]]
    }

    fn is_symmetric(&self) -> bool {
        for r in 0..self.rows() {
            for &c in self.neighbors(r) {
                if !self.neighbors(c as usize).contains(&(r as u32)) {
                    return false;
                }
            }
        }
        true
    }

    fn apply<T: Real>(&self, x: &[T], cols: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows() * cols];
        for r in 0..self.rows() {
            for &nb in self.neighbors(r) {
                let src = nb as usize * cols;
                for c in 0..cols {
                    out[r * cols + c] += x[src + c];
                }
            }
        }
        out
    }
}

/// One bilinear footprint: integer corner, fractional weights, and validity
/// of the four surrounding texels.
struct BilinearCell<T> {
    x0: isize,
    y0: isize,
    fx: T,
    fy: T,
}

impl<T: Real> BilinearCell<T> {
    fn at(x: T, y: T, _h: usize, _w: usize) -> Self {
        let x0 = x.floor();
        let y0 = y.floor();
        BilinearCell {
            x0: x0.to_f64().unwrap() as isize,
            y0: y0.to_f64().unwrap() as isize,
            fx: x - x0,
            fy: y - y0,
        }
    }

    #[inline]
    fn texel(data: &[T], ch: usize, h: usize, w: usize, y: isize, x: isize) -> T {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            T::zero()
        } else {
            data[(ch * h + y as usize) * w + x as usize]
        }
    }

    fn corners(&self) -> [(isize, isize, T); 4] {
        let one = T::one();
        [
            (self.y0, self.x0, (one - self.fx) * (one - self.fy)),
            (self.y0, self.x0 + 1, self.fx * (one - self.fy)),
            (self.y0 + 1, self.x0, (one - self.fx) * self.fy),
            (self.y0 + 1, self.x0 + 1, self.fx * self.fy),
        ]
    }

    fn sample(&self, data: &[T], ch: usize, h: usize, w: usize) -> T {
        self.corners()
            .iter()
            .map(|&(y, x, wgt)| Self::texel(data, ch, h, w, y, x) * wgt)
            .sum()
    }

    fn scatter(&self, grad: &mut [T], ch: usize, h: usize, w: usize, g: T) {
        for (y, x, wgt) in self.corners() {
            if y >= 0 && x >= 0 && y < h as isize && x < w as isize {
                grad[(ch * h + y as usize) * w + x as usize] += g * wgt;
            }
        }
    }

    fn coord_grad(&self, data: &[T], ch: usize, h: usize, w: usize) -> (T, T) {
        let v00 = Self::texel(data, ch, h, w, self.y0, self.x0);
        let v10 = Self::texel(data, ch, h, w, self.y0, self.x0 + 1);
        let v01 = Self::texel(data, ch, h, w, self.y0 + 1, self.x0);
        let v11 = Self::texel(data, ch, h, w, self.y0 + 1, self.x0 + 1);
        let one = T::one();
        let dx = (v10 - v00) * (one - self.fy) + (v11 - v01) * self.fy;
        let dy = (v01 - v00) * (one - self.fx) + (v11 - v10) * self.fx;
        (dx, dy)
    }
}

#[inline]
fn clamp_mag<T: Real>(x: T) -> T {
    let floor = lit::<T>(CLAMP_FLOOR);
    if x.abs() >= floor {
        x
    } else if x < T::zero() {
        -floor
    } else {
        floor
    }
}

#[inline]
fn cross_into<T: Real>(a: &[T], b: &[T], out: &mut [T]) {
    out[0] = a[1] * b[2] - a[2] * b[1];
    out[1] = a[2] * b[0] - a[0] * b[2];
    out[2] = a[0] * b[1] - a[1] * b[0];
}

// ── Matrix kernels ───────────────────────────────────────────────────────

/// `out += A B` for row-major `A: [m,k]`, `B: [k,n]`.
pub(crate) fn mm_nn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// `out += A Bᵀ` for `A: [m,k]`, `B: [n,k]`.
fn mm_nt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out[i * n + j] += acc;
        }
    }
}

/// `out += Aᵀ B` for `A: [k,m]`, `B: [k,n]`.
fn mm_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = arow[i];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn relu_forward_matches_worked_values() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::from_vec(vec![-1.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        assert_close(tape.value(y).item(), 0.5, 1e-15);
    }

    #[test]
    fn matmul_matches_worked_value() {
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);
        assert_eq!(tape.shape(c), &[1, 1]);
    }

    #[test]
    fn matmul_rejects_inner_dim_mismatch() {
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![4, 2]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn softmax_of_log_integers_matches_closed_form() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![
            1.0f64.ln(),
            2.0f64.ln(),
            3.0f64.ln(),
        ]));
        let y = tape.softmax(x, 0).unwrap();
        let d = tape.value(y).data();
        assert_close(d[0], 1.0 / 6.0, 1e-12);
        assert_close(d[1], 2.0 / 6.0, 1e-12);
        assert_close(d[2], 3.0 / 6.0, 1e-12);
    }

    #[test]
    fn tanh_gradient_matches_finite_difference_at_0p3() {
        let f = |x: f64| x.tanh();
        let h = 1e-5;
        let fd = (f(0.3 + h) - f(0.3 - h)) / (2.0 * h);

        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.3));
        let y = tape.tanh(x);
        tape.backward(y).unwrap();
        assert_close(tape.grad(x).unwrap().item(), fd, 1e-9);
    }

    #[test]
    fn broadcast_add_reduces_gradient_over_expanded_dims() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap());
        let b = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let c = tape.add(a, b).unwrap();
        let s = tape.sum_all(c);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[1.0; 6]);
        // b is used by both rows, so its gradient is 2 per element.
        assert_eq!(tape.grad(b).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn elementwise_shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![2, 4]));
        let err = tape.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 4]"), "{msg}");
    }

    #[test]
    fn div_clamps_tiny_denominators() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::scalar(1.0));
        let b = tape.leaf(Tensor::scalar(0.0));
        let c = tape.div(a, b).unwrap();
        assert_close(tape.value(c).item(), 1e12, 1.0);
    }

    #[test]
    fn backward_requires_scalar_seed() {
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::zeros(vec![2]));
        let err = tape.backward(a).unwrap_err();
        assert!(err.to_string().contains("scalar"));
    }

    #[test]
    fn gradient_of_sum_equals_sum_of_gradients() {
        // Two scalar heads from shared inputs: grad through (y1 + y2) must
        // equal grad(y1) + grad(y2) computed in separate passes.
        let build = |tape: &mut Tape<f64>| {
            let x = tape.leaf(Tensor::from_vec(vec![0.3, -0.7, 1.2]));
            let sq = tape.square(x);
            let y1 = tape.sum_all(sq);
            let t = tape.tanh(x);
            let y2 = tape.sum_all(t);
            (x, y1, y2)
        };
        let mut t1 = Tape::<f64>::new();
        let (x1, a1, b1) = build(&mut t1);
        let joint = t1.add(a1, b1).unwrap();
        t1.backward(joint).unwrap();
        let g_joint = t1.grad(x1).unwrap().data().to_vec();

        let mut t2 = Tape::<f64>::new();
        let (x2, a2, b2) = build(&mut t2);
        t2.backward(a2).unwrap();
        let ga = t2.grad(x2).unwrap().data().to_vec();
        t2.backward(b2).unwrap();
        let gb = t2.grad(x2).unwrap().data().to_vec();
        for i in 0..3 {
            assert_close(g_joint[i], ga[i] + gb[i], 1e-12);
        }
    }

    #[test]
    fn constants_receive_no_gradient_and_skip_records() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::scalar(2.0));
        let b = tape.constant(Tensor::scalar(3.0));
        let c = tape.mul(a, b).unwrap();
        assert_eq!(tape.record_count(), 0);
        assert_eq!(tape.value(c).item(), 6.0);
        tape.backward(c).unwrap();
        assert!(tape.grad(a).is_none());
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2, 1], vec![5.0, 6.0]).unwrap());
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let right = tape.slice(c, 1, 2, 1).unwrap();
        let s = tape.sum_all(right);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[0.0; 4]);
        assert_eq!(tape.grad(b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn gather_rows_accumulates_repeated_indices() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let g = tape.gather_rows(a, &[0, 0, 1]).unwrap();
        let s = tape.sum_all(g);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn grid_sample_midpoint_averages_neighbors() {
        let mut tape = Tape::<f64>::new();
        // 1x1x2 map holding [a, b]; sampling halfway between texels 0 and 1.
        let map = tape.leaf(Tensor::new(vec![1, 1, 2], vec![2.0, 6.0]).unwrap());
        let coords = tape.constant(Tensor::new(vec![1, 2], vec![0.5, 0.0]).unwrap());
        let s = tape.grid_sample2d(map, coords).unwrap();
        assert_close(tape.value(s).data()[0], 4.0, 1e-12);
    }

    #[test]
    fn neighbor_sum_on_path_graph() {
        let adj = Rc::new(Csr::from_neighbors(&[vec![1], vec![0, 2], vec![1]]));
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![3, 1], vec![1.0, 10.0, 100.0]).unwrap());
        let y = tape.neighbor_sum(x, adj).unwrap();
        assert_eq!(tape.value(y).data(), &[10.0, 101.0, 10.0]);
    }

    #[test]
    fn max_axis_routes_gradient_to_first_maximum() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![1, 3], vec![2.0, 5.0, 5.0]).unwrap());
        let m = tape.max_axis(x, 1, false).unwrap();
        let s = tape.sum_all(m);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
