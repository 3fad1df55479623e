//! Dense row-major tensors generic over the float width.
//!
//! Training runs in `f32`; gradient-check tests instantiate the same ops in
//! `f64` so central finite differences have enough precision to compare
//! against.

use crate::error::{Error, Result};
use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

/// Scalar type the autodiff stack is generic over.
pub trait Real:
    Float + FromPrimitive + AddAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the active scalar type.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal must be representable")
}

/// Magnitude floor used when clamping denominators and log/sqrt arguments.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Dense row-major tensor. A scalar has an empty shape and one element.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor from a shape and matching flat data.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::BadShape {
                op: "Tensor::new",
                shape,
                reason: format!("shape wants {} elements, data has {}", numel, data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    /// Rank-0 scalar.
    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// 2-D tensor from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::BadShape {
                    op: "Tensor::from_rows",
                    shape: vec![rows.len(), r.len()],
                    reason: "ragged rows".into(),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1, "item() on multi-element tensor");
        self.data[0]
    }

    /// Element at a full multi-index (tests and small fixtures only).
    pub fn at(&self, idx: &[usize]) -> T {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[d]);
            flat = flat * self.shape[d] + i;
        }
        self.data[flat]
    }

    /// Same data under a new shape with an equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::BadShape {
                op: "reshape",
                shape,
                reason: format!("element count {} != {}", numel, self.numel()),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise in-place accumulation; shapes must match exactly.
    pub fn add_in_place(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Lossy conversion to another scalar width.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&x| lit::<U>(x.to_f64().unwrap()))
                .collect(),
        }
    }
}

// ── Broadcasting ─────────────────────────────────────────────────────────

/// Shape both operands broadcast to, matching trailing dimensions: sizes must
/// be equal or one of them 1.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(Error::ShapeMismatch {
                op,
                left: a.to_vec(),
                right: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Per-output-dimension element strides into `in_shape`, zero where the input
/// is broadcast along that dimension.
pub(crate) fn bcast_strides(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let mut in_strides = vec![0usize; in_shape.len()];
    let mut acc = 1usize;
    for i in (0..in_shape.len()).rev() {
        in_strides[i] = acc;
        acc *= in_shape[i];
    }
    let off = out_shape.len() - in_shape.len();
    let mut out = vec![0usize; out_shape.len()];
    for i in 0..in_shape.len() {
        out[off + i] = if in_shape[i] == out_shape[off + i] { in_strides[i] } else { 0 };
    }
    out
}

/// Walks every element of `out_shape` in row-major order, yielding the flat
/// output index together with the mapped flat indices into two inputs.
pub(crate) fn for_each_pair(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out_shape.iter().product();
    if n == 0 {
        return;
    }
    let rank = out_shape.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for flat in 0..n {
        f(flat, oa, ob);
        for d in (0..rank).rev() {
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_is_rank_zero_with_one_element() {
        let t = Tensor::scalar(3.0f32);
        assert!(t.shape().is_empty());
        assert_eq!(t.numel(), 1);
        assert_eq!(t.item(), 3.0);
    }

    #[test]
    fn new_rejects_mismatched_data_length() {
        let err = Tensor::new(vec![2, 2], vec![1.0f32; 3]).unwrap_err();
        assert!(err.to_string().contains("4 elements"));
    }

    #[test]
    fn broadcast_shapes_follow_trailing_rule() {
        assert_eq!(broadcast_shape("t", &[2, 3], &[3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape("t", &[4, 1], &[1, 5]).unwrap(), vec![4, 5]);
        assert_eq!(broadcast_shape("t", &[], &[2, 2]).unwrap(), vec![2, 2]);
        let err = broadcast_shape("t", &[2, 3], &[4]).unwrap_err();
        assert!(err.to_string().contains("[2, 3]"));
        assert!(err.to_string().contains("[4]"));
    }

    #[test]
    fn pair_walk_maps_broadcast_dims_to_stride_zero() {
        let out = vec![2usize, 2];
        let sa = bcast_strides(&[2, 2], &out);
        let sb = bcast_strides(&[2], &out);
        let mut hits = Vec::new();
        for_each_pair(&out, &sa, &sb, |o, a, b| hits.push((o, a, b)));
        assert_eq!(hits, vec![(0, 0, 0), (1, 1, 1), (2, 2, 0), (3, 3, 1)]);
    }
}
