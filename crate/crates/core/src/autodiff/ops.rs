//! Differentiable operations over [`Tensor`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Output shape of numpy-style broadcasting, if compatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Flat source index for every element of `out_shape` when `in_shape` is
/// broadcast up to it.
fn broadcast_map(out_shape: &[usize], in_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - in_shape.len();
    // stride of each output axis inside the input buffer (0 where broadcast)
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..in_shape.len()).rev() {
        if in_shape[i] != 1 {
            strides[i + offset] = acc;
        }
        acc *= in_shape[i];
    }
    let numel: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut counter = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..numel {
        map.push(src);
        for axis in (0..rank).rev() {
            counter[axis] += 1;
            src += strides[axis];
            if counter[axis] < out_shape[axis] {
                break;
            }
            src -= strides[axis] * counter[axis];
            counter[axis] = 0;
        }
    }
    map
}

/// Splits `shape` around `axis` into `(outer, len, inner)`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Scalar> Tensor<T> {
    fn check_axis(&self, axis: usize, op: &str) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::shape(format!(
                "{op}: axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        Ok(())
    }

    pub(crate) fn ensure_finite(&self, op: &str) -> Result<()> {
        if let Some(v) = self.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{op}: non-finite input {v}")));
        }
        Ok(())
    }

    /// Elementwise map with derivative `d(x, y)` expressed through input and output.
    fn unary<F, D>(&self, f: F, d: D) -> Tensor<T>
    where
        F: Fn(T) -> T,
        D: Fn(T, T) -> T + Send + Sync + 'static,
    {
        let data: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        let input = self.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g, out| {
            let grad = g
                .iter()
                .zip(input.data())
                .zip(out)
                .map(|((&g, &x), &y)| g * d(x, y))
                .collect();
            vec![Some(grad)]
        })
    }

    /// Broadcasting binary op with partial derivatives `(da, db)` of `(x, y, z)`.
    fn binary<F, DA, DB>(&self, other: &Tensor<T>, name: &str, f: F, da: DA, db: DB) -> Result<Tensor<T>>
    where
        F: Fn(T, T) -> T,
        DA: Fn(T, T, T) -> T + Send + Sync + 'static,
        DB: Fn(T, T, T) -> T + Send + Sync + 'static,
    {
        let shape = broadcast_shape(self.shape(), other.shape()).ok_or_else(|| {
            Error::shape(format!(
                "{name}: shapes {:?} and {:?} do not broadcast",
                self.shape(),
                other.shape()
            ))
        })?;
        let a = self.clone();
        let b = other.clone();
        let same_a = a.shape() == shape.as_slice();
        let same_b = b.shape() == shape.as_slice();
        let map_a = (!same_a).then(|| Arc::new(broadcast_map(&shape, a.shape())));
        let map_b = (!same_b).then(|| Arc::new(broadcast_map(&shape, b.shape())));
        let numel: usize = shape.iter().product();

        let at = |map: &Option<Arc<Vec<usize>>>, i: usize| map.as_ref().map_or(i, |m| m[i]);
        let data: Vec<T> = (0..numel)
            .map(|i| f(a.data()[at(&map_a, i)], b.data()[at(&map_b, i)]))
            .collect();

        let parents = vec![a.clone(), b.clone()];
        Ok(Tensor::from_op(data, shape, parents, move |g, out| {
            let want_a = a.requires_grad();
            let want_b = b.requires_grad();
            let mut ga = want_a.then(|| vec![T::zero(); a.numel()]);
            let mut gb = want_b.then(|| vec![T::zero(); b.numel()]);
            for (i, (&gi, &z)) in g.iter().zip(out).enumerate() {
                let ia = at(&map_a, i);
                let ib = at(&map_b, i);
                let x = a.data()[ia];
                let y = b.data()[ib];
                if let Some(ga) = ga.as_mut() {
                    ga[ia] = ga[ia] + gi * da(x, y, z);
                }
                if let Some(gb) = gb.as_mut() {
                    gb[ib] = gb[ib] + gi * db(x, y, z);
                }
            }
            vec![ga, gb]
        }))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "add", |x, y| x + y, |_, _, _| T::one(), |_, _, _| T::one())
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "sub", |x, y| x - y, |_, _, _| T::one(), |_, _, _| -T::one())
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "mul", |x, y| x * y, |_, y, _| y, |x, _, _| x)
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "div", |x, y| x / y, |_, y, _| T::one() / y, |x, y, _| -x / (y * y))
    }

    /// Elementwise minimum; on ties the gradient goes to `self`.
    pub fn minimum(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(
            other,
            "minimum",
            |x, y| if x <= y { x } else { y },
            |x, y, _| if x <= y { T::one() } else { T::zero() },
            |x, y, _| if x <= y { T::zero() } else { T::one() },
        )
    }

    /// Elementwise maximum; on ties the gradient goes to `self`.
    pub fn maximum(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(
            other,
            "maximum",
            |x, y| if x >= y { x } else { y },
            |x, y, _| if x >= y { T::one() } else { T::zero() },
            |x, y, _| if x >= y { T::zero() } else { T::one() },
        )
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary(|x| -x, |_, _| -T::one())
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        self.unary(move |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        self.unary(move |x| x * c, move |_, _| c)
    }

    /// `c - self`, elementwise.
    pub fn rsub_scalar(&self, c: T) -> Tensor<T> {
        self.unary(move |x| c - x, |_, _| -T::one())
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Tensor<T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        self.ensure_finite("sigmoid")?;
        Ok(self.unary(sigmoid, |_, y| y * (T::one() - y)))
    }

    pub fn leaky_relu(&self, slope: T) -> Result<Tensor<T>> {
        self.ensure_finite("leaky_relu")?;
        Ok(self.unary(
            move |x| if x > T::zero() { x } else { x * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        ))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.rank() != 2 || other.rank() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(Error::shape(format!(
                "matmul: {:?} · {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let (m, k, n) = (self.shape()[0], self.shape()[1], other.shape()[1]);
        let mut data = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.data(),
            (k as isize, 1),
            other.data(),
            (n as isize, 1),
            &mut data,
            (n as isize, 1),
            T::zero(),
        );
        let a = self.clone();
        let b = other.clone();
        Ok(Tensor::from_op(data, vec![m, n], vec![a.clone(), b.clone()], move |g, _| {
            let ga = a.requires_grad().then(|| {
                // g (m×n) · bᵀ (n×k)
                let mut out = vec![T::zero(); m * k];
                T::gemm(m, n, k, g, (n as isize, 1), b.data(), (1, n as isize), &mut out, (k as isize, 1), T::zero());
                out
            });
            let gb = b.requires_grad().then(|| {
                // aᵀ (k×m) · g (m×n)
                let mut out = vec![T::zero(); k * n];
                T::gemm(k, m, n, a.data(), (1, k as isize), g, (n as isize, 1), &mut out, (n as isize, 1), T::zero());
                out
            });
            vec![ga, gb]
        }))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Tensor<T> {
        let total = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(vec![total], Vec::new(), vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = T::from_usize(self.numel()).expect("element count fits the scalar type");
        self.sum().mul_scalar(T::one() / n)
    }

    /// Sum along `axis`; with `keepdim` the axis stays with length 1.
    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<T>> {
        self.check_axis(axis, "sum_axis")?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let src = self.data();
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let row = &src[(o * len + l) * inner..(o * len + l + 1) * inner];
                let dst = &mut data[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(row).for_each(|(d, &s)| *d = *d + s);
            }
        }
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        Ok(Tensor::from_op(data, shape, vec![self.clone()], move |g, _| {
            let mut grad = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                for l in 0..len {
                    grad[(o * len + l) * inner..(o * len + l + 1) * inner]
                        .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(grad)]
        }))
    }

    /// Numerically stable log-softmax along `axis`.
    pub fn log_softmax(&self, axis: usize) -> Result<Tensor<T>> {
        self.check_axis(axis, "log_softmax")?;
        self.ensure_finite("log_softmax")?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let src = self.data();
        let mut data = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let max = (0..len).map(|l| src[at(l)]).fold(T::neg_infinity(), T::max);
                let lse = max + (0..len).map(|l| (src[at(l)] - max).exp()).sum::<T>().ln();
                for l in 0..len {
                    data[at(l)] = src[at(l)] - lse;
                }
            }
        }
        Ok(Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g, out| {
            let mut grad = vec![T::zero(); g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let total: T = (0..len).map(|l| g[at(l)]).sum();
                    for l in 0..len {
                        grad[at(l)] = g[at(l)] - out[at(l)].exp() * total;
                    }
                }
            }
            vec![Some(grad)]
        }))
    }

    /// Mean binary cross-entropy of probabilities `self` against `target`.
    ///
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]`; the clamp itself is
    /// transparent to the gradient.
    pub fn binary_cross_entropy(&self, target: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != target.shape() {
            return Err(Error::shape(format!(
                "binary_cross_entropy: {:?} vs {:?}",
                self.shape(),
                target.shape()
            )));
        }
        self.ensure_finite("binary_cross_entropy")?;
        target.ensure_finite("binary_cross_entropy")?;
        let lo = T::lit(1e-7);
        let hi = T::one() - lo;
        let clamp = move |p: T| p.max(lo).min(hi);
        let n = T::from_usize(self.numel()).expect("element count fits the scalar type");
        let total: T = self
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let p = clamp(p);
                -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
            })
            .sum();
        let p = self.clone();
        let t = target.clone();
        Ok(Tensor::from_op(vec![total / n], Vec::new(), vec![p.clone()], move |g, _| {
            let scale = g[0] / n;
            let grad = p
                .data()
                .iter()
                .zip(t.data())
                .map(|(&p, &t)| {
                    let p = clamp(p);
                    scale * (p - t) / (p * (T::one() - p))
                })
                .collect();
            vec![Some(grad)]
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "reshape: {:?} -> {shape:?}",
                self.shape()
            )));
        }
        Ok(Tensor::from_op(
            self.data().to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            |g, _| vec![Some(g.to_vec())],
        ))
    }

    /// Slice of length `len` starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        self.check_axis(axis, "narrow")?;
        let (outer, full, inner) = axis_split(self.shape(), axis);
        if len == 0 || start + len > full {
            return Err(Error::shape(format!(
                "narrow: [{start}, {}) outside axis of length {full}",
                start + len
            )));
        }
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * full + start) * inner..(o * full + start + len) * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(data, shape, vec![self.clone()], move |g, _| {
            let mut grad = vec![T::zero(); outer * full * inner];
            for o in 0..outer {
                grad[(o * full + start) * inner..(o * full + start + len) * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(grad)]
        }))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        first.check_axis(axis, "concat")?;
        for p in parts {
            let same_rank = p.rank() == first.rank();
            let compatible = same_rank
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape(format!(
                    "concat: {:?} incompatible with {:?} on axis {axis}",
                    p.shape(),
                    first.shape()
                )));
            }
        }
        let (outer, _, inner) = axis_split(first.shape(), axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let lens_bw = lens.clone();
        Ok(Tensor::from_op(data, shape, parts.to_vec(), move |g, _| {
            let mut grads: Vec<Vec<T>> = lens_bw
                .iter()
                .map(|&len| Vec::with_capacity(outer * len * inner))
                .collect();
            let mut offset = 0;
            for _ in 0..outer {
                for (grad, &len) in grads.iter_mut().zip(&lens_bw) {
                    grad.extend_from_slice(&g[offset..offset + len * inner]);
                    offset += len * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
