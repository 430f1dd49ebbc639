//! Batched block-quaternion arithmetic.
//!
//! A block of `m` quaternions is stored as four parallel component arrays
//! (structure-of-arrays): the Hamilton product decomposes into 16 array-wise
//! multiply-adds over those components, which the compiler vectorizes.
//!
//! Every forward operation has an analytic backward counterpart that
//! contracts an upstream gradient with the exact Jacobian. The backward pair
//! for the Hamilton product uses the conjugate identities
//! `dL/dq1 = upstream ⊗ conj(q2)` and `dL/dq2 = conj(q1) ⊗ upstream`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point scalar the numeric kernels are generic over.
///
/// Training runs in `f32`; gradient-check harnesses instantiate `f64`.
pub trait Real:
    Float + num_traits::NumAssignOps + Sum<Self> + Debug + Display + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossy cast from `f64`, for constants inside generic kernels.
#[inline]
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from(x).expect("f64 -> Real cast")
}

/// A vector of `m` quaternions `a + b·i + c·j + d·k` in four parallel arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct QuatBlock<T> {
    a: Vec<T>,
    b: Vec<T>,
    c: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> QuatBlock<T> {
    pub fn from_components(a: Vec<T>, b: Vec<T>, c: Vec<T>, d: Vec<T>) -> Result<Self> {
        let m = a.len();
        for other in [b.len(), c.len(), d.len()] {
            if other != m {
                return Err(Error::LengthMismatch {
                    left: m,
                    right: other,
                    context: "quaternion component arrays",
                });
            }
        }
        Ok(QuatBlock { a, b, c, d })
    }

    /// Block of `m` zero quaternions.
    pub fn zeros(m: usize) -> Self {
        QuatBlock {
            a: vec![T::zero(); m],
            b: vec![T::zero(); m],
            c: vec![T::zero(); m],
            d: vec![T::zero(); m],
        }
    }

    /// Block of `m` identity quaternions `(1, 0, 0, 0)`.
    pub fn identity(m: usize) -> Self {
        QuatBlock {
            a: vec![T::one(); m],
            ..QuatBlock::zeros(m)
        }
    }

    /// Reinterpret a flat buffer laid out as `[a.. | b.. | c.. | d..]`.
    pub fn from_flat(flat: &[T]) -> Result<Self> {
        let view = QuatRef::from_flat(flat)?;
        Ok(view.to_owned())
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// The i-th quaternion as `[a, b, c, d]`.
    pub fn get(&self, i: usize) -> [T; 4] {
        [self.a[i], self.b[i], self.c[i], self.d[i]]
    }

    pub fn set(&mut self, i: usize, q: [T; 4]) {
        self.a[i] = q[0];
        self.b[i] = q[1];
        self.c[i] = q[2];
        self.d[i] = q[3];
    }

    pub fn as_ref(&self) -> QuatRef<'_, T> {
        QuatRef {
            a: &self.a,
            b: &self.b,
            c: &self.c,
            d: &self.d,
        }
    }

    pub fn as_mut(&mut self) -> QuatMut<'_, T> {
        QuatMut {
            a: &mut self.a,
            b: &mut self.b,
            c: &mut self.c,
            d: &mut self.d,
        }
    }

    /// Concatenated `[a.. | b.. | c.. | d..]` layout.
    pub fn to_flat(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(4 * self.len());
        flat.extend_from_slice(&self.a);
        flat.extend_from_slice(&self.b);
        flat.extend_from_slice(&self.c);
        flat.extend_from_slice(&self.d);
        flat
    }

    pub fn iter_finite(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Borrowed view of a quaternion block; cheap to construct from a flat
/// embedding row split at quarter boundaries.
#[derive(Clone, Copy, Debug)]
pub struct QuatRef<'a, T> {
    pub a: &'a [T],
    pub b: &'a [T],
    pub c: &'a [T],
    pub d: &'a [T],
}

impl<'a, T: Real> QuatRef<'a, T> {
    pub fn from_flat(flat: &'a [T]) -> Result<Self> {
        if !flat.len().is_multiple_of(4) {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: flat.len() / 4 * 4,
                context: "flat buffer not divisible into 4 components",
            });
        }
        let m = flat.len() / 4;
        let (a, rest) = flat.split_at(m);
        let (b, rest) = rest.split_at(m);
        let (c, d) = rest.split_at(m);
        Ok(QuatRef { a, b, c, d })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn to_owned(&self) -> QuatBlock<T> {
        QuatBlock {
            a: self.a.to_vec(),
            b: self.b.to_vec(),
            c: self.c.to_vec(),
            d: self.d.to_vec(),
        }
    }
}

/// Mutable view, same layout as [`QuatRef`].
#[derive(Debug)]
pub struct QuatMut<'a, T> {
    pub a: &'a mut [T],
    pub b: &'a mut [T],
    pub c: &'a mut [T],
    pub d: &'a mut [T],
}

impl<'a, T: Real> QuatMut<'a, T> {
    pub fn from_flat(flat: &'a mut [T]) -> Result<Self> {
        if !flat.len().is_multiple_of(4) {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: flat.len() / 4 * 4,
                context: "flat buffer not divisible into 4 components",
            });
        }
        let m = flat.len() / 4;
        let (a, rest) = flat.split_at_mut(m);
        let (b, rest) = rest.split_at_mut(m);
        let (c, d) = rest.split_at_mut(m);
        Ok(QuatMut { a, b, c, d })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn reborrow(&mut self) -> QuatMut<'_, T> {
        QuatMut {
            a: self.a,
            b: self.b,
            c: self.c,
            d: self.d,
        }
    }
}

fn check_len<T: Real>(q1: &QuatRef<'_, T>, q2: &QuatRef<'_, T>, context: &'static str) -> Result<()> {
    if q1.len() != q2.len() {
        return Err(Error::LengthMismatch {
            left: q1.len(),
            right: q2.len(),
            context,
        });
    }
    Ok(())
}

fn check_out_len<T: Real>(q: &QuatRef<'_, T>, out: &QuatMut<'_, T>, context: &'static str) -> Result<()> {
    if q.len() != out.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: out.len(),
            context,
        });
    }
    Ok(())
}

/// Coordinate-wise Hamilton product `q1 ⊗ q2`.
pub fn hamilton_product<T: Real>(q1: QuatRef<'_, T>, q2: QuatRef<'_, T>) -> Result<QuatBlock<T>> {
    let mut out = QuatBlock::zeros(q1.len());
    hamilton_product_into(q1, q2, out.as_mut())?;
    Ok(out)
}

/// Hamilton product written into a caller-owned block.
pub fn hamilton_product_into<T: Real>(
    q1: QuatRef<'_, T>,
    q2: QuatRef<'_, T>,
    out: QuatMut<'_, T>,
) -> Result<()> {
    check_len(&q1, &q2, "hamilton product operands")?;
    check_out_len(&q1, &out, "hamilton product output")?;
    for i in 0..q1.len() {
        let (a1, b1, c1, d1) = (q1.a[i], q1.b[i], q1.c[i], q1.d[i]);
        let (a2, b2, c2, d2) = (q2.a[i], q2.b[i], q2.c[i], q2.d[i]);
        out.a[i] = a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2;
        out.b[i] = a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2;
        out.c[i] = a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2;
        out.d[i] = a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2;
    }
    Ok(())
}

/// Per-coordinate 4-norm `sqrt(a² + b² + c² + d²)`.
pub fn quat_norms<T: Real>(q: QuatRef<'_, T>) -> Vec<T> {
    (0..q.len())
        .map(|i| {
            (q.a[i] * q.a[i] + q.b[i] * q.b[i] + q.c[i] * q.c[i] + q.d[i] * q.d[i]).sqrt()
        })
        .collect()
}

/// Per-coordinate normalization to (near-)unit quaternions.
///
/// Each coordinate is divided by `sqrt(a² + b² + c² + d² + eps)`; `eps > 0`
/// guards the zero quaternion so optimization never divides by zero.
pub fn normalize<T: Real>(q: QuatRef<'_, T>, eps: T) -> QuatBlock<T> {
    let mut out = QuatBlock::zeros(q.len());
    normalize_into(q, eps, out.as_mut()).expect("output allocated with matching length");
    out
}

/// Normalization written into a caller-owned block.
pub fn normalize_into<T: Real>(q: QuatRef<'_, T>, eps: T, out: QuatMut<'_, T>) -> Result<()> {
    debug_assert!(eps > T::zero(), "normalization eps must be positive");
    check_out_len(&q, &out, "normalize output")?;
    for i in 0..q.len() {
        let inv = (q.a[i] * q.a[i] + q.b[i] * q.b[i] + q.c[i] * q.c[i] + q.d[i] * q.d[i] + eps)
            .sqrt()
            .recip();
        out.a[i] = q.a[i] * inv;
        out.b[i] = q.b[i] * inv;
        out.c[i] = q.c[i] * inv;
        out.d[i] = q.d[i] * inv;
    }
    Ok(())
}

/// Exact partials of the Hamilton product contracted with `upstream`.
///
/// Returns `(dL/dq1, dL/dq2)` for `L` whose gradient w.r.t. `q1 ⊗ q2` is
/// `upstream`.
pub fn hamilton_product_backward<T: Real>(
    q1: QuatRef<'_, T>,
    q2: QuatRef<'_, T>,
    upstream: QuatRef<'_, T>,
) -> Result<(QuatBlock<T>, QuatBlock<T>)> {
    check_len(&q1, &upstream, "hamilton backward upstream")?;
    let mut grad1 = QuatBlock::zeros(q1.len());
    let mut grad2 = QuatBlock::zeros(q2.len());
    add_grad_wrt_lhs(upstream, q2, grad1.as_mut())?;
    add_grad_wrt_rhs(q1, upstream, grad2.as_mut())?;
    Ok((grad1, grad2))
}

/// Accumulate `grad += upstream ⊗ conj(rhs)`: the Hamilton-product gradient
/// with respect to the left operand.
pub fn add_grad_wrt_lhs<T: Real>(
    upstream: QuatRef<'_, T>,
    rhs: QuatRef<'_, T>,
    grad: QuatMut<'_, T>,
) -> Result<()> {
    check_len(&upstream, &rhs, "hamilton lhs-grad operands")?;
    check_out_len(&upstream, &grad, "hamilton lhs-grad output")?;
    for i in 0..upstream.len() {
        let (ua, ub, uc, ud) = (upstream.a[i], upstream.b[i], upstream.c[i], upstream.d[i]);
        let (a2, b2, c2, d2) = (rhs.a[i], rhs.b[i], rhs.c[i], rhs.d[i]);
        grad.a[i] += ua * a2 + ub * b2 + uc * c2 + ud * d2;
        grad.b[i] += -ua * b2 + ub * a2 - uc * d2 + ud * c2;
        grad.c[i] += -ua * c2 + ub * d2 + uc * a2 - ud * b2;
        grad.d[i] += -ua * d2 - ub * c2 + uc * b2 + ud * a2;
    }
    Ok(())
}

/// Accumulate `grad += conj(lhs) ⊗ upstream`: the Hamilton-product gradient
/// with respect to the right operand.
pub fn add_grad_wrt_rhs<T: Real>(
    lhs: QuatRef<'_, T>,
    upstream: QuatRef<'_, T>,
    grad: QuatMut<'_, T>,
) -> Result<()> {
    check_len(&lhs, &upstream, "hamilton rhs-grad operands")?;
    check_out_len(&upstream, &grad, "hamilton rhs-grad output")?;
    for i in 0..upstream.len() {
        let (ua, ub, uc, ud) = (upstream.a[i], upstream.b[i], upstream.c[i], upstream.d[i]);
        let (a1, b1, c1, d1) = (lhs.a[i], lhs.b[i], lhs.c[i], lhs.d[i]);
        grad.a[i] += a1 * ua + b1 * ub + c1 * uc + d1 * ud;
        grad.b[i] += a1 * ub - b1 * ua - c1 * ud + d1 * uc;
        grad.c[i] += a1 * uc + b1 * ud - c1 * ua - d1 * ub;
        grad.d[i] += a1 * ud - b1 * uc + c1 * ub - d1 * ua;
    }
    Ok(())
}

/// Gradient of [`normalize`] contracted with `upstream`.
///
/// With `n = sqrt(|q|² + eps)` the Jacobian contraction is
/// `upstream / n − q · (upstream · q) / n³`: the projection of `upstream`
/// onto the tangent space of the sphere, scaled by `1/n`.
pub fn normalize_backward<T: Real>(
    q: QuatRef<'_, T>,
    eps: T,
    upstream: QuatRef<'_, T>,
) -> Result<QuatBlock<T>> {
    let mut grad = QuatBlock::zeros(q.len());
    add_normalize_backward(q, eps, upstream, grad.as_mut())?;
    Ok(grad)
}

/// Accumulating form of [`normalize_backward`].
pub fn add_normalize_backward<T: Real>(
    q: QuatRef<'_, T>,
    eps: T,
    upstream: QuatRef<'_, T>,
    grad: QuatMut<'_, T>,
) -> Result<()> {
    debug_assert!(eps > T::zero(), "normalization eps must be positive");
    check_len(&q, &upstream, "normalize backward operands")?;
    check_out_len(&q, &grad, "normalize backward output")?;
    for i in 0..q.len() {
        let (a, b, c, d) = (q.a[i], q.b[i], q.c[i], q.d[i]);
        let n2 = a * a + b * b + c * c + d * d + eps;
        let n = n2.sqrt();
        let inv_n = n.recip();
        let dot = upstream.a[i] * a + upstream.b[i] * b + upstream.c[i] * c + upstream.d[i] * d;
        let scale = dot / (n2 * n);
        grad.a[i] += upstream.a[i] * inv_n - a * scale;
        grad.b[i] += upstream.b[i] * inv_n - b * scale;
        grad.c[i] += upstream.c[i] * inv_n - c * scale;
        grad.d[i] += upstream.d[i] * inv_n - d * scale;
    }
    Ok(())
}
