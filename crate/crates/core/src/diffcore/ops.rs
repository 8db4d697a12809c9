//! Forward kernels and their analytic vector-Jacobian products.
//!
//! Backward functions accumulate (`+=`) into the supplied gradient buffers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::{Shape, Tensor};

/// Logistic sigmoid, evaluated on the branch that never exponentiates a
/// large positive number.
#[inline]
pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn check_matvec<S: Scalar>(w: &Tensor<S>, v: &Tensor<S>) -> Result<()> {
    match (w.shape(), v.shape()) {
        (Shape::Matrix(_, n), Shape::Vector(k)) if n == k => Ok(()),
        (ws, vs) => Err(Error::Dimension {
            op: "matvec",
            left: ws.dims(),
            right: vs.dims(),
        }),
    }
}

/// `out += W v` on raw slices; `W` is row-major `out.len() x v.len()`.
#[inline]
pub fn gemv_acc<S: Scalar>(w: &Tensor<S>, v: &[S], out: &mut [S]) {
    let cols = v.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.data().chunks_exact(cols)) {
        let mut acc = S::zero();
        for (&a, &b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += W^T g`.
#[inline]
pub fn gemv_t_acc<S: Scalar>(w: &Tensor<S>, g: &[S], out: &mut [S]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), g.len() * cols);
    for (&gi, row) in g.iter().zip(w.data().chunks_exact(cols)) {
        if gi == S::zero() {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// `gw += g v^T`.
#[inline]
pub fn outer_acc<S: Scalar>(gw: &mut Tensor<S>, g: &[S], v: &[S]) {
    let cols = v.len();
    debug_assert_eq!(gw.len(), g.len() * cols);
    for (&gi, row) in g.iter().zip(gw.data_mut().chunks_exact_mut(cols)) {
        if gi == S::zero() {
            continue;
        }
        for (o, &b) in row.iter_mut().zip(v) {
            *o += gi * b;
        }
    }
}

pub fn matvec<S: Scalar>(w: &Tensor<S>, v: &Tensor<S>) -> Result<Tensor<S>> {
    check_matvec(w, v)?;
    let mut out = Tensor::vector(w.rows());
    gemv_acc(w, v.data(), out.data_mut());
    Ok(out)
}

pub fn sigmoid<S: Scalar>(v: &Tensor<S>) -> Tensor<S> {
    v.map(sigmoid_scalar)
}

pub fn tanh_<S: Scalar>(v: &Tensor<S>) -> Tensor<S> {
    v.map(S::tanh)
}

pub fn hadamard<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    a.same_shape(b, "hadamard")?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::from_shape_vec(a.shape(), data)
}

pub fn add<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    a.same_shape(b, "add")?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::from_shape_vec(a.shape(), data)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .fold(S::neg_infinity(), |m, &x| if x > m { x } else { m });
    let mut p: Vec<S> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: S = p.iter().copied().sum();
    p.iter_mut().for_each(|x| *x = *x / z);
    p
}

/// Cross-entropy of `softmax(logits)` against `target`, written into
/// `dlogits` (overwritten, not accumulated) as `softmax - onehot`.
pub fn softmax_xent_into<S: Scalar>(logits: &[S], target: usize, dlogits: &mut [S]) -> Result<S> {
    if target >= logits.len() {
        return Err(Error::Index {
            index: target,
            bound: logits.len(),
        });
    }
    let max = logits
        .iter()
        .fold(S::neg_infinity(), |m, &x| if x > m { x } else { m });
    let mut z = S::zero();
    for (d, &x) in dlogits.iter_mut().zip(logits) {
        let e = (x - max).exp();
        *d = e;
        z += e;
    }
    let inv = S::one() / z;
    dlogits.iter_mut().for_each(|d| *d *= inv);
    dlogits[target] -= S::one();
    // -log p_target = log z - (x_target - max)
    Ok(z.ln() - (logits[target] - max))
}

/// Returns `(loss, dloss/dlogits)`.
pub fn softmax_xent<S: Scalar>(logits: &Tensor<S>, target: usize) -> Result<(S, Tensor<S>)> {
    let mut d = logits.zeros_like();
    let loss = softmax_xent_into(logits.data(), target, d.data_mut())?;
    Ok((loss, d))
}

pub fn add_backward<S: Scalar>(
    upstream: &Tensor<S>,
    ga: &mut Tensor<S>,
    gb: &mut Tensor<S>,
) -> Result<()> {
    ga.accumulate(upstream)?;
    gb.accumulate(upstream)
}

pub fn hadamard_backward<S: Scalar>(
    upstream: &Tensor<S>,
    a: &Tensor<S>,
    b: &Tensor<S>,
    ga: &mut Tensor<S>,
    gb: &mut Tensor<S>,
) -> Result<()> {
    ga.accumulate(&hadamard(upstream, b)?)?;
    gb.accumulate(&hadamard(upstream, a)?)
}

pub fn matvec_backward<S: Scalar>(
    upstream: &Tensor<S>,
    w: &Tensor<S>,
    v: &Tensor<S>,
    gw: &mut Tensor<S>,
    gv: &mut Tensor<S>,
) -> Result<()> {
    check_matvec(w, v)?;
    w.same_shape(gw, "matvec_backward")?;
    v.same_shape(gv, "matvec_backward")?;
    if upstream.shape() != Shape::Vector(w.rows()) {
        return Err(Error::Dimension {
            op: "matvec_backward",
            left: upstream.shape().dims(),
            right: vec![w.rows()],
        });
    }
    outer_acc(gw, upstream.data(), v.data());
    gemv_t_acc(w, upstream.data(), gv.data_mut());
    Ok(())
}

/// Uses the saved forward output `out = sigmoid(x)`.
pub fn sigmoid_backward<S: Scalar>(
    upstream: &Tensor<S>,
    out: &Tensor<S>,
    gin: &mut Tensor<S>,
) -> Result<()> {
    upstream.same_shape(out, "sigmoid_backward")?;
    gin.same_shape(out, "sigmoid_backward")?;
    for ((g, &u), &y) in gin.data_mut().iter_mut().zip(upstream.data()).zip(out.data()) {
        *g += u * y * (S::one() - y);
    }
    Ok(())
}

/// Uses the saved forward output `out = tanh(x)`.
pub fn tanh_backward<S: Scalar>(
    upstream: &Tensor<S>,
    out: &Tensor<S>,
    gin: &mut Tensor<S>,
) -> Result<()> {
    upstream.same_shape(out, "tanh_backward")?;
    gin.same_shape(out, "tanh_backward")?;
    for ((g, &u), &y) in gin.data_mut().iter_mut().zip(upstream.data()).zip(out.data()) {
        *g += u * (S::one() - y * y);
    }
    Ok(())
}
