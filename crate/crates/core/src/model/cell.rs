//! One step of the recurrence `h_t = g(x_t, h_{t-1})` and the output head.

use crate::diffcore::ops::{gemv_acc, gemv_t_acc, outer_acc, sigmoid_scalar};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::{CellParams, ParamSet};

/// Activations saved by [`cell_forward`] for [`cell_backward`].
#[derive(Clone, Debug)]
pub enum StepContext<S> {
    Elman {
        token: usize,
        h_prev: Vec<S>,
        h: Vec<S>,
    },
    Gru {
        token: usize,
        h_prev: Vec<S>,
        z: Vec<S>,
        r: Vec<S>,
        /// `r * h_prev`
        rh: Vec<S>,
        c: Vec<S>,
        h: Vec<S>,
    },
}

impl<S: Scalar> StepContext<S> {
    pub fn output(&self) -> &[S] {
        match self {
            StepContext::Elman { h, .. } | StepContext::Gru { h, .. } => h,
        }
    }
}

fn check_token<S: Scalar>(theta: &ParamSet<S>, token: usize) -> Result<()> {
    if token >= theta.dims.vocab {
        return Err(Error::Index {
            index: token,
            bound: theta.dims.vocab,
        });
    }
    Ok(())
}

fn check_hidden<S: Scalar>(theta: &ParamSet<S>, h: &[S], op: &'static str) -> Result<()> {
    if h.len() != theta.dims.d_h {
        return Err(Error::Dimension {
            op,
            left: vec![theta.dims.d_h],
            right: vec![h.len()],
        });
    }
    Ok(())
}

/// Pre-activation `W e(x) + U h + b` into a fresh buffer.
#[inline]
fn affine<S: Scalar>(w: &Tensor<S>, e: &[S], u: &Tensor<S>, h: &[S], b: Option<&Tensor<S>>) -> Vec<S> {
    let mut a = match b {
        Some(b) => b.data().to_vec(),
        None => vec![S::zero(); u.rows()],
    };
    gemv_acc(w, e, &mut a);
    gemv_acc(u, h, &mut a);
    a
}

/// Elman: `h = sigmoid(W_x e + W_h h_prev + b)`.
/// GRU: `z = sigmoid(W_z e + U_z h + b_z)`, `r = sigmoid(W_r e + U_r h + b_r)`,
/// `c = tanh(W_c e + U_c (r*h) + b_c)`, `h' = (1 - z) * h + z * c`.
pub fn cell_forward_slice<S: Scalar>(
    theta: &ParamSet<S>,
    token: usize,
    h_prev: &[S],
) -> Result<StepContext<S>> {
    check_token(theta, token)?;
    check_hidden(theta, h_prev, "cell_forward")?;
    let e = theta.embedding.row(token);
    let bias = theta.bias;
    match &theta.cell {
        CellParams::Elman { w_x, w_h, b } => {
            let mut h = affine(w_x, e, w_h, h_prev, bias.then_some(b));
            h.iter_mut().for_each(|x| *x = sigmoid_scalar(*x));
            Ok(StepContext::Elman {
                token,
                h_prev: h_prev.to_vec(),
                h,
            })
        }
        CellParams::Gru {
            w_z,
            w_r,
            w_c,
            u_z,
            u_r,
            u_c,
            b_z,
            b_r,
            b_c,
        } => {
            let mut z = affine(w_z, e, u_z, h_prev, bias.then_some(b_z));
            z.iter_mut().for_each(|x| *x = sigmoid_scalar(*x));
            let mut r = affine(w_r, e, u_r, h_prev, bias.then_some(b_r));
            r.iter_mut().for_each(|x| *x = sigmoid_scalar(*x));
            let rh: Vec<S> = r.iter().zip(h_prev).map(|(&a, &b)| a * b).collect();
            let mut c = affine(w_c, e, u_c, &rh, bias.then_some(b_c));
            c.iter_mut().for_each(|x| *x = x.tanh());
            let h = h_prev
                .iter()
                .zip(&z)
                .zip(&c)
                .map(|((&hp, &zi), &ci)| (S::one() - zi) * hp + zi * ci)
                .collect();
            Ok(StepContext::Gru {
                token,
                h_prev: h_prev.to_vec(),
                z,
                r,
                rh,
                c,
                h,
            })
        }
    }
}

pub fn cell_forward<S: Scalar>(
    theta: &ParamSet<S>,
    token: usize,
    h_prev: &Tensor<S>,
) -> Result<(Tensor<S>, StepContext<S>)> {
    let ctx = cell_forward_slice(theta, token, h_prev.data())?;
    Ok((Tensor::from_vec(ctx.output().to_vec()), ctx))
}

/// Accumulates the cell's parameter gradients for upstream `dh` into
/// `grads` and returns the gradient with respect to `h_prev`.
pub fn cell_backward<S: Scalar>(
    theta: &ParamSet<S>,
    ctx: &StepContext<S>,
    dh: &[S],
    grads: &mut ParamSet<S>,
) -> Vec<S> {
    let bias = theta.bias;
    let d_in = theta.dims.d_in;
    let mut de = vec![S::zero(); d_in];
    let (token, dh_prev) = match (ctx, &theta.cell, &mut grads.cell) {
        (
            StepContext::Elman { token, h_prev, h },
            CellParams::Elman { w_x, w_h, .. },
            CellParams::Elman {
                w_x: g_wx,
                w_h: g_wh,
                b: g_b,
            },
        ) => {
            let da: Vec<S> = dh
                .iter()
                .zip(h)
                .map(|(&g, &y)| g * y * (S::one() - y))
                .collect();
            let e = theta.embedding.row(*token);
            outer_acc(g_wx, &da, e);
            outer_acc(g_wh, &da, h_prev);
            if bias {
                g_b.data_mut().iter_mut().zip(&da).for_each(|(b, &d)| *b += d);
            }
            gemv_t_acc(w_x, &da, &mut de);
            let mut dh_prev = vec![S::zero(); h_prev.len()];
            gemv_t_acc(w_h, &da, &mut dh_prev);
            (*token, dh_prev)
        }
        (
            StepContext::Gru {
                token,
                h_prev,
                z,
                r,
                rh,
                c,
                ..
            },
            CellParams::Gru {
                w_z,
                w_r,
                w_c,
                u_z,
                u_r,
                u_c,
                ..
            },
            CellParams::Gru {
                w_z: g_wz,
                w_r: g_wr,
                w_c: g_wc,
                u_z: g_uz,
                u_r: g_ur,
                u_c: g_uc,
                b_z: g_bz,
                b_r: g_br,
                b_c: g_bc,
            },
        ) => {
            let e = theta.embedding.row(*token);
            let n = h_prev.len();
            let mut dh_prev: Vec<S> = dh.iter().zip(z).map(|(&g, &zi)| g * (S::one() - zi)).collect();

            // candidate
            let da_c: Vec<S> = (0..n)
                .map(|i| dh[i] * z[i] * (S::one() - c[i] * c[i]))
                .collect();
            outer_acc(g_wc, &da_c, e);
            outer_acc(g_uc, &da_c, rh);
            gemv_t_acc(w_c, &da_c, &mut de);
            let mut drh = vec![S::zero(); n];
            gemv_t_acc(u_c, &da_c, &mut drh);

            // reset gate
            let da_r: Vec<S> = (0..n)
                .map(|i| drh[i] * h_prev[i] * r[i] * (S::one() - r[i]))
                .collect();
            for i in 0..n {
                dh_prev[i] += drh[i] * r[i];
            }
            outer_acc(g_wr, &da_r, e);
            outer_acc(g_ur, &da_r, h_prev);
            gemv_t_acc(w_r, &da_r, &mut de);
            gemv_t_acc(u_r, &da_r, &mut dh_prev);

            // update gate
            let da_z: Vec<S> = (0..n)
                .map(|i| dh[i] * (c[i] - h_prev[i]) * z[i] * (S::one() - z[i]))
                .collect();
            outer_acc(g_wz, &da_z, e);
            outer_acc(g_uz, &da_z, h_prev);
            gemv_t_acc(w_z, &da_z, &mut de);
            gemv_t_acc(u_z, &da_z, &mut dh_prev);

            if bias {
                for (g, d) in [(g_bz, &da_z), (g_br, &da_r), (g_bc, &da_c)] {
                    g.data_mut().iter_mut().zip(d).for_each(|(b, &x)| *b += x);
                }
            }
            (*token, dh_prev)
        }
        _ => unreachable!("step context, parameters and gradients disagree on cell kind"),
    };
    accumulate_embedding(grads, token, &de);
    dh_prev
}

fn accumulate_embedding<S: Scalar>(grads: &mut ParamSet<S>, token: usize, de: &[S]) {
    grads
        .embedding
        .row_mut(token)
        .iter_mut()
        .zip(de)
        .for_each(|(g, &d)| *g += d);
}

/// Output logits `W_y h + b_y`.
pub fn predict_slice<S: Scalar>(theta: &ParamSet<S>, h: &[S]) -> Vec<S> {
    let mut logits = if theta.bias {
        theta.b_y.data().to_vec()
    } else {
        vec![S::zero(); theta.dims.vocab]
    };
    gemv_acc(&theta.w_y, h, &mut logits);
    logits
}

pub fn predict<S: Scalar>(theta: &ParamSet<S>, h: &Tensor<S>) -> Result<Tensor<S>> {
    check_hidden(theta, h.data(), "predict")?;
    Ok(Tensor::from_vec(predict_slice(theta, h.data())))
}

/// Accumulates head gradients for `dlogits` and adds `W_y^T dlogits` into `dh`.
pub fn head_backward<S: Scalar>(
    theta: &ParamSet<S>,
    h: &[S],
    dlogits: &[S],
    grads: &mut ParamSet<S>,
    dh: &mut [S],
) {
    outer_acc(&mut grads.w_y, dlogits, h);
    if theta.bias {
        grads
            .b_y
            .data_mut()
            .iter_mut()
            .zip(dlogits)
            .for_each(|(b, &d)| *b += d);
    }
    gemv_t_acc(&theta.w_y, dlogits, dh);
}
