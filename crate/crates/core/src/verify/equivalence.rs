//! One-step equivalence between the penalty loss and BPTT.
//!
//! With `l_pm(h) = l(h, y) + (lambda/2) ||g(x, h_prev) - h||^2`, the free
//! state initialized to `h = g(x, h_prev)` and one descent step
//! `h~ = h - eta * dl_pm/dh`, the cell-parameter gradient of `l_pm(h~)`
//! equals `eta * lambda` times the cell-parameter gradient of
//! `l(f(g(x, h_prev)), y)`.

use rand::Rng;
use serde::Serialize;

use crate::diffcore::Tensor;
use crate::error::Result;
use crate::model::{
    cell_backward, cell_forward, head_backward, predict_slice, seq_forward_backward, CellKind,
    ModelDims, ParamSet,
};
use crate::diffcore::ops::softmax_xent_into;
use crate::seed::rng_for;

pub const EQUIVALENCE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct EquivalenceSetup {
    pub cell: CellKind,
    pub dims: ModelDims,
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Offset added to the free state after initialization. Anything
    /// non-zero breaks the identity's first precondition.
    pub init_offset: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorDeviation {
    pub name: &'static str,
    /// `||lhs - eta*lambda*rhs|| / ||eta*lambda*rhs||` (0 when both vanish).
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub cell: CellKind,
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub init_offset: f64,
    pub tensors: Vec<TensorDeviation>,
    pub max_deviation: f64,
    /// Least-squares estimate of `lhs / rhs`; `eta * lambda` in theory.
    pub ratio: f64,
    pub expected_ratio: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the identity on a random instance (biases enabled).
pub fn check_equivalence(
    cell: CellKind,
    dims: ModelDims,
    eta: f64,
    lambda: f64,
    seed: u64,
) -> Result<EquivalenceReport> {
    check_equivalence_with(&EquivalenceSetup {
        cell,
        dims,
        eta,
        lambda,
        seed,
        init_offset: 0.0,
    })
}

pub fn check_equivalence_with(setup: &EquivalenceSetup) -> Result<EquivalenceReport> {
    let mut rng = rng_for(setup.seed, "verify/equivalence");
    let theta = ParamSet::<f64>::init_uniform(setup.cell, setup.dims, true, 0.5, &mut rng);
    let d_h = setup.dims.d_h;
    let h_prev = Tensor::from_fn(crate::diffcore::Shape::Vector(d_h), |_| rng.gen_range(-0.9..0.9));
    let x = rng.gen_range(0..setup.dims.vocab);
    let y = rng.gen_range(0..setup.dims.vocab);
    let (lambda, eta) = (setup.lambda, setup.eta);

    // free state h_t, initialized to the prediction g(x, h_prev)
    let (g, ctx) = cell_forward(&theta, x, &h_prev)?;
    let h: Vec<f64> = g.data().iter().map(|v| v + setup.init_offset).collect();

    // dl(h, y)/dh through the output head
    let logits = predict_slice(&theta, &h);
    let mut dlogits = vec![0.0; logits.len()];
    softmax_xent_into(&logits, y, &mut dlogits)?;
    let mut scratch = theta.zeros_like();
    let mut dl_dh = vec![0.0; d_h];
    head_backward(&theta, &h, &dlogits, &mut scratch, &mut dl_dh);

    // one vanilla descent step on l_pm
    let h_tilde: Vec<f64> = (0..d_h)
        .map(|i| h[i] - eta * (dl_dh[i] + lambda * (h[i] - g.data()[i])))
        .collect();

    // lhs: d/dθ of (lambda/2)||g_θ - h~||^2, the only θ-dependent term of l_pm(h~)
    let upstream: Vec<f64> = (0..d_h).map(|i| lambda * (g.data()[i] - h_tilde[i])).collect();
    let mut lhs = theta.zeros_like();
    cell_backward(&theta, &ctx, &upstream, &mut lhs);

    // rhs: d/dθ of l(f(g_θ(x, h_prev)), y), through the sequence path
    let mut rhs = theta.zeros_like();
    seq_forward_backward(&theta, &[x, y], &h_prev, &mut rhs)?;

    let scale = eta * lambda;
    let mut tensors = Vec::new();
    let (mut lr_dot, mut rr_dot) = (0.0, 0.0);
    for ((name, l), (_, r)) in lhs.named().into_iter().zip(rhs.named()) {
        if !ParamSet::<f64>::is_cell_tensor(name) {
            continue;
        }
        let mut diff = 0.0;
        let mut reference = 0.0;
        for (&a, &b) in l.data().iter().zip(r.data()) {
            diff += (a - scale * b).powi(2);
            reference += (scale * b).powi(2);
            lr_dot += a * b;
            rr_dot += b * b;
        }
        let deviation = if diff == 0.0 {
            0.0
        } else if reference == 0.0 {
            f64::INFINITY
        } else {
            (diff / reference).sqrt()
        };
        tensors.push(TensorDeviation { name, deviation });
    }
    let max_deviation = tensors.iter().map(|t| t.deviation).fold(0.0, f64::max);
    let ratio = if rr_dot > 0.0 { lr_dot / rr_dot } else { 0.0 };
    Ok(EquivalenceReport {
        cell: setup.cell,
        eta,
        lambda,
        seed: setup.seed,
        init_offset: setup.init_offset,
        tensors,
        max_deviation,
        ratio,
        expected_ratio: scale,
        tolerance: EQUIVALENCE_TOL,
        passed: max_deviation <= EQUIVALENCE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elman_reference_instance() {
        let r = check_equivalence(CellKind::Elman, ModelDims::square(7, 5), 0.1, 0.1, 3).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.ratio - 0.01).abs() < 1e-10);
    }

    #[test]
    fn zero_step_makes_both_sides_vanish() {
        let r = check_equivalence(CellKind::Gru, ModelDims::square(7, 5), 0.0, 0.1, 9).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn doubling_eta_doubles_lhs() {
        let a = check_equivalence(CellKind::Gru, ModelDims::square(6, 4), 0.01, 0.1, 5).unwrap();
        let b = check_equivalence(CellKind::Gru, ModelDims::square(6, 4), 0.02, 0.1, 5).unwrap();
        assert!((b.ratio / a.ratio - 2.0).abs() < 1e-9);
    }

    #[test]
    fn offset_initialization_breaks_identity() {
        let r = check_equivalence_with(&EquivalenceSetup {
            cell: CellKind::Elman,
            dims: ModelDims::square(7, 5),
            eta: 0.1,
            lambda: 0.1,
            seed: 3,
            init_offset: 0.05,
        })
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_deviation > 1e-3);
    }
}
