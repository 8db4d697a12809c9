//! Central finite differences against every analytic backward path.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::btprop::{augmented_loss, penalty_value, residual, BlockPlan, DualStore, Exec, HiddenStore, Problem};
use crate::diffcore::ops::softmax_xent_into;
use crate::diffcore::Tensor;
use crate::error::Result;
use crate::model::{
    cell_backward, cell_forward_slice, forward_loss, head_backward, predict_slice,
    seq_forward_backward, CellKind, ModelDims, ParamSet,
};
use crate::seed::rng_for;

pub const FD_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Tolerance for the quadratic penalty, whose central difference is exact
/// up to rounding.
pub const PENALTY_TOL: f64 = 1e-10;
/// Central differences have no truncation error on a quadratic, so the
/// penalty path uses a larger power-of-two step to keep rounding out.
pub const PENALTY_FD_EPS: f64 = 1.0 / 128.0;
/// Denominator floor of the relative error, so that entries whose true
/// gradient is ~0 are judged by absolute error.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Relative errors between `analytic` and central differences of `f`
/// (step [`FD_EPS`]) around `x0`, one per coordinate.
pub fn central_difference_errors(
    analytic: &[f64],
    x0: &[f64],
    f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    central_difference_errors_with(FD_EPS, analytic, x0, f)
}

pub fn central_difference_errors_with(
    eps: f64,
    analytic: &[f64],
    x0: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        x[i] = x0[i] + eps;
        let up = f(&x)?;
        x[i] = x0[i] - eps;
        let down = f(&x)?;
        x[i] = x0[i];
        out.push(rel_err(analytic[i], (up - down) / (2.0 * eps)));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct PathReport {
    pub path: String,
    pub coordinates: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PathReport {
    fn new(path: &str, errs: &[f64], tolerance: f64) -> Self {
        let max_rel_err = errs.iter().copied().fold(0.0, f64::max);
        PathReport {
            path: path.to_owned(),
            coordinates: errs.len(),
            max_rel_err,
            tolerance,
            passed: max_rel_err <= tolerance && errs.iter().all(|e| e.is_finite()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub paths: Vec<PathReport>,
    pub passed: bool,
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn random_params(rng: &mut ChaCha8Rng, cell: CellKind, dims: ModelDims) -> ParamSet<f64> {
    ParamSet::init_uniform(cell, dims, true, 1.0, rng)
}

fn with_flat(template: &ParamSet<f64>, flat: &[f64]) -> Result<ParamSet<f64>> {
    let mut p = template.clone();
    p.assign_flat(flat)?;
    Ok(p)
}

/// One cell step under a random linear read-out `sum_i w_i h_i`: checks
/// every parameter and the previous state.
fn cell_path(rng: &mut ChaCha8Rng, cell: CellKind, name: &str) -> Result<PathReport> {
    let dims = ModelDims { vocab: 7, d_in: 3, d_h: 4 };
    let theta = random_params(rng, cell, dims);
    let h_prev = random_vec(rng, dims.d_h, 0.9);
    let token = rng.gen_range(0..dims.vocab);
    let w = random_vec(rng, dims.d_h, 2.0);
    let objective = |p: &ParamSet<f64>, h: &[f64]| -> Result<f64> {
        let ctx = cell_forward_slice(p, token, h)?;
        Ok(ctx.output().iter().zip(&w).map(|(a, b)| a * b).sum())
    };

    let mut grads = theta.zeros_like();
    let ctx = cell_forward_slice(&theta, token, &h_prev)?;
    let dh_prev = cell_backward(&theta, &ctx, &w, &mut grads);

    let mut errs = central_difference_errors(&grads.flatten(), &theta.flatten(), |x| {
        objective(&with_flat(&theta, x)?, &h_prev)
    })?;
    errs.extend(central_difference_errors(&dh_prev, &h_prev, |x| objective(&theta, x))?);
    Ok(PathReport::new(name, &errs, GRADCHECK_TOL))
}

/// Cross-entropy of the output head: `W_y`, `b_y` and the hidden state.
fn head_path(rng: &mut ChaCha8Rng) -> Result<PathReport> {
    let dims = ModelDims { vocab: 7, d_in: 3, d_h: 4 };
    let theta = random_params(rng, CellKind::Elman, dims);
    let h = random_vec(rng, dims.d_h, 1.0);
    let y = rng.gen_range(0..dims.vocab);
    let objective = |p: &ParamSet<f64>, h: &[f64]| -> Result<f64> {
        let logits = predict_slice(p, h);
        let mut d = vec![0.0; logits.len()];
        softmax_xent_into(&logits, y, &mut d)
    };
    let logits = predict_slice(&theta, &h);
    let mut dl = vec![0.0; logits.len()];
    softmax_xent_into(&logits, y, &mut dl)?;
    let mut grads = theta.zeros_like();
    let mut dh = vec![0.0; dims.d_h];
    head_backward(&theta, &h, &dl, &mut grads, &mut dh);

    let mut errs = Vec::new();
    // only the head tensors carry gradient here
    let w_y_len = theta.w_y.len();
    let head_x: Vec<f64> = theta.w_y.data().iter().chain(theta.b_y.data()).copied().collect();
    let head_g: Vec<f64> = grads.w_y.data().iter().chain(grads.b_y.data()).copied().collect();
    errs.extend(central_difference_errors(&head_g, &head_x, |x| {
        let mut p = theta.clone();
        p.w_y.data_mut().copy_from_slice(&x[..w_y_len]);
        p.b_y.data_mut().copy_from_slice(&x[w_y_len..]);
        objective(&p, &h)
    })?);
    errs.extend(central_difference_errors(&dh, &h, |x| objective(&theta, x))?);
    Ok(PathReport::new("lm_head", &errs, GRADCHECK_TOL))
}

/// Unrolled sequence loss: all parameters and the initial state.
fn sequence_path(rng: &mut ChaCha8Rng, cell: CellKind, name: &str) -> Result<PathReport> {
    let dims = ModelDims { vocab: 6, d_in: 3, d_h: 4 };
    let theta = random_params(rng, cell, dims);
    let tokens: Vec<usize> = (0..6).map(|_| rng.gen_range(0..dims.vocab)).collect();
    let h0 = random_vec(rng, dims.d_h, 0.9);
    let mut grads = theta.zeros_like();
    let r = seq_forward_backward(&theta, &tokens, &Tensor::from_vec(h0.clone()), &mut grads)?;
    let mut errs = central_difference_errors(&grads.flatten(), &theta.flatten(), |x| {
        Ok(forward_loss(&with_flat(&theta, x)?, &tokens, &h0)?.0)
    })?;
    errs.extend(central_difference_errors(r.dh_init.data(), &h0, |x| {
        Ok(forward_loss(&theta, &tokens, x)?.0)
    })?);
    Ok(PathReport::new(name, &errs, GRADCHECK_TOL))
}

/// The isolated penalty `(lambda/2)||h - h_hat + u||^2` in each argument.
fn penalty_path(rng: &mut ChaCha8Rng) -> Result<PathReport> {
    let n = 5;
    let lambda = rng.gen_range(0.1..2.0);
    let h = random_vec(rng, n, 1.0);
    let p = random_vec(rng, n, 1.0);
    let u = random_vec(rng, n, 0.5);
    let r = residual(&h, &p, &u);
    let dh: Vec<f64> = r.iter().map(|x| lambda * x).collect();
    let dp: Vec<f64> = r.iter().map(|x| -lambda * x).collect();
    let fd = |a: &[f64], x0: &[f64], f: &dyn Fn(&[f64]) -> f64| {
        central_difference_errors_with(PENALTY_FD_EPS, a, x0, |x| Ok(f(x)))
    };
    let mut errs = fd(&dh, &h, &|x| penalty_value(lambda, &residual(x, &p, &u)))?;
    errs.extend(fd(&dp, &p, &|x| penalty_value(lambda, &residual(&h, x, &u)))?);
    errs.extend(fd(&dh, &u, &|x| penalty_value(lambda, &residual(&h, &p, x)))?);
    Ok(PathReport::new("penalty", &errs, PENALTY_TOL))
}

/// A 3-block instance of the augmented loss with non-zero residuals and
/// duals: θ, every free variable, and every dual.
fn block_paths(rng: &mut ChaCha8Rng, cell: CellKind, prefix: &str) -> Result<Vec<PathReport>> {
    let dims = ModelDims { vocab: 6, d_in: 3, d_h: 4 };
    let theta = random_params(rng, cell, dims);
    let block_len = 3;
    let tokens: Vec<usize> = (0..3 * block_len + 1).map(|_| rng.gen_range(0..dims.vocab)).collect();
    let plan = BlockPlan::new(tokens.len(), block_len)?;
    assert_eq!(plan.len(), 3);
    let h_start = random_vec(rng, dims.d_h, 0.9);
    let lambda = rng.gen_range(0.2..1.5);
    let problem = Problem {
        tokens: &tokens,
        plan: &plan,
        h_start: &h_start,
        lambda,
    };
    let hidden = HiddenStore::from_states((0..plan.len()).map(|_| random_vec(rng, dims.d_h, 0.9)).collect());
    let mut duals = DualStore::zeros(plan.len(), dims.d_h);
    for u in &mut duals.u {
        u.data_mut().copy_from_slice(&random_vec(rng, dims.d_h, 0.3));
    }
    let exec = Exec::sequential();
    let eval = augmented_loss(&problem, &theta, &hidden, &duals, true, &exec)?;
    let value = |p: &ParamSet<f64>, h: &HiddenStore<f64>, u: &DualStore<f64>| -> Result<f64> {
        Ok(augmented_loss(&problem, p, h, u, false, &exec)?.loss)
    };

    let theta_g = eval.theta_grad.as_ref().expect("gradients").flatten();
    let theta_errs = central_difference_errors(&theta_g, &theta.flatten(), |x| {
        value(&with_flat(&theta, x)?, &hidden, &duals)
    })?;

    let flat_h: Vec<f64> = hidden.h.iter().flat_map(|t| t.data().to_vec()).collect();
    let flat_hg: Vec<f64> = eval.h_grad.iter().flat_map(|t| t.data().to_vec()).collect();
    let h_errs = central_difference_errors(&flat_hg, &flat_h, |x| {
        let states = x.chunks(dims.d_h).map(<[f64]>::to_vec).collect();
        value(&theta, &HiddenStore::from_states(states), &duals)
    })?;

    // dL/du_b = lambda (h_b - h_hat_b + u_b)
    let flat_u: Vec<f64> = duals.u.iter().flat_map(|t| t.data().to_vec()).collect();
    let flat_ug: Vec<f64> = hidden
        .h
        .iter()
        .zip(&eval.h_hat)
        .zip(&duals.u)
        .flat_map(|((h, p), u)| residual(h.data(), p, u.data()).into_iter().map(|r| lambda * r))
        .collect();
    let u_errs = central_difference_errors(&flat_ug, &flat_u, |x| {
        let mut d = duals.clone();
        for (t, chunk) in d.u.iter_mut().zip(x.chunks(dims.d_h)) {
            t.data_mut().copy_from_slice(chunk);
        }
        value(&theta, &hidden, &d)
    })?;

    Ok(vec![
        PathReport::new(&format!("{prefix}_blocks_theta"), &theta_errs, GRADCHECK_TOL),
        PathReport::new(&format!("{prefix}_blocks_free_variables"), &h_errs, GRADCHECK_TOL),
        PathReport::new(&format!("{prefix}_blocks_duals"), &u_errs, GRADCHECK_TOL),
    ])
}

/// Audits every gradient path on instances drawn from `seed`.
pub fn gradcheck_all(seed: u64) -> Result<GradcheckReport> {
    let mut rng = rng_for(seed, "verify/gradcheck");
    let mut paths = vec![
        cell_path(&mut rng, CellKind::Elman, "elman_cell")?,
        cell_path(&mut rng, CellKind::Gru, "gru_cell")?,
        head_path(&mut rng)?,
        sequence_path(&mut rng, CellKind::Elman, "elman_sequence")?,
        sequence_path(&mut rng, CellKind::Gru, "gru_sequence")?,
        penalty_path(&mut rng)?,
    ];
    paths.extend(block_paths(&mut rng, CellKind::Elman, "elman")?);
    paths.extend(block_paths(&mut rng, CellKind::Gru, "gru")?);
    let passed = paths.iter().all(|p| p.passed);
    Ok(GradcheckReport { seed, paths, passed })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_paths_pass_for_a_few_seeds() {
        for seed in 0..3 {
            let r = gradcheck_all(seed).unwrap();
            for p in &r.paths {
                eprintln!("{seed} {:<28} {:>4} {:.3e}", p.path, p.coordinates, p.max_rel_err);
            }
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn rel_err_floor() {
        assert_eq!(rel_err(1.0, 1.0), 0.0);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((rel_err(0.0, 1e-9) - 1e-3).abs() < 1e-12);
    }
}
