#![allow(dead_code)]

use rand::Rng;
use tprop_core::model::{CellKind, ModelDims, ParamSet};
use tprop_core::seed::rng_for;

pub const CELLS: [CellKind; 2] = [CellKind::Elman, CellKind::Gru];

pub fn random_theta(kind: CellKind, vocab: usize, d_h: usize, seed: u64) -> ParamSet<f64> {
    let mut rng = rng_for(seed, "test/theta");
    ParamSet::init_uniform(kind, ModelDims::square(vocab, d_h), true, 0.5, &mut rng)
}

pub fn random_stream(vocab: usize, len: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_for(seed, "test/stream");
    (0..len).map(|_| rng.gen_range(0..vocab)).collect()
}

pub fn random_vec(n: usize, scale: f64, seed: u64, label: &str) -> Vec<f64> {
    let mut rng = rng_for(seed, label);
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
