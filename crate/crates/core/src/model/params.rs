use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Elman,
    Gru,
}

impl CellKind {
    pub fn code(self) -> u8 {
        match self {
            CellKind::Elman => 0,
            CellKind::Gru => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(CellKind::Elman),
            1 => Ok(CellKind::Gru),
            other => Err(Error::Format(format!("unknown cell kind {other}"))),
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Elman => "elman",
            CellKind::Gru => "gru",
        })
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elman" => Ok(CellKind::Elman),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!("unknown cell kind '{other}'"))),
        }
    }
}

/// Vocabulary size, input embedding width and hidden width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub d_in: usize,
    pub d_h: usize,
}

impl ModelDims {
    /// Embedding width defaults to the hidden width.
    pub fn square(vocab: usize, d_h: usize) -> Self {
        ModelDims {
            vocab,
            d_in: d_h,
            d_h,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellParams<S> {
    Elman {
        w_x: Tensor<S>,
        w_h: Tensor<S>,
        b: Tensor<S>,
    },
    Gru {
        w_z: Tensor<S>,
        w_r: Tensor<S>,
        w_c: Tensor<S>,
        u_z: Tensor<S>,
        u_r: Tensor<S>,
        u_c: Tensor<S>,
        b_z: Tensor<S>,
        b_r: Tensor<S>,
        b_c: Tensor<S>,
    },
}

/// Model parameters. The same type doubles as the gradient buffer for a
/// model (see [`ParamSet::zeros_like`]).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<S> {
    pub kind: CellKind,
    pub dims: ModelDims,
    /// When false, bias tensors stay zero, are skipped by every update and
    /// are not serialized.
    pub bias: bool,
    pub embedding: Tensor<S>,
    pub cell: CellParams<S>,
    pub w_y: Tensor<S>,
    pub b_y: Tensor<S>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn zeros(kind: CellKind, dims: ModelDims, bias: bool) -> Self {
        let ModelDims { vocab, d_in, d_h } = dims;
        let m = |r, c| Tensor::zeros(Shape::Matrix(r, c));
        let v = |n| Tensor::zeros(Shape::Vector(n));
        let cell = match kind {
            CellKind::Elman => CellParams::Elman {
                w_x: m(d_h, d_in),
                w_h: m(d_h, d_h),
                b: v(d_h),
            },
            CellKind::Gru => CellParams::Gru {
                w_z: m(d_h, d_in),
                w_r: m(d_h, d_in),
                w_c: m(d_h, d_in),
                u_z: m(d_h, d_h),
                u_r: m(d_h, d_h),
                u_c: m(d_h, d_h),
                b_z: v(d_h),
                b_r: v(d_h),
                b_c: v(d_h),
            },
        };
        ParamSet {
            kind,
            dims,
            bias,
            embedding: m(vocab, d_in),
            cell,
            w_y: m(vocab, d_h),
            b_y: v(vocab),
        }
    }

    /// Weights uniform in `[-1/sqrt(d_h), 1/sqrt(d_h)]`, biases zero.
    pub fn init<R: Rng>(kind: CellKind, dims: ModelDims, bias: bool, rng: &mut R) -> Self {
        let scale = 1.0 / (dims.d_h as f64).sqrt();
        let mut p = Self::zeros(kind, dims, bias);
        p.fill_uniform(scale, false, rng);
        p
    }

    /// Every tensor, biases included when enabled, uniform in `[-scale, scale]`.
    pub fn init_uniform<R: Rng>(
        kind: CellKind,
        dims: ModelDims,
        bias: bool,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(kind, dims, bias);
        p.fill_uniform(scale, true, rng);
        p
    }

    fn fill_uniform<R: Rng>(&mut self, scale: f64, biases: bool, rng: &mut R) {
        for (name, t) in self.named_mut() {
            if !biases && name.starts_with("b") {
                continue;
            }
            for x in t.data_mut() {
                *x = S::lit(rng.gen_range(-scale..=scale));
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.dims, self.bias)
    }

    /// Named tensors in a fixed order. Biases are omitted when disabled.
    pub fn named(&self) -> Vec<(&'static str, &Tensor<S>)> {
        let mut out: Vec<(&'static str, &Tensor<S>)> = vec![("embedding", &self.embedding)];
        match &self.cell {
            CellParams::Elman { w_x, w_h, b } => {
                out.push(("w_x", w_x));
                out.push(("w_h", w_h));
                if self.bias {
                    out.push(("b", b));
                }
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
                out.extend([
                    ("w_z", w_z),
                    ("w_r", w_r),
                    ("w_c", w_c),
                    ("u_z", u_z),
                    ("u_r", u_r),
                    ("u_c", u_c),
                ]);
                if self.bias {
                    out.extend([("b_z", b_z), ("b_r", b_r), ("b_c", b_c)]);
                }
            }
        }
        out.push(("w_y", &self.w_y));
        if self.bias {
            out.push(("b_y", &self.b_y));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor<S>)> {
        let bias = self.bias;
        let mut out: Vec<(&'static str, &mut Tensor<S>)> = vec![("embedding", &mut self.embedding)];
        match &mut self.cell {
            CellParams::Elman { w_x, w_h, b } => {
                out.push(("w_x", w_x));
                out.push(("w_h", w_h));
                if bias {
                    out.push(("b", b));
                }
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
                out.extend([
                    ("w_z", w_z),
                    ("w_r", w_r),
                    ("w_c", w_c),
                    ("u_z", u_z),
                    ("u_r", u_r),
                    ("u_c", u_c),
                ]);
                if bias {
                    out.extend([("b_z", b_z), ("b_r", b_r), ("b_c", b_c)]);
                }
            }
        }
        out.push(("w_y", &mut self.w_y));
        if bias {
            out.push(("b_y", &mut self.b_y));
        }
        out
    }

    /// Names of the recurrent-cell tensors (the parameters of `g`).
    pub fn is_cell_tensor(name: &str) -> bool {
        !matches!(name, "embedding" | "w_y" | "b_y")
    }

    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.named_mut().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor::fill_zero);
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind || self.dims != other.dims || self.bias != other.bias {
            return Err(Error::Dimension {
                op: "param_set",
                left: vec![self.dims.vocab, self.dims.d_in, self.dims.d_h],
                right: vec![other.dims.vocab, other.dims.d_in, other.dims.d_h],
            });
        }
        Ok(())
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.accumulate(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: S) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(alpha));
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<S> {
        self.check_compatible(other)?;
        let mut m = S::zero();
        for (a, b) in self.tensors().into_iter().zip(other.tensors()) {
            m = m.max(a.max_abs_diff(b)?);
        }
        Ok(m)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Overwrites every tensor from a flat slice in `named()` order.
    pub fn assign_flat(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension {
                op: "assign_flat",
                left: vec![self.num_params()],
                right: vec![flat.len()],
            });
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Flat copy of every tensor in `named()` order.
    pub fn flatten(&self) -> Vec<S> {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}
