//! Frozen-parameter evaluation over the plain recurrence from `h = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward_loss, ParamSet};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Number of predicted tokens (stream length minus one).
    pub tokens: usize,
    /// Mean negative log-likelihood, nats per token.
    pub nll: f64,
    pub perplexity: f64,
}

impl EvalResult {
    pub fn from_total(total_nll: f64, tokens: usize) -> Self {
        let nll = total_nll / tokens as f64;
        EvalResult {
            tokens,
            nll,
            perplexity: nll.exp(),
        }
    }
}

/// Single untruncated pass over `stream`.
pub fn evaluate<S: Scalar>(theta: &ParamSet<S>, stream: &[usize]) -> Result<EvalResult> {
    if stream.len() < 2 {
        return Err(Error::Argument(format!(
            "evaluation stream needs at least 2 tokens, got {}",
            stream.len()
        )));
    }
    let h0 = vec![S::zero(); theta.dims.d_h];
    let (loss, _) = forward_loss(theta, stream, &h0)?;
    Ok(EvalResult::from_total(loss.to_f64_lossy(), stream.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellKind, ModelDims};

    #[test]
    fn zero_model_has_vocab_perplexity() {
        let theta = ParamSet::<f64>::zeros(CellKind::Gru, ModelDims::square(27, 5), true);
        let stream: Vec<usize> = (0..200).map(|i| (i * 7) % 27).collect();
        let r = evaluate(&theta, &stream).unwrap();
        assert!((r.perplexity - 27.0).abs() < 1e-9);
        assert_eq!(r.tokens, 199);
        assert!((r.perplexity - r.nll.exp()).abs() < 1e-12);
    }

    #[test]
    fn short_stream_rejected() {
        let theta = ParamSet::<f64>::zeros(CellKind::Elman, ModelDims::square(3, 2), true);
        assert!(matches!(evaluate(&theta, &[1]), Err(Error::Argument(_))));
    }
}
