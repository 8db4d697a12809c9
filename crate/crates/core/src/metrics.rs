use serde::{Deserialize, Serialize};

/// One record per epoch (or batch-regime outer iteration).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean prediction loss over the training transitions, nats/token.
    pub train_loss: f64,
    pub valid_ppl: Option<f64>,
    /// Mean `||h - h_hat||_2` over boundaries (target propagation only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h_backtracks: Option<usize>,
    /// Largest θ-gradient deviation from the BPTT oracle, when sampled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle_max_diff: Option<f64>,
    /// Wall-clock seconds; kept out of serialized records so that reruns
    /// are byte-identical.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Batch,
    Minibatch,
}

impl std::str::FromStr for Regime {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "batch" => Ok(Regime::Batch),
            "minibatch" => Ok(Regime::Minibatch),
            other => Err(crate::error::Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}
