use serde::{Deserialize, Serialize};

/// One intra-domain batch update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Index of the domain the pair starts from.
    pub t: usize,
    pub outer_step: usize,
    pub lambda: f64,
    pub k: usize,
    pub rate: f64,
    /// Objective value before the first gradient step on this batch pair.
    pub loss: f64,
    /// Error on the evaluation subsample of domain `t + 1`, when tracked.
    pub err: Option<f64>,
    /// Squared norm of the change in the parameters this step updated.
    pub theta_drift_sq: f64,
    /// Input-Jacobian penalty on the upcoming batch.
    pub warmup_inter: Option<f64>,
}

/// One head update at a domain transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: usize,
    pub inter_before: f64,
    pub inter_after: f64,
    /// Mean of the warm-up penalties collected while training on the pair.
    pub warmup_mean: Option<f64>,
}

/// Trajectory of a run. Holds no wall-clock data, so identical inputs give
/// identical records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub sequence_fingerprint: String,
    pub outer_steps: usize,
    pub gradient_steps: usize,
    pub pretrain_loss: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub transitions: Vec<TransitionRecord>,
    /// Final-model accuracy on every domain's oracle labels, in order.
    pub domain_accuracy: Vec<f64>,
}
