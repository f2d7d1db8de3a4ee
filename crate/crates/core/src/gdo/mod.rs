//! Gradual domain osmosis.
//!
//! For every consecutive pair `(D_t, D_{t+1})` the loop walks a lambda grid
//! towards 1. At each lambda it runs a batch loop minimising
//!
//! ```text
//! (1−λ)·CE(C′ on B_t, ŷ_ref) + λ·CE(C′ on B_{t+1}, ŷ_ref)
//!     + α·margin(C′ on B_{t+1}) + β·KL(C′ ‖ C_ref on B_t ∪ B_{t+1})
//! ```
//!
//! where `ŷ_ref` are hard pseudo-labels from a frozen reference model that
//! is replaced by the updated model at the end of every batch. The feature
//! extractor moves per batch; the head moves once per pair by a step on the
//! input-Jacobian penalty.

mod config;
mod record;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use config::{lambda_grid, total_outer_steps, GdoConfig, HeadMode};
pub use record::{RunRecord, StepRecord, TransitionRecord};

use crate::baselines::train_source_with_trace;
use crate::domains::{make_batches, BatchPlan, Dataset, DomainSequence};
use crate::ndnn::{
    input_jacobian_sqnorm, jacobian_sqnorm_value, kl_to_reference, margin_loss, predict, schedule_rate,
    sgd_step, softmax_ce, DenseMatrix, LogitLoss, LossBundle, MlpModel, ParamBlock,
};
use crate::rng::{self, tag};
use crate::theory::err_rate;
use crate::{Error, Result};

/// Hard pseudo-labels: per-row argmax of the logits, lowest index on ties.
pub fn pseudo_labels(model: &MlpModel, x: &DenseMatrix) -> Result<Vec<usize>> {
    predict(model, x)
}

/// The lambda-weighted self-training objective and its gradient for both
/// parameter blocks. Pseudo-labels and the distillation target come from
/// `ref_model`, which is treated as a constant.
pub fn weighted_st_objective(
    model: &MlpModel,
    ref_model: &MlpModel,
    batch_i: &Dataset,
    batch_next: &Dataset,
    lambda: f64,
    cfg: &GdoConfig,
) -> Result<LossBundle> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let k = model.num_classes();
    let n_i = batch_i.len() as f64;
    let n_n = batch_next.len() as f64;
    let w_cur = 1.0 - lambda;
    let w_next = lambda;

    let cache_i = model.forward_cached(&batch_i.x)?;
    let mut term_i = LogitLoss::zeros(batch_i.len(), k);
    if w_cur > 0.0 {
        let labels = pseudo_labels(ref_model, &batch_i.x)?;
        term_i.add_scaled(w_cur, &softmax_ce(&cache_i.logits, &labels)?)?;
    }

    let needs_next = w_next > 0.0 || cfg.alpha > 0.0 || cfg.beta > 0.0;
    let mut next = if needs_next {
        let cache_n = model.forward_cached(&batch_next.x)?;
        let mut term_n = LogitLoss::zeros(batch_next.len(), k);
        if w_next > 0.0 {
            let labels = pseudo_labels(ref_model, &batch_next.x)?;
            term_n.add_scaled(w_next, &softmax_ce(&cache_n.logits, &labels)?)?;
        }
        if cfg.alpha > 0.0 {
            term_n.add_scaled(cfg.alpha, &margin_loss(&cache_n.logits)?)?;
        }
        Some((cache_n, term_n))
    } else {
        None
    };

    if cfg.beta > 0.0 {
        // KL over the union equals the size-weighted mean of the two parts.
        let total = n_i + n_n;
        let ref_i = ref_model.forward(&batch_i.x)?;
        term_i.add_scaled(cfg.beta * n_i / total, &kl_to_reference(&cache_i.logits, &ref_i)?)?;
        if let Some((cache_n, term_n)) = next.as_mut() {
            let ref_n = ref_model.forward(&batch_next.x)?;
            term_n.add_scaled(cfg.beta * n_n / total, &kl_to_reference(&cache_n.logits, &ref_n)?)?;
        }
    }

    let mut bundle = LossBundle::backprop(model, &cache_i, &term_i)?;
    if let Some((cache_n, term_n)) = next {
        bundle.add_scaled(1.0, &LossBundle::backprop(model, &cache_n, &term_n)?);
    }
    Ok(bundle)
}

/// Model under adaptation plus the frozen reference it distils from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: MlpModel,
    pub ref_model: MlpModel,
    /// Index of the domain the current pair starts from.
    pub t: usize,
    /// Batch updates completed in the current pair.
    pub k: usize,
    /// Outer steps completed after source training.
    pub outer_step: usize,
    pub trajectory: RunRecord,
}

impl TrainState {
    pub fn new(model: MlpModel) -> Self {
        Self {
            ref_model: model.clone(),
            model,
            t: 0,
            k: 0,
            outer_step: 0,
            trajectory: RunRecord {
                method: "gdo".into(),
                ..RunRecord::default()
            },
        }
    }

    /// Step size of the current outer step.
    pub fn rate(&self, cfg: &GdoConfig) -> f64 {
        schedule_rate(&cfg.lr, self.outer_step)
    }
}

fn block_params(model: &MlpModel, block: ParamBlock) -> Vec<f64> {
    match block {
        ParamBlock::Theta => model.flatten_theta(),
        ParamBlock::Phi => model.flatten_phi(),
        ParamBlock::Both => model.flatten(),
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `epochs_per_step` gradient steps on the weighted objective at `lambda`,
/// then the reference model is refreshed and `k` advances. Which block moves
/// is set by `cfg.head_mode`; in strict mode the head is left bit-identical.
pub fn intra_update(
    mut state: TrainState,
    batch_cur: &Dataset,
    batch_next: &Dataset,
    lambda: f64,
    cfg: &GdoConfig,
) -> Result<TrainState> {
    let block = cfg.head_mode.intra_block();
    let rate = state.rate(cfg);
    let before = block_params(&state.model, block);
    let mut model = state.model;
    let mut first_loss = None;
    for _ in 0..cfg.epochs_per_step {
        let bundle = weighted_st_objective(&model, &state.ref_model, batch_cur, batch_next, lambda, cfg)?;
        first_loss.get_or_insert(bundle.value);
        model = sgd_step(&model, &bundle, rate, block)?;
    }
    let drift = squared_distance(&block_params(&model, block), &before);
    state.trajectory.steps.push(StepRecord {
        t: state.t,
        outer_step: state.outer_step,
        lambda,
        k: state.k,
        rate,
        loss: first_loss.unwrap_or(0.0),
        err: None,
        theta_drift_sq: drift,
        warmup_inter: None,
    });
    state.trajectory.gradient_steps += cfg.epochs_per_step;
    state.ref_model = model.clone();
    state.model = model;
    state.k += 1;
    Ok(state)
}

/// The per-batch incremental operator: pseudo-label consistency on the
/// current batch, prospective margin on the next one and distillation to the
/// reference, i.e. the weighted objective at `lambda = 0`.
pub fn phi_operator(state: TrainState, b_tk: &Dataset, b_tk1: &Dataset, cfg: &GdoConfig) -> Result<TrainState> {
    intra_update(state, b_tk, b_tk1, 0.0, cfg)
}

fn subsample(x: &DenseMatrix, count: usize, seed: u64, parts: &[u64]) -> DenseMatrix {
    if x.rows() <= count {
        return x.clone();
    }
    let mut r = rng::stream(seed, parts);
    let mut idx = index::sample(&mut r, x.rows(), count).into_vec();
    idx.sort_unstable();
    x.select_rows(&idx)
}

/// Head update at a domain transition: one step of size `zeta` on the mean
/// squared input-Jacobian norm over a seeded subsample of `D_t ∪ D_{t+1}`.
/// The feature extractor is left bit-identical.
pub fn inter_transfer(mut state: TrainState, d_t: &Dataset, d_t1: &Dataset, cfg: &GdoConfig) -> Result<TrainState> {
    let pool = d_t.x.vstack(&d_t1.x)?;
    let x = subsample(&pool, cfg.inter_points, cfg.seed, &[tag::INTER, state.t as u64]);
    let before = input_jacobian_sqnorm(&state.model, &x, ParamBlock::Phi)?;
    let model = sgd_step(&state.model, &before, cfg.zeta, ParamBlock::Phi)?;
    let after = jacobian_sqnorm_value(&model, &x)?;
    let warm: Vec<f64> = state
        .trajectory
        .steps
        .iter()
        .filter(|s| s.t == state.t)
        .filter_map(|s| s.warmup_inter)
        .collect();
    state.trajectory.transitions.push(TransitionRecord {
        t: state.t,
        inter_before: before.value,
        inter_after: after,
        warmup_mean: (!warm.is_empty()).then(|| warm.iter().sum::<f64>() / warm.len() as f64),
    });
    state.ref_model = model.clone();
    state.model = model;
    state.t += 1;
    state.k = 0;
    Ok(state)
}

/// Fixed oracle-labelled evaluation subsample of every domain.
pub(crate) fn eval_subsets(seq: &DomainSequence, points: usize, seed: u64) -> Vec<Dataset> {
    (0..seq.len())
        .map(|t| {
            let ds = seq.oracle(t);
            if ds.len() <= points {
                return ds.clone();
            }
            let mut r = rng::stream(seed, &[tag::EVAL, t as u64]);
            let mut idx = index::sample(&mut r, ds.len(), points).into_vec();
            idx.sort_unstable();
            ds.subset(&idx)
        })
        .collect()
}

/// Accuracy of `model` on every domain's oracle labels.
pub fn domain_accuracies(model: &MlpModel, seq: &DomainSequence) -> Result<Vec<f64>> {
    (0..seq.len())
        .map(|t| err_rate(model, seq.oracle(t)).map(|e| 1.0 - e))
        .collect()
}

fn at_step<T>(t: usize, lambda: f64, k: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Step {
        t,
        lambda,
        k,
        source: Box::new(e),
    })
}

/// Source training followed by the lambda-interpolated batch loop over every
/// consecutive domain pair, with a head update at each transition.
pub fn run_gdo(seq: &DomainSequence, hidden: &[usize], cfg: &GdoConfig) -> Result<(MlpModel, RunRecord)> {
    cfg.validate()?;
    if seq.source().y.is_none() {
        return Err(Error::Contract("source domain must be labeled".into()));
    }
    let (model, pretrain_loss) = train_source_with_trace(seq, hidden, cfg)?;
    let eval = eval_subsets(seq, cfg.eval_points, cfg.seed);
    let grid = cfg.lambda_grid();
    let mut state = TrainState::new(model);
    state.trajectory.sequence_fingerprint = seq.fingerprint();
    state.trajectory.pretrain_loss = pretrain_loss;
    state.trajectory.gradient_steps = cfg.pretrain_epochs * cfg.m;

    for t in 0..seq.len() - 1 {
        let d_t = seq.features(t);
        let d_next = seq.features(t + 1);
        for &lambda in &grid {
            state.outer_step += 1;
            let plan = |side: u64| BatchPlan {
                m: cfg.m,
                seed: rng::derive(cfg.seed, &[tag::BATCH, t as u64, state.outer_step as u64, side]),
            };
            let cur = at_step(t, lambda, 0, make_batches(&d_t, plan(0)))?;
            let nxt = at_step(t, lambda, 0, make_batches(&d_next, plan(1)))?;
            for k in 0..cfg.m {
                state = at_step(t, lambda, k, intra_update(state, &cur[k], &nxt[k], lambda, cfg))?;
                let upcoming = subsample(&nxt[(k + 1) % cfg.m].x, cfg.warmup_points, cfg.seed, &[tag::INTER, 1, t as u64, k as u64]);
                let warm = if cfg.warmup_points > 0 {
                    Some(at_step(t, lambda, k, jacobian_sqnorm_value(&state.model, &upcoming))?)
                } else {
                    None
                };
                let err = at_step(t, lambda, k, err_rate(&state.model, &eval[t + 1]))?;
                let rec = state.trajectory.steps.last_mut().expect("intra_update pushed a step");
                rec.err = Some(err);
                rec.warmup_inter = warm;
            }
        }
        let lambda = *grid.last().expect("grid ends at 1");
        state = at_step(t, lambda, cfg.m, inter_transfer(state, &d_t, &d_next, cfg))?;
    }

    let mut record = state.trajectory;
    record.outer_steps = state.outer_step + 1;
    record.domain_accuracy = domain_accuracies(&state.model, seq)?;
    Ok((state.model, record))
}
