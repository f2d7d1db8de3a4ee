//! Reference methods: supervised source training, one-shot self-training and
//! gradual self-training (GST).
//!
//! Self-training spends the same number of gradient steps per domain as the
//! adaptation loop spends per domain pair ([`GdoConfig::pair_budget`]), so
//! method comparisons hold compute constant.

use serde::{Deserialize, Serialize};

use crate::domains::{make_batches, BatchPlan, Dataset, DomainSequence};
use crate::gdo::{domain_accuracies, eval_subsets, pseudo_labels, GdoConfig, RunRecord, StepRecord};
use crate::ndnn::{schedule_rate, sgd_step, softmax_ce, LossBundle, MlpModel, ParamBlock};
use crate::rng::{self, tag};
use crate::theory::err_rate;
use crate::{Error, Result};

/// Layer sizes `[d, hidden…, k]` for a sequence.
pub fn layer_sizes(seq: &DomainSequence, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(seq.dim());
    sizes.extend_from_slice(hidden);
    sizes.push(seq.num_classes());
    sizes
}

/// Supervised cross-entropy training on the labelled source.
pub fn train_source(seq: &DomainSequence, hidden: &[usize], cfg: &GdoConfig) -> Result<MlpModel> {
    Ok(train_source_with_trace(seq, hidden, cfg)?.0)
}

/// [`train_source`] plus the mean loss of every epoch.
pub fn train_source_with_trace(
    seq: &DomainSequence,
    hidden: &[usize],
    cfg: &GdoConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    cfg.validate()?;
    let source = seq.source();
    let labels = source
        .y
        .as_ref()
        .ok_or_else(|| Error::Contract("source domain must be labeled".into()))?;
    debug_assert_eq!(labels.len(), source.len());
    let mut model = MlpModel::init(&layer_sizes(seq, hidden), &mut rng::stream(cfg.seed, &[tag::INIT]))?;
    let rate = schedule_rate(&cfg.lr, 0);
    let mut trace = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 0..cfg.pretrain_epochs {
        let plan = BatchPlan {
            m: cfg.m,
            seed: rng::derive(cfg.seed, &[tag::PRETRAIN, epoch as u64]),
        };
        let mut total = 0.0;
        for batch in make_batches(source, plan)? {
            let (next, loss) = ce_step(&model, &batch, batch.labels()?, rate)?;
            model = next;
            total += loss;
        }
        trace.push(total / cfg.m as f64);
    }
    Ok((model, trace))
}

fn ce_step(model: &MlpModel, batch: &Dataset, labels: &[usize], rate: f64) -> Result<(MlpModel, f64)> {
    let cache = model.forward_cached(&batch.x)?;
    let loss = softmax_ce(&cache.logits, labels)?;
    let bundle = LossBundle::backprop(model, &cache, &loss)?;
    Ok((sgd_step(model, &bundle, rate, ParamBlock::Both)?, loss.value))
}

/// Result of one self-training pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainOutcome {
    pub model: MlpModel,
    /// Labels predicted by the input model before any update.
    pub pseudo_labels: Vec<usize>,
    pub steps: usize,
    pub final_loss: Option<f64>,
}

/// Pseudo-labels `domain` once with the frozen input model, then minimises
/// cross-entropy against those fixed labels for `budget` gradient steps
/// (both blocks, batches of `cfg.m` per sweep) at `rate`.
pub fn self_train_once(
    model: &MlpModel,
    domain: &Dataset,
    cfg: &GdoConfig,
    budget: usize,
    rate: f64,
    seed: u64,
) -> Result<SelfTrainOutcome> {
    let labels = pseudo_labels(model, &domain.x)?;
    let target = Dataset {
        x: domain.x.clone(),
        y: Some(labels.clone()),
        num_classes: model.num_classes(),
    };
    let mut current = model.clone();
    let mut steps = 0;
    let mut final_loss = None;
    let mut sweep = 0u64;
    while steps < budget {
        let plan = BatchPlan {
            m: cfg.m,
            seed: rng::derive(seed, &[tag::SELF_TRAIN, sweep]),
        };
        for batch in make_batches(&target, plan)? {
            if steps == budget {
                break;
            }
            let (next, loss) = ce_step(&current, &batch, batch.labels()?, rate)?;
            current = next;
            final_loss = Some(loss);
            steps += 1;
        }
        sweep += 1;
    }
    Ok(SelfTrainOutcome {
        model: current,
        pseudo_labels: labels,
        steps,
        final_loss,
    })
}

/// Gradual self-training: source training, then one self-training pass on
/// each later domain in order.
pub fn gst(seq: &DomainSequence, hidden: &[usize], cfg: &GdoConfig) -> Result<(MlpModel, RunRecord)> {
    let domains: Vec<usize> = (1..seq.len()).collect();
    sequential_self_training(seq, hidden, cfg, &domains, "gst")
}

/// Self-training directly on the target, skipping intermediate domains.
pub fn target_self_train(seq: &DomainSequence, hidden: &[usize], cfg: &GdoConfig) -> Result<(MlpModel, RunRecord)> {
    sequential_self_training(seq, hidden, cfg, &[seq.target_index()], "target_st")
}

/// Source training only.
pub fn source_only(seq: &DomainSequence, hidden: &[usize], cfg: &GdoConfig) -> Result<(MlpModel, RunRecord)> {
    sequential_self_training(seq, hidden, cfg, &[], "source_only")
}

fn sequential_self_training(
    seq: &DomainSequence,
    hidden: &[usize],
    cfg: &GdoConfig,
    domains: &[usize],
    method: &str,
) -> Result<(MlpModel, RunRecord)> {
    let (mut model, pretrain_loss) = train_source_with_trace(seq, hidden, cfg)?;
    let eval = eval_subsets(seq, cfg.eval_points, cfg.seed);
    let mut record = RunRecord {
        method: method.into(),
        sequence_fingerprint: seq.fingerprint(),
        outer_steps: 1,
        gradient_steps: cfg.pretrain_epochs * cfg.m,
        pretrain_loss,
        ..RunRecord::default()
    };
    let budget = cfg.pair_budget();
    for (i, &t) in domains.iter().enumerate() {
        // Same step size the adaptation loop uses at the end of pair t - 1.
        let rate = schedule_rate(&cfg.lr, t * (cfg.inter_steps + 1));
        let seed = rng::derive(cfg.seed, &[t as u64]);
        let before = model.flatten();
        let out = self_train_once(&model, &seq.features(t), cfg, budget, rate, seed)?;
        model = out.model;
        let drift = model
            .flatten()
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        record.steps.push(StepRecord {
            t: t - 1,
            outer_step: i + 1,
            lambda: 1.0,
            k: 0,
            rate,
            loss: out.final_loss.unwrap_or(0.0),
            err: Some(err_rate(&model, &eval[t])?),
            theta_drift_sq: drift,
            warmup_inter: None,
        });
        record.outer_steps += 1;
        record.gradient_steps += out.steps;
    }
    record.domain_accuracy = domain_accuracies(&model, seq)?;
    Ok((model, record))
}
