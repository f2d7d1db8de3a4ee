//! Finite-difference checks of the analytic gradients.
//!
//! Each check draws a small random model and batch, compares the analytic
//! parameter gradient against central differences, and reports the largest
//! relative error. Instances too close to a non-differentiable point (a ReLU
//! flipping, a margin hinge or top-two tie) are skipped rather than scored.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    input_jacobian_sqnorm, jacobian_sqnorm_value, kl_to_reference, margin_loss, softmax_ce, DenseMatrix, LossBundle,
    MlpModel, ParamBlock,
};
use crate::rng::{self, Rng};
use crate::Result;

/// Distance from any kink below which an instance is skipped.
pub const KINK_TOLERANCE: f64 = 1e-3;

/// Absolute floor of the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckedLoss {
    CrossEntropy,
    Margin,
    Kl,
    InputJacobian,
}

impl CheckedLoss {
    pub const ALL: [CheckedLoss; 4] = [
        CheckedLoss::CrossEntropy,
        CheckedLoss::Margin,
        CheckedLoss::Kl,
        CheckedLoss::InputJacobian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedLoss::CrossEntropy => "cross_entropy",
            CheckedLoss::Margin => "margin",
            CheckedLoss::Kl => "kl",
            CheckedLoss::InputJacobian => "input_jacobian",
        }
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, REL_FLOOR)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

fn uniform(r: &mut Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-scale..scale)).collect())
        .expect("sizes match")
}

fn random_model(r: &mut Rng, d: usize, k: usize) -> Result<MlpModel> {
    let depth = r.random_range(0..=2);
    let mut sizes = vec![d];
    sizes.extend((0..depth).map(|_| r.random_range(2..=8)));
    sizes.push(k);
    let model = MlpModel::init(&sizes, r)?;
    // Non-zero biases so that every parameter is exercised.
    let flat: Vec<f64> = model.flatten().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
    model.unflatten(&flat)
}

/// Whether any row sits near a hinge or a top/runner-up tie.
fn near_margin_kink(logits: &DenseMatrix) -> bool {
    logits.row_iter().any(|row| {
        let mut sorted = row.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let gap = sorted[0] - sorted[1];
        let third_gap = sorted.get(2).map_or(f64::INFINITY, |v| sorted[1] - v);
        gap < KINK_TOLERANCE || (gap - 1.0).abs() < KINK_TOLERANCE || third_gap < KINK_TOLERANCE
    })
}

/// Runs one instance; `None` when the instance is skipped as near a kink.
pub fn check_instance(loss: CheckedLoss, seed: u64, h: f64) -> Result<Option<f64>> {
    let mut r = rng::stream(seed, &[loss as u64]);
    let d = r.random_range(1..=8);
    let k = r.random_range(2..=8);
    let n = r.random_range(1..=8);
    let model = random_model(&mut r, d, k)?;
    let x = uniform(&mut r, n, d, 2.0);
    if model.kink_distance(&x)? < KINK_TOLERANCE {
        return Ok(None);
    }
    let base = model.flatten();
    let at = |flat: &[f64]| model.unflatten(flat);

    let (analytic, numeric) = match loss {
        CheckedLoss::CrossEntropy => {
            let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            let cache = model.forward_cached(&x)?;
            let b = LossBundle::backprop(&model, &cache, &softmax_ce(&cache.logits, &labels)?)?;
            let fd = central_difference(|p| Ok(softmax_ce(&at(p)?.forward(&x)?, &labels)?.value), &base, h)?;
            (b.gradients().flatten(), fd)
        }
        CheckedLoss::Margin => {
            let cache = model.forward_cached(&x)?;
            if near_margin_kink(&cache.logits) {
                return Ok(None);
            }
            let b = LossBundle::backprop(&model, &cache, &margin_loss(&cache.logits)?)?;
            let fd = central_difference(|p| Ok(margin_loss(&at(p)?.forward(&x)?)?.value), &base, h)?;
            (b.gradients().flatten(), fd)
        }
        CheckedLoss::Kl => {
            let reference = random_model(&mut r, d, k)?.forward(&x)?;
            let cache = model.forward_cached(&x)?;
            let b = LossBundle::backprop(&model, &cache, &kl_to_reference(&cache.logits, &reference)?)?;
            let fd = central_difference(|p| Ok(kl_to_reference(&at(p)?.forward(&x)?, &reference)?.value), &base, h)?;
            (b.gradients().flatten(), fd)
        }
        CheckedLoss::InputJacobian => {
            let b = input_jacobian_sqnorm(&model, &x, ParamBlock::Both)?;
            let fd = central_difference(|p| jacobian_sqnorm_value(&at(p)?, &x), &base, h)?;
            (b.gradients().flatten(), fd)
        }
    };
    Ok(Some(max_relative_error(&analytic, &numeric)))
}

/// Outcome of a batch of instances for one loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub loss: CheckedLoss,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

/// Checks seeds `0, 1, …` until `instances` non-skipped instances are scored.
pub fn check_loss(loss: CheckedLoss, instances: usize, h: f64) -> Result<CheckSummary> {
    let mut s = CheckSummary {
        loss,
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
    };
    let mut seed = 0;
    while s.checked < instances {
        match check_instance(loss, seed, h)? {
            Some(e) => {
                s.checked += 1;
                s.max_rel_error = s.max_rel_error.max(e);
            }
            None => s.skipped += 1,
        }
        seed += 1;
    }
    Ok(s)
}
