//! Losses on logits. Each returns its mean value over rows together with the
//! gradient with respect to the logits; [`LossBundle::backprop`] pushes that
//! gradient into parameter space.

use serde::{Deserialize, Serialize};

use super::{DenseMatrix, ForwardCache, Gradients, Layer, MlpModel};
use crate::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Value and logit-gradient of a row-averaged loss.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitLoss {
    pub value: f64,
    pub grad: DenseMatrix,
}

impl LogitLoss {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            value: 0.0,
            grad: DenseMatrix::zeros(rows, cols),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &LogitLoss) -> Result<()> {
        self.value += s * other.value;
        self.grad.add_assign(&other.grad.scale(s))
    }
}

/// Scalar loss plus its gradient with respect to both parameter blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub value: f64,
    pub grads_theta: Vec<Layer>,
    pub grads_phi: Layer,
}

impl LossBundle {
    pub fn zeros(model: &MlpModel) -> Self {
        Self::from_gradients(0.0, Gradients::zeros_like(model))
    }

    pub fn from_gradients(value: f64, g: Gradients) -> Self {
        Self {
            value,
            grads_theta: g.theta,
            grads_phi: g.phi,
        }
    }

    pub fn gradients(&self) -> Gradients {
        Gradients {
            theta: self.grads_theta.clone(),
            phi: self.grads_phi.clone(),
        }
    }

    /// Parameter gradient of a logit loss evaluated on `cache`.
    pub fn backprop(model: &MlpModel, cache: &ForwardCache, loss: &LogitLoss) -> Result<Self> {
        let g = model.backward(cache, &loss.grad)?;
        Ok(Self::from_gradients(loss.value, g))
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &LossBundle) {
        self.value += s * other.value;
        let mut g = self.gradients();
        g.add_scaled(s, &other.gradients());
        self.grads_theta = g.theta;
        self.grads_phi = g.phi;
    }
}

/// Numerically stable row softmax.
pub fn softmax(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    for (o, v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Mean cross-entropy of `softmax(logits)` against integer labels.
pub fn softmax_ce(logits: &DenseMatrix, labels: &[usize]) -> Result<LogitLoss> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape("softmax_ce labels", n, labels.len()));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
        return Err(Error::arg(format!("label {y} at row {i} outside [0, {k})")));
    }
    if n == 0 {
        return Ok(LogitLoss::zeros(0, k));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = DenseMatrix::zeros(n, k);
    let mut logp = vec![0.0; k];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        log_softmax_row(logits.row(i), &mut logp);
        total -= logp[y];
        let g = grad.row_mut(i);
        for (gj, lp) in g.iter_mut().zip(&logp) {
            *gj = lp.exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    Ok(LogitLoss {
        value: total * inv_n,
        grad,
    })
}

/// Mean hinge on the gap between the top logit and the runner-up:
/// `max(0, 1 - (z_top - z_second))`. The subgradient at the kink is 0.
pub fn margin_loss(logits: &DenseMatrix) -> Result<LogitLoss> {
    let (n, k) = logits.shape();
    if k < 2 {
        return Err(Error::arg(format!("margin loss needs k >= 2, got {k}")));
    }
    if n == 0 {
        return Ok(LogitLoss::zeros(0, k));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = DenseMatrix::zeros(n, k);
    let mut total = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let top = argmax(row);
        let second = runner_up(row, top);
        let slack = 1.0 - (row[top] - row[second]);
        if slack > 0.0 {
            total += slack;
            let g = grad.row_mut(i);
            g[top] = -inv_n;
            g[second] = inv_n;
        }
    }
    Ok(LogitLoss {
        value: total * inv_n,
        grad,
    })
}

fn runner_up(row: &[f64], top: usize) -> usize {
    let mut best = if top == 0 { 1 } else { 0 };
    for (j, &v) in row.iter().enumerate() {
        if j != top && v > row[best] {
            best = j;
        }
    }
    best
}

/// Mean `KL(softmax(new) ‖ softmax(reference))`. The reference is a constant;
/// only `new` receives a gradient.
pub fn kl_to_reference(logits_new: &DenseMatrix, logits_ref: &DenseMatrix) -> Result<LogitLoss> {
    if logits_new.shape() != logits_ref.shape() {
        return Err(Error::shape(
            "kl_to_reference",
            format!("{:?}", logits_new.shape()),
            format!("{:?}", logits_ref.shape()),
        ));
    }
    let (n, k) = logits_new.shape();
    if n == 0 {
        return Ok(LogitLoss::zeros(0, k));
    }
    let inv_n = 1.0 / n as f64;
    let log_floor = PROB_FLOOR.ln();
    let mut grad = DenseMatrix::zeros(n, k);
    let mut lp = vec![0.0; k];
    let mut lq = vec![0.0; k];
    let mut diff = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..n {
        log_softmax_row(logits_new.row(i), &mut lp);
        log_softmax_row(logits_ref.row(i), &mut lq);
        let mut row_kl = 0.0;
        for j in 0..k {
            diff[j] = lp[j].max(log_floor) - lq[j].max(log_floor);
            row_kl += lp[j].exp() * diff[j];
        }
        // Rounding can leave a tiny negative residue; KL is non-negative.
        let row_kl = row_kl.max(0.0);
        total += row_kl;
        let g = grad.row_mut(i);
        for j in 0..k {
            g[j] = lp[j].exp() * (diff[j] - row_kl) * inv_n;
        }
    }
    Ok(LogitLoss {
        value: total * inv_n,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        for k in 2..7 {
            let z = DenseMatrix::filled(3, k, 0.25);
            let ce = softmax_ce(&z, &[0, 1, k - 1]).unwrap();
            assert!((ce.value - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_correct_prediction_has_negligible_ce() {
        let z = m(&[&[40.0, 10.0, 5.0], &[-3.0, 30.0, -1.0]]);
        let ce = softmax_ce(&z, &[0, 1]).unwrap();
        assert!(ce.value <= 1e-9, "{}", ce.value);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let z = DenseMatrix::zeros(2, 3);
        assert!(matches!(softmax_ce(&z, &[0, 3]), Err(Error::Argument(_))));
    }

    #[test]
    fn margin_examples() {
        let sat = margin_loss(&m(&[&[3.0, 1.0]])).unwrap();
        assert_eq!(sat.value, 0.0);
        let near = margin_loss(&m(&[&[0.5, 0.2]])).unwrap();
        assert!((near.value - 0.7).abs() < 1e-12);
        assert_eq!(near.grad.row(0), &[-1.0, 1.0]);
    }

    #[test]
    fn margin_kink_has_zero_subgradient() {
        let kink = margin_loss(&m(&[&[2.0, 1.0]])).unwrap();
        assert_eq!(kink.value, 0.0);
        assert!(kink.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn margin_tie_uses_lowest_index_as_top() {
        let tie = margin_loss(&m(&[&[1.0, 1.0, 0.0]])).unwrap();
        assert_eq!(tie.value, 1.0);
        assert_eq!(tie.grad.row(0), &[-1.0, 1.0, 0.0]);
    }

    #[test]
    fn margin_rejects_single_class() {
        assert!(matches!(margin_loss(&DenseMatrix::zeros(2, 1)), Err(Error::Argument(_))));
    }

    #[test]
    fn kl_of_identical_logits_is_zero() {
        let z = m(&[&[1.0, -2.0, 0.5], &[10.0, 0.0, -10.0]]);
        let kl = kl_to_reference(&z, &z).unwrap();
        assert!(kl.value.abs() <= 1e-12);
        assert!(kl.grad.data().iter().all(|g| g.abs() <= 1e-12));
    }

    #[test]
    fn kl_shape_mismatch_is_a_shape_error() {
        let err = kl_to_reference(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(3, 3)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = m(&[&[1000.0, -1000.0, 3.0], &[0.1, 0.2, 0.3]]);
        let p = softmax(&z);
        for r in p.row_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[2.0, 5.0, 1.0]), 1);
        assert_eq!(argmax(&[3.0, 3.0]), 0);
    }
}
