//! Error tracking, the Lyapunov stability function, empirical drift
//! monitoring and the closed-form error bound.
//!
//! The bound's constants (strong convexity, gradient variance, shift constant)
//! are user-supplied; nothing here estimates them from data.

use serde::{Deserialize, Serialize};

use crate::domains::Dataset;
use crate::gdo::RunRecord;
use crate::ndnn::{predict, MlpModel};
use crate::{Error, Result};

/// Misclassification fraction of `model` on a labelled dataset.
pub fn err_rate(model: &MlpModel, labeled: &Dataset) -> Result<f64> {
    let labels = labeled.labels()?;
    if labels.is_empty() {
        return Err(Error::arg("cannot measure error on an empty dataset"));
    }
    let pred = predict(model, &labeled.x)?;
    let wrong = pred.iter().zip(labels).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// `err + lambda_v·‖theta_now − theta_prev‖²`.
pub fn lyapunov_v(err: f64, theta_now: &[f64], theta_prev: &[f64], lambda_v: f64) -> Result<f64> {
    if theta_now.len() != theta_prev.len() {
        return Err(Error::shape("lyapunov_v", theta_prev.len(), theta_now.len()));
    }
    let drift: f64 = theta_now.iter().zip(theta_prev).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(lyapunov_from_drift(err, drift, lambda_v))
}

fn lyapunov_from_drift(err: f64, drift_sq: f64, lambda_v: f64) -> f64 {
    err + lambda_v * drift_sq
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEntry {
    pub t: usize,
    pub k: usize,
    pub err: f64,
    pub theta_drift_sq: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub lambda_v: f64,
    pub entries: Vec<LyapunovEntry>,
}

impl LyapunovTrace {
    pub fn new(lambda_v: f64) -> Self {
        Self {
            lambda_v,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, t: usize, k: usize, err: f64, theta_drift_sq: f64) {
        let v = lyapunov_from_drift(err, theta_drift_sq, self.lambda_v);
        self.entries.push(LyapunovEntry {
            t,
            k,
            err,
            theta_drift_sq,
            v,
        });
    }

    /// Trace of every step of a run that carries an error measurement.
    pub fn from_record(record: &RunRecord, lambda_v: f64) -> Self {
        let mut trace = Self::new(lambda_v);
        for s in &record.steps {
            if let Some(err) = s.err {
                trace.push(s.t, s.k, err, s.theta_drift_sq);
            }
        }
        trace
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.v).collect()
    }
}

/// Descriptive summary of how a Lyapunov trace evolves. Makes no pass/fail
/// judgement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub window: usize,
    pub len: usize,
    pub first_window_mean: f64,
    pub last_window_mean: f64,
    /// Fraction of consecutive pairs with `V[i+1] <= V[i]`.
    pub non_increase_fraction: f64,
    /// Least-squares `r` in `V[i+1] ≈ r·V[i]`; 1 for an all-zero trace.
    pub contraction_ratio: f64,
}

pub fn drift_report(trace: &LyapunovTrace, window: usize) -> Result<DriftReport> {
    let v = trace.values();
    if window == 0 {
        return Err(Error::arg("drift window must be >= 1"));
    }
    if v.len() < 2 * window {
        return Err(Error::arg(format!(
            "trace of length {} is shorter than two windows of {window}",
            v.len()
        )));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let pairs = v.len() - 1;
    let non_increasing = v.windows(2).filter(|w| w[1] <= w[0]).count();
    let (num, den) = v
        .windows(2)
        .fold((0.0, 0.0), |(n, d), w| (n + w[0] * w[1], d + w[0] * w[0]));
    Ok(DriftReport {
        window,
        len: v.len(),
        first_window_mean: mean(&v[..window]),
        last_window_mean: mean(&v[v.len() - window..]),
        non_increase_fraction: non_increasing as f64 / pairs as f64,
        contraction_ratio: if den > 0.0 { num / den } else { 1.0 },
    })
}

/// Constants of the error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    /// Strong convexity.
    pub mu: f64,
    /// Gradient variance bound.
    pub sigma2: f64,
    pub gamma0: f64,
    pub epsilon: f64,
    /// Batch count.
    pub m: usize,
    /// Domain count.
    #[serde(rename = "T")]
    pub t: usize,
    pub delta: f64,
    pub err0: f64,
    /// Shift constant.
    pub c: f64,
}

impl BoundParams {
    pub fn kappa(&self) -> f64 {
        self.mu * self.gamma0 / 2.0
    }

    pub fn c1(&self) -> f64 {
        self.sigma2 * self.gamma0 * self.gamma0 / std::f64::consts::SQRT_2
    }

    pub fn c2(&self) -> f64 {
        2.0 * self.c * (1.0 / self.delta).ln().sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::arg(what.to_string())) };
        check(self.mu > 0.0 && self.mu.is_finite(), "mu must be finite and > 0")?;
        check(self.sigma2 >= 0.0 && self.sigma2.is_finite(), "sigma2 must be finite and >= 0")?;
        check(self.gamma0 > 0.0 && self.gamma0.is_finite(), "gamma0 must be finite and > 0")?;
        check(self.epsilon >= 0.0 && self.epsilon.is_finite(), "epsilon must be finite and >= 0")?;
        check(self.delta > 0.0 && self.delta < 1.0, "delta must lie in (0, 1)")?;
        check((0.0..=1.0).contains(&self.err0), "err0 must lie in [0, 1]")?;
        check(self.c >= 0.0 && self.c.is_finite(), "c must be finite and >= 0")?;
        check(self.m >= 1, "m must be >= 1")
    }
}

/// The three additive terms of the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub decay: f64,
    pub variance: f64,
    pub shift: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.decay + self.variance + self.shift
    }
}

/// Geometric decay term `err0·exp(−κ·γ0·T)`; defined for every `T`,
/// including 0 where it equals `err0`.
pub fn decay_term(p: &BoundParams) -> f64 {
    p.err0 * (-p.kappa() * p.gamma0 * p.t as f64).exp()
}

pub fn bound_terms(p: &BoundParams) -> Result<BoundTerms> {
    p.validate()?;
    if p.t == 0 {
        return Err(Error::arg("T must be >= 1"));
    }
    let m = p.m as f64;
    let t = p.t as f64;
    Ok(BoundTerms {
        decay: decay_term(p),
        variance: p.c1() * p.epsilon / p.gamma0 * (t / m).sqrt(),
        shift: p.c2() * ((m * t / p.delta).ln() / m).sqrt(),
    })
}

/// `err0·e^{−κγ0T} + (c1·ε/γ0)·√(T/m) + c2·√(ln(mT/δ)/m)`.
pub fn error_bound(p: &BoundParams) -> Result<f64> {
    Ok(bound_terms(p)?.total())
}
