use serde::{Deserialize, Serialize};

use super::{Layer, LossBundle, MlpModel, ParamBlock};
use crate::{Error, Result};

/// Decaying step size `γ₀ / (1 + ε t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub gamma0: f64,
    pub epsilon: f64,
}

impl LrSchedule {
    pub fn new(gamma0: f64, epsilon: f64) -> Result<Self> {
        let s = Self { gamma0, epsilon };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(Error::arg(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::arg(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn rate(&self, t: usize) -> f64 {
        schedule_rate(self, t)
    }
}

pub fn schedule_rate(s: &LrSchedule, t: usize) -> f64 {
    s.gamma0 / (1.0 + s.epsilon * t as f64)
}

/// One SGD step `p ← p − rate·∇p` on the selected block. The other block is
/// copied through untouched.
pub fn sgd_step(model: &MlpModel, grads: &LossBundle, rate: f64, which: ParamBlock) -> Result<MlpModel> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::arg(format!("learning rate must be finite and >= 0, got {rate}")));
    }
    if grads.grads_theta.len() != model.theta_layers.len() {
        return Err(Error::shape(
            "sgd_step theta layers",
            model.theta_layers.len(),
            grads.grads_theta.len(),
        ));
    }
    let mut out = model.clone();
    if which.includes_theta() {
        for (l, (p, g)) in out.theta_layers.iter_mut().zip(&grads.grads_theta).enumerate() {
            if !g.is_finite() {
                return Err(Error::Numeric { block: "theta", layer: l });
            }
            *p = step_layer(p, g, rate)?;
        }
    }
    if which.includes_phi() {
        if !grads.grads_phi.is_finite() {
            return Err(Error::Numeric { block: "phi", layer: 0 });
        }
        out.phi_layer = step_layer(&out.phi_layer, &grads.grads_phi, rate)?;
    }
    Ok(out)
}

fn step_layer(p: &Layer, g: &Layer, rate: f64) -> Result<Layer> {
    if g.bias.len() != p.bias.len() {
        return Err(Error::shape("sgd_step bias", p.bias.len(), g.bias.len()));
    }
    Ok(Layer {
        weight: p.weight.axpy(rate, &g.weight)?,
        bias: p.bias.iter().zip(&g.bias).map(|(a, b)| a - rate * b).collect(),
    })
}
