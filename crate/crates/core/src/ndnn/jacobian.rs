//! Squared Frobenius norm of the logit-input Jacobian, `mean_x ‖∂C(x)/∂x‖²`.
//!
//! The value is exact: one batched backward pass per class yields row `c` of
//! every sample's Jacobian. The head gradient is exact as well because the
//! head is linear: with `J_c(x) = Σ_j W[j,c] ∇h_j(x)`,
//!
//! ```text
//! ∂‖J‖²/∂W[j,c] = 2 ⟨J_c(x), ∇h_j(x)⟩ = 2 (J_h(x) J_c(x)ᵀ)_j
//! ```
//!
//! which is a forward-mode tangent pass through the feature extractor with
//! direction `J_c(x)`. The same holds layer by layer: with the ReLU pattern
//! fixed, `J_c = A_l W_l b_l` where `A_l` is the masked product of the layers
//! below and `b_l` the masked back-propagated head column, so
//!
//! ```text
//! ∂‖J‖²/∂W_l = 2 Σ_c (A_lᵀ J_c) b_lᵀ
//! ```
//!
//! Biases only move the activation pattern, so their gradient is zero almost
//! everywhere.

use super::{DenseMatrix, ForwardCache, Gradients, LossBundle, MlpModel, ParamBlock};
use crate::{Error, Result};

/// Largest class count accepted; the value costs one backward pass per class.
pub const MAX_JACOBIAN_CLASSES: usize = 32;

/// Per-class Jacobian rows: entry `c` is the `n × d` matrix whose row `i` is
/// `∂z_c/∂x` at sample `i`.
pub fn jacobian_rows(model: &MlpModel, cache: &ForwardCache) -> Result<Vec<DenseMatrix>> {
    let (n, k) = cache.logits.shape();
    (0..k)
        .map(|c| {
            let mut seed = DenseMatrix::zeros(n, k);
            for i in 0..n {
                seed[(i, c)] = 1.0;
            }
            input_grad(model, cache, &seed)
        })
        .collect()
}

fn input_grad(model: &MlpModel, cache: &ForwardCache, d_logits: &DenseMatrix) -> Result<DenseMatrix> {
    let mut delta = d_logits.matmul_t(&model.phi_layer.weight)?;
    for l in (0..model.theta_layers.len()).rev() {
        for (d, &a) in delta.data_mut().iter_mut().zip(cache.inputs[l + 1].data()) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        delta = delta.matmul_t(&model.theta_layers[l].weight)?;
    }
    Ok(delta)
}

fn check(model: &MlpModel, x: &DenseMatrix) -> Result<()> {
    if x.cols() != model.input_dim() {
        return Err(Error::shape("input_jacobian_sqnorm input", model.input_dim(), x.cols()));
    }
    if model.num_classes() > MAX_JACOBIAN_CLASSES {
        return Err(Error::arg(format!(
            "input Jacobian limited to {MAX_JACOBIAN_CLASSES} classes, model has {}",
            model.num_classes()
        )));
    }
    Ok(())
}

/// Mean squared Jacobian norm without gradients.
pub fn jacobian_sqnorm_value(model: &MlpModel, x: &DenseMatrix) -> Result<f64> {
    check(model, x)?;
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let cache = model.forward_cached(x)?;
    let rows = jacobian_rows(model, &cache)?;
    Ok(rows.iter().map(DenseMatrix::frobenius_sq).sum::<f64>() / x.rows() as f64)
}

/// Mean squared Jacobian norm plus its gradient for the requested block(s).
/// Blocks not requested carry zero gradients.
pub fn input_jacobian_sqnorm(model: &MlpModel, x: &DenseMatrix, block: ParamBlock) -> Result<LossBundle> {
    check(model, x)?;
    let n = x.rows();
    let mut grads = Gradients::zeros_like(model);
    if n == 0 {
        return Ok(LossBundle::from_gradients(0.0, grads));
    }
    let cache = model.forward_cached(x)?;
    let rows = jacobian_rows(model, &cache)?;
    let value = rows.iter().map(DenseMatrix::frobenius_sq).sum::<f64>() / n as f64;

    let scale = 2.0 / n as f64;
    let depth = model.theta_layers.len();
    for (c, jc) in rows.iter().enumerate() {
        let tangents = feature_tangents(model, &cache, jc)?;
        if block.includes_phi() {
            for (j, s) in tangents[depth].column_sums().into_iter().enumerate() {
                grads.phi.weight[(j, c)] = scale * s;
            }
        }
        if block.includes_theta() && depth > 0 {
            let head_col: Vec<f64> = (0..model.phi_layer.fan_in())
                .map(|j| model.phi_layer.weight[(j, c)])
                .collect();
            let mut back = DenseMatrix::zeros(n, head_col.len());
            for i in 0..n {
                back.row_mut(i).copy_from_slice(&head_col);
            }
            for l in (0..depth).rev() {
                mask(&mut back, &cache.inputs[l + 1]);
                let g = tangents[l].t_matmul(&back)?.scale(scale);
                grads.theta[l].weight.add_assign(&g)?;
                if l > 0 {
                    back = back.matmul_t(&model.theta_layers[l].weight)?;
                }
            }
        }
    }

    Ok(LossBundle::from_gradients(value, grads))
}

fn mask(m: &mut DenseMatrix, activations: &DenseMatrix) {
    for (v, &a) in m.data_mut().iter_mut().zip(activations.data()) {
        if a <= 0.0 {
            *v = 0.0;
        }
    }
}

/// Forward-mode pass of `direction` (n × d) through the feature extractor at
/// the cached activation pattern. Entry `l` is the tangent entering layer
/// `l`; the last one has row `i` equal to `J_h(x_i) v_i`.
fn feature_tangents(model: &MlpModel, cache: &ForwardCache, direction: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    let mut out = Vec::with_capacity(model.theta_layers.len() + 1);
    out.push(direction.clone());
    for (l, layer) in model.theta_layers.iter().enumerate() {
        let mut t = out[l].matmul(&layer.weight)?;
        mask(&mut t, &cache.inputs[l + 1]);
        out.push(t);
    }
    Ok(out)
}
