use serde::{Deserialize, Serialize};

use crate::ndnn::{LrSchedule, ParamBlock};
use crate::{Error, Result};

/// Which parameters the per-batch (intra-domain) update may move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// Intra-domain steps move the feature extractor only; the head moves
    /// only at domain transitions.
    #[default]
    Strict,
    /// Intra-domain steps move both blocks.
    Joint,
}

impl HeadMode {
    pub fn intra_block(self) -> ParamBlock {
        match self {
            HeadMode::Strict => ParamBlock::Theta,
            HeadMode::Joint => ParamBlock::Both,
        }
    }
}

/// Hyperparameters of the adaptation loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdoConfig {
    /// Weight of the prospective margin term.
    pub alpha: f64,
    /// Weight of the distillation term; 0 gives the plain intra loss.
    pub beta: f64,
    /// Interpolation points strictly between consecutive given domains.
    pub inter_steps: usize,
    /// Batches per domain.
    pub m: usize,
    pub lr: LrSchedule,
    /// Head step size at domain transitions.
    pub zeta: f64,
    /// Gradient steps taken on each batch pair.
    pub epochs_per_step: usize,
    pub seed: u64,
    pub head_mode: HeadMode,
    /// Supervised epochs on the source before adaptation.
    pub pretrain_epochs: usize,
    /// Points drawn from `D_t ∪ D_{t+1}` for the transition penalty.
    pub inter_points: usize,
    /// Points of the upcoming batch used for the warm-up penalty value.
    pub warmup_points: usize,
    /// Oracle-labelled points per domain used for trajectory error tracking.
    pub eval_points: usize,
}

impl Default for GdoConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            inter_steps: 0,
            m: 10,
            lr: LrSchedule {
                gamma0: 0.05,
                epsilon: 0.01,
            },
            zeta: 0.01,
            epochs_per_step: 5,
            seed: 0,
            head_mode: HeadMode::Strict,
            pretrain_epochs: 100,
            inter_points: 256,
            warmup_points: 32,
            eval_points: 512,
        }
    }
}

impl GdoConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg("alpha", self.alpha)?;
        nonneg("beta", self.beta)?;
        nonneg("zeta", self.zeta)?;
        self.lr.validate()?;
        if self.m == 0 {
            return Err(Error::arg("m must be >= 1"));
        }
        if self.epochs_per_step == 0 {
            return Err(Error::arg("epochs_per_step must be >= 1"));
        }
        Ok(())
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        lambda_grid(self.inter_steps)
    }

    /// Gradient steps spent on one domain pair.
    pub fn pair_budget(&self) -> usize {
        (self.inter_steps + 1) * self.m * self.epochs_per_step
    }
}

/// `{j/(s+1) : j = 1..s} ∪ {1}`, strictly increasing and ending exactly at 1.
pub fn lambda_grid(inter_steps: usize) -> Vec<f64> {
    let denom = (inter_steps + 1) as f64;
    (1..=inter_steps)
        .map(|j| j as f64 / denom)
        .chain(std::iter::once(1.0))
        .collect()
}

/// Outer steps of a run: one source step plus one per lambda value of every
/// consecutive domain pair.
pub fn total_outer_steps(n_given: usize, inter_steps: usize) -> usize {
    n_given.saturating_sub(1) * (inter_steps + 1) + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_shape() {
        assert_eq!(lambda_grid(0), vec![1.0]);
        assert_eq!(lambda_grid(3), vec![0.25, 0.5, 0.75, 1.0]);
        for s in 0..20 {
            let g = lambda_grid(s);
            assert_eq!(g.len(), s + 1);
            assert!(g.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(*g.last().unwrap(), 1.0);
            assert!(g[0] > 0.0);
        }
    }

    #[test]
    fn worked_step_count() {
        assert_eq!(total_outer_steps(4, 3), 13);
        assert_eq!(total_outer_steps(2, 0), 2);
    }

    #[test]
    fn config_validation() {
        assert!(GdoConfig::default().validate().is_ok());
        let bad = GdoConfig {
            alpha: -1.0,
            ..GdoConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GdoConfig {
            m: 0,
            ..GdoConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
