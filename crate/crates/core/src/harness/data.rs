//! Turns a [`DatasetSpec`] into a domain sequence plus a held-out target set.

use rand::seq::index;

use super::config::{holdout_count, DatasetSpec, MNIST_IMAGES, MNIST_LABELS};
use crate::domains::{build_sequence, load_idx, make_gaussians, make_two_moons, Dataset, DomainSequence, Transform};
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Everything one grid cell trains and evaluates on.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub sequence: DomainSequence,
    /// Target-domain points never seen during training, with labels.
    pub holdout: Dataset,
}

/// Source images shared by every cell of an MNIST grid; `None` for synthetic
/// recipes, which generate their data per seed.
pub fn load_pool(spec: &DatasetSpec) -> Result<Option<Dataset>> {
    match spec.mnist_dir() {
        Some(dir) => load_idx(dir.join(MNIST_IMAGES), dir.join(MNIST_LABELS)).map(Some),
        None => Ok(None),
    }
}

fn split(ds: &Dataset, held: usize, seed: u64) -> (Dataset, Dataset) {
    let mut order: Vec<usize> = index::sample(&mut rng::stream(seed, &[tag::SPLIT]), ds.len(), ds.len()).into_vec();
    let mut holdout = order.split_off(ds.len() - held);
    order.sort_unstable();
    holdout.sort_unstable();
    (ds.subset(&order), ds.subset(&holdout))
}

/// Builds the sequence for one `(n_given, seed)` cell. Every method in the
/// cell receives the identical result.
pub fn prepare(spec: &DatasetSpec, pool: Option<&Dataset>, n_given: usize, seed: u64) -> Result<PreparedData> {
    let (train, held, transform, total_shift) = match *spec {
        DatasetSpec::TwoMoons {
            n,
            noise,
            total_shift,
            holdout_fraction,
        } => {
            let all = make_two_moons(n, noise, seed)?;
            let (train, held) = split(&all, holdout_count(n, holdout_fraction), seed);
            (train, held, Transform::Rotate2d, total_shift)
        }
        DatasetSpec::Gaussians {
            n,
            sd,
            total_shift,
            holdout_fraction,
        } => {
            let all = make_gaussians(n, sd, seed)?;
            let (train, held) = split(&all, holdout_count(n, holdout_fraction), seed);
            (train, held, Transform::Rotate2d, total_shift)
        }
        DatasetSpec::RotatedMnist {
            n, holdout, total_shift, ..
        }
        | DatasetSpec::ColorShiftMnist {
            n, holdout, total_shift, ..
        } => {
            let pool = pool.ok_or_else(|| Error::arg("MNIST recipe needs a loaded image pool"))?;
            if n + holdout > pool.len() {
                return Err(Error::arg(format!(
                    "{} images requested but the pool holds {}",
                    n + holdout,
                    pool.len()
                )));
            }
            let mut r = rng::stream(seed, &[tag::DATA]);
            let picked = index::sample(&mut r, pool.len(), n + holdout).into_vec();
            let mut train_idx = picked[..n].to_vec();
            let mut held_idx = picked[n..].to_vec();
            train_idx.sort_unstable();
            held_idx.sort_unstable();
            let transform = if matches!(spec, DatasetSpec::RotatedMnist { .. }) {
                let side = (pool.dim() as f64).sqrt().round() as usize;
                Transform::RotateImage { side }
            } else {
                Transform::ColorShift
            };
            (pool.subset(&train_idx), pool.subset(&held_idx), transform, total_shift)
        }
    };
    let sequence = build_sequence(&train, transform, total_shift, n_given)?;
    let holdout = transform.apply(&held, total_shift)?;
    Ok(PreparedData { sequence, holdout })
}
