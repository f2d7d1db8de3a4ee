//! Gradually shifting domain sequences.
//!
//! Every generator and transform here is a deterministic function of its
//! parameters and seed. Intermediate domains are built from the source at
//! their own shift parameter rather than by chaining transforms, so
//! interpolation error never compounds along the sequence.

mod batch;
mod idx;
mod synthetic;
mod transform;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use batch::{make_batches, BatchPlan};
pub use idx::{encode_idx, load_idx, parse_idx, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::{make_gaussians, make_two_moons};
pub use transform::{build_sequence, color_shift, rotate2d, rotate_image, Transform};

use crate::ndnn::DenseMatrix;
use crate::{Error, Result};

/// Feature matrix with optional oracle labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Option<Vec<usize>>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn labeled(x: DenseMatrix, y: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ds = Self {
            x,
            y: Some(y),
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn unlabeled(x: DenseMatrix, num_classes: usize) -> Result<Self> {
        let ds = Self {
            x,
            y: None,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() == 0 {
            return Err(Error::arg("dataset must hold at least one row"));
        }
        if let Some(y) = &self.y {
            if y.len() != self.x.rows() {
                return Err(Error::shape("Dataset labels", self.x.rows(), y.len()));
            }
            if let Some(bad) = y.iter().find(|&&c| c >= self.num_classes) {
                return Err(Error::arg(format!(
                    "label {bad} outside [0, {})",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.y
            .as_deref()
            .ok_or_else(|| Error::Contract("dataset has no labels".into()))
    }

    /// Copy of the features without labels.
    pub fn features_only(&self) -> Dataset {
        Dataset {
            x: self.x.clone(),
            y: None,
            num_classes: self.num_classes,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect()),
            num_classes: self.num_classes,
        }
    }

    /// Row-wise concatenation. Labels survive only when both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let y = match (&self.y, &other.y) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Dataset {
            x: self.x.vstack(&other.x)?,
            y,
            num_classes: self.num_classes.max(other.num_classes),
        })
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update((self.x.rows() as u64).to_le_bytes());
        h.update((self.x.cols() as u64).to_le_bytes());
        for v in self.x.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        if let Some(y) = &self.y {
            for &c in y {
                h.update((c as u64).to_le_bytes());
            }
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        self.hash_into(&mut h);
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Ordered domains `D₀ … Dₙ`. Domain 0 is the labeled source; the remaining
/// domains keep oracle labels for evaluation only. Training code reads them
/// through [`DomainSequence::features`], which strips labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSequence {
    domains: Vec<Dataset>,
    shift_params: Vec<f64>,
}

impl DomainSequence {
    pub fn new(domains: Vec<Dataset>, shift_params: Vec<f64>) -> Result<Self> {
        if domains.len() < 2 {
            return Err(Error::arg(format!(
                "a domain sequence needs at least 2 domains, got {}",
                domains.len()
            )));
        }
        if shift_params.len() != domains.len() {
            return Err(Error::shape("DomainSequence shift params", domains.len(), shift_params.len()));
        }
        if domains[0].y.is_none() {
            return Err(Error::Contract("source domain must be labeled".into()));
        }
        let increasing = shift_params.windows(2).all(|w| w[1] > w[0]);
        let decreasing = shift_params.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::arg(format!(
                "shift parameters must be strictly monotone: {shift_params:?}"
            )));
        }
        let d = domains[0].dim();
        if let Some(bad) = domains.iter().position(|ds| ds.dim() != d) {
            return Err(Error::shape("DomainSequence feature dim", d, domains[bad].dim()));
        }
        for ds in &domains {
            ds.validate()?;
        }
        Ok(Self {
            domains,
            shift_params,
        })
    }

    /// Number of domains, source and target included.
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shift_params(&self) -> &[f64] {
        &self.shift_params
    }

    pub fn num_classes(&self) -> usize {
        self.domains[0].num_classes
    }

    pub fn dim(&self) -> usize {
        self.domains[0].dim()
    }

    /// The labeled source domain.
    pub fn source(&self) -> &Dataset {
        &self.domains[0]
    }

    pub fn target_index(&self) -> usize {
        self.domains.len() - 1
    }

    /// Training view of domain `t`: features only.
    pub fn features(&self, t: usize) -> Dataset {
        self.domains[t].features_only()
    }

    /// Evaluation view of domain `t`, including oracle labels.
    pub fn oracle(&self, t: usize) -> &Dataset {
        &self.domains[t]
    }

    /// SHA-256 over every feature, label and shift parameter.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (ds, s) in self.domains.iter().zip(&self.shift_params) {
            h.update(s.to_bits().to_le_bytes());
            ds.hash_into(&mut h);
        }
        hex(&h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(labels: bool) -> Dataset {
        let x = DenseMatrix::from_vec(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        Dataset {
            x,
            y: labels.then(|| vec![0, 1]),
            num_classes: 2,
        }
    }

    #[test]
    fn dataset_label_range_is_checked() {
        let x = DenseMatrix::zeros(2, 1);
        assert!(Dataset::labeled(x.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::labeled(x, vec![0], 2).is_err());
        assert!(Dataset::unlabeled(DenseMatrix::zeros(0, 3), 2).is_err());
    }

    #[test]
    fn sequence_requires_labeled_source() {
        let err = DomainSequence::new(vec![tiny(false), tiny(true)], vec![0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn sequence_requires_strict_monotone_shift() {
        let err = DomainSequence::new(vec![tiny(true), tiny(true), tiny(true)], vec![0.0, 1.0, 1.0]);
        assert!(err.is_err());
        assert!(DomainSequence::new(vec![tiny(true)], vec![0.0]).is_err());
    }

    #[test]
    fn training_view_hides_labels() {
        let seq = DomainSequence::new(vec![tiny(true), tiny(true)], vec![0.0, 1.0]).unwrap();
        assert!(seq.features(1).y.is_none());
        assert!(seq.oracle(1).y.is_some());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = tiny(true);
        let mut b = tiny(true);
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.x[(0, 0)] = 1e-300;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
