use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::{self, tag};
use crate::{Error, Result};

/// How one domain is cut into `m` batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub m: usize,
    pub seed: u64,
}

impl BatchPlan {
    /// Seeded permutation of `0..n`.
    pub fn permutation(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(self.seed, &[tag::BATCH]));
        idx
    }

    /// Batch index ranges over a permutation of length `n`. Sizes differ by at
    /// most one; the first `n % m` batches take the extra row.
    pub fn ranges(&self, n: usize) -> Result<Vec<std::ops::Range<usize>>> {
        if self.m == 0 {
            return Err(Error::arg("batch count m must be >= 1"));
        }
        if self.m > n {
            return Err(Error::arg(format!("cannot cut {n} rows into {} batches", self.m)));
        }
        let (base, extra) = (n / self.m, n % self.m);
        let mut out = Vec::with_capacity(self.m);
        let mut start = 0;
        for b in 0..self.m {
            let len = base + usize::from(b < extra);
            out.push(start..start + len);
            start += len;
        }
        Ok(out)
    }
}

/// Seeded shuffle followed by a contiguous split into `plan.m` batches.
pub fn make_batches(ds: &Dataset, plan: BatchPlan) -> Result<Vec<Dataset>> {
    let ranges = plan.ranges(ds.len())?;
    let perm = plan.permutation(ds.len());
    Ok(ranges.into_iter().map(|r| ds.subset(&perm[r])).collect())
}
