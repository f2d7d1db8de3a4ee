use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::ndnn::DenseMatrix;
use crate::rng::{self, tag};
use crate::{Error, Result};

fn noise(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::arg(format!("noise sd {sd}: {e}")))
}

fn finish(points: Vec<([f64; 2], usize)>, mut rng: rng::Rng) -> Result<Dataset> {
    let mut points = points;
    points.shuffle(&mut rng);
    let n = points.len();
    let mut data = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for (p, c) in points {
        data.extend_from_slice(&p);
        y.push(c);
    }
    Dataset::labeled(DenseMatrix::from_vec(n, 2, data)?, y, 2)
}

/// Two interleaving half circles. Class 0 (`⌈n/2⌉` points) sits on the upper
/// unit arc centred at the origin, class 1 (`⌊n/2⌋` points) on the lower arc
/// centred at `(1, 0.5)`. Arc positions are evenly spaced; Gaussian noise
/// with standard deviation `noise_sd` is added to each coordinate.
pub fn make_two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::arg(format!("two moons needs n >= 2, got {n}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::arg(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let n_upper = n.div_ceil(2);
    let n_lower = n / 2;
    let dist = noise(noise_sd)?;
    let mut rng = rng::stream(seed, &[tag::DATA]);
    let arc = |i: usize, count: usize| {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(n);
    for i in 0..n_upper {
        let t = arc(i, n_upper);
        let p = [t.cos(), t.sin()];
        points.push(([p[0] + dist.sample(&mut rng), p[1] + dist.sample(&mut rng)], 0));
    }
    for i in 0..n_lower {
        let t = arc(i, n_lower);
        let p = [1.0 - t.cos(), 0.5 - t.sin()];
        points.push(([p[0] + dist.sample(&mut rng), p[1] + dist.sample(&mut rng)], 1));
    }
    finish(points, rng)
}

/// Two isotropic Gaussian blobs with means `(±1, 0)`. Linearly separable up
/// to the overlap implied by `sd`.
pub fn make_gaussians(n: usize, sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::arg(format!("gaussians needs n >= 2, got {n}")));
    }
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(Error::arg(format!("sd must be >= 0, got {sd}")));
    }
    let dist = noise(sd)?;
    let mut rng = rng::stream(seed, &[tag::DATA]);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let c = usize::from(i >= n.div_ceil(2));
        let mx = if c == 0 { 1.0 } else { -1.0 };
        points.push(([mx + dist.sample(&mut rng), dist.sample(&mut rng)], c));
    }
    finish(points, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_upper_moon_is_on_unit_arc() {
        let ds = make_two_moons(101, 0.0, 5).unwrap();
        let y = ds.labels().unwrap();
        let mut count = 0;
        for (row, &c) in ds.x.row_iter().zip(y) {
            if c == 0 {
                count += 1;
                let r = (row[0] * row[0] + row[1] * row[1]).sqrt();
                assert!((r - 1.0).abs() < 1e-12);
                assert!(row[1] >= -1e-12);
            }
        }
        assert_eq!(count, 51);
    }

    #[test]
    fn generators_are_deterministic_per_seed() {
        assert_eq!(make_two_moons(300, 0.1, 9).unwrap(), make_two_moons(300, 0.1, 9).unwrap());
        assert_ne!(make_two_moons(300, 0.1, 9).unwrap(), make_two_moons(300, 0.1, 10).unwrap());
        assert_eq!(make_gaussians(50, 0.3, 1).unwrap(), make_gaussians(50, 0.3, 1).unwrap());
    }

    #[test]
    fn rejects_tiny_n() {
        assert!(make_two_moons(1, 0.1, 0).is_err());
        assert!(make_gaussians(1, 0.1, 0).is_err());
    }
}
