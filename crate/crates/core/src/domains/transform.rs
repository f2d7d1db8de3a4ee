use serde::{Deserialize, Serialize};

use super::{Dataset, DomainSequence};
use crate::ndnn::DenseMatrix;
use crate::{Error, Result};

/// Rotates 2-D points counter-clockwise by `angle_deg` about the origin.
pub fn rotate2d(ds: &Dataset, angle_deg: f64) -> Result<Dataset> {
    if ds.dim() != 2 {
        return Err(Error::shape("rotate2d feature dim", 2, ds.dim()));
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mut x = ds.x.clone();
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let (px, py) = (row[0], row[1]);
        row[0] = c * px - s * py;
        row[1] = s * px + c * py;
    }
    Ok(Dataset {
        x,
        y: ds.y.clone(),
        num_classes: ds.num_classes,
    })
}

/// Rotates every `side × side` image about its centre using bilinear
/// interpolation. Samples falling outside the source image read as 0.
pub fn rotate_image(ds: &Dataset, angle_deg: f64, side: usize) -> Result<Dataset> {
    if side == 0 || ds.dim() != side * side {
        return Err(Error::shape(
            "rotate_image pixels",
            format!("{side}x{side} = {}", side * side),
            ds.dim(),
        ));
    }
    if angle_deg.rem_euclid(360.0) == 0.0 {
        return Ok(ds.clone());
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    let centre = (side as f64 - 1.0) / 2.0;
    // Precompute the source taps once; they are shared by all images.
    let mut taps: Vec<[(usize, f64); 4]> = Vec::with_capacity(side * side);
    let last = side as isize - 1;
    for r in 0..side {
        for col in 0..side {
            let dx = col as f64 - centre;
            let dy = r as f64 - centre;
            // Inverse map of the output pixel into the source image.
            let sx = c * dx + s * dy + centre;
            let sy = -s * dx + c * dy + centre;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let mut tap = [(0usize, 0.0f64); 4];
            let corners = [
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x0 + 1, (1.0 - fy) * fx),
                (y0 + 1, x0, fy * (1.0 - fx)),
                (y0 + 1, x0 + 1, fy * fx),
            ];
            for (slot, (yy, xx, w)) in tap.iter_mut().zip(corners) {
                if (0..=last).contains(&yy) && (0..=last).contains(&xx) {
                    *slot = (yy as usize * side + xx as usize, w);
                }
            }
            taps.push(tap);
        }
    }
    let mut x = DenseMatrix::zeros(ds.len(), ds.dim());
    for i in 0..ds.len() {
        let src = ds.x.row(i);
        for (out, tap) in x.row_mut(i).iter_mut().zip(&taps) {
            *out = tap.iter().map(|&(p, w)| w * src[p]).sum();
        }
    }
    Ok(Dataset {
        x,
        y: ds.y.clone(),
        num_classes: ds.num_classes,
    })
}

/// Adds `offset` to every feature. With inputs normalised to `[0, 1]` an
/// offset of 1 yields the `[1, 2]` colour-shifted target.
pub fn color_shift(ds: &Dataset, offset: f64) -> Dataset {
    Dataset {
        x: ds.x.map(|v| v + offset),
        y: ds.y.clone(),
        num_classes: ds.num_classes,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Transform {
    Rotate2d,
    RotateImage { side: usize },
    ColorShift,
}

impl Transform {
    pub fn apply(&self, ds: &Dataset, shift: f64) -> Result<Dataset> {
        match *self {
            Transform::Rotate2d => rotate2d(ds, shift),
            Transform::RotateImage { side } => rotate_image(ds, shift, side),
            Transform::ColorShift => Ok(color_shift(ds, shift)),
        }
    }
}

/// Evenly spaced shifts `total_shift · i / (n_given − 1)`, each domain built
/// directly from the source.
pub fn build_sequence(
    source: &Dataset,
    transform: Transform,
    total_shift: f64,
    n_given: usize,
) -> Result<DomainSequence> {
    if n_given < 2 {
        return Err(Error::arg(format!("n_given must be >= 2, got {n_given}")));
    }
    if source.y.is_none() {
        return Err(Error::Contract("source domain must be labeled".into()));
    }
    let shifts: Vec<f64> = (0..n_given)
        .map(|i| total_shift * i as f64 / (n_given - 1) as f64)
        .collect();
    let mut domains = Vec::with_capacity(n_given);
    domains.push(source.clone());
    for &s in &shifts[1..] {
        domains.push(transform.apply(source, s)?);
    }
    DomainSequence::new(domains, shifts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::make_two_moons;

    fn point(x: f64, y: f64) -> Dataset {
        Dataset::labeled(DenseMatrix::from_vec(1, 2, vec![x, y]).unwrap(), vec![0], 2).unwrap()
    }

    fn image(side: usize, f: impl Fn(usize, usize) -> f64) -> Dataset {
        let data = (0..side * side).map(|p| f(p / side, p % side)).collect();
        Dataset::labeled(DenseMatrix::from_vec(1, side * side, data).unwrap(), vec![0], 2).unwrap()
    }

    #[test]
    fn rotate2d_identities() {
        let ds = make_two_moons(50, 0.1, 1).unwrap();
        assert_eq!(rotate2d(&ds, 0.0).unwrap(), ds);
        let full = rotate2d(&ds, 360.0).unwrap();
        for (a, b) in full.x.data().iter().zip(ds.x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        let r = rotate2d(&point(1.0, 0.0), 90.0).unwrap();
        assert!(r.x[(0, 0)].abs() < 1e-12 && (r.x[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotate2d_rejects_wrong_dim() {
        let ds = Dataset::labeled(DenseMatrix::zeros(1, 3), vec![0], 2).unwrap();
        assert!(matches!(rotate2d(&ds, 10.0), Err(Error::Shape { .. })));
    }

    #[test]
    fn rotate_image_zero_angle_is_bit_identical() {
        let img = image(5, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0);
        assert_eq!(rotate_image(&img, 0.0, 5).unwrap(), img);
    }

    #[test]
    fn rotate_image_half_turn_twice_restores() {
        let img = image(9, |r, c| ((r * 5 + c * 2) % 7) as f64 / 6.0);
        let back = rotate_image(&rotate_image(&img, 180.0, 9).unwrap(), 180.0, 9).unwrap();
        for (a, b) in back.x.data().iter().zip(img.x.data()) {
            assert!((a - b).abs() <= 2e-2);
        }
    }

    #[test]
    fn rotate_image_constant_in_inscribed_disk() {
        let side = 12;
        let img = image(side, |_, _| 0.5);
        let centre = (side as f64 - 1.0) / 2.0;
        for angle in [13.0, 45.0, 90.0, 137.5, -30.0] {
            let out = rotate_image(&img, angle, side).unwrap();
            for r in 0..side {
                for c in 0..side {
                    let d = ((r as f64 - centre).powi(2) + (c as f64 - centre).powi(2)).sqrt();
                    if d <= centre {
                        assert!((out.x[(0, r * side + c)] - 0.5).abs() < 1e-9);
                    }
                }
            }
            let (lo, hi) = out.x.min_max().unwrap();
            assert!(lo >= 0.0 && hi <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn rotate_image_rejects_non_square() {
        let ds = Dataset::labeled(DenseMatrix::zeros(1, 10), vec![0], 2).unwrap();
        assert!(matches!(rotate_image(&ds, 10.0, 3), Err(Error::Shape { .. })));
    }

    #[test]
    fn color_shift_moves_range_and_mean() {
        let img = image(4, |r, c| if (r + c) % 3 == 0 { 1.0 } else { (r * c) as f64 / 9.0 });
        assert_eq!(color_shift(&img, 0.0), img);
        let shifted = color_shift(&img, 1.0);
        let (lo, hi) = shifted.x.min_max().unwrap();
        assert!(lo >= 1.0 && hi <= 2.0);
        assert!((shifted.x.mean() - (img.x.mean() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn build_sequence_spacing() {
        let src = make_two_moons(20, 0.0, 0).unwrap();
        let two = build_sequence(&src, Transform::Rotate2d, 30.0, 2).unwrap();
        assert_eq!(two.shift_params(), &[0.0, 30.0]);
        assert_eq!(two.source(), &src);
        let six = build_sequence(&src, Transform::Rotate2d, 45.0, 6).unwrap();
        assert_eq!(six.shift_params(), &[0.0, 9.0, 18.0, 27.0, 36.0, 45.0]);
        assert!(build_sequence(&src, Transform::Rotate2d, 45.0, 1).is_err());
    }

    #[test]
    fn build_sequence_matches_direct_transform() {
        let src = make_two_moons(40, 0.05, 2).unwrap();
        for tr in [Transform::Rotate2d, Transform::ColorShift] {
            let seq = build_sequence(&src, tr, 60.0, 5).unwrap();
            for (i, &s) in seq.shift_params().iter().enumerate() {
                assert_eq!(seq.oracle(i), &tr.apply(&src, s).unwrap());
                assert_eq!(seq.oracle(i).y, src.y);
            }
        }
    }
}
