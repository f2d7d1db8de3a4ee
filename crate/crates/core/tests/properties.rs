//! Property tests over the public API.

use proptest::prelude::*;

use gdo_core::domains::{encode_idx, parse_idx, rotate2d, Dataset};
use gdo_core::gdo::{lambda_grid, total_outer_steps};
use gdo_core::harness::{aggregate, parse_results_csv, results_csv, summary_csv, Method, ResultRow};
use gdo_core::ndnn::{kl_to_reference, margin_loss, softmax, softmax_ce, DenseMatrix};
use gdo_core::theory::{error_bound, lyapunov_v, BoundParams};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-20.0..20.0f64, rows * cols).prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

fn logits() -> impl Strategy<Value = DenseMatrix> {
    (1..6usize, 2..6usize).prop_flat_map(|(n, k)| matrix(n, k))
}

fn bound_params() -> impl Strategy<Value = BoundParams> {
    (
        0.1..5.0f64,
        0.0..5.0f64,
        0.01..1.0f64,
        0.0..1.0f64,
        3..300usize,
        1..200usize,
        0.01..0.5f64,
        0.0..1.0f64,
        0.0..2.0f64,
    )
        .prop_map(|(mu, sigma2, gamma0, epsilon, m, t, delta, err0, c)| BoundParams {
            mu,
            sigma2,
            gamma0,
            epsilon,
            m,
            t,
            delta,
            err0,
            c,
        })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(z in logits()) {
        let p = softmax(&z);
        for row in p.row_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn losses_are_non_negative(z in logits(), other in any::<u64>()) {
        let (n, k) = z.shape();
        let labels: Vec<usize> = (0..n).map(|i| ((other >> (i % 60)) as usize) % k).collect();
        prop_assert!(softmax_ce(&z, &labels).unwrap().value >= 0.0);
        prop_assert!(margin_loss(&z).unwrap().value >= 0.0);
        let shifted = z.map(|v| -0.5 * v + 1.0);
        prop_assert!(kl_to_reference(&z, &shifted).unwrap().value >= 0.0);
        prop_assert!(kl_to_reference(&z, &z).unwrap().value.abs() <= 1e-12);
    }

    #[test]
    fn logit_gradients_of_ce_and_kl_sum_to_zero_per_row(z in logits()) {
        let labels = vec![0; z.rows()];
        for g in [softmax_ce(&z, &labels).unwrap().grad, kl_to_reference(&z, &z.scale(0.3)).unwrap().grad] {
            for row in g.row_iter() {
                prop_assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_grid_is_increasing_and_ends_at_one(s in 0..50usize) {
        let g = lambda_grid(s);
        prop_assert_eq!(g.len(), s + 1);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*g.last().unwrap(), 1.0);
        prop_assert!(g[0] > 0.0);
    }

    #[test]
    fn outer_steps_formula(n_given in 2..40usize, s in 0..20usize) {
        prop_assert_eq!(total_outer_steps(n_given, s), (n_given - 1) * (s + 1) + 1);
        prop_assert_eq!(total_outer_steps(n_given, s), 1 + (n_given - 1) * lambda_grid(s).len());
    }

    #[test]
    fn rotations_compose_and_preserve_norms(pts in matrix(6, 2), a in -180.0..180.0f64, b in -180.0..180.0f64) {
        let ds = Dataset::unlabeled(pts, 2).unwrap();
        let once = rotate2d(&ds, a + b).unwrap();
        let twice = rotate2d(&rotate2d(&ds, a).unwrap(), b).unwrap();
        for (p, q) in once.x.data().iter().zip(twice.x.data()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
        for (r0, r1) in ds.x.row_iter().zip(once.x.row_iter()) {
            let n0 = r0[0].hypot(r0[1]);
            prop_assert!((n0 - r1[0].hypot(r1[1])).abs() < 1e-9);
        }
    }

    #[test]
    fn lyapunov_is_linear(err in 0.0..1.0f64, d in prop::collection::vec(-3.0..3.0f64, 1..8), l1 in 0.0..5.0f64, l2 in 0.0..5.0f64) {
        let zero = vec![0.0; d.len()];
        let drift = lyapunov_v(0.0, &d, &zero, 1.0).unwrap();
        let v = |e: f64, l: f64| lyapunov_v(e, &d, &zero, l).unwrap();
        prop_assert!((v(err, l1 + l2) - (err + (l1 + l2) * drift)).abs() < 1e-9);
        prop_assert!((v(err, l1) - v(0.0, l1) - err).abs() < 1e-12);
    }

    #[test]
    fn bound_is_monotone(p in bound_params(), dm in 1..50usize, de in 0.0..1.0f64, ds in 0.0..3.0f64) {
        let b = error_bound(&p).unwrap();
        let more_m = error_bound(&BoundParams { m: p.m + dm, ..p.clone() }).unwrap();
        let more_eps = error_bound(&BoundParams { epsilon: p.epsilon + de, ..p.clone() }).unwrap();
        let more_var = error_bound(&BoundParams { sigma2: p.sigma2 + ds, ..p.clone() }).unwrap();
        prop_assert!(more_m <= b + 1e-15);
        prop_assert!(more_eps >= b);
        prop_assert!(more_var >= b);
    }

    #[test]
    fn idx_round_trip(pixels in prop::collection::vec(any::<u8>(), 12..=12), labels in prop::collection::vec(0..10usize, 3..=3)) {
        let x = DenseMatrix::from_vec(3, 4, pixels.iter().map(|&p| f64::from(p) / 255.0).collect()).unwrap();
        let ds = Dataset::labeled(x, labels, 10).unwrap();
        let (img, lab) = encode_idx(&ds, 2, 2).unwrap();
        prop_assert_eq!(&img[16..], &pixels[..]);
        let back = parse_idx(&img, &lab, "i".as_ref(), "l".as_ref()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn aggregation_survives_csv_round_trip(accs in prop::collection::vec(0.0..=1.0f64, 1..12)) {
        let rows: Vec<ResultRow> = accs
            .iter()
            .enumerate()
            .map(|(i, &a)| ResultRow {
                dataset: "two_moons".into(),
                method: if i % 2 == 0 { Method::Gdo } else { Method::Gst },
                n_given: 2 + i % 3,
                inter_steps: 1,
                seed: i as u64,
                target_acc: a,
                domain_acc: vec![],
                shifts: vec![],
                runtime_ms: 0,
                fingerprint: String::new(),
            })
            .collect();
        let direct = summary_csv(&aggregate(&rows));
        let reparsed = parse_results_csv(&results_csv(&rows, false)).unwrap();
        prop_assert_eq!(summary_csv(&aggregate(&reparsed)), direct);
        for s in aggregate(&rows) {
            prop_assert!(s.half_width >= 0.0);
            prop_assert!(s.mean >= 0.0 && s.mean <= 100.0 + 1e-9);
        }
    }
}
