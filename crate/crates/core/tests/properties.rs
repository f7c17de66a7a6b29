mod common;

use std::sync::Arc;

use common::{rand_matrix, rand_spd, rand_vec, tiny_model};
use emdm::bench::{instance_seed, nmse, Estimator, ResultRow};
use emdm::channel::{from_angular, to_angular, to_real};
use emdm::energy::linear_schedule;
use emdm::linalg::{dft_matrix, kron, spectral_solve, sym_eig, CMatrix};
use emdm::measurement::{gen_pilots, measurement_operator, EstimationProblem, MeasurementOperator};
use emdm::rng;
use emdm::sampler::{mh_log_acceptance, SamplerConfig};
use emdm::Complex64;
use proptest::prelude::*;

fn cmat(seed: u64, r: usize, c: usize) -> emdm::ComplexMatrix {
    let v = rand_vec(seed, 2 * r * c);
    CMatrix::from_fn(r, c, |i, j| {
        Complex64::new(v[2 * (i * c + j)], v[2 * (i * c + j) + 1])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kron_mixed_product(seed in any::<u64>(), m in 1usize..4, n in 1usize..4, k in 1usize..4, l in 1usize..4) {
        let (a, b) = (cmat(seed, m, n), cmat(seed ^ 1, k, l));
        let (c, d) = (cmat(seed ^ 2, n, 2), cmat(seed ^ 3, l, 3));
        let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap()).unwrap();
        let rhs = kron(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn spectral_solve_residual(seed in any::<u64>(), n in 1usize..9, c in 0.0f64..50.0, d in 1e-3f64..5.0) {
        let m = rand_spd(seed, n);
        let e = sym_eig(&m).unwrap();
        let b = rand_vec(seed ^ 9, n);
        let x = spectral_solve(&e, c, d, &b).unwrap();
        let lhs = m.scale(c).add_diag(d).matvec(&x).unwrap();
        let res: f64 = lhs.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(res <= 1e-9 * nb.max(1e-300));
    }

    #[test]
    fn schedule_tables_are_monotone(t_max in 1usize..300, lo in 1e-5f64..0.05, span in 1e-4f64..0.9) {
        let hi = (lo + span).min(0.999);
        prop_assume!(hi > lo);
        let s = linear_schedule(t_max, lo, hi).unwrap();
        prop_assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        prop_assert!(s.alpha_bars().iter().all(|&a| a > 0.0 && a < 1.0));
        prop_assert_eq!(s.beta_tilde(1), 0.0);
        for t in 1..=t_max {
            prop_assert!(s.beta_tilde(t) >= 0.0 && s.beta_tilde(t) <= s.beta(t));
        }
    }

    #[test]
    fn angular_transform_is_unitary(seed in any::<u64>(), e_r in 0u32..4, e_t in 0u32..4) {
        let (n_r, n_t) = (1usize << e_r, 1usize << e_t);
        let h = cmat(seed, n_r, n_t);
        let (ft, fr) = (dft_matrix(n_t), dft_matrix(n_r));
        let h_ad = to_angular(&h, &ft, &fr).unwrap();
        let n0: f64 = h.data().iter().map(|z| z.norm_sqr()).sum();
        let n1: f64 = h_ad.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((n0 - n1).abs() <= 1e-10 * n0.max(1.0));
        let back = from_angular(&h_ad, &ft, &fr).unwrap();
        prop_assert!(back.max_abs_diff(&h) < 1e-10);
        let real = to_real(&h_ad);
        let n2: f64 = real.iter().map(|v| v * v).sum();
        prop_assert!((n1 - n2).abs() <= 1e-12 * n1.max(1.0));
    }

    #[test]
    fn operator_gram_spectrum_is_nonnegative(seed in any::<u64>(), n_t in 1usize..6, n_r in 1usize..4, n_p in 1usize..6) {
        let p = gen_pilots(n_t, n_p, seed, &mut rng::stream(seed, &[]));
        let op = measurement_operator(&p, n_r).unwrap();
        prop_assert_eq!(op.m(), 2 * n_r * n_p);
        prop_assert_eq!(op.n(), 2 * n_r * n_t);
        prop_assert!(op.gram_eig.eigenvalues.iter().all(|&l| l > -1e-9));
    }

    #[test]
    fn mh_ratio_is_zero_on_self_and_antisymmetric(seed in 0u64..1000, t in 2usize..=100) {
        let model = tiny_model(2, 2, 4, seed);
        let op = Arc::new(MeasurementOperator::from_matrix(rand_matrix(seed, 4, 8)).unwrap());
        let p = EstimationProblem::new(op, rand_vec(seed ^ 5, 4), 0.2).unwrap();
        let cfg = SamplerConfig::default();
        let (h, g) = (rand_vec(seed ^ 6, 8), rand_vec(seed ^ 7, 8));
        prop_assert_eq!(mh_log_acceptance(&model, Some(&p), &h, &h, t, &cfg).unwrap(), 0.0);
        let f = mh_log_acceptance(&model, Some(&p), &h, &g, t, &cfg).unwrap();
        let b = mh_log_acceptance(&model, Some(&p), &g, &h, t, &cfg).unwrap();
        prop_assert!((f + b).abs() <= 1e-9 * f.abs().max(1.0));
    }

    #[test]
    fn nmse_is_nonnegative_and_zero_only_at_truth(h in prop::collection::vec(-10.0f64..10.0, 1..20), scale in 0.0f64..3.0) {
        prop_assume!(h.iter().any(|v| *v != 0.0));
        let est: Vec<f64> = h.iter().map(|v| scale * v).collect();
        let e = nmse(&est, &h).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((e - (1.0 - scale).powi(2)).abs() < 1e-12);
        prop_assert_eq!(nmse(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn csv_rows_round_trip(nmse_v in 0.0f64..1e6, snr in -30.0f64..60.0, n_p in 1usize..64, trial in 0usize..10_000, seed in any::<u64>(), wall in 0.0f64..1e5) {
        let row = ResultRow {
            estimator: Estimator::DmMh,
            snr_db: snr,
            n_p,
            alpha: n_p as f64 / 64.0,
            trial,
            seed,
            nmse: nmse_v,
            wall_time_ms: wall,
        };
        prop_assert_eq!(ResultRow::parse_csv(&row.to_csv()).unwrap(), row);
    }

    #[test]
    fn instance_seeds_separate_trials(base in any::<u64>(), snr in -20.0f64..40.0, n_p in 1usize..32, trial in 0usize..1000) {
        prop_assert_ne!(instance_seed(base, snr, n_p, trial), instance_seed(base, snr, n_p, trial + 1));
        prop_assert_eq!(instance_seed(base, snr, n_p, trial), instance_seed(base, snr, n_p, trial));
    }
}
