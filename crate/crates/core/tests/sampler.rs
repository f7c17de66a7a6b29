#![allow(clippy::needless_range_loop)]

mod common;

use std::sync::Arc;

use common::{
    dense_inverse, dense_solve, fd_coord, rand_matrix, rand_vec, rel_err, schedule, tiny_model,
};
use emdm::energy::{EnergyError, EnergyPrior, GaussianEnergy, NoiseSchedule};
use emdm::linalg::Matrix;
use emdm::measurement::{EstimationProblem, MeasurementOperator};
use emdm::rng;
use emdm::sampler::{
    kernel_mean_at, likelihood_score, log_likelihood, log_prior, mh_log_acceptance, prior_score,
    propose, sample_posterior, sample_posterior_with, transition, transition_logpdf, SamplerConfig,
    SamplerError,
};
use emdm::RealMatrix;
use rand::Rng;

/// `f ≡ 0`, so every score vanishes.
struct FlatPrior {
    schedule: NoiseSchedule,
    n: usize,
}

impl EnergyPrior for FlatPrior {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn energy_and_epsilon(&self, _h: &[f64], _t: usize) -> Result<(f64, Vec<f64>), EnergyError> {
        Ok((0.0, vec![0.0; self.n]))
    }
}

fn problem(a: RealMatrix, y: Vec<f64>, sigma2: f64) -> EstimationProblem {
    let op = Arc::new(MeasurementOperator::from_matrix(a).unwrap());
    EstimationProblem::new(op, y, sigma2).unwrap()
}

fn random_problem(seed: u64, m: usize, n: usize) -> EstimationProblem {
    problem(rand_matrix(seed, m, n), rand_vec(seed + 1, m), 0.3)
}

fn sigma_t(p: &EstimationProblem, t: usize, s: &NoiseSchedule) -> RealMatrix {
    let ab = s.alpha_bar(t);
    let aat = p.a().matmul(&p.a().transpose()).unwrap();
    aat.scale((1.0 - ab) / ab).add_diag(p.sigma2)
}

#[test]
fn scalar_likelihood_by_hand() {
    let s = schedule(10);
    let t = 4;
    let ab = s.alpha_bar(t);
    // Σ_t = (1-ᾱ)/ᾱ + σ², choose y so that r² / Σ_t = 2
    let sigma2 = 0.5;
    let var = (1.0 - ab) / ab + sigma2;
    let h = 0.8;
    let y = h / ab.sqrt() + (2.0 * var).sqrt();
    let p = problem(Matrix::from_rows(&[&[1.0]]).unwrap(), vec![y], sigma2);
    let ll = log_likelihood(&p, &[h], t, &s).unwrap();
    assert!((ll + 1.0).abs() < 1e-12, "{ll}");
    // score = (1/√ᾱ) r / Σ_t
    let g = likelihood_score(&p, &[h], t, &s).unwrap();
    assert!(rel_err(g[0], (2.0 / var).sqrt() / ab.sqrt()) < 1e-12);
}

#[test]
fn likelihood_matches_dense_oracle() {
    let s = schedule(100);
    let p = random_problem(3, 4, 6);
    let h = rand_vec(5, 6);
    for t in [1, 30, 100] {
        let ab = s.alpha_bar(t);
        let ah = p.a().matvec(&h).unwrap();
        let r: Vec<f64> =
            p.y.iter()
                .zip(&ah)
                .map(|(y, v)| y - v / ab.sqrt())
                .collect();
        let w = dense_solve(&sigma_t(&p, t, &s), &r);
        let quad: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
        let ll = log_likelihood(&p, &h, t, &s).unwrap();
        assert!(rel_err(ll, -0.5 * quad) < 1e-9, "t={t}");
        let g = likelihood_score(&p, &h, t, &s).unwrap();
        let f = |x: &[f64]| log_likelihood(&p, x, t, &s).unwrap();
        for i in 0..6 {
            let fd = fd_coord(&f, &h, i, 1e-5);
            assert!(
                rel_err(g[i], fd) < 1e-6 || (g[i] - fd).abs() < 1e-9,
                "t={t} i={i}"
            );
        }
    }
}

#[test]
fn likelihood_score_vanishes_at_noiseless_fit() {
    let s = schedule(100);
    let a = rand_matrix(7, 4, 6);
    let h = rand_vec(8, 6);
    let t = 25;
    let y: Vec<f64> = a
        .matvec(&h)
        .unwrap()
        .iter()
        .map(|v| v / s.alpha_bar(t).sqrt())
        .collect();
    let p = problem(a, y, 0.1);
    assert!(likelihood_score(&p, &h, t, &s)
        .unwrap()
        .iter()
        .all(|v| v.abs() < 1e-12));
    assert!(log_likelihood(&p, &h, t, &s).unwrap().abs() < 1e-20);
}

#[test]
fn prior_score_is_scaled_epsilon() {
    let model = tiny_model(2, 2, 4, 9);
    let h = rand_vec(10, 8);
    for t in [2, 70] {
        let c = (1.0 - model.schedule.alpha_bar(t)).sqrt();
        let eps = model.epsilon(&h, t).unwrap();
        let sc = prior_score(&model, &h, t).unwrap();
        for (s, e) in sc.iter().zip(&eps) {
            assert!((s * c + e).abs() < 1e-14);
        }
        let f = |x: &[f64]| log_prior(&model, x, t).unwrap();
        for i in 0..8 {
            assert!(rel_err(sc[i], fd_coord(&f, &h, i, 1e-5)) < 1e-5);
        }
    }
}

#[test]
fn proposal_mean_and_spread() {
    let flat = FlatPrior {
        schedule: schedule(100),
        n: 3,
    };
    let cfg = SamplerConfig::default();
    let h = [1.0, -2.0, 0.5];
    let t = 40;
    let a = flat.schedule.alpha(t);
    let mean = propose(&flat, None, &h, t, &cfg, &[0.0; 3]).unwrap();
    for (m, x) in mean.iter().zip(&h) {
        assert!((m - x / a.sqrt()).abs() < 1e-15);
    }

    let bt = flat.schedule.beta_tilde(t);
    for (sqrt, std) in [(false, bt), (true, bt.sqrt())] {
        let cfg = SamplerConfig {
            ddpm_std_sqrt: sqrt,
            ..cfg
        };
        let mut r = rng::stream(11, &[]);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let z = rng::normal_vec(&mut r, 3);
            let p = propose(&flat, None, &h, t, &cfg, &z).unwrap();
            acc += (p[0] - mean[0]).powi(2);
        }
        let var = acc / draws as f64;
        assert!(
            (var / (std * std) - 1.0).abs() < 0.05,
            "{var} vs {}",
            std * std
        );
    }
}

#[test]
fn proposal_follows_drift_formula() {
    let s = schedule(100);
    let model = tiny_model(2, 2, 4, 12);
    let p = random_problem(13, 4, 8);
    let cfg = SamplerConfig {
        grad_scale_s: 0.7,
        ..SamplerConfig::default()
    };
    let h = rand_vec(14, 8);
    let z = rand_vec(15, 8);
    let t = 55;
    let got = propose(&model, Some(&p), &h, t, &cfg, &z).unwrap();
    let ps = prior_score(&model, &h, t).unwrap();
    let ls = likelihood_score(&p, &h, t, &s).unwrap();
    let (a, bt) = (s.alpha(t), s.beta_tilde(t));
    for i in 0..8 {
        let expected = (h[i] + (1.0 - a) * (ps[i] + 0.7 * ls[i])) / a.sqrt() + bt * z[i];
        assert!((got[i] - expected).abs() < 1e-12);
    }
    let mean = kernel_mean_at(&model, Some(&p), &h, t, &cfg).unwrap();
    assert_eq!(
        transition_logpdf(&model, Some(&p), &h, &mean, t, &cfg).unwrap(),
        0.0
    );
    let lq = transition_logpdf(&model, Some(&p), &h, &got, t, &cfg).unwrap();
    let zz: f64 = z.iter().map(|v| v * v).sum();
    assert!(rel_err(lq, -0.5 * zz) < 1e-9);
}

#[test]
fn degenerate_first_step() {
    let model = tiny_model(2, 2, 4, 1);
    let h = rand_vec(2, 8);
    let cfg = SamplerConfig::default();
    assert!(matches!(
        transition_logpdf(&model, None, &h, &h, 1, &cfg),
        Err(SamplerError::DegenerateKernel { t: 1 })
    ));
    let step = transition(&model, None, &h, 1, &cfg, &[0.0; 8], f64::INFINITY).unwrap();
    assert!(step.record.accepted);
}

#[test]
fn self_acceptance_is_zero_and_ratio_is_antisymmetric() {
    let model = tiny_model(2, 2, 4, 16);
    let p = random_problem(17, 5, 8);
    let cfg = SamplerConfig::default();
    for k in 0..10 {
        let t = 2 + 9 * k;
        let h = rand_vec(100 + k as u64, 8);
        let g = rand_vec(200 + k as u64, 8);
        assert_eq!(
            mh_log_acceptance(&model, Some(&p), &h, &h, t, &cfg).unwrap(),
            0.0
        );
        let fwd = mh_log_acceptance(&model, Some(&p), &h, &g, t, &cfg).unwrap();
        let back = mh_log_acceptance(&model, Some(&p), &g, &h, t, &cfg).unwrap();
        assert!(
            (fwd + back).abs() <= 1e-9 * fwd.abs().max(1.0),
            "{fwd} {back}"
        );
    }
}

#[test]
fn acceptance_matches_gaussian_mala_oracle() {
    let s = schedule(20);
    let cov = Matrix::from_rows(&[&[1.0, 0.4], &[0.4, 2.0]]).unwrap();
    let g = GaussianEnergy::stationary(s.clone(), &cov).unwrap();
    let prec = dense_inverse(&cov);
    let cfg = SamplerConfig {
        t_max: 20,
        ..SamplerConfig::default()
    };
    let (h, x) = ([0.3, -1.1], [0.9, 0.2]);
    let t = 12;
    let (a, std) = (s.alpha(t), s.beta_tilde(t));
    let lp = |v: &[f64]| {
        -0.5 * (prec[(0, 0)] * v[0] * v[0]
            + 2.0 * prec[(0, 1)] * v[0] * v[1]
            + prec[(1, 1)] * v[1] * v[1])
    };
    let mean = |v: &[f64]| -> Vec<f64> {
        let sc = prec.matvec(v).unwrap();
        (0..2)
            .map(|i| (v[i] - (1.0 - a) * sc[i]) / a.sqrt())
            .collect()
    };
    let lq = |to: &[f64], from: &[f64]| {
        let m = mean(from);
        -((to[0] - m[0]).powi(2) + (to[1] - m[1]).powi(2)) / (2.0 * std * std)
    };
    let expected = lp(&x) - lp(&h) + lq(&h, &x) - lq(&x, &h);
    let got = mh_log_acceptance(&g, None, &h, &x, t, &cfg).unwrap();
    assert!(
        (got - expected).abs() < 1e-9 * expected.abs().max(1.0),
        "{got} vs {expected}"
    );
}

#[test]
fn rejection_keeps_state() {
    let model = tiny_model(2, 2, 4, 18);
    let h = rand_vec(19, 8);
    let z = rand_vec(20, 8);
    let cfg = SamplerConfig::default();
    let step = transition(&model, None, &h, 50, &cfg, &z, f64::INFINITY).unwrap();
    assert!(!step.record.accepted);
    assert_eq!(step.state, h);
    let step = transition(&model, None, &h, 50, &cfg, &z, f64::NEG_INFINITY).unwrap();
    assert!(step.record.accepted);
    assert_eq!(step.state, propose(&model, None, &h, 50, &cfg, &z).unwrap());
}

#[test]
fn always_accepting_equals_unadjusted_sampler() {
    let model = tiny_model(2, 2, 4, 21);
    let p = random_problem(22, 4, 8);
    let mh = SamplerConfig::default();
    let plain = SamplerConfig {
        mh_enabled: false,
        ..mh
    };
    let (a, ta) = sample_posterior_with(&model, &p, &mh, &mut rng::stream(5, &[]), |r| {
        let _ = r.random::<f64>();
        f64::NEG_INFINITY
    })
    .unwrap();
    let (b, tb) = sample_posterior(&model, &p, &plain, &mut rng::stream(5, &[])).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.len(), 100);
    assert_eq!(ta.acceptance_rate(), 1.0);
    assert_eq!(tb.acceptance_rate(), 1.0);
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let model = tiny_model(2, 2, 4, 23);
    let p = random_problem(24, 4, 8);
    let cfg = SamplerConfig::default();
    let run = |seed| sample_posterior(&model, &p, &cfg, &mut rng::stream(seed, &[])).unwrap();
    let (a, ta) = run(1);
    let (b, tb) = run(1);
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_ne!(a, run(2).0);
    let mut csv = Vec::new();
    ta.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 101);
}

#[test]
fn invalid_configs_and_shapes() {
    let model = tiny_model(2, 2, 4, 25);
    let p = random_problem(26, 4, 8);
    let mut r = rng::stream(0, &[]);
    let bad_scale = SamplerConfig {
        grad_scale_s: 0.0,
        ..SamplerConfig::default()
    };
    assert!(matches!(
        sample_posterior(&model, &p, &bad_scale, &mut r),
        Err(SamplerError::InvalidConfig(_))
    ));
    let bad_t = SamplerConfig {
        t_max: 50,
        ..SamplerConfig::default()
    };
    assert!(sample_posterior(&model, &p, &bad_t, &mut r).is_err());
    let wrong = random_problem(27, 4, 6);
    assert!(matches!(
        sample_posterior(&model, &wrong, &SamplerConfig::default(), &mut r),
        Err(SamplerError::DimensionMismatch(_))
    ));
}
