use nalgebra::{DMatrix, DVector};
use noise_sched::control::{adaptive_params, lambda_adaptive};
use noise_sched::evaluation::{exact_sampling_kl, kl_gaussians, run, ExperimentSpec, CSV_COLUMNS};
use noise_sched::numerics::lambert_w0;
use noise_sched::sampler::ei_step_coeffs;
use noise_sched::schedules::{CatalogParams, NoiseSchedule};
use noise_sched::targets::GaussianTarget;
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn linear(beta_min: f64, beta_max: f64) -> NoiseSchedule<f64> {
    NoiseSchedule::make_catalog(CatalogParams::Linear { beta_min, beta_max }, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambert_inverts(z in -0.3678f64..1e6) {
        let w = lambert_w0(z).unwrap();
        prop_assert!(w >= -1.0);
        prop_assert!((w * w.exp() - z).abs() <= 1e-12 * z.abs().max(1e-3));
    }

    #[test]
    fn adaptive_lambda_solves_product_equation(k in 0.1f64..100.0, n in 1usize..2000, horizon in 0.2f64..5.0) {
        let s = lambda_adaptive(k, n, horizon).unwrap();
        let lt = s.lambda * horizon;
        prop_assert!(close(lt * lt.exp(), k * n as f64, 1e-12));
        prop_assert!(close(s.z, k * n as f64, 1e-12));
    }

    #[test]
    fn gaussian_kl_is_nonnegative(
        m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
        v1 in 0.01f64..10.0, v2 in 0.01f64..10.0, c in -0.9f64..0.9,
    ) {
        let mu1 = DVector::from_vec(vec![m1, 0.0]);
        let mu2 = DVector::from_vec(vec![m2, 1.0]);
        let cov1 = DMatrix::from_row_slice(2, 2, &[v1, c * v1.sqrt(), c * v1.sqrt(), 1.0]);
        let cov2 = DMatrix::from_row_slice(2, 2, &[v2, 0.0, 0.0, 2.0]);
        prop_assert!(kl_gaussians(&mu1, &cov1, &mu2, &cov2).unwrap() >= 0.0);
        prop_assert_eq!(kl_gaussians(&mu1, &cov1, &mu1, &cov1).unwrap(), 0.0);

        let one = |m: f64, v: f64| (DVector::from_element(1, m), DMatrix::from_element(1, 1, v));
        let ((a, va), (b, vb)) = (one(m1, v1), one(m2, v2));
        let direct = 0.5 * (v1 / v2 + (m2 - m1).powi(2) / v2 - 1.0 + (v2 / v1).ln());
        prop_assert!((kl_gaussians(&a, &va, &b, &vb).unwrap() - direct).abs() < 1e-12 * direct.max(1.0));
    }

    #[test]
    fn ei_steps_compose(beta_min in 0.05f64..2.0, spread in 0.0f64..25.0, a in 0.0f64..0.4, b in 0.45f64..0.7, c in 0.75f64..1.0) {
        let s = linear(beta_min, beta_min + spread);
        let whole = ei_step_coeffs(&s, a, c).unwrap();
        let joined = ei_step_coeffs(&s, a, b).unwrap().compose(ei_step_coeffs(&s, b, c).unwrap());
        prop_assert!(close(whole.a, joined.a, 1e-10));
        prop_assert!(close(whole.b, joined.b, 1e-9));
        prop_assert!(close(whole.v, joined.v, 1e-9));
    }

    #[test]
    fn ou_step_closed_form(tau in 0.0f64..2.5, h in 0.001f64..0.5) {
        let s = NoiseSchedule::ou(3.0).unwrap();
        let c = ei_step_coeffs(&s, tau, (tau + h).min(3.0)).unwrap();
        let h = (tau + h).min(3.0) - tau;
        prop_assert!(close(c.a, h.exp(), 1e-12));
        prop_assert!(close(c.b, 2.0 * h.exp_m1(), 1e-10));
        prop_assert!(close(c.v, (2.0 * h).exp_m1(), 1e-10));
    }

    #[test]
    fn vp_marginals_are_monotone(beta_min in 0.05f64..2.0, spread in 0.0f64..25.0) {
        let s = linear(beta_min, beta_min + spread);
        let mut prev = s.marginal_coeffs(0.0).unwrap();
        prop_assert_eq!((prev.alpha, prev.sigma2), (1.0, 0.0));
        for i in 1..=40 {
            let m = s.marginal_coeffs(i as f64 / 40.0).unwrap();
            prop_assert!(m.alpha < prev.alpha && m.sigma2 > prev.sigma2);
            prop_assert!((m.alpha * m.alpha + m.sigma2 - 1.0).abs() < 1e-10);
            prev = m;
        }
    }

    #[test]
    fn adaptive_schedule_is_positive(
        k in 0.5f64..60.0, gamma in 1.0f64..3.0, theta in 0.1f64..1.0, rho in 0.0f64..0.9, n in 4usize..400,
    ) {
        let hp = adaptive_params(k, gamma, theta, rho, n, 1.0).unwrap();
        let s = hp.schedule().unwrap();
        let mut alpha_prev = 1.0;
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            prop_assert!(s.g(t) > 0.0 && s.f(t) >= 0.0);
            let m = s.marginal_coeffs(t).unwrap();
            prop_assert!(m.alpha <= alpha_prev && m.alpha > 0.0);
            alpha_prev = m.alpha;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampling_kl_is_nonnegative(v1 in 0.01f64..4.0, v2 in 0.01f64..4.0, m in -1.0f64..1.0, n in 1usize..60, horizon in 0.5f64..4.0) {
        let target = GaussianTarget::diagonal(vec![m, -m], vec![v1, v2]).unwrap();
        let r = exact_sampling_kl(&NoiseSchedule::ou(horizon).unwrap(), &target, n).unwrap();
        prop_assert!(r.kl >= 0.0 && r.kl.is_finite());
        prop_assert!(r.init_error >= 0.0);
    }

    #[test]
    fn csv_rows_follow_the_grid(raw in prop::collection::btree_set(1u32..400, 1..8)) {
        let energies: Vec<f64> = raw.iter().map(|&e| e as f64 / 8.0).collect();
        let spec = ExperimentSpec::from_json(&format!(r#"{{"kind":"u-curve","energies":{energies:?},"n":20}}"#)).unwrap();
        let result = run(&spec).unwrap();
        prop_assert_eq!(&result.metadata.grid, &energies);
        let values: Vec<f64> = result.records.iter().map(|r| r.value).collect();
        prop_assert_eq!(&values, &energies);
        let text = result.to_csv();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        prop_assert_eq!(rows.len(), energies.len());
        for (row, e) in rows.iter().zip(&energies) {
            prop_assert_eq!(row.len(), CSV_COLUMNS.len());
            prop_assert_eq!(row[0].parse::<f64>().unwrap(), *e);
        }
    }
}
