mod common;

use std::time::Instant;

use blindcrb::channel::io::fixture_h1;
use blindcrb::channel::toeplitz_op;
use blindcrb::fim::*;
use blindcrb::scalar::Field;
use blindcrb::sim::*;
use blindcrb::Channel64;
use common::*;
use nalgebra::{DMatrix, DVector};

fn small_channel() -> Channel64 {
    Channel64::from_real("small", &DMatrix::from_row_slice(2, 2, &[1.0, -0.4, 0.3, 0.8])).unwrap()
}

fn assert_oracle(name: &str, est: &McFimEstimate<f64>, j: &DMatrix<f64>) {
    let rel = est.trace_rel_error(j);
    let z = est.z_scores(j);
    let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("{name}: trace rel err {rel:.4}, max |z| {zmax:.2}");
    assert!(rel < 0.05, "{name}: trace rel error {rel}");
    assert!(zmax < 3.0, "{name}: max z {zmax}");
    for (i, (m, se)) in est.mean_score.iter().zip(est.mean_score_se.iter()).enumerate() {
        assert!(m.abs() < 3.0 * se, "{name}: score {i} mean {m} se {se}");
    }
}

#[test]
fn score_oracle_deterministic_real() {
    let ch = small_channel();
    let sim = BurstSimulator::<f64, f64>::new(&ch, Model::Deterministic, 6, 1.0, 0.5, 20).unwrap();
    let a = sim.fixed_symbols().unwrap().clone();
    let sm = ScoreModel::deterministic(&ch, &a, 0.5).unwrap();
    let est = score_covariance_fim(&sim, &sm, 10_000).unwrap();
    let f = deterministic_fim(&ch, &a, 0.5, 6).unwrap();
    assert_oracle("det/real", &est, f.real_fim());
    // The scale direction carries no information.
    let v = blindcrb::linalg::realify_params(&deterministic_scale_direction(&ch, &a)).rows(0, 11).into_owned();
    let (q, se) = est.quad_form(&(v.clone() / v.norm()));
    assert!(q <= 3.0 * se + 1e-20, "null direction {q} se {se}");
}

#[test]
fn score_oracle_deterministic_complex_trace() {
    let ch = small_channel();
    let sim = BurstSimulator::<f64, C64>::new(&ch, Model::Deterministic, 5, 1.0, 0.5, 5).unwrap();
    let a = sim.fixed_symbols().unwrap().clone();
    let sm = ScoreModel::deterministic(&ch, &a, 0.5).unwrap();
    let est = score_covariance_fim(&sim, &sm, 10_000).unwrap();
    let f = deterministic_fim(&ch, &a, 0.5, 5).unwrap();
    assert!(est.trace_rel_error(f.real_fim()) < 0.05);
    let rep = analyze_singularities(&f, &[], None);
    for k in 0..rep.nullity {
        let (q, se) = est.quad_form(&rep.null_basis.column(k).into_owned());
        assert!(q <= 3.0 * se + 1e-20);
    }
}

#[test]
fn score_oracle_gaussian() {
    let ch = small_channel();
    let cfg = GaussianModelConfig::new(1.0, 0.3, 4).unwrap();
    let sim = BurstSimulator::<f64, f64>::new(&ch, Model::Gaussian, 4, 1.0, 0.3, 8).unwrap();
    let sm = ScoreModel::<f64, f64>::gaussian(&ch, &cfg).unwrap();
    let est = score_covariance_fim(&sim, &sm, 10_000).unwrap();
    assert_oracle("gauss/real", &est, gaussian_fim_real(&ch, &cfg).unwrap().real_fim());

    let sim = BurstSimulator::<f64, C64>::new(&ch, Model::Gaussian, 4, 1.0, 0.3, 9).unwrap();
    let sm = ScoreModel::<f64, C64>::gaussian(&ch, &cfg).unwrap();
    let est = score_covariance_fim(&sim, &sm, 10_000).unwrap();
    let f = gaussian_fim_complex(&ch, &cfg).unwrap();
    assert!(est.trace_rel_error(f.real_fim()) < 0.05);
}

#[test]
fn noiseless_burst_is_exact_and_reproducible() {
    let ch = fixture_h1::<f64>();
    let sim = BurstSimulator::<f64, C64>::new(&ch, Model::Gaussian, 8, 1.0, 0.0, 4).unwrap();
    let obs = sim.simulate(3);
    let t = toeplitz_op::<f64, C64>(&ch, 8).unwrap();
    assert_eq!(obs.y, &t * &obs.symbols);
    let sim = BurstSimulator::<f64, C64>::new(&ch, Model::Gaussian, 8, 1.0, 0.2, 4).unwrap();
    assert_eq!(sim.simulate(7).y, sim.simulate(7).y);
    assert_ne!(sim.simulate(7).y, sim.simulate(8).y);
}

#[test]
fn noise_moments() {
    let ch = small_channel();
    let sv2 = 0.7;
    let sim = BurstSimulator::<f64, C64>::new(&ch, Model::Deterministic, 2, 1.0, sv2, 13).unwrap();
    let mean = sim.simulate(0).y - sim.fixed_symbols().map(|a| toeplitz_op::<f64, C64>(&ch, 2).unwrap() * a.symbols()).unwrap();
    assert_eq!(mean.len(), 4);
    let clean = toeplitz_op::<f64, C64>(&ch, 2).unwrap() * sim.fixed_symbols().unwrap().symbols();
    let draws: Vec<DVector<C64>> = (0..100_000u64).map(|t| sim.simulate(t).y - &clean).collect();
    for i in 0..4 {
        for k in 0..4 {
            let (m, se) = mean_and_se(draws.iter().map(|v| (v[i] * v[k].conj()).re));
            let target = if i == k { sv2 } else { 0.0 };
            if i == k {
                assert!((m - target).abs() < 0.02 * sv2, "var {m}");
            } else {
                assert!((m - target).abs() < 3.0 * se + 1e-12);
            }
        }
        // Circularity: E[v^2] = 0.
        let (re, se_re) = mean_and_se(draws.iter().map(|v| (v[i] * v[i]).re));
        let (im, se_im) = mean_and_se(draws.iter().map(|v| (v[i] * v[i]).im));
        assert!(re.abs() < 3.0 * se_re && im.abs() < 3.0 * se_im);
    }
}

#[test]
fn adjustment_ls_projector_identity() {
    let mut r = rng(4);
    let h0 = gauss_matrix(&mut r, 6, 1, Field::Complex).column(0).into_owned();
    let pert = gauss_matrix(&mut r, 6, 1, Field::Complex).column(0).into_owned() * c(0.1, 0.0);
    let hh = (&h0 + pert).normalize();
    let ls = adjust_estimate(&hh, &h0, Adjustment::Ls).unwrap();
    let p = &hh * hh.adjoint();
    let perp = (DMatrix::<C64>::identity(6, 6) - p) * &h0;
    assert!(((&ls - &h0).norm() - perp.norm()).abs() < 1e-12);
    let lin = adjust_estimate(&hh, &h0, Adjustment::Lin).unwrap();
    assert!((h0.dotc(&lin) - h0.dotc(&h0)).norm() < 1e-12);
    let no = adjust_estimate(&hh, &h0, Adjustment::No).unwrap();
    assert!((no.norm() - h0.norm()).abs() < 1e-12);
    let inner = h0.dotc(&no);
    assert!(inner.im.abs() < 1e-12 && inner.re > 0.0);
}

#[test]
fn als_noiseless_fixed_point_and_monotone() {
    let mut r = rng(17);
    let ch = fixture_h1::<f64>();
    let sim = BurstSimulator::<f64, f64>::new(&ch, Model::Deterministic, 20, 1.0, 0.0, 2).unwrap();
    let y = sim.simulate(0).y;
    let h0 = ch.h_as::<f64>().unwrap();
    let init = &h0 + gauss_matrix(&mut r, 8, 1, Field::Real).column(0).map(|z| z.re * 1e-3);
    let out = alternating_ls_estimator(&y, 2, 4, &init, 500, 1e-14).unwrap();
    let res = *out.residuals.iter().min_by(|a, b| a.total_cmp(b)).unwrap();
    assert!(res < 1e-10, "residual {res}");
    let aligned = adjust_estimate(&out.h, &h0, Adjustment::Ls).unwrap();
    assert!((aligned - &h0).norm() < 1e-6 * h0.norm());

    let cr = cross_relation_init::<f64, f64>(&y, 2, 4, 20).unwrap();
    let aligned = adjust_estimate(&cr, &h0, Adjustment::Ls).unwrap();
    assert!((aligned - &h0).norm() < 1e-8);

    for seed in 0..5 {
        let sim = BurstSimulator::<f64, C64>::new(&ch, Model::Deterministic, 30, 1.0, 0.05, seed).unwrap();
        let y = sim.simulate(1).y;
        let init = gauss_matrix(&mut r, 8, 1, Field::Complex).column(0).into_owned();
        let out = alternating_ls_estimator(&y, 2, 4, &init, 50, 0.0).unwrap();
        for w in out.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "residual rose: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn mse_experiment_is_reproducible_and_bounded() {
    let cfg = ExperimentConfig::parse(
        r#"{"channel":"h1","model":"deterministic","field":"real","M":40,"snr_db":[30],"trials":60,"seed":9}"#,
    )
    .unwrap();
    let ch = cfg.load_channel::<f64>(None).unwrap();
    let t0 = Instant::now();
    let a = mse_vs_crb_experiment(&cfg, &ch).unwrap();
    println!("60 trials in {:?}", t0.elapsed());
    let b = mse_vs_crb_experiment(&cfg, &ch).unwrap();
    assert_eq!(a.rows.len(), 3);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.mse.to_bits(), y.mse.to_bits());
        println!("{} mse {:.3e} ± {:.1e}  crb {:.3e}", x.rule, x.mse, x.mse_se, x.crb_trace);
        assert!(x.mse >= x.crb_trace - 3.0 * x.mse_se);
    }
}
