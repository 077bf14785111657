mod common;

use blindcrb::channel::io::{fixture_h1, fixture_h2};
use blindcrb::channel::{reducible_decompose, ti_matrix, DEFAULT_ZERO_TOL};
use blindcrb::constraint::*;
use blindcrb::fim::*;
use blindcrb::linalg;
use blindcrb::scalar::Field;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn randn(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

/// Random PSD matrix of the given size and rank.
fn psd(r: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let b = randn(r, n, rank);
    &b * b.transpose()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn tangent_is_orthogonal_to_jacobian() {
    let h = fixture_h1::<f64>().h();
    for field in [Field::Real, Field::Complex] {
        let cs = norm_constraint(&h, field).unwrap();
        assert!(cs.tangency_residual() < 1e-10);
        assert_eq!(cs.tangent().ncols() + cs.jacobian().ncols(), cs.dim());
        let v = cs.tangent();
        assert!((v.transpose() * v - DMatrix::identity(v.ncols(), v.ncols())).norm() < 1e-12);
    }
}

#[test]
fn three_crb_forms_agree() {
    let mut r = rng(31);
    for _ in 0..3 {
        let n = 7;
        let j = psd(&mut r, n, 5);
        let cs = ConstraintSet::from_jacobian(randn(&mut r, n, 2), ConstraintKind::Linear).unwrap();
        let direct = constrained_crb(&j, &cs).unwrap();
        assert!(direct.bounded);
        let v = cs.tangent();
        let via_basis = constrained_crb_projector_form(&j, v).unwrap();
        let p = v * v.transpose();
        let via_proj = constrained_crb_projector_form(&j, &p).unwrap();
        let via_pinv = linalg::pseudo_inverse(&(&p * &j * &p), None).unwrap();
        assert!(rel(&via_basis, &direct.crb) < 1e-9);
        assert!(rel(&via_proj, &direct.crb) < 1e-9);
        assert!(rel(&via_pinv, &direct.crb) < 1e-9);
        // Rank-deficient spanning set of the same tangent space.
        let extra = v * randn(&mut r, v.ncols(), v.ncols() + 3);
        assert!(rel(&constrained_crb_projector_form(&j, &extra).unwrap(), &direct.crb) < 1e-9);
        // A different orthonormal basis of the same space.
        let q = randn(&mut r, v.ncols(), v.ncols()).qr().q();
        let rotated = ConstraintSet::from_tangent(v * q, ConstraintKind::Custom("rotated".into())).unwrap();
        assert!(rel(&constrained_crb(&j, &rotated).unwrap().crb, &direct.crb) < 1e-10);
    }
    let j = psd(&mut r, 4, 4);
    let full = constrained_crb_projector_form(&j, &DMatrix::identity(4, 4)).unwrap();
    assert!(rel(&full, &j.clone().try_inverse().unwrap()) < 1e-10);
}

#[test]
fn minimal_crb_dominance_both_directions() {
    let mut r = rng(99);
    let n = 6;
    let j = psd(&mut r, n, 4);
    let min = minimal_crb(&j).unwrap();
    let null = analyze_matrix(&j, &[], None).null_basis;
    assert_eq!(null.ncols(), 2);
    for _ in 0..50 {
        let cs = ConstraintSet::from_jacobian(randn(&mut r, n, 2), ConstraintKind::Linear).unwrap();
        let res = constrained_crb(&j, &cs).unwrap();
        assert!(res.bounded);
        assert!(res.trace >= min.trace - 1e-9 * min.trace);
        assert!(res.trace > min.trace * (1.0 + 1e-9), "generic constraints should be strictly worse");
    }
    let spanning = ConstraintSet::from_jacobian(&null * randn(&mut r, 2, 2), ConstraintKind::Linear).unwrap();
    let res = constrained_crb(&j, &spanning).unwrap();
    assert!((res.trace - min.trace).abs() < 1e-9 * min.trace);
    assert!(rel(&res.crb, &min.crb) < 1e-9);
}

#[test]
fn orthogonal_jacobian_is_unbounded() {
    let mut r = rng(5);
    let j = psd(&mut r, 5, 4);
    let range = linalg::range_basis(&j, None);
    let cs = ConstraintSet::from_jacobian(range.columns(0, 1).into_owned(), ConstraintKind::Linear).unwrap();
    let res = constrained_crb(&j, &cs).unwrap();
    assert!(!res.bounded);
    assert!(res.trace.is_infinite());
    assert!(res.warning.is_some());
}

#[test]
fn linear_h_constraint_equals_norm_phase() {
    let mut r = rng(8);
    let ch = random_channel(&mut r, 2, 3, Field::Complex);
    let a = complex_symbols(&mut r, 8, 3);
    let red = deterministic_reduced_fim(&ch, &a, 0.2, 8).unwrap();
    let j = red.fim.real_fim();
    let h = ch.h();
    let c_mat = DMatrix::from_column_slice(h.len(), 1, h.as_slice());
    let lin = constrained_crb(j, &linear_constraint(&c_mat, Field::Complex).unwrap()).unwrap();
    let np = constrained_crb(j, &norm_constraint(&h, Field::Complex).unwrap()).unwrap();
    assert!(rel(&lin.crb, &np.crb) < 1e-9);
    let full = linear_constraint(&DMatrix::identity(h.len(), h.len()).map(|x: f64| c(x, 0.0)), Field::Complex).unwrap();
    assert_eq!(constrained_crb(j, &full).unwrap().trace, 0.0);
}

#[test]
fn norm_constraint_gives_pseudo_inverse_of_reduced_fim() {
    let mut r = rng(2);
    for field in [Field::Real, Field::Complex] {
        let ch = fixture_h1::<f64>();
        let (f, red) = match field {
            Field::Real => {
                let a = real_symbols(&mut r, 20, 4);
                (deterministic_fim(&ch, &a, 0.1, 20).unwrap(), deterministic_reduced_fim(&ch, &a, 0.1, 20).unwrap())
            }
            Field::Complex => {
                let a = complex_symbols(&mut r, 20, 4);
                (deterministic_fim(&ch, &a, 0.1, 20).unwrap(), deterministic_reduced_fim(&ch, &a, 0.1, 20).unwrap())
            }
        };
        let cs = norm_constraint(&ch.h(), field).unwrap().embed(f.layout(), "h").unwrap();
        let res = constrained_crb(f.real_fim(), &cs).unwrap();
        assert!(res.bounded);
        let ch_block = extract_block(&res.crb, f.layout(), "h").unwrap();
        let jhh_pinv = linalg::pseudo_inverse(red.fim.real_fim(), Some(1e-10)).unwrap();
        assert!(rel(&ch_block, &jhh_pinv) < 1e-9, "{field}: {}", rel(&ch_block, &jhh_pinv));
        // Same through the Schur complement of the full FIM.
        let schur = schur_reduce(&f, "h").unwrap();
        assert!(rel(&schur, red.fim.real_fim()) < 1e-9);
    }
}

#[test]
fn gaussian_blind_crb_paths_agree() {
    let mut r = rng(12);
    let ch = random_channel(&mut r, 2, 3, Field::Complex);
    let cfg = GaussianModelConfig::new(1.0, 0.1, 6).unwrap();
    let blind = gaussian_blind_crb(&ch, &cfg, Field::Complex).unwrap();
    assert!(blind.bounded);
    let f = gaussian_fim_complex(&ch, &cfg).unwrap();
    let cs = phase_constraint(&ch.h(), Field::Complex).unwrap().embed(f.layout(), "h").unwrap();
    let res = constrained_crb(f.real_fim(), &cs).unwrap();
    let block = extract_block(&res.crb, f.layout(), "h").unwrap();
    assert!(rel(&block, &blind.crb) < 1e-9, "{}", rel(&block, &blind.crb));

    let h2 = fixture_h2::<f64>();
    let cfg = GaussianModelConfig::new(1.0, 0.1, 6).unwrap();
    let real = gaussian_blind_crb(&h2, &cfg, Field::Real).unwrap();
    let jhh = schur_reduce(&gaussian_fim_real(&h2, &cfg).unwrap(), "h").unwrap();
    assert!(rel(&real.crb, &jhh.try_inverse().unwrap()) < 1e-9);

    let pair = with_common_zeros(&mut r, 2, 3, &[c(0.5, 0.5), c(1.0, 0.0) / c(0.5, -0.5)], Field::Complex);
    let cfg = GaussianModelConfig::new(1.0, 0.1, 8).unwrap();
    let b = gaussian_blind_crb(&pair, &cfg, Field::Complex).unwrap();
    assert!(!b.bounded);
    assert!(b.warning.unwrap().contains("reciprocal"));
}

#[test]
fn reducible_variants() {
    let mut r = rng(21);
    for field in [Field::Real, Field::Complex] {
        let zeros = [c(0.4, 0.0)];
        let ch = with_common_zeros(&mut r, 3, 3, &zeros, field);
        let dec = reducible_decompose(&ch, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(dec.n_c(), 2);
        let burst = 12;
        let red = match field {
            Field::Real => deterministic_reduced_fim(&ch, &real_symbols(&mut r, burst, ch.taps()), 0.1, burst).unwrap(),
            Field::Complex => {
                deterministic_reduced_fim(&ch, &complex_symbols(&mut r, burst, ch.taps()), 0.1, burst).unwrap()
            }
        };
        let j = red.fim.real_fim();
        let ti = reducible_constraints(&dec, field, ReducibleVariant::TI).unwrap();
        assert_eq!(ti.jacobian().ncols(), dec.n_c() * field.real_dim());
        let proj = reducible_constraints(&dec, field, ReducibleVariant::Projector).unwrap();
        let c_ti = constrained_crb(j, &ti).unwrap();
        let c_proj = constrained_crb(j, &proj).unwrap();
        assert!(c_ti.bounded && c_proj.bounded);
        assert!(c_proj.trace <= c_ti.trace * (1.0 + 1e-9), "{field}: {} vs {}", c_proj.trace, c_ti.trace);
        // The TI constraint is minimal: it spans null(J_hh), so it attains J_hh⁺.
        let min = minimal_crb(j).unwrap();
        assert!((c_ti.trace - min.trace).abs() < 1e-8 * min.trace, "{field}");
        let ti_r = match field {
            Field::Real => ti_matrix(&dec).map(|z| z.re),
            Field::Complex => linalg::realify_linear_map(&ti_matrix(&dec)),
        };
        let null = analyze_matrix(j, &[], None).null_basis;
        assert!(linalg::subspace_distance(&null, &linalg::range_basis(&ti_r, None)) < 1e-8);
    }
}

#[test]
fn known_coefficient_sweep_matches_closed_form() {
    let mut r = rng(44);
    let ch = fixture_h2::<f64>();
    let a = real_symbols(&mut r, 20, 4);
    let red = deterministic_reduced_fim(&ch, &a, 0.1, 20).unwrap();
    let j = red.fim.real_fim();
    let jp = linalg::pseudo_inverse(j, Some(1e-10)).unwrap();
    let h = ch.h_as::<f64>().unwrap();
    for i in 1..=h.len() {
        let res = constrained_crb(j, &known_coeff_constraint(h.len(), i, Field::Real).unwrap()).unwrap();
        // With null(J) = span{h}, fixing coefficient i adds ‖h‖² (J⁺)_ii / h_i².
        let oracle = jp.trace() + h.norm_squared() * jp[(i - 1, i - 1)] / (h[i - 1] * h[i - 1]);
        assert!((res.trace - oracle).abs() < 1e-8 * oracle, "i={i}: {} vs {oracle}", res.trace);
    }
}

#[test]
fn constraint_grammar_rejects_garbage() {
    for bad in ["", "known:", "known:-1", "norm+", "linear:"] {
        assert!(bad.parse::<ConstraintSpec>().is_err(), "{bad}");
    }
    assert_eq!("known:12".parse::<ConstraintSpec>().unwrap(), ConstraintSpec::Known(12));
    let _ = DVector::<f64>::zeros(1);
}
