#![allow(dead_code)]

use blindcrb::channel::{poly, Channel, SymbolBurst};
use blindcrb::scalar::Field;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, field: Field) -> DMatrix<C64> {
    DMatrix::from_fn(m, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if field == Field::Complex { rng.sample(StandardNormal) } else { 0.0 };
        c(re, im)
    })
}

pub fn random_channel(rng: &mut ChaCha8Rng, m: usize, n: usize, field: Field) -> Channel<f64> {
    Channel::new("rand", field, gauss_matrix(rng, m, n, field)).unwrap()
}

/// `H(z) = H_I(z) * prod (1 - z_k z^-1)` for a random `H_I` of `n_i` taps.
pub fn with_common_zeros(rng: &mut ChaCha8Rng, m: usize, n_i: usize, zeros: &[C64], field: Field) -> Channel<f64> {
    let hi = gauss_matrix(rng, m, n_i, field);
    let hc = poly::monic_from_roots(zeros);
    let n = n_i + hc.len() - 1;
    let coeffs = DMatrix::from_fn(m, n, |l, i| {
        let row: Vec<_> = hi.row(l).iter().copied().collect();
        poly::convolve(&row, &hc)[i]
    });
    let coeffs = if field == Field::Real { coeffs.map(|z| c(z.re, 0.0)) } else { coeffs };
    Channel::new("reducible", field, coeffs).unwrap()
}

pub fn real_symbols(rng: &mut ChaCha8Rng, burst: usize, taps: usize) -> SymbolBurst<f64> {
    let s = DVector::from_fn(burst + taps - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymbolBurst::new(s, burst, taps).unwrap()
}

pub fn complex_symbols(rng: &mut ChaCha8Rng, burst: usize, taps: usize) -> SymbolBurst<C64> {
    let s = DVector::from_fn(burst + taps - 1, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) / 2f64.sqrt()
    });
    SymbolBurst::new(s, burst, taps).unwrap()
}
