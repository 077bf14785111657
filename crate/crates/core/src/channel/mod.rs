//! FIR multichannel model.
//!
//! A channel with `m` subchannels and `N` taps is stored as the `m x N`
//! coefficient array `H = [h(0) ... h(N-1)]`. The stacked parameter vector is
//! `h = [h(0); h(1); ...; h(N-1)]`, so entry `i*m + l` is tap `i` of
//! subchannel `l`. Transfer functions are polynomials in `z^-1`.

pub mod io;
pub mod poly;

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{creal, Field, FieldScalar, Real, C};

/// Default absolute tolerance for clustering roots across subchannels.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T: Real> {
    name: String,
    field: Field,
    coeffs: DMatrix<C<T>>,
}

impl<T: Real> Channel<T> {
    pub fn new(name: impl Into<String>, field: Field, coeffs: DMatrix<C<T>>) -> Result<Self> {
        let (m, n) = coeffs.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput("channel needs m >= 1 and N >= 1".into()));
        }
        if coeffs.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidInput("channel has non-finite coefficients".into()));
        }
        if coeffs.iter().all(|z| z.re == T::zero() && z.im == T::zero()) {
            return Err(Error::InvalidInput("channel is identically zero".into()));
        }
        if field == Field::Real && coeffs.iter().any(|z| z.im != T::zero()) {
            return Err(Error::InvalidInput(
                "real-field channel with non-zero imaginary parts".into(),
            ));
        }
        Ok(Self { name: name.into(), field, coeffs })
    }

    pub fn from_real(name: impl Into<String>, coeffs: &DMatrix<T>) -> Result<Self> {
        Self::new(name, Field::Real, linalg::to_complex(coeffs))
    }

    /// Builds a channel from the stacked vector `h` (length `m*N`).
    pub fn from_stacked(
        name: impl Into<String>,
        field: Field,
        m: usize,
        h: &DVector<C<T>>,
    ) -> Result<Self> {
        if m == 0 || h.len() % m != 0 {
            return Err(Error::DimensionMismatch(format!(
                "stacked length {} not a multiple of m = {m}",
                h.len()
            )));
        }
        let n = h.len() / m;
        Self::new(name, field, DMatrix::from_fn(m, n, |l, i| h[i * m + l]))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// Subchannel count.
    pub fn m(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Taps per subchannel.
    pub fn taps(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Length of the stacked vector, `m * N`.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coeffs(&self) -> &DMatrix<C<T>> {
        &self.coeffs
    }

    /// Coefficients as the element type of a computation.
    pub fn coeffs_as<S: FieldScalar<T>>(&self) -> Result<DMatrix<S>> {
        if S::FIELD == Field::Real && self.field == Field::Complex {
            return Err(Error::InvalidInput(format!(
                "complex channel `{}` used in a real-field computation; realify it first",
                self.name
            )));
        }
        Ok(self.coeffs.map(S::from_c))
    }

    /// Stacked vector `h`.
    pub fn h(&self) -> DVector<C<T>> {
        stack(&self.coeffs)
    }

    pub fn h_as<S: FieldScalar<T>>(&self) -> Result<DVector<S>> {
        Ok(stack(&self.coeffs_as::<S>()?))
    }

    pub fn subchannel(&self, l: usize) -> Vec<C<T>> {
        self.coeffs.row(l).iter().copied().collect()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same coefficients, reinterpreted as complex (complex symbols through
    /// a real-valued channel).
    pub fn as_complex(&self) -> Self {
        Self { name: self.name.clone(), field: Field::Complex, coeffs: self.coeffs.clone() }
    }
}

fn stack<S: nalgebra::Scalar + Copy>(coeffs: &DMatrix<S>) -> DVector<S> {
    let (m, n) = coeffs.shape();
    DVector::from_fn(m * n, |k, _| coeffs[(k % m, k / m)])
}

/// Block Toeplitz convolution matrix `T_M(h)`, `M*m x (M+N-1)`, with first
/// block row `[H 0]`.
pub fn block_toeplitz<T: Real, S: FieldScalar<T>>(coeffs: &DMatrix<S>, burst: usize) -> DMatrix<S> {
    let (m, n) = coeffs.shape();
    let mut t = DMatrix::zeros(burst * m, burst + n - 1);
    for r in 0..burst {
        for i in 0..n {
            for l in 0..m {
                t[(r * m + l, r + i)] = coeffs[(l, i)];
            }
        }
    }
    t
}

/// `T_M(h)` for a channel, in the element type of the computation.
pub fn toeplitz_op<T: Real, S: FieldScalar<T>>(ch: &Channel<T>, burst: usize) -> Result<DMatrix<S>> {
    if burst == 0 {
        return Err(Error::InvalidInput("burst length M must be >= 1".into()));
    }
    Ok(block_toeplitz(&ch.coeffs_as::<S>()?, burst))
}

/// `T_M` of a stacked vector with `m` subchannels.
pub fn toeplitz_of_stacked<T: Real, S: FieldScalar<T>>(
    h: &DVector<S>,
    m: usize,
    burst: usize,
) -> DMatrix<S> {
    let n = h.len() / m;
    let coeffs = DMatrix::from_fn(m, n, |l, i| h[i * m + l]);
    block_toeplitz(&coeffs, burst)
}

/// Symbol vector `A` of length `M + N - 1`, most recent symbol first.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBurst<S> {
    symbols: DVector<S>,
    burst: usize,
}

impl<S: nalgebra::Scalar> SymbolBurst<S> {
    pub fn new(symbols: DVector<S>, burst: usize, taps: usize) -> Result<Self> {
        if burst == 0 || taps == 0 || symbols.len() != burst + taps - 1 {
            return Err(Error::DimensionMismatch(format!(
                "symbol burst has length {}, expected M+N-1 = {}",
                symbols.len(),
                (burst + taps).saturating_sub(1)
            )));
        }
        Ok(Self { symbols, burst })
    }

    pub fn symbols(&self) -> &DVector<S> {
        &self.symbols
    }

    pub fn burst(&self) -> usize {
        self.burst
    }

    pub fn taps(&self) -> usize {
        self.symbols.len() + 1 - self.burst
    }
}

/// Commutativity operator `𝒜 = A' ⊗ I_m` with the Hankel matrix
/// `A'(r, i) = A[r + i]`, so that `T(h) A = 𝒜 h`.
pub fn commutativity_op<T: Real, S: FieldScalar<T>>(
    a: &SymbolBurst<S>,
    m: usize,
    taps: usize,
    burst: usize,
) -> Result<DMatrix<S>> {
    if a.burst() != burst || a.taps() != taps {
        return Err(Error::DimensionMismatch(format!(
            "symbol burst built for (M={}, N={}) used with (M={burst}, N={taps})",
            a.burst(),
            a.taps()
        )));
    }
    let s = a.symbols();
    let mut out = DMatrix::zeros(burst * m, taps * m);
    for r in 0..burst {
        for i in 0..taps {
            for l in 0..m {
                out[(r * m + l, i * m + l)] = s[r + i];
            }
        }
    }
    Ok(out)
}

/// Splits every subchannel into real and imaginary parts, doubling `m`.
/// Row `2l` holds `Re h_l`, row `2l+1` holds `Im h_l`. A real channel maps to
/// itself.
pub fn realify_channel<T: Real>(ch: &Channel<T>) -> Channel<T> {
    if ch.field() == Field::Real {
        return ch.clone();
    }
    let (m, n) = ch.coeffs.shape();
    let coeffs = DMatrix::from_fn(2 * m, n, |r, i| {
        let z = ch.coeffs[(r / 2, i)];
        creal(if r % 2 == 0 { z.re } else { z.im })
    });
    Channel {
        name: format!("{}-realified", ch.name),
        field: Field::Real,
        coeffs,
    }
}

/// Z-plane roots of every subchannel.
pub fn subchannel_zeros<T: Real>(ch: &Channel<T>) -> Vec<Vec<C<T>>> {
    (0..ch.m()).map(|l| poly::roots(&ch.subchannel(l))).collect()
}

/// Zeros shared by all (non-identically-zero) subchannels, with
/// multiplicity. Roots are matched greedily within absolute distance `tol`
/// and the reported value is the cluster mean.
pub fn common_zeros<T: Real>(ch: &Channel<T>, tol: T) -> Vec<C<T>> {
    let per: Vec<Vec<C<T>>> = (0..ch.m())
        .filter(|&l| poly::trim(&ch.subchannel(l)).is_some())
        .map(|l| poly::roots(&ch.subchannel(l)))
        .collect();
    let Some((first, rest)) = per.split_first() else {
        return Vec::new();
    };
    let mut used: Vec<Vec<bool>> = rest.iter().map(|r| vec![false; r.len()]).collect();
    let mut out = Vec::new();
    for &z in first {
        let mut picks = Vec::with_capacity(rest.len());
        for (k, roots) in rest.iter().enumerate() {
            let best = (0..roots.len())
                .filter(|&i| !used[k][i])
                .map(|i| (i, (roots[i] - z).modulus()))
                .filter(|&(_, d)| d <= tol)
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
            match best {
                Some((i, _)) => picks.push(i),
                None => break,
            }
        }
        if picks.len() == rest.len() {
            let mut sum = z;
            for (k, &i) in picks.iter().enumerate() {
                used[k][i] = true;
                sum += rest[k][i];
            }
            out.push(sum / creal(T::from_usize_lossy(rest.len() + 1)));
        }
    }
    if ch.field() == Field::Real {
        out = poly::symmetrize_real(&out, tol);
    }
    out
}

/// `H(z) = H_I(z) H_c(z)` with monic `H_c`.
#[derive(Debug, Clone)]
pub struct ReducibleDecomposition<T: Real> {
    pub irreducible: Channel<T>,
    /// Monic coefficients of `H_c(z)` in `z^-1`, length `N_c`.
    pub hc: Vec<C<T>>,
    pub common_zeros: Vec<C<T>>,
    /// `||conv(H_I, h_c) - H|| / ||H||`.
    pub residual: T,
    m: usize,
}

impl<T: Real> ReducibleDecomposition<T> {
    pub fn n_c(&self) -> usize {
        self.hc.len()
    }

    pub fn n_i(&self) -> usize {
        self.irreducible.taps()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_reducible(&self) -> bool {
        self.hc.len() > 1
    }

    pub fn field(&self) -> Field {
        self.irreducible.field()
    }

    /// The original channel rebuilt from its factors.
    pub fn recompose(&self) -> Channel<T> {
        let m = self.m;
        let n = self.n_i() + self.n_c() - 1;
        let coeffs = DMatrix::from_fn(m, n, |l, i| {
            let row = self.irreducible.subchannel(l);
            poly::convolve(&row, &self.hc)[i]
        });
        Channel {
            name: self.irreducible.name.trim_end_matches("-irreducible").to_string(),
            field: self.field(),
            coeffs,
        }
    }
}

/// Factors out the common zeros of `ch`. Each subchannel of `H_I` is found
/// by least-squares deconvolution; a relative residual above `tol` is an
/// error.
pub fn reducible_decompose<T: Real>(ch: &Channel<T>, tol: T) -> Result<ReducibleDecomposition<T>> {
    let zeros = common_zeros(ch, tol);
    let mut hc = poly::monic_from_roots(&zeros);
    if ch.field() == Field::Real {
        for z in hc.iter_mut() {
            *z = creal(z.re);
        }
    }
    let m = ch.m();
    let n = ch.taps();
    let nc = hc.len();
    if nc > n {
        return Err(Error::DecompositionFailed { residual: f64::INFINITY, tol: tol.to_f64_lossy() });
    }
    let ni = n - nc + 1;
    let conv = DMatrix::from_fn(n, ni, |row, col| {
        if row >= col && row - col < nc { hc[row - col] } else { creal(T::zero()) }
    });
    let pinv = linalg::pseudo_inverse(&conv, None)?;
    let mut hi = DMatrix::zeros(m, ni);
    let mut err = T::zero();
    for l in 0..m {
        let target = DVector::from_vec(ch.subchannel(l));
        let sol = &pinv * &target;
        err += (&conv * &sol - &target).norm_squared();
        hi.row_mut(l).copy_from(&sol.transpose());
    }
    if ch.field() == Field::Real {
        hi = hi.map(|z| creal(z.re));
    }
    let residual = err.sqrt() / ch.coeffs.norm();
    if !(residual <= tol) {
        return Err(Error::DecompositionFailed {
            residual: residual.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    let irreducible = Channel::new(format!("{}-irreducible", ch.name), ch.field, hi)?;
    Ok(ReducibleDecomposition { irreducible, hc, common_zeros: zeros, residual, m })
}

/// `T_c = T_{N_I}^T(h_c) ⊗ I_m`, `mN x mN_I`, with `T_c h_I = h`.
pub fn tc_matrix<T: Real>(dec: &ReducibleDecomposition<T>) -> DMatrix<C<T>> {
    let m = dec.m;
    let nc = dec.n_c();
    let ni = dec.n_i();
    let n = ni + nc - 1;
    let mut out = DMatrix::zeros(m * n, m * ni);
    for row in 0..n {
        for col in 0..ni {
            if row >= col && row - col < nc {
                for l in 0..m {
                    out[(row * m + l, col * m + l)] = dec.hc[row - col];
                }
            }
        }
    }
    out
}

/// `T_I`, `mN x N_c`, block Toeplitz with first column `[h_I; 0]`, so
/// `T_I h_c = h`.
pub fn ti_matrix<T: Real>(dec: &ReducibleDecomposition<T>) -> DMatrix<C<T>> {
    let m = dec.m;
    let nc = dec.n_c();
    let ni = dec.n_i();
    let n = ni + nc - 1;
    let hi = dec.irreducible.h();
    let mut out = DMatrix::zeros(m * n, nc);
    for j in 0..nc {
        for k in 0..hi.len() {
            out[(j * m + k, j)] = hi[k];
        }
    }
    out
}

/// Conjugate-reciprocal structure of a polynomial's zeros.
#[derive(Debug, Clone)]
pub struct ReciprocalPairs<T: Real> {
    /// Pairs `(z0, 1/z0*)` off the unit circle.
    pub pairs: Vec<(C<T>, C<T>)>,
    /// Zeros at `+1` or `-1`.
    pub unit_selfpaired: Vec<C<T>>,
    /// Other unit-circle zeros (also their own conjugate reciprocal).
    pub unit_circle_other: Vec<C<T>>,
}

impl<T: Real> Default for ReciprocalPairs<T> {
    fn default() -> Self {
        Self { pairs: Vec::new(), unit_selfpaired: Vec::new(), unit_circle_other: Vec::new() }
    }
}

impl<T: Real> ReciprocalPairs<T> {
    pub fn is_clean(&self) -> bool {
        self.pairs.is_empty() && self.unit_selfpaired.is_empty() && self.unit_circle_other.is_empty()
    }
}

/// Finds conjugate-reciprocal zero pairs of a `z^-1` polynomial.
pub fn conjugate_reciprocal_pairs<T: Real>(
    poly_coeffs: &[C<T>],
    field: Field,
    tol: T,
) -> ReciprocalPairs<T> {
    let mut rts = poly::roots(poly_coeffs);
    if field == Field::Real {
        rts = poly::symmetrize_real(&rts, tol);
    }
    classify_reciprocal(&rts, tol)
}

pub fn classify_reciprocal<T: Real>(rts: &[C<T>], tol: T) -> ReciprocalPairs<T> {
    let one = T::one();
    let mut out = ReciprocalPairs::default();
    let mut used = vec![false; rts.len()];
    for i in 0..rts.len() {
        let z = rts[i];
        if (z.modulus() - one).abs() <= tol {
            used[i] = true;
            if (z - creal(one)).modulus() <= tol || (z + creal(one)).modulus() <= tol {
                out.unit_selfpaired.push(z);
            } else {
                out.unit_circle_other.push(z);
            }
        }
    }
    for i in 0..rts.len() {
        if used[i] || rts[i].modulus() == T::zero() {
            continue;
        }
        let target = creal(one) / rts[i].conj();
        let scale = target.modulus().max(one);
        let partner = (0..rts.len())
            .filter(|&j| j != i && !used[j])
            .map(|j| (j, (rts[j] - target).modulus()))
            .filter(|&(_, d)| d <= tol * scale)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        if let Some((j, _)) = partner {
            used[i] = true;
            used[j] = true;
            let (a, b) = if rts[i].modulus() <= rts[j].modulus() { (rts[i], rts[j]) } else { (rts[j], rts[i]) };
            out.pairs.push((a, b));
        }
    }
    out
}
