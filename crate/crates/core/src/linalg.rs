//! Dense linear algebra primitives used by every other module.
//!
//! Functions are generic over the element type `S` so the same code serves
//! real (`S = T`) and complex (`S = Complex<T>`) matrices. Rank decisions use
//! a threshold relative to the largest singular value; when no tolerance is
//! given it is `max(rows, cols) * eps`.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cplx, Real, C};

/// Default relative rank threshold `max(rows, cols) * eps`.
pub fn default_rank_tol<T: Real>(rows: usize, cols: usize) -> T {
    T::from_usize_lossy(rows.max(cols).max(1)) * T::eps()
}

pub fn check_finite<T: Real, S: ComplexField<RealField = T>>(a: &DMatrix<S>) -> Result<()> {
    if a.iter().all(|x| x.clone().is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Thin SVD with singular values sorted in decreasing order.
///
/// Matrices with fewer rows than columns are padded with zero rows so that
/// the returned right singular vectors span the full column space.
struct FullSvd<S: ComplexField> {
    u: DMatrix<S>,
    sigma: Vec<S::RealField>,
    v: DMatrix<S>,
}

fn full_svd<T: Real, S: ComplexField<RealField = T>>(a: &DMatrix<S>) -> FullSvd<S> {
    let (r, c) = a.shape();
    let padded;
    let work = if r < c {
        padded = a.clone().resize_vertically(c, S::zero());
        &padded
    } else {
        a
    };
    // nalgebra's bidiagonal SVD returns wrong factors for a noticeable
    // fraction of rank-deficient inputs, so use one-sided Jacobi throughout.
    let (u_raw, sv, v_raw) = jacobi_svd(work);
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));
    let k = order.len();
    let mut u = DMatrix::<S>::zeros(r, k);
    let mut v = DMatrix::<S>::zeros(c, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(sv[src]);
        for i in 0..r {
            u[(i, dst)] = u_raw[(i, src)].clone();
        }
        for i in 0..c {
            v[(i, dst)] = v_raw[(i, src)].clone();
        }
    }
    FullSvd { u, sigma, v }
}

/// One-sided (Hestenes) Jacobi SVD of a tall matrix. Left vectors of zero
/// singular values are returned as zero columns.
fn jacobi_svd<T: Real, S: ComplexField<RealField = T>>(a: &DMatrix<S>) -> (DMatrix<S>, Vec<T>, DMatrix<S>) {
    let c = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::<S>::identity(c, c);
    let eps = T::eps();
    // Columns below this squared norm are numerically zero; rotating them
    // only churns subnormals.
    let floor = (eps * a.norm()).powi(2);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.clone().modulus();
                if alpha <= floor || beta <= floor || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma.clone().unscale(g);
                let zeta = (beta - alpha) / (g + g);
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                let (cs, sn) = (S::from_real(cs), S::from_real(sn));
                let unphase = phase.clone().conjugate();
                for m in [&mut w, &mut v] {
                    for i in 0..m.nrows() {
                        let xp = m[(i, p)].clone();
                        let xq = m[(i, q)].clone() * unphase.clone();
                        m[(i, p)] = cs.clone() * xp.clone() - sn.clone() * xq.clone();
                        m[(i, q)] = (sn.clone() * xp + cs.clone() * xq) * phase.clone();
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = Vec::with_capacity(c);
    for k in 0..c {
        let s = w.column(k).norm();
        if s > T::zero() {
            let inv = S::from_real(T::one() / s);
            for i in 0..w.nrows() {
                w[(i, k)] = w[(i, k)].clone() * inv.clone();
            }
        }
        sigma.push(s);
    }
    (w, sigma, v)
}

fn threshold<T: Real>(sigma: &[T], rows: usize, cols: usize, tol: Option<T>) -> T {
    let smax = sigma.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
    tol.unwrap_or_else(|| default_rank_tol(rows, cols)) * smax
}

/// Moore–Penrose pseudo-inverse. Singular values at or below
/// `tol * sigma_max` are treated as zero.
pub fn pseudo_inverse<T: Real, S: ComplexField<RealField = T>>(
    a: &DMatrix<S>,
    tol: Option<T>,
) -> Result<DMatrix<S>> {
    check_finite(a)?;
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(DMatrix::zeros(c, r));
    }
    let svd = full_svd(a);
    let thr = threshold(&svd.sigma, r, c, tol);
    let mut out = DMatrix::<S>::zeros(c, r);
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s > thr && s > T::zero() {
            let vk = svd.v.column(k);
            let uk = svd.u.column(k);
            let inv = S::from_real(T::one() / s);
            out += (vk * inv) * uk.adjoint();
        }
    }
    Ok(out)
}

pub fn numerical_rank<T: Real, S: ComplexField<RealField = T>>(
    a: &DMatrix<S>,
    tol: Option<T>,
) -> usize {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return 0;
    }
    let svd = full_svd(a);
    let thr = threshold(&svd.sigma, r, c, tol);
    svd.sigma.iter().filter(|&&s| s > thr && s > T::zero()).count()
}

/// Orthonormal basis of the numerical column space of `a`.
pub fn range_basis<T: Real, S: ComplexField<RealField = T>>(
    a: &DMatrix<S>,
    tol: Option<T>,
) -> DMatrix<S> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = full_svd(a);
    let thr = threshold(&svd.sigma, r, c, tol);
    let keep: Vec<usize> = (0..svd.sigma.len())
        .filter(|&k| svd.sigma[k] > thr && svd.sigma[k] > T::zero())
        .collect();
    svd.u.select_columns(keep.iter())
}

/// Orthonormal basis of `{x : ||A x|| <= tol ||A|| ||x||}`.
pub fn null_space_basis<T: Real, S: ComplexField<RealField = T>>(
    a: &DMatrix<S>,
    tol: Option<T>,
) -> DMatrix<S> {
    let (r, c) = a.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    let svd = full_svd(a);
    let thr = threshold(&svd.sigma, r, c, tol);
    let keep: Vec<usize> = (0..svd.sigma.len())
        .filter(|&k| !(svd.sigma[k] > thr && svd.sigma[k] > T::zero()))
        .collect();
    svd.v.select_columns(keep.iter())
}

/// Orthogonal projector onto `range(X)`, `X (X^H X)^+ X^H`.
pub fn projector<T: Real, S: ComplexField<RealField = T>>(x: &DMatrix<S>) -> Result<DMatrix<S>> {
    if x.ncols() == 0 {
        return Err(Error::InvalidInput("projector needs at least one column".into()));
    }
    check_finite(x)?;
    let q = range_basis(x, None);
    Ok(&q * q.adjoint())
}

/// `I - P_X`.
pub fn complement_projector<T: Real, S: ComplexField<RealField = T>>(
    x: &DMatrix<S>,
) -> Result<DMatrix<S>> {
    let p = projector(x)?;
    Ok(DMatrix::identity(p.nrows(), p.ncols()) - p)
}

/// Inverse of a square matrix, refusing numerically singular input.
pub fn inverse_checked<T: Real, S: ComplexField<RealField = T>>(
    a: &DMatrix<S>,
    tol: Option<T>,
    what: &str,
) -> Result<DMatrix<S>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("{what}: inverse of non-square matrix")));
    }
    check_finite(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if numerical_rank(a, tol) < n {
        return Err(Error::Singular(what.to_string()));
    }
    pseudo_inverse(a, tol)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen<T: Real, S: ComplexField<RealField = T>>(
    a: &DMatrix<S>,
) -> (Vec<T>, DMatrix<S>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (a + a.adjoint()) * S::from_real(T::lit(0.5));
    let eig = SymmetricEigen::try_new(sym, T::eps(), 0).expect("unbounded iterations converge");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = eig.eigenvectors.select_columns(order.iter());
    (vals, vecs)
}

/// Kronecker product.
pub fn kron<S: ComplexField>(a: &DMatrix<S>, b: &DMatrix<S>) -> DMatrix<S> {
    a.kronecker(b)
}

/// Column-stacking `vec` operator.
pub fn vec_of<S: ComplexField>(a: &DMatrix<S>) -> DVector<S> {
    DVector::from_iterator(a.len(), a.iter().cloned())
}

pub fn to_complex<T: Real>(a: &DMatrix<T>) -> DMatrix<C<T>> {
    a.map(|x| cplx(x, T::zero()))
}

pub fn to_complex_vec<T: Real>(a: &DVector<T>) -> DVector<C<T>> {
    a.map(|x| cplx(x, T::zero()))
}

pub fn real_part<T: Real>(a: &DMatrix<C<T>>) -> DMatrix<T> {
    a.map(|z| z.re)
}

pub fn imag_part<T: Real>(a: &DMatrix<C<T>>) -> DMatrix<T> {
    a.map(|z| z.im)
}

/// Real `2r x 2c` matrix of the map `x -> A x` acting on `[Re x; Im x]`.
pub fn realify_linear_map<T: Real>(a: &DMatrix<C<T>>) -> DMatrix<T> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Spectral-norm distance between the orthogonal projectors onto the
/// column spans of `a` and `b`.
pub fn subspace_distance<T: Real, S: ComplexField<RealField = T>>(
    a: &DMatrix<S>,
    b: &DMatrix<S>,
) -> T {
    let n = a.nrows();
    let pa = if a.ncols() == 0 { DMatrix::zeros(n, n) } else {
        let q = range_basis(a, None);
        &q * q.adjoint()
    };
    let pb = if b.ncols() == 0 { DMatrix::zeros(n, n) } else {
        let q = range_basis(b, None);
        &q * q.adjoint()
    };
    let d = pa - pb;
    if d.is_empty() {
        return T::zero();
    }
    full_svd(&d).sigma.first().copied().unwrap_or_else(T::zero)
}

/// Principal angle (radians) between a vector and the span of the columns
/// of an orthonormal `basis`.
pub fn principal_angle<T: Real, S: ComplexField<RealField = T>>(
    v: &DVector<S>,
    basis: &DMatrix<S>,
) -> T {
    let nv = v.norm();
    if nv == T::zero() {
        return T::zero();
    }
    if basis.ncols() == 0 {
        return T::frac_pi_2();
    }
    let coeffs = basis.adjoint() * v;
    let proj = basis * &coeffs;
    let inside = proj.norm();
    let outside = (v - proj).norm();
    outside.atan2(inside)
}

pub fn max_abs_entry<T: Real, S: ComplexField<RealField = T>>(a: &DMatrix<S>) -> T {
    a.iter().fold(T::zero(), |m, x| {
        let v = x.clone().modulus();
        if v > m { v } else { m }
    })
}

/// Largest singular value.
pub fn spectral_norm<T: Real, S: ComplexField<RealField = T>>(a: &DMatrix<S>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    full_svd(a).sigma.first().copied().unwrap_or_else(T::zero)
}

/// Linear map between `theta_R = [Re θ; Im θ]` and `[θ; θ*]`.
#[derive(Debug, Clone)]
pub struct RealComplexMap<T: Real> {
    n: usize,
    matrix: DMatrix<C<T>>,
}

impl<T: Real> RealComplexMap<T> {
    /// `M = 1/2 [[I, I], [-jI, jI]]`.
    pub fn new(n: usize) -> Self {
        let half = T::lit(0.5);
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            m[(i, i)] = cplx(half, T::zero());
            m[(i, i + n)] = cplx(half, T::zero());
            m[(i + n, i)] = cplx(T::zero(), -half);
            m[(i + n, i + n)] = cplx(T::zero(), half);
        }
        Self { n, matrix: m }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.matrix
    }

    /// `θ_R` from `θ`.
    pub fn apply(&self, theta: &DVector<C<T>>) -> DVector<T> {
        let stacked = DVector::from_iterator(
            2 * self.n,
            theta.iter().copied().chain(theta.iter().map(|z| z.conj())),
        );
        (&self.matrix * stacked).map(|z| z.re)
    }

    /// `M B M^H`, the real-coordinate form of a `[[J, Jx], [Jx*, J*]]` block.
    pub fn congruence(&self, block: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        &self.matrix * block * self.matrix.adjoint()
    }
}

/// `[[J, Jx], [Jx*, J*]]`.
pub fn augmented_block<T: Real>(j: &DMatrix<C<T>>, jx: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let n = j.nrows();
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(j);
    b.view_mut((0, n), (n, n)).copy_from(jx);
    b.view_mut((n, 0), (n, n)).copy_from(&jx.map(|z| z.conj()));
    b.view_mut((n, n), (n, n)).copy_from(&j.map(|z| z.conj()));
    b
}

/// `θ_R = [Re θ; Im θ]`.
pub fn realify_params<T: Real>(theta: &DVector<C<T>>) -> DVector<T> {
    let n = theta.len();
    DVector::from_iterator(
        2 * n,
        theta.iter().map(|z| z.re).chain(theta.iter().map(|z| z.im)),
    )
}

/// Inverse of [`realify_params`].
pub fn complexify_params<T: Real>(theta_r: &DVector<T>) -> Result<DVector<C<T>>> {
    if theta_r.len() % 2 != 0 {
        return Err(Error::DimensionMismatch("real parameter vector has odd length".into()));
    }
    let n = theta_r.len() / 2;
    Ok(DVector::from_fn(n, |i, _| cplx(theta_r[i], theta_r[i + n])))
}

/// Real FIM of `θ_R` from the complex pair `(J_θθ, J_θθ*)`:
/// `2 [[Re J, -Im J], [Im J, Re J]] + 2 [[Re Jx, Im Jx], [Im Jx, -Re Jx]]`.
pub fn realify_fim<T: Real>(j: &DMatrix<C<T>>, jx: &DMatrix<C<T>>) -> Result<DMatrix<T>> {
    if !j.is_square() || j.shape() != jx.shape() {
        return Err(Error::DimensionMismatch(format!(
            "J is {:?}, J_cross is {:?}",
            j.shape(),
            jx.shape()
        )));
    }
    let n = j.nrows();
    let two = T::lit(2.0);
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            let p = j[(a, b)];
            let q = jx[(a, b)];
            out[(a, b)] = two * (p.re + q.re);
            out[(a, b + n)] = two * (-p.im + q.im);
            out[(a + n, b)] = two * (p.im + q.im);
            out[(a + n, b + n)] = two * (p.re - q.re);
        }
    }
    Ok(out)
}

/// Trace of the real CRB, `tr((J - Jx J^{-*} Jx^*)^{-1})`.
///
/// The constant is the one consistent with [`realify_fim`]: the result
/// equals `tr(realify_fim(J, Jx)^{-1})`.
pub fn trace_crb_complex<T: Real>(j: &DMatrix<C<T>>, jx: &DMatrix<C<T>>) -> Result<T> {
    if !j.is_square() || j.shape() != jx.shape() {
        return Err(Error::DimensionMismatch(format!(
            "J is {:?}, J_cross is {:?}",
            j.shape(),
            jx.shape()
        )));
    }
    let j_conj_inv = inverse_checked(&j.map(|z| z.conj()), None, "conjugate FIM J*")?;
    let inner = j - jx * j_conj_inv * jx.map(|z| z.conj());
    let inv = inverse_checked(&inner, None, "Schur term J - Jx J^-* Jx*")?;
    Ok(inv.trace().re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn pinv_identity_and_zero() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!(rel(&pseudo_inverse(&i3, None).unwrap(), &i3) < 1e-14);
        let z = DMatrix::<f64>::zeros(2, 3);
        let p = pseudo_inverse(&z, None).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pinv_rejects_nan() {
        let a = dmatrix![1.0, f64::NAN; 0.0, 1.0];
        assert!(matches!(pseudo_inverse(&a, None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pinv_rank2_symmetric_residual() {
        // 5x5 rank-2 symmetric built from two fixed vectors
        let u = DMatrix::from_row_slice(5, 2, &[1.0, 0.3, -0.4, 2.0, 0.7, -1.1, 1.5, 0.2, -0.9, 0.8]);
        let a = &u * u.transpose();
        let p = pseudo_inverse(&a, None).unwrap();
        assert!((&a * &p * &a - &a).norm() / a.norm() < 1e-10);
        assert!((&p * &a * &p - &p).norm() / p.norm() < 1e-10);
        let ap = &a * &p;
        assert!((&ap - ap.transpose()).norm() < 1e-10);
        assert_eq!(numerical_rank(&a, None), 2);
    }

    #[test]
    fn pinv_wide_and_complex() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let p = pseudo_inverse(&a, None).unwrap();
        assert!(rel(&(&a * &p), &DMatrix::identity(2, 2)) < 1e-12);
        let ac = DMatrix::from_fn(3, 2, |i, j| cplx(i as f64 + 1.0, j as f64 - 0.5 * i as f64));
        let pc = pseudo_inverse(&ac, None).unwrap();
        let res = (&ac * &pc * &ac - &ac).norm() / ac.norm();
        assert!(res < 1e-12);
    }

    #[test]
    fn pinv_f32_generic() {
        let a = DMatrix::<f32>::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let p = pseudo_inverse(&a, None).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-6 && (p[(1, 1)] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn projector_cases() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let p = projector(&e1).unwrap();
        assert!(rel(&p, &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0]))) < 1e-15);
        let x = dmatrix![2.0, 1.0; 0.5, 3.0];
        assert!(rel(&projector(&x).unwrap(), &DMatrix::identity(2, 2)) < 1e-14);
        let empty = DMatrix::<f64>::zeros(3, 0);
        assert!(projector(&empty).is_err());
    }

    #[test]
    fn projector_rank_deficient() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 1.0, 2.0, 0.0, 2.0, 1.0, 1.0, 2.0]);
        let p = projector(&x).unwrap();
        assert!((&p * &p - &p).norm() < 1e-10);
        assert!((&p - p.transpose()).norm() < 1e-10);
        assert!((&p * &x - &x).norm() < 1e-10);
        let q = complement_projector(&x).unwrap();
        assert!((&p + &q - DMatrix::identity(4, 4)).norm() < 1e-15);
        assert!((&p * &q).norm() < 1e-12);
    }

    #[test]
    fn null_space_cases() {
        assert_eq!(null_space_basis(&DMatrix::<f64>::identity(3, 3), None).ncols(), 0);
        let n = null_space_basis(&DMatrix::<f64>::zeros(3, 3), None);
        assert!(rel(&(&n * n.transpose()), &DMatrix::identity(3, 3)) < 1e-14);
        let v = DVector::from_vec(vec![0.5, -0.5, 0.5, 0.5]);
        let a = &v * v.transpose();
        let n = null_space_basis(&a, None);
        assert_eq!(n.ncols(), 3);
        assert!((n.transpose() * &v).norm() < 1e-12);
        assert!((n.transpose() * &n - DMatrix::identity(3, 3)).norm() < 1e-12);
        // wide matrix: null space beyond the thin SVD
        let w = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        assert_eq!(null_space_basis(&w, None).ncols(), 2);
    }

    #[test]
    fn realify_cases() {
        let j = DMatrix::from_element(1, 1, cplx(1.0, 0.0));
        let z = DMatrix::from_element(1, 1, cplx(0.0, 0.0));
        let r = realify_fim(&j, &z).unwrap();
        assert!(rel(&r, &(DMatrix::identity(2, 2) * 2.0)) < 1e-15);
        assert!(realify_fim(&j, &DMatrix::zeros(2, 2)).is_err());
        let t = DVector::from_vec(vec![cplx(1.0, 2.0), cplx(-3.0, 0.5)]);
        let tr = realify_params(&t);
        assert_eq!(tr.as_slice(), &[1.0, -3.0, 2.0, 0.5]);
        assert_eq!(complexify_params(&tr).unwrap(), t);
        assert_eq!(RealComplexMap::new(2).apply(&t), tr);
    }

    #[test]
    fn trace_crb_cases() {
        let i2 = DMatrix::<C<f64>>::identity(2, 2);
        let z2 = DMatrix::<C<f64>>::zeros(2, 2);
        assert!((trace_crb_complex(&i2, &z2).unwrap() - 2.0).abs() < 1e-14);
        let j = DMatrix::from_element(1, 1, cplx(2.0, 0.0));
        let z = DMatrix::from_element(1, 1, cplx(0.0, 0.0));
        assert!((trace_crb_complex(&j, &z).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(trace_crb_complex(&z, &z), Err(Error::Singular(_))));
    }

    #[test]
    fn complex_map_half_identity() {
        let m = RealComplexMap::<f64>::new(3);
        let mm = m.matrix() * m.matrix().adjoint();
        let half = DMatrix::<C<f64>>::identity(6, 6) * cplx(0.5, 0.0);
        assert!((mm - half).norm() < 1e-15);
    }

    #[test]
    fn realify_map_matches_complex_product() {
        let a = DMatrix::from_fn(3, 2, |i, j| cplx(i as f64 - j as f64, 0.3 * (i + 2 * j) as f64));
        let x = DVector::from_vec(vec![cplx(0.2, -1.0), cplx(1.5, 0.4)]);
        let lhs = realify_linear_map(&a) * realify_params(&x);
        let rhs = realify_params(&(&a * &x));
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn angle_and_distance() {
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        assert!((principal_angle::<f64, f64>(&v, &b) - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
        let b2 = DMatrix::from_column_slice(3, 1, &[-2.0, 0.0, 0.0]);
        assert!(subspace_distance(&b, &b2) < 1e-14);
    }
}
