//! Univariate polynomials in `z^-1`.
//!
//! A coefficient slice `c` represents `c[0] + c[1] z^-1 + ... + c[d] z^-d`.
//! Roots are always reported in the z-plane.

use nalgebra::ComplexField;

use crate::scalar::{cplx, creal, Real, C};

/// Full linear convolution.
pub fn convolve<T: Real>(a: &[C<T>], b: &[C<T>]) -> Vec<C<T>> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![creal(T::zero()); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Monic `prod_k (1 - r_k z^-1)`.
pub fn monic_from_roots<T: Real>(roots: &[C<T>]) -> Vec<C<T>> {
    roots.iter().fold(vec![creal(T::one())], |acc, &r| {
        convolve(&acc, &[creal(T::one()), -r])
    })
}

/// Strips leading (pure delay) and trailing (degree reduction) zero taps.
/// Returns `None` for the zero polynomial.
pub fn trim<T: Real>(c: &[C<T>]) -> Option<&[C<T>]> {
    let scale = c.iter().fold(T::zero(), |m, z| m.max(z.modulus()));
    if scale == T::zero() {
        return None;
    }
    let cut = scale * T::eps() * T::lit(4.0);
    let first = c.iter().position(|z| z.modulus() > cut)?;
    let last = c.iter().rposition(|z| z.modulus() > cut)?;
    Some(&c[first..=last])
}

/// Z-plane roots of a `z^-1` polynomial. Empty for constants and the zero
/// polynomial.
pub fn roots<T: Real>(c: &[C<T>]) -> Vec<C<T>> {
    match trim(c) {
        // c0 z^d + c1 z^(d-1) + ... + cd: the coefficient order is already
        // the descending-power order in z.
        Some(t) if t.len() > 1 => aberth(t),
        _ => Vec::new(),
    }
}

fn horner<T: Real>(desc: &[C<T>], z: C<T>) -> (C<T>, C<T>) {
    let mut p = creal(T::zero());
    let mut dp = creal(T::zero());
    for &a in desc {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Aberth–Ehrlich simultaneous iteration followed by Newton polishing.
/// `desc` holds coefficients in descending powers, leading term non-zero.
fn aberth<T: Real>(desc: &[C<T>]) -> Vec<C<T>> {
    let d = desc.len() - 1;
    let lead = desc[0];
    let monic: Vec<C<T>> = desc.iter().map(|&a| a / lead).collect();
    if d == 1 {
        return vec![-monic[1]];
    }
    // initial guesses on a circle whose radius is the geometric mean of the
    // root moduli, rotated off the real axis
    let prod = monic[d].modulus();
    let radius = if prod > T::zero() {
        prod.powf(T::one() / T::from_usize_lossy(d))
    } else {
        T::one()
    };
    let radius = radius.max(T::lit(1e-3));
    let two_pi = T::two_pi();
    let mut z: Vec<C<T>> = (0..d)
        .map(|k| {
            let ang = two_pi * T::from_usize_lossy(k) / T::from_usize_lossy(d) + T::lit(0.4);
            cplx(radius * ang.cos(), radius * ang.sin())
        })
        .collect();
    let tiny = T::eps() * T::lit(2.0);
    for _ in 0..2000 {
        let mut moved = T::zero();
        for k in 0..d {
            let (p, dp) = horner(&monic, z[k]);
            if p.modulus() == T::zero() {
                continue;
            }
            let ratio = if dp.modulus() == T::zero() { creal(T::lit(1e-3)) } else { p / dp };
            let mut s = creal(T::zero());
            for j in 0..d {
                if j != k {
                    let diff = z[k] - z[j];
                    if diff.modulus() > T::zero() {
                        s += creal(T::one()) / diff;
                    }
                }
            }
            let denom = creal(T::one()) - ratio * s;
            let step = if denom.modulus() == T::zero() { ratio } else { ratio / denom };
            z[k] -= step;
            let rel = step.modulus() / z[k].modulus().max(T::one());
            moved = moved.max(rel);
        }
        if moved <= tiny {
            break;
        }
    }
    for zk in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(&monic, *zk);
            if dp.modulus() == T::zero() {
                break;
            }
            let step = p / dp;
            if !(step.re.is_finite() && step.im.is_finite()) {
                break;
            }
            let cand = *zk - step;
            if horner(&monic, cand).0.modulus() <= p.modulus() {
                *zk = cand;
            } else {
                break;
            }
        }
    }
    z
}

/// Groups `roots` of a real polynomial into exact conjugate pairs and real
/// values, returning the cleaned list.
pub fn symmetrize_real<T: Real>(roots: &[C<T>], tol: T) -> Vec<C<T>> {
    let mut used = vec![false; roots.len()];
    let mut out = Vec::with_capacity(roots.len());
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let r = roots[i];
        if r.im.abs() <= tol * r.modulus().max(T::one()) {
            out.push(creal(r.re));
            continue;
        }
        let partner = (0..roots.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                (roots[a] - r.conj())
                    .modulus()
                    .partial_cmp(&(roots[b] - r.conj()).modulus())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        match partner {
            Some(j) if (roots[j] - r.conj()).modulus() <= tol * r.modulus().max(T::one()) => {
                used[j] = true;
                let re = (r.re + roots[j].re) * T::lit(0.5);
                let im = (r.im - roots[j].im).abs() * T::lit(0.5);
                out.push(cplx(re, im));
                out.push(cplx(re, -im));
            }
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C<f64> {
        cplx(re, im)
    }

    fn matched(found: &[C<f64>], expected: &[C<f64>], tol: f64) -> bool {
        let mut used = vec![false; found.len()];
        expected.iter().all(|e| {
            if let Some(i) = (0..found.len()).find(|&i| !used[i] && (found[i] - e).modulus() < tol) {
                used[i] = true;
                true
            } else {
                false
            }
        }) && found.len() == expected.len()
    }

    #[test]
    fn linear_and_quadratic() {
        let r = roots(&[c(1.0, 0.0), c(-0.5, 0.0)]);
        assert!(matched(&r, &[c(0.5, 0.0)], 1e-14));
        let p = monic_from_roots(&[c(0.5, 0.0), c(2.0, 0.0)]);
        assert!(matched(&roots(&p), &[c(0.5, 0.0), c(2.0, 0.0)], 1e-12));
        assert!(roots(&[c(3.0, 0.0)]).is_empty());
    }

    #[test]
    fn trims_zero_taps() {
        // z^-1 (1 - 0.25 z^-1), trailing zero tap as well
        let r = roots(&[c(0.0, 0.0), c(1.0, 0.0), c(-0.25, 0.0), c(0.0, 0.0)]);
        assert!(matched(&r, &[c(0.25, 0.0)], 1e-14));
    }

    #[test]
    fn reconstruct_degree_eight() {
        let rts = [
            c(0.9, 0.1),
            c(-0.4, 0.7),
            c(1.3, -0.2),
            c(-1.1, -0.6),
            c(0.2, 0.0),
            c(0.5, -1.4),
            c(-0.05, 0.3),
            c(2.0, 0.5),
        ];
        let lead = c(1.7, -0.3);
        let p: Vec<_> = monic_from_roots(&rts).into_iter().map(|a| a * lead).collect();
        let found = roots(&p);
        let back: Vec<_> = monic_from_roots(&found).into_iter().map(|a| a * lead).collect();
        let num: f64 = p.iter().zip(&back).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = p.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den < 1e-8, "relative reconstruction error {}", num / den);
        assert!(matched(&found, &rts, 1e-8));
    }

    #[test]
    fn double_root() {
        let p = monic_from_roots(&[c(0.5, 0.0), c(0.5, 0.0), c(-1.5, 0.0)]);
        let found = roots(&p);
        assert!(matched(&found, &[c(0.5, 0.0), c(0.5, 0.0), c(-1.5, 0.0)], 1e-6));
    }
}
