//! Constraint sets and constrained Cramér-Rao bounds.
//!
//! Everything here lives in the real representation: a complex channel `h`
//! of length `n` is handled as `h_R = [Re h; Im h]` of length `2n`, and
//! transposes are real transposes. A constraint is represented only by its
//! Jacobian at the true parameter (and the tangent space it induces).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channel::{tc_matrix, ti_matrix, ReducibleDecomposition};
use crate::error::{Error, Result};
use crate::fim::{analyze_matrix, schur_reduce, FimResult, GaussianModelConfig, ParamLayout, DEFAULT_FIM_RANK_TOL};
use crate::linalg;
use crate::scalar::{Field, Real, C};
use crate::Channel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ConstraintKind {
    Norm,
    Phase,
    NormPhase,
    /// 1-based coefficient index into the stacked channel vector.
    KnownCoeff(usize),
    Linear,
    ReducibleTI,
    ReducibleProjector,
    /// No constraint: the tangent space is the whole parameter space.
    Unconstrained,
    Custom(String),
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintKind::Norm => f.write_str("norm"),
            ConstraintKind::Phase => f.write_str("phase"),
            ConstraintKind::NormPhase => f.write_str("norm+phase"),
            ConstraintKind::KnownCoeff(i) => write!(f, "known:{i}"),
            ConstraintKind::Linear => f.write_str("linear"),
            ConstraintKind::ReducibleTI => f.write_str("reducible-ti"),
            ConstraintKind::ReducibleProjector => f.write_str("reducible-proj"),
            ConstraintKind::Unconstrained => f.write_str("none"),
            ConstraintKind::Custom(s) => f.write_str(s),
        }
    }
}

/// Constraint Jacobian `∂𝒦ᵀ/∂θ` at `θ°` and an orthonormal basis of the
/// tangent space `{x : jacobianᵀ x = 0}`.
#[derive(Debug, Clone)]
pub struct ConstraintSet<T: Real> {
    jacobian: DMatrix<T>,
    tangent: DMatrix<T>,
    kind: ConstraintKind,
    dependent: bool,
}

impl<T: Real> ConstraintSet<T> {
    /// Builds the set from its Jacobian (`n x k`). Linearly dependent
    /// columns are allowed and flagged.
    pub fn from_jacobian(jacobian: DMatrix<T>, kind: ConstraintKind) -> Result<Self> {
        linalg::check_finite(&jacobian)?;
        let n = jacobian.nrows();
        let (tangent, dependent) = if jacobian.ncols() == 0 {
            (DMatrix::identity(n, n), false)
        } else {
            let rank = linalg::numerical_rank(&jacobian, None);
            (linalg::null_space_basis(&jacobian.transpose(), None), rank < jacobian.ncols())
        };
        Ok(Self { jacobian, tangent, kind, dependent })
    }

    /// Builds the set from any spanning set of the tangent space (columns
    /// may be dependent, as for a projector).
    pub fn from_tangent(span: DMatrix<T>, kind: ConstraintKind) -> Result<Self> {
        linalg::check_finite(&span)?;
        let n = span.nrows();
        let tangent = if span.ncols() == 0 {
            DMatrix::zeros(n, 0)
        } else {
            linalg::range_basis(&span, None)
        };
        let jacobian = if tangent.ncols() == 0 {
            DMatrix::identity(n, n)
        } else {
            linalg::null_space_basis(&tangent.transpose(), None)
        };
        Ok(Self { jacobian, tangent, kind, dependent: false })
    }

    /// No constraint at all on an `n`-dimensional parameter.
    pub fn unconstrained(n: usize) -> Self {
        Self {
            jacobian: DMatrix::zeros(n, 0),
            tangent: DMatrix::identity(n, n),
            kind: ConstraintKind::Unconstrained,
            dependent: false,
        }
    }

    pub fn jacobian(&self) -> &DMatrix<T> {
        &self.jacobian
    }

    /// Orthonormal tangent basis `𝒱_θ`.
    pub fn tangent(&self) -> &DMatrix<T> {
        &self.tangent
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn dependent(&self) -> bool {
        self.dependent
    }

    pub fn dim(&self) -> usize {
        self.jacobian.nrows()
    }

    /// Lifts a constraint on block `name` into the full layout; the other
    /// blocks stay unconstrained.
    pub fn embed(&self, layout: &ParamLayout, name: &str) -> Result<Self> {
        let block = layout.block(name)?;
        if block.real_indices.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "constraint has dimension {}, block `{name}` has {}",
                self.dim(),
                block.real_indices.len()
            )));
        }
        let mut jac = DMatrix::zeros(layout.real_dim(), self.jacobian.ncols());
        for (k, &row) in block.real_indices.iter().enumerate() {
            jac.row_mut(row).copy_from(&self.jacobian.row(k));
        }
        let mut out = Self::from_jacobian(jac, self.kind.clone())?;
        out.dependent = self.dependent;
        Ok(out)
    }

    /// `‖𝒱ᵀ · jacobian‖`, zero for a consistent set.
    pub fn tangency_residual(&self) -> T {
        if self.jacobian.ncols() == 0 || self.tangent.ncols() == 0 {
            return T::zero();
        }
        (self.tangent.transpose() * &self.jacobian).norm()
    }
}

/// Sub-matrix of a real-representation matrix for block `name`.
pub fn extract_block<T: Real>(m: &DMatrix<T>, layout: &ParamLayout, name: &str) -> Result<DMatrix<T>> {
    let idx = &layout.block(name)?.real_indices;
    if m.shape() != (layout.real_dim(), layout.real_dim()) {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {:?}, layout has real dimension {}",
            m.shape(),
            layout.real_dim()
        )));
    }
    Ok(DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])]))
}

fn nonzero<T: Real>(h: &DVector<C<T>>) -> Result<()> {
    if h.iter().all(|z| z.re == T::zero() && z.im == T::zero()) {
        Err(Error::InvalidInput("constraint needs a non-zero channel".into()))
    } else {
        Ok(())
    }
}

/// `h_R` for the field: `Re h` for real, `[Re h; Im h]` for complex.
pub fn real_coords<T: Real>(h: &DVector<C<T>>, field: Field) -> DVector<T> {
    match field {
        Field::Real => h.map(|z| z.re),
        Field::Complex => linalg::realify_params(h),
    }
}

/// `h_S2 = [-Im h; Re h]`.
pub fn phase_direction<T: Real>(h: &DVector<C<T>>) -> DVector<T> {
    let n = h.len();
    DVector::from_fn(2 * n, |k, _| if k < n { -h[k].im } else { h[k - n].re })
}

fn hcat<T: Real>(cols: &[DVector<T>]) -> DMatrix<T> {
    DMatrix::from_columns(cols)
}

/// Norm constraint `hᴴh = h°ᴴh°`. For complex channels the phase
/// constraint is included: columns `[2 h°_R, h°_S2]`.
pub fn norm_constraint<T: Real>(h0: &DVector<C<T>>, field: Field) -> Result<ConstraintSet<T>> {
    nonzero(h0)?;
    let two = T::lit(2.0);
    match field {
        Field::Real => ConstraintSet::from_jacobian(hcat(&[real_coords(h0, field) * two]), ConstraintKind::Norm),
        Field::Complex => ConstraintSet::from_jacobian(
            hcat(&[real_coords(h0, field) * two, phase_direction(h0)]),
            ConstraintKind::NormPhase,
        ),
    }
}

/// Norm only, `[2 h°_R]`, for either field.
pub fn norm_only_constraint<T: Real>(h0: &DVector<C<T>>, field: Field) -> Result<ConstraintSet<T>> {
    nonzero(h0)?;
    ConstraintSet::from_jacobian(hcat(&[real_coords(h0, field) * T::lit(2.0)]), ConstraintKind::Norm)
}

/// Phase constraint `h°_S2ᵀ h_R = 0` (complex only).
pub fn phase_constraint<T: Real>(h0: &DVector<C<T>>, field: Field) -> Result<ConstraintSet<T>> {
    nonzero(h0)?;
    if field != Field::Complex {
        return Err(Error::InvalidInput("phase constraint needs a complex parameter".into()));
    }
    ConstraintSet::from_jacobian(hcat(&[phase_direction(h0)]), ConstraintKind::Phase)
}

/// Coefficient `index` (1-based) of the stacked channel known. For complex
/// channels both its real and imaginary parts are fixed.
pub fn known_coeff_constraint<T: Real>(len: usize, index: usize, field: Field) -> Result<ConstraintSet<T>> {
    if index == 0 || index > len {
        return Err(Error::InvalidInput(format!(
            "coefficient index {index} out of range 1..={len}"
        )));
    }
    let dim = len * field.real_dim();
    let mut jac = DMatrix::zeros(dim, field.real_dim());
    jac[(index - 1, 0)] = T::one();
    if field == Field::Complex {
        jac[(index - 1 + len, 1)] = T::one();
    }
    ConstraintSet::from_jacobian(jac, ConstraintKind::KnownCoeff(index))
}

/// Linear constraint `Cᴴ h = Cᴴ h°`. In the real representation each
/// complex column `c` contributes `c_R` and `c_S2` (real and imaginary part
/// of `cᴴ h`); for real fields the columns are used directly.
pub fn linear_constraint<T: Real>(c: &DMatrix<C<T>>, field: Field) -> Result<ConstraintSet<T>> {
    let cols: Vec<DVector<T>> = match field {
        Field::Real => {
            if c.iter().any(|z| z.im != T::zero()) {
                return Err(Error::InvalidInput("complex constraint matrix for a real parameter".into()));
            }
            c.column_iter().map(|col| col.map(|z| z.re)).collect()
        }
        Field::Complex => {
            let re: Vec<_> = c.column_iter().map(|col| linalg::realify_params(&col.into_owned())).collect();
            let im: Vec<_> = c.column_iter().map(|col| phase_direction(&col.into_owned())).collect();
            re.into_iter().chain(im).collect()
        }
    };
    if cols.is_empty() {
        return Err(Error::InvalidInput("linear constraint needs at least one column".into()));
    }
    ConstraintSet::from_jacobian(hcat(&cols), ConstraintKind::Linear)
}

/// Reducible channel constraints: `T_Iᴴ h = T_Iᴴ h°` (the minimal `N_c`
/// constraints) or the explicit structure `P⊥_{T_c} h = 0` together with
/// `h°ᴴ h = h°ᴴ h°`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducibleVariant {
    TI,
    Projector,
}

pub fn reducible_constraints<T: Real>(
    dec: &ReducibleDecomposition<T>,
    field: Field,
    variant: ReducibleVariant,
) -> Result<ConstraintSet<T>> {
    let h0 = dec.recompose().h();
    match variant {
        ReducibleVariant::TI => {
            let mut cs = linear_constraint(&ti_matrix(dec), field)?;
            cs.kind = ConstraintKind::ReducibleTI;
            Ok(cs)
        }
        ReducibleVariant::Projector => {
            let tc = tc_matrix(dec);
            let span = match field {
                Field::Real => tc.map(|z| z.re),
                Field::Complex => linalg::realify_linear_map(&tc),
            };
            let q = linalg::range_basis(&span, None);
            let fixed = match field {
                Field::Real => hcat(&[real_coords(&h0, field)]),
                Field::Complex => hcat(&[real_coords(&h0, field), phase_direction(&h0)]),
            };
            let pf = linalg::complement_projector(&fixed)?;
            ConstraintSet::from_tangent(pf * q, ConstraintKind::ReducibleProjector)
        }
    }
}

/// A constrained CRB with its provenance.
#[derive(Debug, Clone)]
pub struct CrbResult<T: Real> {
    /// The bound. When `bounded` is false this is `𝒱 (𝒱ᵀ J 𝒱)⁺ 𝒱ᵀ`, kept for
    /// diagnostics only.
    pub crb: DMatrix<T>,
    /// `tr(crb)`, or `+inf` when unbounded.
    pub trace: T,
    pub bounded: bool,
    pub constraint: ConstraintKind,
    /// Description of the FIM the bound came from.
    pub fim: String,
    pub warning: Option<String>,
}

impl<T: Real> CrbResult<T> {
    pub fn diagonal(&self) -> Vec<T> {
        self.crb.diagonal().iter().copied().collect()
    }
}

fn describe<T: Real>(j: &DMatrix<T>) -> String {
    format!("{}x{} real FIM", j.nrows(), j.ncols())
}

/// `CRB_C = 𝒱 (𝒱ᵀ J 𝒱)⁻¹ 𝒱ᵀ`; unbounded (flagged, no error) when `𝒱ᵀ J 𝒱`
/// is singular.
pub fn constrained_crb<T: Real>(j: &DMatrix<T>, cs: &ConstraintSet<T>) -> Result<CrbResult<T>> {
    if j.shape() != (cs.dim(), cs.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "FIM is {:?} but the constraint lives in dimension {}",
            j.shape(),
            cs.dim()
        )));
    }
    let v = cs.tangent();
    let mut out = if v.ncols() == 0 {
        CrbResult {
            crb: DMatrix::zeros(j.nrows(), j.ncols()),
            trace: T::zero(),
            bounded: true,
            constraint: cs.kind().clone(),
            fim: describe(j),
            warning: None,
        }
    } else {
        let reduced = v.transpose() * j * v;
        let report = analyze_matrix(&reduced, &[], Some(T::lit(DEFAULT_FIM_RANK_TOL)));
        let bounded = report.nullity == 0;
        let inner = linalg::pseudo_inverse(&reduced, Some(T::lit(DEFAULT_FIM_RANK_TOL)))?;
        let crb = v * inner * v.transpose();
        let crb = (&crb + crb.transpose()) * T::lit(0.5);
        let trace = if bounded { crb.trace() } else { T::lit(f64::INFINITY) };
        CrbResult {
            crb,
            trace,
            bounded,
            constraint: cs.kind().clone(),
            fim: describe(j),
            warning: (!bounded).then(|| {
                format!(
                    "constrained FIM has {} singular direction(s); constraint does not fix them",
                    report.nullity
                )
            }),
        }
    };
    if cs.dependent() {
        out.warning = Some(match out.warning {
            Some(w) => format!("{w}; constraints are linearly dependent"),
            None => "constraints are linearly dependent".into(),
        });
    }
    Ok(out)
}

/// `A (Aᵀ J A)⁺ Aᵀ` for any `A` whose range is the tangent space (for
/// example the projector `P_𝒱`).
pub fn constrained_crb_projector_form<T: Real>(j: &DMatrix<T>, a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if j.nrows() != a.nrows() || !j.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "FIM is {:?}, basis is {:?}",
            j.shape(),
            a.shape()
        )));
    }
    let inner = linalg::pseudo_inverse(&(a.transpose() * j * a), Some(T::lit(DEFAULT_FIM_RANK_TOL)))?;
    let crb = a * inner * a.transpose();
    Ok((&crb + crb.transpose()) * T::lit(0.5))
}

/// The minimal constrained CRB `J⁺`.
pub fn minimal_crb<T: Real>(j: &DMatrix<T>) -> Result<CrbResult<T>> {
    let crb = linalg::pseudo_inverse(j, Some(T::lit(DEFAULT_FIM_RANK_TOL)))?;
    let crb = (&crb + crb.transpose()) * T::lit(0.5);
    Ok(CrbResult {
        trace: crb.trace(),
        crb,
        bounded: true,
        constraint: ConstraintKind::Custom("minimal".into()),
        fim: describe(j),
        warning: None,
    })
}

/// Blind CRB for the Gaussian model: Schur-reduce over `σ_v²`, then take
/// `𝒥_hh⁺` (complex symbols, phase constraint) or `𝒥_hh⁻¹` (real symbols).
/// Channels with extra singularities come back unbounded.
pub fn gaussian_blind_crb<T: Real>(
    ch: &Channel<T>,
    cfg: &GaussianModelConfig<T>,
    field: Field,
) -> Result<CrbResult<T>> {
    let fim: FimResult<T> = match field {
        Field::Complex => crate::fim::gaussian_fim_complex(ch, cfg)?,
        Field::Real => crate::fim::gaussian_fim_real(ch, cfg)?,
    };
    let jhh = schur_reduce(&fim, "h")?;
    let h0 = ch.h();
    let cs = match field {
        Field::Complex => phase_constraint(&h0, field)?,
        Field::Real => ConstraintSet::unconstrained(jhh.nrows()),
    };
    let mut res = constrained_crb(&jhh, &cs)?;
    if res.bounded && field == Field::Complex {
        let pinv = linalg::pseudo_inverse(&jhh, Some(T::lit(DEFAULT_FIM_RANK_TOL)))?;
        res.crb = (&pinv + pinv.transpose()) * T::lit(0.5);
        res.trace = res.crb.trace();
    }
    res.fim = format!("gaussian {field} J_hh (sigma_v2 profiled)");
    if !res.bounded {
        res.warning = Some(format!(
            "{}; channel has conjugate reciprocal zeros or a too short burst",
            res.warning.unwrap_or_default()
        ));
    }
    Ok(res)
}

/// A parsed constraint specification from the command-line grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintSpec {
    Norm,
    Phase,
    NormPhase,
    Known(usize),
    Linear(String),
    ReducibleTI,
    ReducibleProjector,
    Minimal,
}

impl std::str::FromStr for ConstraintSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "norm" => return Ok(ConstraintSpec::Norm),
            "phase" => return Ok(ConstraintSpec::Phase),
            "norm+phase" => return Ok(ConstraintSpec::NormPhase),
            "reducible-ti" => return Ok(ConstraintSpec::ReducibleTI),
            "reducible-proj" => return Ok(ConstraintSpec::ReducibleProjector),
            "minimal" => return Ok(ConstraintSpec::Minimal),
            _ => {}
        }
        if let Some(i) = s.strip_prefix("known:") {
            return i
                .parse::<usize>()
                .map(ConstraintSpec::Known)
                .map_err(|_| Error::InvalidInput(format!("bad coefficient index in `{s}`")));
        }
        if let Some(path) = s.strip_prefix("linear:") {
            if path.is_empty() {
                return Err(Error::InvalidInput("`linear:` needs a file path".into()));
            }
            return Ok(ConstraintSpec::Linear(path.to_string()));
        }
        Err(Error::InvalidInput(format!(
            "unknown constraint `{s}` (expected norm|phase|norm+phase|known:i|linear:<file>|reducible-ti|reducible-proj|minimal)"
        )))
    }
}

impl fmt::Display for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintSpec::Norm => f.write_str("norm"),
            ConstraintSpec::Phase => f.write_str("phase"),
            ConstraintSpec::NormPhase => f.write_str("norm+phase"),
            ConstraintSpec::Known(i) => write!(f, "known:{i}"),
            ConstraintSpec::Linear(p) => write!(f, "linear:{p}"),
            ConstraintSpec::ReducibleTI => f.write_str("reducible-ti"),
            ConstraintSpec::ReducibleProjector => f.write_str("reducible-proj"),
            ConstraintSpec::Minimal => f.write_str("minimal"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    #[test]
    fn norm_examples() {
        let h = DVector::from_vec(vec![cplx(1.0, 0.0), cplx(0.0, 0.0)]);
        let cs = norm_constraint(&h, Field::Real).unwrap();
        assert_eq!(cs.jacobian().as_slice(), &[2.0, 0.0]);
        let h = DVector::from_vec(vec![cplx(1.0, 0.0)]);
        let cs = norm_constraint(&h, Field::Complex).unwrap();
        assert_eq!(cs.jacobian(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        assert_eq!(cs.tangent().ncols(), 0);
        let z = DVector::from_vec(vec![cplx(0.0, 0.0)]);
        assert!(norm_constraint(&z, Field::Real).is_err());
    }

    #[test]
    fn known_examples() {
        let cs = known_coeff_constraint::<f64>(3, 1, Field::Real).unwrap();
        assert_eq!(cs.jacobian().as_slice(), &[1.0, 0.0, 0.0]);
        let cs = known_coeff_constraint::<f64>(2, 2, Field::Complex).unwrap();
        assert_eq!(cs.jacobian().column(0).as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(cs.jacobian().column(1).as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(known_coeff_constraint::<f64>(2, 0, Field::Real).is_err());
        assert!(known_coeff_constraint::<f64>(2, 3, Field::Real).is_err());
    }

    #[test]
    fn unconstrained_and_full_knowledge() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = constrained_crb(&j, &ConstraintSet::unconstrained(2)).unwrap();
        let inv = j.clone().try_inverse().unwrap();
        assert!((r.crb - inv).norm() < 1e-12);
        let cs = ConstraintSet::from_jacobian(DMatrix::identity(2, 2), ConstraintKind::Linear).unwrap();
        let r = constrained_crb(&j, &cs).unwrap();
        assert!(r.bounded);
        assert_eq!(r.trace, 0.0);
    }

    #[test]
    fn minimal_examples() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(minimal_crb(&j).unwrap().crb, j);
    }

    #[test]
    fn unbounded_when_jacobian_misses_null_space() {
        let j: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let cs = ConstraintSet::from_jacobian(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), ConstraintKind::Linear)
            .unwrap();
        let r = constrained_crb(&j, &cs).unwrap();
        assert!(!r.bounded);
        assert!(r.trace.is_infinite());
    }

    #[test]
    fn grammar() {
        for s in ["norm", "phase", "norm+phase", "known:3", "linear:c.json", "reducible-ti", "reducible-proj", "minimal"] {
            let spec: ConstraintSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("known:x".parse::<ConstraintSpec>().is_err());
        assert!("linear:".parse::<ConstraintSpec>().is_err());
        assert!("scale".parse::<ConstraintSpec>().is_err());
    }
}
