//! Rule-based identifiability verdicts and their cross-check against the
//! numerical rank of the FIM.
//!
//! Nullities are counted in the real representation of the parameter, the
//! same space [`analyze_singularities`](crate::fim::analyze_singularities)
//! works in.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::channel::{
    classify_reciprocal, commutativity_op, poly, reducible_decompose, Channel, SymbolBurst, DEFAULT_ZERO_TOL,
};
use crate::error::{Error, Result};
use crate::fim::{GaussianModelConfig, Model, SingularityReport};
use crate::linalg;
use crate::scalar::{Field, FieldScalar, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentifiableUpTo {
    Full,
    Scale,
    Phase,
    Sign,
    No,
    Indeterminate,
}

impl fmt::Display for IdentifiableUpTo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdentifiableUpTo::Full => "full",
            IdentifiableUpTo::Scale => "scale",
            IdentifiableUpTo::Phase => "phase",
            IdentifiableUpTo::Sign => "sign",
            IdentifiableUpTo::No => "no",
            IdentifiableUpTo::Indeterminate => "indeterminate",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentifiabilityVerdict {
    pub model: Model,
    pub field: Field,
    pub identifiable_up_to: IdentifiableUpTo,
    /// Predicted nullity of the full real FIM, when the rules decide it.
    pub predicted_nullity: Option<usize>,
    /// Predicted nullity after Schur reduction onto `h`.
    pub predicted_reduced_nullity: Option<usize>,
    pub reasons: Vec<String>,
    /// True when the verdict rests on a lower bound for the minimal burst
    /// length of the irreducible part that was assumed, not supplied.
    pub depends_on_min_burst: bool,
}

impl IdentifiabilityVerdict {
    /// Singularities of the complex FIM, for complex deterministic models
    /// (half the real nullity).
    pub fn complex_singularities(&self) -> Option<usize> {
        match (self.model, self.field) {
            (Model::Deterministic, Field::Complex) => self.predicted_nullity.map(|k| k / 2),
            _ => None,
        }
    }
}

fn burst_rule(m: usize, taps: usize, burst: usize) -> bool {
    burst + 2 >= 2 * taps || (m == 2 && burst >= taps)
}

/// Verdict for the deterministic model `θ = [A; h]` with the given burst.
/// The excitation condition on `A` is checked as full column rank of the
/// commutativity operator `𝒜`.
pub fn deterministic_verdict<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    a: &SymbolBurst<S>,
) -> Result<IdentifiabilityVerdict> {
    let field = S::FIELD;
    if ch.field() == Field::Complex && field == Field::Real {
        return Err(Error::InvalidInput("complex channel with real symbols".into()));
    }
    if a.taps() != ch.taps() {
        return Err(Error::DimensionMismatch(format!(
            "symbol burst built for N = {}, channel has N = {}",
            a.taps(),
            ch.taps()
        )));
    }
    let (m, n, burst) = (ch.m(), ch.taps(), a.burst());
    let rd = field.real_dim();
    let mut v = IdentifiabilityVerdict {
        model: Model::Deterministic,
        field,
        identifiable_up_to: IdentifiableUpTo::Indeterminate,
        predicted_nullity: None,
        predicted_reduced_nullity: None,
        reasons: Vec::new(),
        depends_on_min_burst: false,
    };
    if burst < n {
        v.identifiable_up_to = IdentifiableUpTo::No;
        v.reasons.push(format!("burst M = {burst} is shorter than the channel length N = {n}"));
        return Ok(v);
    }
    // Unknowns [A; h] minus the scale must not exceed the observations.
    let unknowns = burst + n - 1 + m * n;
    if m * burst + 1 < unknowns {
        v.identifiable_up_to = IdentifiableUpTo::No;
        v.reasons.push(format!(
            "{} observations for {} unknowns (M+N-1+mN = {unknowns}, less one for scale): burst too short",
            m * burst,
            unknowns - 1
        ));
        return Ok(v);
    }
    let op: DMatrix<S> = commutativity_op::<T, S>(a, m, n, burst)?;
    let modes_ok = linalg::numerical_rank(&op, None) == op.ncols();
    if !modes_ok {
        v.reasons.push("symbol burst does not excite enough modes (commutativity operator rank deficient)".into());
    }
    let dec = reducible_decompose(ch, T::lit(DEFAULT_ZERO_TOL))?;
    let nc = dec.n_c();
    if !burst_rule(m, n, burst) {
        v.reasons.push(format!(
            "burst rule M >= 2(N-1){} fails for M = {burst}, N = {n}",
            if m == 2 { " or M >= N (m = 2)" } else { "" }
        ));
    }
    if !modes_ok || !burst_rule(m, n, burst) {
        return Ok(v);
    }
    if dec.is_reducible() {
        v.identifiable_up_to = IdentifiableUpTo::No;
        v.predicted_nullity = Some(rd * (2 * nc - 1));
        v.predicted_reduced_nullity = Some(rd * nc);
        v.reasons.push(format!(
            "channel is reducible: {} common zero(s), N_c = {nc}",
            dec.common_zeros.len()
        ));
    } else {
        v.identifiable_up_to = IdentifiableUpTo::Scale;
        v.predicted_nullity = Some(rd);
        v.predicted_reduced_nullity = Some(rd);
        v.reasons.push("irreducible channel, burst rule and excitation satisfied".into());
    }
    Ok(v)
}

/// Verdict for the Gaussian model `θ = [h; σ_v²]`. `field` selects complex
/// circular or real symbols. `min_burst_irreducible` is the minimal burst
/// length `M̲_I` for which the irreducible part's FIM is regular; when not
/// given it defaults to `N_I` and the verdict is marked as depending on it.
pub fn gaussian_verdict<T: Real>(
    ch: &Channel<T>,
    cfg: &GaussianModelConfig<T>,
    field: Field,
    min_burst_irreducible: Option<usize>,
) -> Result<IdentifiabilityVerdict> {
    if ch.field() == Field::Complex && field == Field::Real {
        return Err(Error::InvalidInput("complex channel with real symbols".into()));
    }
    let tol = T::lit(DEFAULT_ZERO_TOL);
    let dec = reducible_decompose(ch, tol)?;
    let (n_i, n_c) = (dec.n_i(), dec.n_c());
    let mono = ch.m() == 1;
    let m_i = min_burst_irreducible.unwrap_or(n_i);
    let need = (m_i + 1).max(n_c.saturating_sub(1));
    let mut v = IdentifiabilityVerdict {
        model: Model::Gaussian,
        field,
        identifiable_up_to: IdentifiableUpTo::Indeterminate,
        predicted_nullity: None,
        predicted_reduced_nullity: None,
        reasons: Vec::new(),
        depends_on_min_burst: min_burst_irreducible.is_none(),
    };
    if cfg.burst < need {
        v.reasons.push(format!(
            "burst rule M >= max(M_I + 1, N_c - 1) = {need} fails for M = {} (M_I = {m_i})",
            cfg.burst
        ));
        return Ok(v);
    }

    let roots = if dec.common_zeros.is_empty() {
        Vec::new()
    } else {
        let r = dec.common_zeros.clone();
        if field == Field::Real { poly::symmetrize_real(&r, tol) } else { r }
    };
    let rp = classify_reciprocal(&roots, tol);
    let clean = rp.is_clean();
    let nullity = match field {
        Field::Complex => 1 + 2 * rp.pairs.len() + rp.unit_selfpaired.len() + rp.unit_circle_other.len(),
        Field::Real => rp.pairs.len() + rp.unit_selfpaired.len() + rp.unit_circle_other.len() / 2,
    } + usize::from(mono && clean);
    v.predicted_nullity = Some(nullity);
    v.predicted_reduced_nullity = Some(nullity);
    if !rp.pairs.is_empty() {
        v.reasons.push(format!("{} conjugate reciprocal zero pair(s) in H_c", rp.pairs.len()));
    }
    if !rp.unit_selfpaired.is_empty() || !rp.unit_circle_other.is_empty() {
        v.reasons.push(format!(
            "{} zero(s) on the unit circle in H_c",
            rp.unit_selfpaired.len() + rp.unit_circle_other.len()
        ));
    }
    v.identifiable_up_to = if !clean {
        IdentifiableUpTo::No
    } else if mono {
        v.reasons.push("single channel: noise variance not separable from the channel".into());
        IdentifiableUpTo::No
    } else {
        v.reasons.push(format!("no conjugate reciprocal or unit-circle common zeros (N_c = {n_c})"));
        match field {
            Field::Complex => IdentifiableUpTo::Phase,
            Field::Real => IdentifiableUpTo::Sign,
        }
    };
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Agree,
    /// The rules could not decide but the FIM rank matches the baseline
    /// indeterminacy (phase, sign or scale).
    IndeterminateRegularByRank,
    IndeterminateSingularByRank,
    Mismatch,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictCheck {
    pub status: Consistency,
    pub predicted: Option<usize>,
    pub computed: usize,
    pub diagnostic: String,
}

impl VerdictCheck {
    pub fn passed(&self) -> bool {
        self.status != Consistency::Mismatch
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() { Ok(self) } else { Err(Error::VerdictMismatch(self.diagnostic)) }
    }
}

/// Nullity expected when only the unavoidable indeterminacy remains.
fn baseline_nullity(v: &IdentifiabilityVerdict) -> usize {
    match (v.model, v.field) {
        (Model::Deterministic, f) => f.real_dim(),
        (_, Field::Complex) => 1,
        (_, Field::Real) => 0,
    }
}

/// Compares a verdict to the singularities found numerically.
pub fn verdict_vs_fim<T: Real>(v: &IdentifiabilityVerdict, report: &SingularityReport<T>) -> VerdictCheck {
    let computed = report.nullity;
    let gap = report
        .regular_gap()
        .map(|g| format!("{:.2e}", g.to_f64_lossy()))
        .unwrap_or_else(|| "n/a".into());
    match v.predicted_nullity {
        Some(p) if p == computed => VerdictCheck {
            status: Consistency::Agree,
            predicted: Some(p),
            computed,
            diagnostic: format!("nullity {computed} as predicted (regular gap {gap})"),
        },
        Some(p) => {
            let low: Vec<String> = report
                .eigenvalues
                .iter()
                .take(p.max(computed) + 2)
                .map(|e| format!("{:.2e}", e.to_f64_lossy()))
                .collect();
            VerdictCheck {
                status: Consistency::Mismatch,
                predicted: Some(p),
                computed,
                diagnostic: format!(
                    "{} {} model: predicted nullity {p}, computed {computed} (tol {:.1e}, smallest eigenvalues [{}]); reasons: {}",
                    v.field,
                    v.model,
                    report.tol.to_f64_lossy(),
                    low.join(", "),
                    v.reasons.join("; ")
                ),
            }
        }
        None => {
            let base = baseline_nullity(v);
            let (status, diagnostic) = if computed == base {
                (
                    Consistency::IndeterminateRegularByRank,
                    format!("indeterminate by rule, regular by rank (nullity {computed})"),
                )
            } else {
                (
                    Consistency::IndeterminateSingularByRank,
                    format!("indeterminate by rule, nullity {computed} exceeds baseline {base}"),
                )
            };
            VerdictCheck { status, predicted: None, computed, diagnostic }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_rule_cases() {
        assert!(burst_rule(2, 4, 4));
        assert!(!burst_rule(3, 4, 4));
        assert!(burst_rule(3, 4, 6));
        assert!(!burst_rule(2, 4, 3));
    }
}
