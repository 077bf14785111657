//! Monte Carlo machinery: burst synthesis, the score-covariance FIM oracle,
//! scale/phase adjustment rules, a blind alternating least-squares
//! estimator, and MSE-vs-CRB experiments.
//!
//! Randomness comes from ChaCha8 seeded with the experiment seed. Trial `t`
//! uses stream `t` (offset per SNR point), and the fixed symbol burst of the
//! deterministic model uses stream [`SYMBOL_STREAM`]. Results therefore do
//! not depend on how rayon schedules trials.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::io::{fixture_h1, fixture_h2, read_channel};
use crate::channel::{commutativity_op, toeplitz_of_stacked, toeplitz_op, Channel, SymbolBurst};
use crate::constraint::gaussian_blind_crb;
use crate::error::{Error, Result};
use crate::fim::{deterministic_jacobian, deterministic_reduced_fim, GaussianModelConfig, Model, DEFAULT_FIM_RANK_TOL};
use crate::linalg;
use crate::scalar::{cplx, Field, FieldScalar, Real, C};

/// RNG stream reserved for the fixed symbols of the deterministic model.
pub const SYMBOL_STREAM: u64 = u64::MAX;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zero-mean Gaussian scalar of variance `var`: real, or circular complex
/// with independent real and imaginary parts of variance `var / 2`.
pub fn gaussian_scalar<T: Real, S: FieldScalar<T>>(rng: &mut impl Rng, var: T) -> S {
    let re: f64 = rng.sample(StandardNormal);
    match S::FIELD {
        Field::Real => S::from_re(T::lit(re) * var.sqrt()),
        Field::Complex => {
            let im: f64 = rng.sample(StandardNormal);
            let s = (var * T::lit(0.5)).sqrt();
            S::from_c(cplx(T::lit(re) * s, T::lit(im) * s))
        }
    }
}

pub fn gaussian_vector<T: Real, S: FieldScalar<T>>(rng: &mut impl Rng, n: usize, var: T) -> DVector<S> {
    DVector::from_fn(n, |_, _| gaussian_scalar::<T, S>(rng, var))
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut s, mut s2, mut n) = (CompensatedSum::default(), CompensatedSum::default(), 0usize);
    for x in xs {
        s.add(x);
        s2.add(x * x);
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = s.value() / nf;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = ((s2.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// One simulated observation.
#[derive(Debug, Clone)]
pub struct Observation<S: nalgebra::Scalar> {
    pub y: DVector<S>,
    pub symbols: DVector<S>,
}

/// Burst generator `Y = T(h) A + V`.
#[derive(Debug, Clone)]
pub struct BurstSimulator<T: Real, S: FieldScalar<T>> {
    toeplitz: DMatrix<S>,
    model: Model,
    sigma_a2: T,
    sigma_v2: T,
    seed: u64,
    fixed: Option<SymbolBurst<S>>,
}

impl<T: Real, S: FieldScalar<T>> BurstSimulator<T, S> {
    /// The deterministic model draws `A ~ N(0, σ_a²)` once from
    /// [`SYMBOL_STREAM`]; the Gaussian model draws fresh symbols per trial.
    pub fn new(ch: &Channel<T>, model: Model, burst: usize, sigma_a2: T, sigma_v2: T, seed: u64) -> Result<Self> {
        if model == Model::Generic {
            return Err(Error::InvalidInput("simulation needs the deterministic or Gaussian model".into()));
        }
        if !(sigma_a2 > T::zero()) || !(sigma_v2 >= T::zero()) {
            return Err(Error::InvalidInput("need sigma_a2 > 0 and sigma_v2 >= 0".into()));
        }
        let toeplitz = toeplitz_op::<T, S>(ch, burst)?;
        let fixed = if model == Model::Deterministic {
            let mut rng = stream_rng(seed, SYMBOL_STREAM);
            let a = gaussian_vector::<T, S>(&mut rng, toeplitz.ncols(), sigma_a2);
            Some(SymbolBurst::new(a, burst, ch.taps())?)
        } else {
            None
        };
        Ok(Self { toeplitz, model, sigma_a2, sigma_v2, seed, fixed })
    }

    /// Replaces the fixed symbols of the deterministic model.
    pub fn with_symbols(mut self, a: SymbolBurst<S>) -> Result<Self> {
        if a.symbols().len() != self.toeplitz.ncols() {
            return Err(Error::DimensionMismatch("symbol burst does not fit the channel".into()));
        }
        self.fixed = Some(a);
        Ok(self)
    }

    pub fn fixed_symbols(&self) -> Option<&SymbolBurst<S>> {
        self.fixed.as_ref()
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn sigma_v2(&self) -> T {
        self.sigma_v2
    }

    /// Observation for trial `stream`.
    pub fn simulate(&self, stream: u64) -> Observation<S> {
        let mut rng = stream_rng(self.seed, stream);
        let symbols = match &self.fixed {
            Some(a) => a.symbols().clone(),
            None => gaussian_vector::<T, S>(&mut rng, self.toeplitz.ncols(), self.sigma_a2),
        };
        let mut y = &self.toeplitz * &symbols;
        if self.sigma_v2 > T::zero() {
            y += gaussian_vector::<T, S>(&mut rng, y.len(), self.sigma_v2);
        }
        Observation { y, symbols }
    }
}

/// `simulate_burst` for a single trial.
pub fn simulate_burst<T: Real, S: FieldScalar<T>>(sim: &BurstSimulator<T, S>, trial: u64) -> DVector<S> {
    sim.simulate(trial).y
}

/// Score of a Gaussian likelihood `y ~ N(m(θ), C(θ))` with respect to the
/// real coordinates of `θ`, given the derivatives of mean and covariance
/// along each real coordinate.
#[derive(Debug, Clone)]
pub struct ScoreModel<T: Real, S: FieldScalar<T>> {
    mean: DVector<S>,
    /// Columns `C⁻¹ ∂m/∂x_k`.
    wmean: DMatrix<S>,
    /// `C⁻¹ ∂C/∂x_k C⁻¹`.
    wcov: Vec<DMatrix<S>>,
    /// `tr(C⁻¹ ∂C/∂x_k)`.
    trace: Vec<T>,
    cov_inv: DMatrix<S>,
}

impl<T: Real, S: FieldScalar<T>> ScoreModel<T, S> {
    pub fn new(mean: DVector<S>, cov: &DMatrix<S>, dmean: &[DVector<S>], dcov: &[DMatrix<S>]) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) || dmean.len() != dcov.len() {
            return Err(Error::DimensionMismatch("score model moments disagree in size".into()));
        }
        let cov_inv = linalg::inverse_checked(cov, None, "covariance")?;
        let k = dmean.len();
        let mut wmean = DMatrix::zeros(d, k);
        let mut wcov = Vec::with_capacity(k);
        let mut trace = Vec::with_capacity(k);
        for i in 0..k {
            if dmean[i].len() != d || dcov[i].shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!("derivative {i} has the wrong size")));
            }
            wmean.set_column(i, &(&cov_inv * &dmean[i]));
            let left = &cov_inv * &dcov[i];
            trace.push(left.trace().real());
            wcov.push(left * &cov_inv);
        }
        Ok(Self { mean, wmean, wcov, trace, cov_inv })
    }

    /// Deterministic model, `θ = [A; h]`, noise variance known.
    pub fn deterministic(ch: &Channel<T>, a: &SymbolBurst<S>, sigma_v2: T) -> Result<Self> {
        let g = deterministic_jacobian::<T, S>(ch, a, a.burst())?;
        let t = toeplitz_op::<T, S>(ch, a.burst())?;
        let mean = &t * a.symbols();
        let d = mean.len();
        let cov = DMatrix::identity(d, d) * S::from_re(sigma_v2);
        let mut dmean: Vec<DVector<S>> = g.column_iter().map(|c| c.into_owned()).collect();
        if S::FIELD == Field::Complex {
            let j = S::from_c(cplx(T::zero(), T::one()));
            let im: Vec<_> = g.column_iter().map(|c| c * j).collect();
            dmean.extend(im);
        }
        let dcov = vec![DMatrix::zeros(d, d); dmean.len()];
        Self::new(mean, &cov, &dmean, &dcov)
    }

    /// Gaussian model, `θ = [h; σ_v²]` in the real layout of the FIM engine.
    pub fn gaussian(ch: &Channel<T>, cfg: &GaussianModelConfig<T>) -> Result<Self> {
        let ch = match S::FIELD {
            Field::Complex => ch.as_complex(),
            Field::Real if ch.field() == Field::Real => ch.clone(),
            Field::Real => return Err(Error::InvalidInput("real Gaussian model needs a real channel".into())),
        };
        let t = toeplitz_op::<T, S>(&ch, cfg.burst)?;
        let d = t.nrows();
        let n = ch.len();
        let sa = S::from_re(cfg.sigma_a2);
        let cov = &t * t.adjoint() * sa + DMatrix::identity(d, d) * S::from_re(cfg.sigma_v2);
        let units: Vec<DMatrix<S>> = (0..n)
            .map(|k| {
                let mut e = DVector::zeros(n);
                e[k] = S::one();
                toeplitz_of_stacked::<T, S>(&e, ch.m(), cfg.burst)
            })
            .collect();
        let mut dcov: Vec<DMatrix<S>> =
            units.iter().map(|te| (te * t.adjoint() + &t * te.adjoint()) * sa).collect();
        if S::FIELD == Field::Complex {
            let j = S::from_c(cplx(T::zero(), T::one()));
            dcov.extend(units.iter().map(|te| (te * t.adjoint() - &t * te.adjoint()) * (sa * j)));
        }
        dcov.push(DMatrix::identity(d, d));
        let dmean = vec![DVector::zeros(d); dcov.len()];
        Self::new(DVector::zeros(d), &cov, &dmean, &dcov)
    }

    pub fn n_params(&self) -> usize {
        self.trace.len()
    }

    pub fn cov_inv(&self) -> &DMatrix<S> {
        &self.cov_inv
    }

    /// Real-coordinate score at observation `y`.
    pub fn score(&self, y: &DVector<S>) -> DVector<T> {
        let (c_mean, c_cov) = match S::FIELD {
            Field::Complex => (T::lit(2.0), T::one()),
            Field::Real => (T::one(), T::lit(0.5)),
        };
        let e = y - &self.mean;
        let lin = self.wmean.adjoint() * &e;
        DVector::from_fn(self.n_params(), |k, _| {
            let quad = e.dotc(&(&self.wcov[k] * &e)).real();
            c_mean * lin[k].real() + c_cov * (quad - self.trace[k])
        })
    }
}

/// Monte Carlo estimate `Ĵ = (1/T) Σ s_t s_tᵀ`.
#[derive(Debug, Clone)]
pub struct McFimEstimate<T: Real> {
    pub j_hat: DMatrix<T>,
    /// Standard error of each entry of `Ĵ`.
    pub se: DMatrix<T>,
    pub mean_score: DVector<T>,
    pub mean_score_se: DVector<T>,
    pub trials: usize,
    /// One row per trial.
    pub scores: DMatrix<T>,
}

impl<T: Real> McFimEstimate<T> {
    /// `(Ĵ - J) / se`, entrywise.
    pub fn z_scores(&self, j: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| {
            let se = self.se[(r, c)];
            let diff = self.j_hat[(r, c)] - j[(r, c)];
            if se > T::zero() {
                diff / se
            } else if diff == T::zero() {
                T::zero()
            } else {
                T::lit(f64::INFINITY)
            }
        })
    }

    /// Mean and standard error of `(vᵀ s)²`, an estimate of `vᵀ J v`.
    pub fn quad_form(&self, v: &DVector<T>) -> (T, T) {
        let (m, se) = mean_and_se(self.scores.row_iter().map(|r| {
            let p = (r * v)[(0, 0)].to_f64_lossy();
            p * p
        }));
        (T::lit(m), T::lit(se))
    }

    pub fn trace_rel_error(&self, j: &DMatrix<T>) -> T {
        (self.j_hat.trace() - j.trace()).abs() / j.trace().abs()
    }
}

/// Score-covariance FIM estimate over `trials` simulated bursts.
pub fn score_covariance_fim<T: Real, S: FieldScalar<T>>(
    sim: &BurstSimulator<T, S>,
    model: &ScoreModel<T, S>,
    trials: usize,
) -> Result<McFimEstimate<T>> {
    if trials < 2 {
        return Err(Error::InvalidInput("need at least 2 trials".into()));
    }
    let scores: Vec<DVector<T>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| model.score(&sim.simulate(t).y))
        .collect();
    let k = model.n_params();
    let scores = DMatrix::from_fn(trials, k, |t, i| scores[t][i]);
    let mut j_hat = DMatrix::zeros(k, k);
    let mut se = DMatrix::zeros(k, k);
    for r in 0..k {
        for c in r..k {
            let (m, s) = mean_and_se(
                (0..trials).map(|t| scores[(t, r)].to_f64_lossy() * scores[(t, c)].to_f64_lossy()),
            );
            j_hat[(r, c)] = T::lit(m);
            j_hat[(c, r)] = T::lit(m);
            se[(r, c)] = T::lit(s);
            se[(c, r)] = T::lit(s);
        }
    }
    let mut mean_score = DVector::zeros(k);
    let mut mean_score_se = DVector::zeros(k);
    for i in 0..k {
        let (m, s) = mean_and_se((0..trials).map(|t| scores[(t, i)].to_f64_lossy()));
        mean_score[i] = T::lit(m);
        mean_score_se[i] = T::lit(s);
    }
    Ok(McFimEstimate { j_hat, se, mean_score, mean_score_se, trials, scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Adjustment {
    #[serde(rename = "NO", alias = "no")]
    No,
    #[serde(rename = "LS", alias = "ls")]
    Ls,
    #[serde(rename = "LIN", alias = "lin")]
    Lin,
}

impl Adjustment {
    pub const ALL: [Adjustment; 3] = [Adjustment::No, Adjustment::Ls, Adjustment::Lin];
}

impl std::fmt::Display for Adjustment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Adjustment::No => "NO",
            Adjustment::Ls => "LS",
            Adjustment::Lin => "LIN",
        })
    }
}

/// Resolves the scale and phase (or sign) of a blind estimate against the
/// true channel.
///
/// * `NO`: rescale to `‖h°‖` and rotate so that `h°ᴴ ĥ > 0`.
/// * `LS`: `P_ĥ h°`, the least-squares fit of `ĥ` to `h°`.
/// * `LIN`: `ĥ (h°ᴴ h°) / (h°ᴴ ĥ)`, which satisfies `h°ᴴ ĥ = h°ᴴ h°`.
pub fn adjust_estimate<T: Real, S: FieldScalar<T>>(
    h_hat: &DVector<S>,
    h0: &DVector<S>,
    rule: Adjustment,
) -> Result<DVector<S>> {
    if h_hat.len() != h0.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has length {}, channel {}",
            h_hat.len(),
            h0.len()
        )));
    }
    let nh = h_hat.norm();
    let n0 = h0.norm();
    if nh == T::zero() || n0 == T::zero() {
        return Err(Error::DegenerateAdjustment("zero estimate or channel".into()));
    }
    let inner = h0.dotc(h_hat);
    match rule {
        Adjustment::No => {
            let mag = inner.modulus();
            let rot = if mag > T::zero() { inner.conjugate() * S::from_re(T::one() / mag) } else { S::one() };
            Ok(h_hat * (rot * S::from_re(n0 / nh)))
        }
        Adjustment::Ls => Ok(h_hat * (inner.conjugate() * S::from_re(T::one() / (nh * nh)))),
        Adjustment::Lin => {
            if inner.modulus() <= T::eps() * T::lit(16.0) * nh * n0 {
                return Err(Error::DegenerateAdjustment("estimate orthogonal to the true channel".into()));
            }
            Ok(h_hat * (S::from_re(n0 * n0) / inner))
        }
    }
}

/// Least-squares solve `min ‖M x - y‖`, by Cholesky on the normal equations
/// with a pseudo-inverse fallback.
fn lstsq<T: Real, S: FieldScalar<T>>(m: &DMatrix<S>, y: &DVector<S>) -> DVector<S> {
    let gram = m.adjoint() * m;
    let rhs = m.adjoint() * y;
    if let Some(ch) = gram.cholesky() {
        return ch.solve(&rhs);
    }
    match linalg::pseudo_inverse(m, None) {
        Ok(p) => p * y,
        Err(_) => DVector::zeros(m.ncols()),
    }
}

/// Cross-relation channel estimate: for every subchannel pair `(i, j)`,
/// `y_i * h_j = y_j * h_i` on the samples that see no burst edge. Returns
/// the unit-norm minimizer of the stacked residual.
pub fn cross_relation_init<T: Real, S: FieldScalar<T>>(
    y: &DVector<S>,
    m: usize,
    taps: usize,
    burst: usize,
) -> Result<DVector<S>> {
    if m < 2 {
        return Err(Error::InvalidInput("cross relations need at least two subchannels".into()));
    }
    if y.len() != m * burst || burst < taps {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, expected m*M = {} with M >= N",
            y.len(),
            m * burst
        )));
    }
    let rows_per_pair = burst - taps + 1;
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let mut x = DMatrix::zeros(pairs.len() * rows_per_pair, m * taps);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        for r in 0..rows_per_pair {
            let row = p * rows_per_pair + r;
            for n in 0..taps {
                x[(row, n * m + j)] += y[(r + n) * m + i];
                x[(row, n * m + i)] -= y[(r + n) * m + j];
            }
        }
    }
    let (_, vecs) = linalg::hermitian_eigen(&(x.adjoint() * &x));
    let h = vecs.column(0).into_owned();
    let n = h.norm();
    Ok(h * S::from_re(T::one() / n))
}

#[derive(Debug, Clone)]
pub struct AlsOutcome<T: Real, S: nalgebra::Scalar> {
    /// Unit-norm channel estimate.
    pub h: DVector<S>,
    pub symbols: DVector<S>,
    /// `‖Y - T(ĥ) Â‖²` after each sweep.
    pub residuals: Vec<T>,
    pub converged: bool,
}

/// Alternating least squares for `Y ≈ T(h) A`: solve for `A` given `h`,
/// then for `h` given `A` through `T(h) A = 𝒜 h`, renormalizing `h` (and
/// rescaling `A`) after each sweep. Stops when the relative residual
/// decrease drops below `tol`; the best iterate is returned either way.
pub fn alternating_ls_estimator<T: Real, S: FieldScalar<T>>(
    y: &DVector<S>,
    m: usize,
    taps: usize,
    init: &DVector<S>,
    iters: usize,
    tol: T,
) -> Result<AlsOutcome<T, S>> {
    if m == 0 || y.len() % m != 0 || init.len() != m * taps {
        return Err(Error::DimensionMismatch("observation, m, N and init disagree".into()));
    }
    let burst = y.len() / m;
    let n0 = init.norm();
    if n0 == T::zero() {
        return Err(Error::InvalidInput("zero initial channel".into()));
    }
    let mut h = init * S::from_re(T::one() / n0);
    let mut best: Option<(T, DVector<S>, DVector<S>)> = None;
    let mut residuals = Vec::with_capacity(iters);
    let mut converged = false;
    let floor = (T::eps() * y.norm()).powi(2) * T::lit(100.0);
    for _ in 0..iters.max(1) {
        let t = toeplitz_of_stacked::<T, S>(&h, m, burst);
        let a = lstsq(&t, y);
        let sb = SymbolBurst::new(a, burst, taps)?;
        let op = commutativity_op::<T, S>(&sb, m, taps, burst)?;
        let h_new = lstsq(&op, y);
        let scale = h_new.norm();
        if scale == T::zero() {
            break;
        }
        let res = (&op * &h_new - y).norm_squared();
        h = h_new * S::from_re(T::one() / scale);
        let a = sb.symbols() * S::from_re(scale);
        let prev = residuals.last().copied();
        residuals.push(res);
        if best.as_ref().is_none_or(|(r, _, _)| res < *r) {
            best = Some((res, h.clone(), a));
        }
        if let Some(p) = prev {
            if p - res <= tol * p {
                converged = true;
                break;
            }
        }
        if res <= floor {
            converged = true;
            break;
        }
    }
    let (_, h, symbols) = best.ok_or_else(|| Error::InvalidInput("estimator made no progress".into()))?;
    Ok(AlsOutcome { h, symbols, residuals, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    AlternatingLs,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

fn default_sigma_a2() -> f64 {
    1.0
}

fn default_adjustments() -> Vec<Adjustment> {
    Adjustment::ALL.to_vec()
}

fn default_iters() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-10
}

/// Experiment description, read from JSON.
///
/// ```json
/// {"channel": "h1", "model": "deterministic", "field": "real", "M": 100,
///  "snr_db": [10, 20, 30], "trials": 500, "seed": 1,
///  "estimator": "alternating_ls", "adjustment": ["NO", "LS", "LIN"]}
/// ```
///
/// `channel` is `h1`, `h2`, or a path to a channel file (relative paths
/// resolve against the config file). Either `snr_db` or `sigma_v2` must be
/// given; with SNR `= σ_a² ‖h‖² / (m σ_v²)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: String,
    pub model: Model,
    pub field: Field,
    #[serde(rename = "M")]
    pub burst: usize,
    #[serde(default = "default_sigma_a2")]
    pub sigma_a2: f64,
    #[serde(default)]
    pub sigma_v2: Option<f64>,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default = "default_adjustments", alias = "adjustment", deserialize_with = "one_or_many")]
    pub adjustments: Vec<Adjustment>,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(src).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if self.model == Model::Generic {
            return Err(Error::InvalidInput("model must be deterministic or gaussian".into()));
        }
        if self.snr_db.is_empty() && self.sigma_v2.is_none() {
            return Err(Error::InvalidInput("give `snr_db` or `sigma_v2`".into()));
        }
        if !(self.sigma_a2 > 0.0) || self.sigma_v2.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::InvalidInput("noise and symbol powers must be positive".into()));
        }
        if self.adjustments.is_empty() {
            return Err(Error::InvalidInput("need at least one adjustment rule".into()));
        }
        Ok(())
    }

    /// Resolves `channel` (fixture name or path relative to `base`).
    pub fn load_channel<T: Real>(&self, base: Option<&Path>) -> Result<Channel<T>> {
        match self.channel.to_ascii_lowercase().as_str() {
            "h1" => Ok(fixture_h1()),
            "h2" => Ok(fixture_h2()),
            _ => {
                let p = Path::new(&self.channel);
                let p = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                read_channel(p)
            }
        }
    }

    /// Noise levels to run: from `snr_db` for the given channel, else the
    /// single `sigma_v2`. Pairs of `(snr_db, sigma_v2)`.
    pub fn noise_levels<T: Real>(&self, ch: &Channel<T>) -> Vec<(f64, f64)> {
        let energy = ch.h().norm_squared().to_f64_lossy();
        let m = ch.m() as f64;
        if self.snr_db.is_empty() {
            let s = self.sigma_v2.unwrap_or(1.0);
            vec![(snr_db(self.sigma_a2, energy, m, s), s)]
        } else {
            self.snr_db
                .iter()
                .map(|&db| (db, self.sigma_a2 * energy / (m * 10f64.powf(db / 10.0))))
                .collect()
        }
    }
}

/// `10 log10(σ_a² ‖h‖² / (m σ_v²))`.
pub fn snr_db(sigma_a2: f64, energy: f64, m: f64, sigma_v2: f64) -> f64 {
    10.0 * (sigma_a2 * energy / (m * sigma_v2)).log10()
}

#[derive(Debug, Clone, Serialize)]
pub struct MseRow {
    pub snr_db: f64,
    pub sigma_v2: f64,
    pub rule: Adjustment,
    /// Mean of `‖ĥ_adj - h°‖²`; NaN without an estimator.
    pub mse: f64,
    pub mse_se: f64,
    pub crb_trace: f64,
    pub trials: usize,
    pub nonconverged: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MseReport {
    pub rows: Vec<MseRow>,
    pub warnings: Vec<String>,
}

/// CRB trace for `h` used as the reference in MSE experiments.
pub fn reference_crb_trace<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    model: Model,
    fixed: Option<&SymbolBurst<S>>,
    sigma_a2: T,
    sigma_v2: T,
    burst: usize,
) -> Result<T> {
    match model {
        Model::Deterministic => {
            let a = fixed.ok_or_else(|| Error::InvalidInput("deterministic CRB needs the symbol burst".into()))?;
            let red = deterministic_reduced_fim::<T, S>(ch, a, sigma_v2, burst)?;
            let pinv = linalg::pseudo_inverse(red.fim.real_fim(), Some(T::lit(DEFAULT_FIM_RANK_TOL)))?;
            Ok(pinv.trace())
        }
        Model::Gaussian => {
            let cfg = GaussianModelConfig::new(sigma_a2, sigma_v2, burst)?;
            Ok(gaussian_blind_crb(ch, &cfg, S::FIELD)?.trace)
        }
        Model::Generic => Err(Error::InvalidInput("no reference CRB for the generic model".into())),
    }
}

struct TrialOutcome {
    errors: Vec<Option<f64>>,
    converged: bool,
}

fn run_mse<T: Real, S: FieldScalar<T>>(cfg: &ExperimentConfig, ch: &Channel<T>) -> Result<MseReport> {
    let h0: DVector<S> = DVector::from_iterator(ch.len(), ch.h().iter().map(|&z| S::from_c(z)));
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (idx, (db, sv2)) in cfg.noise_levels(ch).into_iter().enumerate() {
        let sim = BurstSimulator::<T, S>::new(ch, cfg.model, cfg.burst, T::lit(cfg.sigma_a2), T::lit(sv2), cfg.seed)?;
        let crb = reference_crb_trace::<T, S>(
            ch,
            cfg.model,
            sim.fixed_symbols(),
            T::lit(cfg.sigma_a2),
            T::lit(sv2),
            cfg.burst,
        )?
        .to_f64_lossy();
        let outcomes: Vec<TrialOutcome> = match cfg.estimator {
            EstimatorKind::None => Vec::new(),
            EstimatorKind::AlternatingLs => {
                let base = (idx as u64) << 32;
                (0..cfg.trials as u64)
                    .into_par_iter()
                    .map(|t| -> Result<TrialOutcome> {
                        let y = simulate_burst(&sim, base + t);
                        let init = cross_relation_init::<T, S>(&y, ch.m(), ch.taps(), cfg.burst)?;
                        let est = alternating_ls_estimator(&y, ch.m(), ch.taps(), &init, cfg.max_iters, T::lit(cfg.tol))?;
                        let errors = cfg
                            .adjustments
                            .iter()
                            .map(|&rule| {
                                adjust_estimate(&est.h, &h0, rule)
                                    .ok()
                                    .map(|h| (h - &h0).norm_squared().to_f64_lossy())
                            })
                            .collect();
                        Ok(TrialOutcome { errors, converged: est.converged })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let nonconverged = outcomes.iter().filter(|o| !o.converged).count();
        if !outcomes.is_empty() && 2 * nonconverged > outcomes.len() {
            warnings.push(format!(
                "SNR {db:.1} dB: estimator failed to converge in {nonconverged} of {} trials",
                outcomes.len()
            ));
        }
        for (k, &rule) in cfg.adjustments.iter().enumerate() {
            let errs: Vec<f64> = outcomes.iter().filter_map(|o| o.errors[k]).collect();
            let (mse, se) = if outcomes.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_se(errs.iter().copied()) };
            rows.push(MseRow {
                snr_db: db,
                sigma_v2: sv2,
                rule,
                mse,
                mse_se: se,
                crb_trace: crb,
                trials: errs.len(),
                nonconverged,
                degenerate: outcomes.len() - errs.len(),
            });
        }
    }
    Ok(MseReport { rows, warnings })
}

/// Runs the experiment: for every noise level, `trials` bursts, the
/// estimator, each adjustment rule, and the reference CRB trace
/// (`tr J_hh⁺` for the deterministic model, the blind Gaussian CRB
/// otherwise).
pub fn mse_vs_crb_experiment<T: Real>(cfg: &ExperimentConfig, ch: &Channel<T>) -> Result<MseReport> {
    cfg.validate()?;
    match cfg.field {
        Field::Real => {
            if ch.field() == Field::Complex {
                return Err(Error::InvalidInput("complex channel with real symbols".into()));
            }
            run_mse::<T, T>(cfg, ch)
        }
        Field::Complex => run_mse::<T, C<T>>(cfg, ch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn mean_and_se_basic() {
        let (m, se) = mean_and_se([1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adjustment_of_true_direction_is_exact() {
        let h0 = DVector::from_vec(vec![cplx(1.0, 0.5), cplx(-0.3, 0.2)]);
        let rot = cplx(0.6f64, 0.8);
        let hh = &h0 * (rot / h0.norm());
        for rule in Adjustment::ALL {
            let out = adjust_estimate(&hh, &h0, rule).unwrap();
            assert!((out - &h0).norm() < 1e-12, "{rule}");
        }
        let orth = DVector::from_vec(vec![cplx(0.3, 0.2), cplx(1.0, -0.5)]);
        assert!(h0.dotc(&orth).norm() < 1e-14);
        assert!(matches!(adjust_estimate(&orth, &h0, Adjustment::Lin), Err(Error::DegenerateAdjustment(_))));
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::parse(
            r#"{"channel":"h1","model":"deterministic","field":"real","M":10,"snr_db":[20],"trials":5,"seed":3,"adjustment":"LS"}"#,
        )
        .unwrap();
        assert_eq!(cfg.adjustments, vec![Adjustment::Ls]);
        assert_eq!(cfg.estimator, EstimatorKind::AlternatingLs);
        assert!(ExperimentConfig::parse(r#"{"channel":"h1","model":"deterministic","field":"real","M":10,"trials":5,"seed":3}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"channel":"h1","model":"gaussian","field":"real","M":10,"sigma_v2":0.1,"trials":0,"seed":3}"#).is_err());
    }
}
