//! Fisher information matrices for the deterministic and Gaussian symbol
//! models, Schur reductions, and singularity analysis.
//!
//! Every FIM is also exposed in the real representation. For complex
//! parameters the real coordinates are ordered as: real parts of all complex
//! blocks, then imaginary parts of all complex blocks, then real-valued
//! blocks. For `θ = [A; h]` this is `[Re A; Re h; Im A; Im h]`, and for
//! `θ = [h; σ_v²]` it is `[Re h; Im h; σ_v²]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{commutativity_op, toeplitz_of_stacked, toeplitz_op, Channel, SymbolBurst};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{creal, Field, FieldScalar, Real, C};

/// Relative eigenvalue threshold used to count FIM singularities.
///
/// Null eigenvalues of the FIMs built here sit at roundoff level
/// (`~1e-16` relative) while the smallest regular ones for desk-scale
/// channels stay above `~1e-6`; the threshold sits between the two.
pub const DEFAULT_FIM_RANK_TOL: f64 = 1e-10;

/// Principal angle (radians) below which a predicted vector counts as lying
/// in the computed null space.
pub const MATCH_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Deterministic,
    Gaussian,
    Generic,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Deterministic => "deterministic",
            Model::Gaussian => "gaussian",
            Model::Generic => "generic",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "deterministic" | "det" => Ok(Model::Deterministic),
            "gaussian" | "gauss" => Ok(Model::Gaussian),
            "generic" => Ok(Model::Generic),
            other => Err(format!("unknown model `{other}` (expected deterministic|gaussian)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Symbols,
    Channel,
    Noise,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub kind: BlockKind,
    pub len: usize,
    pub field: Field,
    /// Offset in the natural (complex or real) parameter vector.
    pub offset: usize,
    /// Positions in the real representation: real parts first, then
    /// imaginary parts for complex blocks.
    pub real_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    real_dim: usize,
}

impl ParamLayout {
    pub fn new(specs: &[(&str, BlockKind, usize, Field)]) -> Self {
        let mut blocks: Vec<ParamBlock> = Vec::with_capacity(specs.len());
        let mut offset = 0;
        for &(name, kind, len, field) in specs {
            blocks.push(ParamBlock {
                name: name.to_string(),
                kind,
                len,
                field,
                offset,
                real_indices: Vec::with_capacity(len * field.real_dim()),
            });
            offset += len;
        }
        let mut next = 0;
        for b in blocks.iter_mut().filter(|b| b.field == Field::Complex) {
            b.real_indices.extend(next..next + b.len);
            next += b.len;
        }
        for b in blocks.iter_mut().filter(|b| b.field == Field::Complex) {
            b.real_indices.extend(next..next + b.len);
            next += b.len;
        }
        for b in blocks.iter_mut().filter(|b| b.field == Field::Real) {
            b.real_indices.extend(next..next + b.len);
            next += b.len;
        }
        Self { blocks, real_dim: next }
    }

    /// One block covering the whole parameter vector.
    pub fn single(name: &str, len: usize, field: Field) -> Self {
        Self::new(&[(name, BlockKind::Other, len, field)])
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Result<&ParamBlock> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))
    }

    /// Dimension of the real representation.
    pub fn real_dim(&self) -> usize {
        self.real_dim
    }

    /// Length of the natural parameter vector.
    pub fn natural_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    /// Maps a natural parameter vector to real coordinates.
    pub fn to_real_coords<T: Real>(&self, theta: &DVector<C<T>>) -> Result<DVector<T>> {
        if theta.len() != self.natural_dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, layout expects {}",
                theta.len(),
                self.natural_dim()
            )));
        }
        let mut out = DVector::zeros(self.real_dim);
        for b in &self.blocks {
            for k in 0..b.len {
                let z = theta[b.offset + k];
                out[b.real_indices[k]] = z.re;
                if b.field == Field::Complex {
                    out[b.real_indices[b.len + k]] = z.im;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`ParamLayout::to_real_coords`].
    pub fn from_real_coords<T: Real>(&self, x: &DVector<T>) -> Result<DVector<C<T>>> {
        if x.len() != self.real_dim {
            return Err(Error::DimensionMismatch(format!(
                "real vector has length {}, layout expects {}",
                x.len(),
                self.real_dim
            )));
        }
        let mut out = DVector::from_element(self.natural_dim(), creal(T::zero()));
        for b in &self.blocks {
            for k in 0..b.len {
                out[b.offset + k].re = x[b.real_indices[k]];
                if b.field == Field::Complex {
                    out[b.offset + k].im = x[b.real_indices[b.len + k]];
                }
            }
        }
        Ok(out)
    }

    /// Real FIM of the layout from the complex pair `(J, Jx)` over the
    /// natural parameters. Real-valued blocks keep only their real
    /// coordinate.
    pub fn realify_pair<T: Real>(&self, j: &DMatrix<C<T>>, jx: &DMatrix<C<T>>) -> Result<DMatrix<T>> {
        let n = self.natural_dim();
        if j.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "FIM is {:?}, layout expects {n}x{n}",
                j.shape()
            )));
        }
        let full = linalg::realify_fim(j, jx)?;
        let mut src = vec![0usize; self.real_dim];
        for b in &self.blocks {
            for k in 0..b.len {
                src[b.real_indices[k]] = b.offset + k;
                if b.field == Field::Complex {
                    src[b.real_indices[b.len + k]] = n + b.offset + k;
                }
            }
        }
        Ok(DMatrix::from_fn(self.real_dim, self.real_dim, |r, c| full[(src[r], src[c])]))
    }

    /// Real-representation indices of every block except `keep`.
    fn complement_indices(&self, keep: &str) -> Result<(Vec<usize>, Vec<usize>, Vec<String>)> {
        let kept = self.block(keep)?.real_indices.clone();
        let mut rest = Vec::new();
        let mut names = Vec::new();
        for b in self.blocks.iter().filter(|b| b.name != keep) {
            rest.extend(b.real_indices.iter().copied());
            names.push(b.name.clone());
        }
        Ok((kept, rest, names))
    }
}

/// A matrix tagged with its field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldMat<T: Real> {
    Real(DMatrix<T>),
    Complex(DMatrix<C<T>>),
}

impl<T: Real> FieldMat<T> {
    pub fn field(&self) -> Field {
        match self {
            FieldMat::Real(_) => Field::Real,
            FieldMat::Complex(_) => Field::Complex,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            FieldMat::Real(m) => m.shape(),
            FieldMat::Complex(m) => m.shape(),
        }
    }

    pub fn to_complex(&self) -> DMatrix<C<T>> {
        match self {
            FieldMat::Real(m) => linalg::to_complex(m),
            FieldMat::Complex(m) => m.clone(),
        }
    }

    fn from_scalar<S: FieldScalar<T>>(m: DMatrix<S>) -> Self {
        match S::FIELD {
            Field::Real => FieldMat::Real(m.map(|x| x.to_c().re)),
            Field::Complex => FieldMat::Complex(m.map(|x| x.to_c())),
        }
    }
}

/// A Fisher information matrix with its parameter layout.
#[derive(Debug, Clone)]
pub struct FimResult<T: Real> {
    j: FieldMat<T>,
    cross: Option<DMatrix<C<T>>>,
    real: DMatrix<T>,
    layout: ParamLayout,
    model: Model,
}

impl<T: Real> FimResult<T> {
    /// Wraps a real FIM.
    pub fn from_real(j: DMatrix<T>, layout: ParamLayout, model: Model) -> Result<Self> {
        let n = layout.real_dim();
        if j.shape() != (n, n) || layout.blocks().iter().any(|b| b.field == Field::Complex) {
            return Err(Error::DimensionMismatch(format!(
                "real FIM {:?} does not fit a real layout of dimension {n}",
                j.shape()
            )));
        }
        let j = symmetrize(&j);
        Ok(Self { real: j.clone(), j: FieldMat::Real(j), cross: None, layout, model })
    }

    /// Wraps a complex pair `(J_θθ, J_θθ*)`; `cross = None` means zero.
    pub fn from_complex(
        j: DMatrix<C<T>>,
        cross: Option<DMatrix<C<T>>>,
        layout: ParamLayout,
        model: Model,
    ) -> Result<Self> {
        let j = symmetrize(&j);
        let cross = cross.map(|x| (&x + x.transpose()) * creal(T::lit(0.5)));
        let zero = DMatrix::from_element(j.nrows(), j.ncols(), creal(T::zero()));
        let real = layout.realify_pair(&j, cross.as_ref().unwrap_or(&zero))?;
        Ok(Self { j: FieldMat::Complex(j), cross, real, layout, model })
    }

    pub fn field(&self) -> Field {
        self.j.field()
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// `J_θθ` in the natural parametrization.
    pub fn j(&self) -> &FieldMat<T> {
        &self.j
    }

    /// `J_θθ*`, present for complex Gaussian models.
    pub fn cross(&self) -> Option<&DMatrix<C<T>>> {
        self.cross.as_ref()
    }

    /// FIM of the real coordinates.
    pub fn real_fim(&self) -> &DMatrix<T> {
        &self.real
    }

    /// Real-representation sub-FIM of one block (no reduction).
    pub fn block(&self, name: &str) -> Result<DMatrix<T>> {
        let idx = &self.layout.block(name)?.real_indices;
        Ok(self.real.select_rows(idx.iter()).select_columns(idx.iter()))
    }
}

fn symmetrize<T: Real, S: FieldScalar<T>>(a: &DMatrix<S>) -> DMatrix<S> {
    (a + a.adjoint()) * S::from_re(T::lit(0.5))
}

/// Mean, covariance and their parameter derivatives for a Gaussian data
/// model.
///
/// For real fields `dmean[i] = ∂m/∂θ_i` and `dcov[i] = ∂C/∂θ_i`. For complex
/// fields the mean must be holomorphic in `θ`, `dmean[i] = ∂m/∂θ_i`, and
/// `dcov[i] = ∂C/∂θ_i*`.
#[derive(Debug, Clone)]
pub struct MomentStack<S: nalgebra::Scalar> {
    pub mean: DVector<S>,
    pub cov: DMatrix<S>,
    pub dmean: Vec<DVector<S>>,
    pub dcov: Vec<DMatrix<S>>,
}

impl<T: Real, S: FieldScalar<T>> MomentStack<S>
where
    S: nalgebra::ComplexField<RealField = T>,
{
    pub fn new(
        mean: DVector<S>,
        cov: DMatrix<S>,
        dmean: Vec<DVector<S>>,
        dcov: Vec<DMatrix<S>>,
    ) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "covariance {:?} for a mean of length {d}",
                cov.shape()
            )));
        }
        if dmean.len() != dcov.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} mean derivatives but {} covariance derivatives",
                dmean.len(),
                dcov.len()
            )));
        }
        if dmean.iter().any(|v| v.len() != d) || dcov.iter().any(|c| c.shape() != (d, d)) {
            return Err(Error::DimensionMismatch("derivative shapes do not match the data".into()));
        }
        let asym = (&cov - cov.adjoint()).norm();
        if asym > T::lit(1e-10) * cov.norm().max(T::one()) {
            return Err(Error::InvalidInput("covariance is not Hermitian".into()));
        }
        Ok(Self { mean, cov, dmean, dcov })
    }

    pub fn n_params(&self) -> usize {
        self.dmean.len()
    }

    /// `[∂m/∂θ; ∂vec(C)/∂θ]` with one column per parameter.
    pub fn phi_jacobian(&self) -> DMatrix<S> {
        let d = self.mean.len();
        DMatrix::from_fn(d + d * d, self.n_params(), |r, i| {
            if r < d {
                self.dmean[i][r]
            } else {
                let k = r - d;
                self.dcov[i][(k % d, k / d)]
            }
        })
    }
}

fn trace_product<T: Real, S: FieldScalar<T>>(a: &DMatrix<S>, b: &DMatrix<S>) -> S {
    let mut acc = S::zero();
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            acc += a[(r, c)] * b[(c, r)];
        }
    }
    acc
}

/// Raw FIM pieces: `(J, Jx)` for complex data, `(J, 0)` for real data.
fn gaussian_pair<T: Real, S: FieldScalar<T>>(stack: &MomentStack<S>) -> Result<(DMatrix<S>, DMatrix<S>)> {
    let cinv = linalg::inverse_checked(&stack.cov, None, "data covariance C_YY")?;
    let n = stack.n_params();
    let w: Vec<DMatrix<S>> = stack.dcov.iter().map(|d| &cinv * d).collect();
    let wh: Vec<DMatrix<S>> = stack.dcov.iter().map(|d| &cinv * d.adjoint()).collect();
    let cm: Vec<DVector<S>> = stack.dmean.iter().map(|d| &cinv * d).collect();
    let half = S::from_re(T::lit(0.5));
    let mut j = DMatrix::zeros(n, n);
    let mut jx = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mean_term = stack.dmean[a].dotc(&cm[b]);
            match S::FIELD {
                Field::Real => {
                    j[(a, b)] = mean_term + half * trace_product(&w[a], &w[b]);
                }
                Field::Complex => {
                    j[(a, b)] = mean_term + trace_product(&w[a], &wh[b]);
                    jx[(a, b)] = trace_product(&w[a], &w[b]);
                }
            }
        }
    }
    Ok((j, jx))
}

/// Gaussian-data FIM from a moment stack.
///
/// Real data: `J(i,j) = ∂mᵀ C⁻¹ ∂m + ½ tr(C⁻¹ ∂_i C C⁻¹ ∂_j C)`. Complex
/// circular data: the pair `J(i,j) = ∂_i mᴴ C⁻¹ ∂_j m + tr(C⁻¹ D_i C⁻¹ D_jᴴ)`,
/// `J*(i,j) = tr(C⁻¹ D_i C⁻¹ D_j)` with `D_i = ∂C/∂θ_i*`.
pub fn gaussian_fim_generic<T: Real, S: FieldScalar<T>>(
    stack: &MomentStack<S>,
    layout: ParamLayout,
) -> Result<FimResult<T>> {
    if layout.natural_dim() != stack.n_params() {
        return Err(Error::DimensionMismatch(format!(
            "layout has {} parameters, moment stack {}",
            layout.natural_dim(),
            stack.n_params()
        )));
    }
    let (j, jx) = gaussian_pair(stack)?;
    match S::FIELD {
        Field::Real => {
            let jr = j.map(|x| x.to_c().re);
            FimResult::from_real(jr, layout, Model::Generic)
        }
        Field::Complex => FimResult::from_complex(
            j.map(|x| x.to_c()),
            Some(jx.map(|x| x.to_c())),
            layout,
            Model::Generic,
        ),
    }
}

fn check_positive<T: Real>(x: T, what: &str) -> Result<()> {
    if x > T::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive and finite, got {x}")))
    }
}

/// `G = [T(h) 𝒜]`, the derivative of the noise-free output w.r.t. `[A; h]`.
pub fn deterministic_jacobian<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    a: &SymbolBurst<S>,
    burst: usize,
) -> Result<DMatrix<S>> {
    let t = toeplitz_op::<T, S>(ch, burst)?;
    let acal = commutativity_op(a, ch.m(), ch.taps(), burst)?;
    let mut g = DMatrix::zeros(t.nrows(), t.ncols() + acal.ncols());
    g.view_mut((0, 0), t.shape()).copy_from(&t);
    g.view_mut((0, t.ncols()), acal.shape()).copy_from(&acal);
    Ok(g)
}

/// Layout `[A; h]` of the deterministic model.
pub fn deterministic_layout(symbols: usize, channel_len: usize, field: Field) -> ParamLayout {
    ParamLayout::new(&[
        ("A", BlockKind::Symbols, symbols, field),
        ("h", BlockKind::Channel, channel_len, field),
    ])
}

/// Deterministic-model FIM `(1/σ_v²) [T(h) 𝒜]ᴴ [T(h) 𝒜]` over `θ = [A; h]`.
///
/// The element type `S` fixes the field of symbols and data. A real channel
/// may be used with complex symbols; a complex channel requires `S` complex.
pub fn deterministic_fim<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    a: &SymbolBurst<S>,
    sigma_v2: T,
    burst: usize,
) -> Result<FimResult<T>> {
    check_positive(sigma_v2, "sigma_v2")?;
    let g = deterministic_jacobian(ch, a, burst)?;
    let j = (g.adjoint() * &g) * S::from_re(T::one() / sigma_v2);
    let layout = deterministic_layout(a.symbols().len(), ch.len(), S::FIELD);
    match FieldMat::from_scalar(j) {
        FieldMat::Real(j) => FimResult::from_real(j, layout, Model::Deterministic),
        FieldMat::Complex(j) => FimResult::from_complex(j, None, layout, Model::Deterministic),
    }
}

/// `J_hh(θ) = (1/σ_v²) 𝒜ᴴ P⊥_{T(h)} 𝒜`, the deterministic FIM for `h` with
/// the symbols profiled out.
#[derive(Debug, Clone)]
pub struct ReducedFim<T: Real> {
    pub fim: FimResult<T>,
    /// `T(h)` lacks full column rank (reducible channel or short burst).
    pub toeplitz_rank_deficient: bool,
}

pub fn deterministic_reduced_fim<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    a: &SymbolBurst<S>,
    sigma_v2: T,
    burst: usize,
) -> Result<ReducedFim<T>> {
    check_positive(sigma_v2, "sigma_v2")?;
    let t = toeplitz_op::<T, S>(ch, burst)?;
    let acal = commutativity_op(a, ch.m(), ch.taps(), burst)?;
    let rank_deficient = linalg::numerical_rank(&t, None) < t.ncols();
    let pperp = linalg::complement_projector(&t)?;
    let j = (acal.adjoint() * pperp * &acal) * S::from_re(T::one() / sigma_v2);
    let layout = ParamLayout::new(&[("h", BlockKind::Channel, ch.len(), S::FIELD)]);
    let fim = match FieldMat::from_scalar(j) {
        FieldMat::Real(j) => FimResult::from_real(j, layout, Model::Deterministic)?,
        FieldMat::Complex(j) => FimResult::from_complex(j, None, layout, Model::Deterministic)?,
    };
    Ok(ReducedFim { fim, toeplitz_rank_deficient: rank_deficient })
}

/// Parameters of the Gaussian symbol model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModelConfig<T> {
    pub sigma_a2: T,
    pub sigma_v2: T,
    /// Burst length `M`.
    pub burst: usize,
}

impl<T: Real> GaussianModelConfig<T> {
    pub fn new(sigma_a2: T, sigma_v2: T, burst: usize) -> Result<Self> {
        check_positive(sigma_a2, "sigma_a2")?;
        check_positive(sigma_v2, "sigma_v2")?;
        if burst == 0 {
            return Err(Error::InvalidInput("burst length M must be >= 1".into()));
        }
        Ok(Self { sigma_a2, sigma_v2, burst })
    }

    /// Unit powers with `M = N + 2`.
    pub fn default_for(ch: &Channel<T>) -> Self {
        Self { sigma_a2: T::one(), sigma_v2: T::one(), burst: ch.taps() + 2 }
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.sigma_a2, self.sigma_v2, self.burst).map(|_| ())
    }
}

/// `C_YY = σ_a² T(h) T(h)ᴴ + σ_v² I`.
pub fn gaussian_covariance<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    cfg: &GaussianModelConfig<T>,
) -> Result<DMatrix<S>> {
    cfg.validate()?;
    let t = toeplitz_op::<T, S>(ch, cfg.burst)?;
    let n = t.nrows();
    Ok(&t * t.adjoint() * S::from_re(cfg.sigma_a2) + DMatrix::identity(n, n) * S::from_re(cfg.sigma_v2))
}

/// First-order covariance change along `(h', σ')`:
/// `σ_a² (T(h) T(h')ᴴ + T(h') T(h)ᴴ) + σ' I`. A Gaussian null direction
/// makes this vanish.
pub fn covariance_direction<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    cfg: &GaussianModelConfig<T>,
    h_dir: &DVector<S>,
    sigma_dir: T,
) -> Result<DMatrix<S>> {
    if h_dir.len() != ch.len() {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, channel {}",
            h_dir.len(),
            ch.len()
        )));
    }
    let t = toeplitz_op::<T, S>(ch, cfg.burst)?;
    let td = toeplitz_of_stacked::<T, S>(h_dir, ch.m(), cfg.burst);
    let n = t.nrows();
    Ok((&t * td.adjoint() + &td * t.adjoint()) * S::from_re(cfg.sigma_a2)
        + DMatrix::identity(n, n) * S::from_re(sigma_dir))
}

fn unit_toeplitz<T: Real, S: FieldScalar<T>>(m: usize, len: usize, k: usize, burst: usize) -> DMatrix<S> {
    let mut e = DVector::zeros(len);
    e[k] = S::one();
    toeplitz_of_stacked::<T, S>(&e, m, burst)
}

/// Layout `[h; σ_v²]` of the Gaussian model.
pub fn gaussian_layout(channel_len: usize, field: Field) -> ParamLayout {
    ParamLayout::new(&[
        ("h", BlockKind::Channel, channel_len, field),
        ("sigma_v2", BlockKind::Noise, 1, Field::Real),
    ])
}

/// Complex Gaussian-model FIM over `θ = [h; σ_v²]` with circular symbols and
/// noise. `∂C/∂h_i* = σ_a² T(h) T(e_i)ᴴ`, `∂C/∂σ_v²* = ½ I`. The real FIM
/// keeps `σ_v²` as a single real coordinate.
///
/// A real-valued channel is accepted and treated as a complex channel that
/// happens to have zero imaginary parts.
pub fn gaussian_fim_complex<T: Real>(
    ch: &Channel<T>,
    cfg: &GaussianModelConfig<T>,
) -> Result<FimResult<T>> {
    let chc = ch.as_complex();
    let cov = gaussian_covariance::<T, C<T>>(&chc, cfg)?;
    let t = toeplitz_op::<T, C<T>>(&chc, cfg.burst)?;
    let d = cov.nrows();
    let n = ch.len();
    let sa = creal(cfg.sigma_a2);
    let mut dcov: Vec<DMatrix<C<T>>> = (0..n)
        .map(|k| &t * unit_toeplitz::<T, C<T>>(ch.m(), n, k, cfg.burst).adjoint() * sa)
        .collect();
    dcov.push(DMatrix::identity(d, d) * creal(T::lit(0.5)));
    let zero = DVector::zeros(d);
    let stack = MomentStack::new(zero.clone(), cov, vec![zero; n + 1], dcov)?;
    let (j, jx) = gaussian_pair(&stack)?;
    FimResult::from_complex(j, Some(jx), gaussian_layout(n, Field::Complex), Model::Gaussian)
}

/// Real Gaussian-model FIM over `θ = [h; σ_v²]` for a real channel with real
/// symbols: `∂C/∂h_i = σ_a² (T(h) T(e_i)ᵀ + T(e_i) T(h)ᵀ)`, `∂C/∂σ_v² = I`.
pub fn gaussian_fim_real<T: Real>(ch: &Channel<T>, cfg: &GaussianModelConfig<T>) -> Result<FimResult<T>> {
    if ch.field() != Field::Real {
        return Err(Error::InvalidInput(format!(
            "real Gaussian FIM needs a real channel; realify `{}` first",
            ch.name()
        )));
    }
    let cov = gaussian_covariance::<T, T>(ch, cfg)?;
    let t = toeplitz_op::<T, T>(ch, cfg.burst)?;
    let d = cov.nrows();
    let n = ch.len();
    let mut dcov: Vec<DMatrix<T>> = (0..n)
        .map(|k| {
            let e = unit_toeplitz::<T, T>(ch.m(), n, k, cfg.burst);
            (&t * e.transpose() + &e * t.transpose()) * cfg.sigma_a2
        })
        .collect();
    dcov.push(DMatrix::identity(d, d));
    let zero = DVector::zeros(d);
    let stack = MomentStack::new(zero.clone(), cov, vec![zero; n + 1], dcov)?;
    let (j, _) = gaussian_pair(&stack)?;
    FimResult::from_real(j, gaussian_layout(n, Field::Real), Model::Gaussian)
}

/// Schur complement of a real matrix onto the index set `keep`, with the
/// remaining indices as nuisance.
pub fn schur_complement<T: Real>(
    j: &DMatrix<T>,
    keep: &[usize],
    nuisance: &[usize],
    nuisance_name: &str,
    tol: Option<T>,
) -> Result<DMatrix<T>> {
    let j11 = j.select_rows(keep.iter()).select_columns(keep.iter());
    if nuisance.is_empty() {
        return Ok(j11);
    }
    let j12 = j.select_rows(keep.iter()).select_columns(nuisance.iter());
    let j22 = j.select_rows(nuisance.iter()).select_columns(nuisance.iter());
    let tol = tol.unwrap_or_else(|| T::lit(DEFAULT_FIM_RANK_TOL));
    let inv = linalg::inverse_checked(&j22, Some(tol), nuisance_name)
        .map_err(|_| Error::SingularNuisance { block: nuisance_name.to_string() })?;
    Ok(symmetrize(&(j11 - &j12 * inv * j12.transpose())))
}

/// `𝒥_{θ₁θ₁} - 𝒥_{θ₁θ₂} 𝒥_{θ₂θ₂}⁻¹ 𝒥_{θ₂θ₁}` in the real representation,
/// keeping block `keep` and reducing over all others.
pub fn schur_reduce<T: Real>(fim: &FimResult<T>, keep: &str) -> Result<DMatrix<T>> {
    let (kept, rest, names) = fim.layout.complement_indices(keep)?;
    schur_complement(fim.real_fim(), &kept, &rest, &names.join("+"), None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedMatch {
    pub name: String,
    /// Principal angle to the computed null space, radians.
    pub angle: f64,
    pub matched: bool,
}

#[derive(Debug, Clone)]
pub struct SingularityReport<T: Real> {
    pub rank: usize,
    pub nullity: usize,
    /// Orthonormal basis of the numerical null space.
    pub null_basis: DMatrix<T>,
    pub predicted_matches: Vec<PredictedMatch>,
    /// Eigenvalues, ascending.
    pub eigenvalues: Vec<T>,
    pub tol: T,
}

impl<T: Real> SingularityReport<T> {
    pub fn all_matched(&self) -> bool {
        self.predicted_matches.iter().all(|m| m.matched)
    }

    /// Smallest eigenvalue kept as non-zero over the largest one; shows how
    /// clear the rank decision was.
    pub fn regular_gap(&self) -> Option<T> {
        let max = self.eigenvalues.last().copied()?;
        self.eigenvalues.get(self.nullity).map(|&v| v / max)
    }
}

/// Numerical rank and null space of a real symmetric PSD matrix, with
/// principal angles from each predicted vector to the null space.
pub fn analyze_matrix<T: Real>(
    j: &DMatrix<T>,
    predicted: &[(String, DVector<T>)],
    tol: Option<T>,
) -> SingularityReport<T> {
    let tol = tol.unwrap_or_else(|| T::lit(DEFAULT_FIM_RANK_TOL));
    let (vals, vecs) = linalg::hermitian_eigen(j);
    let scale = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let nullity = if scale == T::zero() {
        vals.len()
    } else {
        vals.iter().filter(|&&v| v <= tol * scale).count()
    };
    let null_basis = vecs.columns(0, nullity).into_owned();
    let predicted_matches = predicted
        .iter()
        .map(|(name, v)| {
            let angle = linalg::principal_angle(v, &null_basis).to_f64_lossy();
            PredictedMatch { name: name.clone(), angle, matched: angle < MATCH_ANGLE }
        })
        .collect();
    SingularityReport {
        rank: vals.len() - nullity,
        nullity,
        null_basis,
        predicted_matches,
        eigenvalues: vals,
        tol,
    }
}

/// [`analyze_matrix`] on the real FIM.
pub fn analyze_singularities<T: Real>(
    fim: &FimResult<T>,
    predicted: &[(String, DVector<T>)],
    tol: Option<T>,
) -> SingularityReport<T> {
    analyze_matrix(fim.real_fim(), predicted, tol)
}

/// `θ_s = [-A; h]`, the scale direction of the deterministic model.
pub fn deterministic_scale_direction<T: Real, S: FieldScalar<T>>(
    ch: &Channel<T>,
    a: &SymbolBurst<S>,
) -> DVector<C<T>> {
    let h = ch.h();
    DVector::from_iterator(
        a.symbols().len() + h.len(),
        a.symbols().iter().map(|s| -s.to_c()).chain(h.iter().copied()),
    )
}

/// `h_S1 = [Re h; Im h]` and `h_S2 = [-Im h; Re h]`.
pub fn channel_null_directions<T: Real>(h: &DVector<C<T>>) -> (DVector<T>, DVector<T>) {
    let s1 = linalg::realify_params(h);
    let s2 = linalg::realify_params(&h.map(|z| z * crate::scalar::cplx(T::zero(), T::one())));
    (s1, s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    #[test]
    fn location_model() {
        let s2: f64 = 0.25;
        let stack = MomentStack::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, s2),
            vec![DVector::from_element(1, 1.0)],
            vec![DMatrix::zeros(1, 1)],
        )
        .unwrap();
        let f = gaussian_fim_generic(&stack, ParamLayout::single("x", 1, Field::Real)).unwrap();
        assert!((f.real_fim()[(0, 0)] - 1.0 / s2).abs() < 1e-12);
    }

    #[test]
    fn scale_covariance_model() {
        let n = 5;
        let stack = MomentStack::new(
            DVector::zeros(n),
            DMatrix::<f64>::identity(n, n),
            vec![DVector::zeros(n)],
            vec![DMatrix::identity(n, n)],
        )
        .unwrap();
        let f = gaussian_fim_generic(&stack, ParamLayout::single("x", 1, Field::Real)).unwrap();
        assert!((f.real_fim()[(0, 0)] - n as f64 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn complex_location_model() {
        let s2 = 0.5;
        let stack = MomentStack::new(
            DVector::from_element(1, cplx(0.0, 0.0)),
            DMatrix::from_element(1, 1, cplx(s2, 0.0)),
            vec![DVector::from_element(1, cplx(1.0, 0.0))],
            vec![DMatrix::zeros(1, 1)],
        )
        .unwrap();
        let f = gaussian_fim_generic(&stack, ParamLayout::single("x", 1, Field::Complex)).unwrap();
        let expect = DMatrix::<f64>::identity(2, 2) * (2.0 / s2);
        assert!((f.real_fim() - expect).norm() < 1e-12);
    }

    #[test]
    fn layout_ordering() {
        let l = ParamLayout::new(&[
            ("A", BlockKind::Symbols, 2, Field::Complex),
            ("h", BlockKind::Channel, 3, Field::Complex),
            ("s", BlockKind::Noise, 1, Field::Real),
        ]);
        assert_eq!(l.real_dim(), 11);
        assert_eq!(l.block("A").unwrap().real_indices, vec![0, 1, 5, 6]);
        assert_eq!(l.block("h").unwrap().real_indices, vec![2, 3, 4, 7, 8, 9]);
        assert_eq!(l.block("s").unwrap().real_indices, vec![10]);
        let theta = DVector::from_fn(6, |i, _| cplx(i as f64, -(i as f64)));
        let x = l.to_real_coords(&theta).unwrap();
        let mut back = l.from_real_coords(&x).unwrap();
        back[5].im = -5.0;
        assert_eq!(back, theta);
        assert!(matches!(l.block("B"), Err(Error::UnknownBlock(_))));
    }

    #[test]
    fn schur_block_diagonal() {
        let j = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 5.0]);
        let l = ParamLayout::new(&[
            ("a", BlockKind::Other, 2, Field::Real),
            ("b", BlockKind::Other, 1, Field::Real),
        ]);
        let f = FimResult::from_real(j, l, Model::Generic).unwrap();
        let r = schur_reduce(&f, "a").unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = ParamLayout::new(&[
            ("a", BlockKind::Other, 1, Field::Real),
            ("noise", BlockKind::Other, 1, Field::Real),
        ]);
        let f = FimResult::from_real(j, l, Model::Generic).unwrap();
        match schur_reduce(&f, "a") {
            Err(Error::SingularNuisance { block }) => assert_eq!(block, "noise"),
            other => panic!("expected singular nuisance, got {other:?}"),
        }
    }
}
