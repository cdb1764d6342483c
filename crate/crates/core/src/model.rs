//! Priors, likelihoods and forward models.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;
use crate::parallel::map_indexed;
use crate::rng::{standard_normal_vector, streams, substream};

/// A set of parameter samples, one vector per draw.
pub type SampleSet = Vec<DVector<f64>>;

/// Log-likelihood `log f` with its gradient.
pub trait LikelihoodModel: Send + Sync {
    fn dim(&self) -> usize;

    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64>;

    fn grad_log_likelihood(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Parameter-to-observable map `G` with vector-Jacobian products.
pub trait ForwardModel: Send + Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// `∇G(x)ᵀ w`.
    fn vjp(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>>;

    /// Several products at the same point. Models with expensive state
    /// should override this to share the forward solve.
    fn vjp_many(&self, x: &DVector<f64>, ws: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        ws.iter().map(|w| self.vjp(x, w)).collect()
    }
}

/// Measures that can serve as a prior: sampling plus the data needed for
/// certificates (reference precision and the perturbation constant κ).
pub trait PriorMeasure: Send + Sync {
    fn dim(&self) -> usize;

    /// `n` i.i.d. draws; draw `i` depends only on `(seed, i)`.
    fn sample(&self, n: usize, seed: u64) -> SampleSet;

    fn mean(&self) -> DVector<f64>;

    /// The precision `Γ` entering the certificate.
    fn reference_precision(&self) -> SpdMatrix;

    fn kappa(&self) -> f64;
}

/// Gaussian measure `N(m, Σ)` with `Γ = Σ⁻¹`; both factorizations cached.
#[derive(Clone, Debug)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    covariance: SpdMatrix,
    precision: SpdMatrix,
    covariance_factor: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn from_covariance(mean: DVector<f64>, covariance: SpdMatrix) -> Result<Self> {
        check_dim("gaussian mean", covariance.dim(), mean.len())?;
        covariance.require_positive_definite()?;
        let precision = covariance.inverse()?;
        Self::assemble(mean, covariance, precision)
    }

    /// Precision-first construction; the covariance comes from a Cholesky solve.
    pub fn from_precision(mean: DVector<f64>, precision: SpdMatrix) -> Result<Self> {
        check_dim("gaussian mean", precision.dim(), mean.len())?;
        precision.require_positive_definite()?;
        let covariance = precision.inverse()?;
        Self::assemble(mean, covariance, precision)
    }

    pub fn standard(dim: usize) -> Self {
        let id = SpdMatrix::identity(dim);
        GaussianMeasure {
            mean: DVector::zeros(dim),
            covariance: id.clone(),
            precision: id,
            covariance_factor: DMatrix::identity(dim, dim),
        }
    }

    fn assemble(mean: DVector<f64>, covariance: SpdMatrix, precision: SpdMatrix) -> Result<Self> {
        let covariance_factor = covariance.cholesky_l()?;
        precision.cholesky()?;
        Ok(GaussianMeasure {
            mean,
            covariance,
            precision,
            covariance_factor,
        })
    }

    pub fn mean_vector(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.covariance
    }

    pub fn precision(&self) -> &SpdMatrix {
        &self.precision
    }

    /// Lower Cholesky factor of the covariance.
    pub fn covariance_factor(&self) -> &DMatrix<f64> {
        &self.covariance_factor
    }

    /// `m + L z` for standard normal `z`.
    pub fn draw_with<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vector(rng, self.mean.len());
        &self.mean + &self.covariance_factor * z
    }

    /// Unnormalized log density `-½‖x − m‖²_Γ`.
    pub fn log_density_unnormalized(&self, x: &DVector<f64>) -> f64 {
        -0.5 * self.precision.quadratic_form(&(x - &self.mean))
    }

    /// Same measure with a different stream tag, for sampling purposes that
    /// must not collide with ordinary prior draws.
    pub fn sample_stream(&self, n: usize, seed: u64, stream: u64) -> SampleSet {
        map_indexed(n, |i| {
            let mut rng = substream(seed, stream, i as u64);
            self.draw_with(&mut rng)
        })
    }
}

impl PriorMeasure for GaussianMeasure {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, n: usize, seed: u64) -> SampleSet {
        self.sample_stream(n, seed, streams::PRIOR)
    }

    fn mean(&self) -> DVector<f64> {
        self.mean.clone()
    }

    fn reference_precision(&self) -> SpdMatrix {
        self.precision.clone()
    }

    fn kappa(&self) -> f64 {
        1.0
    }
}

/// Finite mixture `Σ αᵢ N(mᵢ, Σᵢ)` whose first component has the smallest
/// precision: `Σ₁⁻¹ ≺ Σᵢ⁻¹` for every `i > 1`.
#[derive(Clone, Debug)]
pub struct GaussianMixtureMeasure {
    weights: Vec<f64>,
    components: Vec<GaussianMeasure>,
}

impl GaussianMixtureMeasure {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianMeasure>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidArgument("mixture needs one weight per component".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || !(weights[0] > 0.0) {
            return Err(Error::InvalidArgument(
                "mixture weights must be nonnegative with a positive first weight".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let d = components[0].dim();
        for c in &components {
            check_dim("mixture component", d, c.dim())?;
        }
        let base = components[0].precision().matrix();
        for (i, c) in components.iter().enumerate().skip(1) {
            let diff = c.precision().matrix() - base;
            let min = SymmetricEigen::new(diff)
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return Err(Error::MixtureOrdering(i));
            }
        }
        Ok(GaussianMixtureMeasure { weights, components })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianMeasure] {
        &self.components
    }
}

impl PriorMeasure for GaussianMixtureMeasure {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn sample(&self, n: usize, seed: u64) -> SampleSet {
        map_indexed(n, |i| {
            let mut pick = substream(seed, streams::MIXTURE_COMPONENT, i as u64);
            let u: f64 = pick.gen();
            let mut acc = 0.0;
            let mut which = 0;
            for (k, &w) in self.weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                which = k;
                acc += w;
                if u < acc {
                    break;
                }
            }
            let mut rng = substream(seed, streams::PRIOR, i as u64);
            self.components[which].draw_with(&mut rng)
        })
    }

    fn mean(&self) -> DVector<f64> {
        self.components
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, (c, w)| acc + c.mean_vector() * *w)
    }

    fn reference_precision(&self) -> SpdMatrix {
        self.components[0].precision().clone()
    }

    fn kappa(&self) -> f64 {
        mixture_kappa(self).0
    }
}

/// Perturbation constant `κ = exp(sup Ψ − inf Ψ)` of a Gaussian mixture,
/// together with its reference precision `Σ₁⁻¹`.
///
/// Writing the density as `exp(-V₁)·(α₁/Z₁ + Σᵢ αᵢ/Zᵢ·exp(V₁ − Vᵢ))`, the
/// bracket is bounded below by `α₁/Z₁` and above by replacing each
/// `V₁ − Vᵢ` with its maximum, a concave quadratic solved in closed form.
pub fn mixture_kappa(mix: &GaussianMixtureMeasure) -> (f64, SpdMatrix) {
    let d = mix.dim() as f64;
    let first = &mix.components[0];
    let log_norm = |c: &GaussianMeasure| {
        0.5 * d * (2.0 * std::f64::consts::PI).ln() + 0.5 * c.covariance().log_determinant().unwrap_or(f64::NAN)
    };
    let log_base = mix.weights[0].ln() - log_norm(first);

    let mut terms = vec![log_base];
    for (c, &w) in mix.components.iter().zip(&mix.weights).skip(1) {
        if w == 0.0 {
            continue;
        }
        terms.push(w.ln() - log_norm(c) + max_log_ratio(first, c));
    }
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sup = peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
    ((log_sup - log_base).exp(), first.precision().clone())
}

/// `max_x V₁(x) − Vᵢ(x)` for `Vⱼ(x) = ½(x − mⱼ)ᵀ Σⱼ⁻¹ (x − mⱼ)`.
fn max_log_ratio(first: &GaussianMeasure, other: &GaussianMeasure) -> f64 {
    let s1 = first.precision().matrix();
    let si = other.precision().matrix();
    let m1 = first.mean_vector();
    let mi = other.mean_vector();
    let curvature = si - s1;
    let rhs = si * mi - s1 * m1;
    let x = curvature
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::from_element(m1.len(), f64::NAN));
    let v1 = 0.5 * (&x - m1).dot(&(s1 * (&x - m1)));
    let vi = 0.5 * (&x - mi).dot(&(si * (&x - mi)));
    v1 - vi
}

/// Closed forms of the linear–Gaussian test problem with `μ = N(0, I)` and
/// `f(x) = exp(-½ xᵀ A x)`.
#[derive(Clone, Debug)]
pub struct AnalyticOracle {
    pub h_exact: SpdMatrix,
    /// Descending eigenvalues of `A`.
    pub alphas: Vec<f64>,
    /// `αᵢ²/(1+αᵢ)`, descending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub kl_exact: f64,
    pub bound: f64,
    pub sup_ratio: f64,
}

pub fn analytic_oracle(a: &SpdMatrix, r: usize) -> Result<AnalyticOracle> {
    a.require_positive_semidefinite()?;
    let d = a.dim();
    if r > d {
        return Err(Error::RankOutOfRange { rank: r, dim: d });
    }
    let id = DMatrix::<f64>::identity(d, d);
    let shifted = SpdMatrix::new(&id + a.matrix())?;
    let h = a.matrix() * shifted.solve_matrix(a.matrix())?;
    let h_exact = SpdMatrix::new(h)?;

    let mut alphas: Vec<f64> = SymmetricEigen::new(a.matrix().clone())
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0))
        .collect();
    alphas.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues: Vec<f64> = alphas.iter().map(|&al| al * al / (1.0 + al)).collect();
    let tail = &alphas[r..];
    let kl_exact = 0.5 * tail.iter().rev().map(|&al| al.ln_1p() - al / (1.0 + al)).sum::<f64>();
    let bound = 0.5 * eigenvalues[r..].iter().rev().sum::<f64>();
    let sup_ratio = (0.5 * tail.iter().map(|al| al.ln_1p()).sum::<f64>()).exp();
    Ok(AnalyticOracle {
        h_exact,
        alphas,
        eigenvalues,
        rank: r,
        kl_exact,
        bound,
        sup_ratio,
    })
}

/// `f(x) = exp(-½ xᵀ A x)`.
#[derive(Clone, Debug)]
pub struct QuadraticLikelihood {
    a: SpdMatrix,
}

impl QuadraticLikelihood {
    pub fn new(a: SpdMatrix) -> Result<Self> {
        a.require_positive_semidefinite()?;
        Ok(QuadraticLikelihood { a })
    }

    pub fn matrix(&self) -> &SpdMatrix {
        &self.a
    }
}

impl LikelihoodModel for QuadraticLikelihood {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim("likelihood input", self.a.dim(), x.len())?;
        Ok(-0.5 * self.a.quadratic_form(x))
    }

    fn grad_log_likelihood(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("likelihood input", self.a.dim(), x.len())?;
        Ok(-self.a.mul_vector(x))
    }
}

/// `f ≡ exp(log_value)`.
#[derive(Clone, Debug)]
pub struct ConstantLikelihood {
    pub dim: usize,
    pub log_value: f64,
}

impl LikelihoodModel for ConstantLikelihood {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim("likelihood input", self.dim, x.len())?;
        Ok(self.log_value)
    }

    fn grad_log_likelihood(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("likelihood input", self.dim, x.len())?;
        Ok(DVector::zeros(self.dim))
    }
}

/// `G(x) = B x + c`.
#[derive(Clone, Debug)]
pub struct LinearForward {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl LinearForward {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let offset = DVector::zeros(matrix.nrows());
        LinearForward { matrix, offset }
    }

    pub fn with_offset(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        check_dim("forward offset", matrix.nrows(), offset.len())?;
        Ok(LinearForward { matrix, offset })
    }
}

impl ForwardModel for LinearForward {
    fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("forward input", self.matrix.ncols(), x.len())?;
        Ok(&self.matrix * x + &self.offset)
    }

    fn vjp(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("forward input", self.matrix.ncols(), x.len())?;
        check_dim("vjp weight", self.matrix.nrows(), w.len())?;
        Ok(self.matrix.tr_mul(w))
    }
}

/// Forward model, observed data and noise covariance.
#[derive(Clone)]
pub struct ForwardSetup {
    pub model: Arc<dyn ForwardModel>,
    pub data: DVector<f64>,
    pub noise: SpdMatrix,
}

impl ForwardSetup {
    /// Rows of `L⁻¹ ∇G(x)` where `Σ_obs = L Lᵀ`, one vjp per observation.
    pub fn whitened_jacobian_rows(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let m = self.model.output_dim();
        let l = self.noise.cholesky_l()?;
        let lt = l.transpose();
        let ws: Vec<DVector<f64>> = (0..m)
            .map(|j| {
                let mut e = DVector::zeros(m);
                e[j] = 1.0;
                lt.solve_upper_triangular(&e).ok_or(Error::NotPositiveDefinite)
            })
            .collect::<Result<_>>()?;
        self.model.vjp_many(x, &ws)
    }

    /// Gauss–Newton matrix `∇Gᵀ Σ_obs⁻¹ ∇G` at `x`.
    pub fn gauss_newton(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.model.input_dim();
        let mut out = DMatrix::zeros(d, d);
        for u in self.whitened_jacobian_rows(x)? {
            out.ger(1.0, &u, &u, 1.0);
        }
        Ok(out)
    }
}

/// `log f(x) = -½ ‖G(x) − y‖²_{Σ_obs⁻¹}`.
#[derive(Clone)]
pub struct GaussianNoiseLikelihood {
    setup: ForwardSetup,
}

impl GaussianNoiseLikelihood {
    pub fn setup(&self) -> &ForwardSetup {
        &self.setup
    }

    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("likelihood input", self.setup.model.input_dim(), x.len())?;
        let g = self.setup.model.evaluate(x)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteForward);
        }
        Ok(g - &self.setup.data)
    }
}

pub fn gaussian_noise_likelihood(
    forward: Arc<dyn ForwardModel>,
    data: DVector<f64>,
    noise: SpdMatrix,
) -> Result<GaussianNoiseLikelihood> {
    check_dim("observed data", forward.output_dim(), data.len())?;
    check_dim("noise covariance", forward.output_dim(), noise.dim())?;
    noise.require_positive_definite()?;
    Ok(GaussianNoiseLikelihood {
        setup: ForwardSetup {
            model: forward,
            data,
            noise,
        },
    })
}

impl LikelihoodModel for GaussianNoiseLikelihood {
    fn dim(&self) -> usize {
        self.setup.model.input_dim()
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(-0.5 * r.dot(&self.setup.noise.solve_vector(&r)?))
    }

    fn grad_log_likelihood(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let r = self.residual(x)?;
        let w = self.setup.noise.solve_vector(&r)?;
        Ok(-self.setup.model.vjp(x, &w)?)
    }
}

/// Central finite-difference check of a likelihood gradient; returns the
/// relative error `‖g_fd − g‖ / max(‖g‖, floor)`.
pub fn gradient_check(model: &dyn LikelihoodModel, x: &DVector<f64>, step: f64) -> Result<f64> {
    let g = model.grad_log_likelihood(x)?;
    let mut fd = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        fd[i] = (model.log_likelihood(&xp)? - model.log_likelihood(&xm)?) / (2.0 * step);
    }
    Ok((fd - &g).norm() / g.norm().max(1e-12))
}
