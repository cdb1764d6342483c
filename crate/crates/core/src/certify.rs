//! Error certificates, empirical KL estimates and the method comparison.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{estimate_h, estimate_h_lis, DiagnosticMatrixEstimate, EstimateSource};
use crate::linalg::{
    build_projector, covariance_eigenvalues, generalized_eigendecomposition, prior_based_projector,
    reconstruction_error, GeneralizedSpectrum, RankRProjector, SpdMatrix,
};
use crate::model::{LikelihoodModel, SampleSet};
use crate::parallel::{map_indexed, try_map_indexed};
use crate::problem::{posterior_samples, reference_samples, InverseProblem, McmcSettings, SampleSource};
use crate::ridge::{draw_anchors, log_mean_exp, ridge_with_anchors, Profile, RidgeLikelihood};
use crate::rng::{derive_seed, streams};

/// Whether a bound comes from an exact matrix or a sample estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Estimated { sample_count: usize, ess: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifiedBound {
    pub rank: usize,
    pub kappa: f64,
    pub tail_sum: f64,
    pub bound: f64,
    pub provenance: Provenance,
}

impl CertifiedBound {
    /// Relabels the bound as coming from an estimated spectrum.
    pub fn estimated(mut self, sample_count: usize, ess: f64) -> Self {
        self.provenance = Provenance::Estimated { sample_count, ess };
        self
    }

    pub fn label(&self) -> &'static str {
        match self.provenance {
            Provenance::Exact => "certified",
            Provenance::Estimated { .. } => "estimated bound",
        }
    }
}

/// Printed next to bounds computed from a sample estimate of `H`.
pub const UNDERESTIMATION_WARNING: &str =
    "bound computed from an estimated diagnostic matrix; sample estimates tend to underestimate the error";

/// `κ/2 · Σ_{i>r} λᵢ` from the stored spectrum.
pub fn certified_bound(spectrum: &GeneralizedSpectrum, r: usize, kappa: f64) -> Result<CertifiedBound> {
    if r > spectrum.dim() {
        return Err(Error::RankOutOfRange {
            rank: r,
            dim: spectrum.dim(),
        });
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    let tail_sum = spectrum.tail_sum(r);
    Ok(CertifiedBound {
        rank: r,
        kappa,
        tail_sum,
        bound: 0.5 * kappa * tail_sum,
        provenance: Provenance::Exact,
    })
}

/// `(κ ‖H‖ / 2) · Σ_{i>r} eigᵢ(Γ⁻¹)`.
pub fn prior_bound(h_spectral_norm: f64, gamma: &SpdMatrix, r: usize, kappa: f64) -> Result<f64> {
    if !(h_spectral_norm >= 0.0) {
        return Err(Error::InvalidArgument("spectral norm must be nonnegative".into()));
    }
    let sigma = covariance_eigenvalues(gamma)?;
    if r > sigma.len() {
        return Err(Error::RankOutOfRange {
            rank: r,
            dim: sigma.len(),
        });
    }
    let tail: f64 = sigma[r..].iter().rev().sum();
    Ok(0.5 * kappa * h_spectral_norm * tail)
}

/// How `log(Z_f / Z_F̂)` is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerStrategy {
    /// Log-sum-exp averages of `f` and `F̂` over one shared prior-sample set.
    PriorSamples,
    /// `log Z_F̂ − log Z_f = log E_ν[F̂ / f]` from the posterior samples.
    PosteriorRatio,
}

impl NormalizerStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prior_samples" => Some(NormalizerStrategy::PriorSamples),
            "posterior_ratio" => Some(NormalizerStrategy::PosteriorRatio),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KlEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub n_samples: usize,
    /// `E_ν[log f − log F̂]`.
    pub cross_entropy_term: f64,
    /// `log Z_f − log Z_F̂`.
    pub log_normalizer_ratio: f64,
    pub normalizer: NormalizerStrategy,
    /// Set when `value + 3·SE < 0`.
    pub negative_flag: bool,
}

const KL_BATCHES: usize = 20;

/// Standard error of a mean by non-overlapping batch means; falls back to
/// the i.i.d. formula for short series.
pub fn batch_means_stderr(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let iid = || {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    if n < 2 * KL_BATCHES {
        return iid();
    }
    let size = n / KL_BATCHES;
    let means: Vec<f64> = values
        .chunks(size)
        .take(KL_BATCHES)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / KL_BATCHES as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (KL_BATCHES - 1) as f64;
    (var / KL_BATCHES as f64).sqrt().max(iid())
}

fn log_ratios(samples: &[DVector<f64>], model: &dyn LikelihoodModel, ridge: &RidgeLikelihood) -> Result<Vec<f64>> {
    try_map_indexed(samples.len(), |i| -> Result<f64> {
        let lf = model.log_likelihood(&samples[i])?;
        let lr = ridge.log_value(&samples[i])?;
        if lr == f64::NEG_INFINITY {
            return Err(Error::DegenerateRidge(i));
        }
        if !lf.is_finite() {
            return Err(Error::NonFiniteSample {
                what: "log-likelihood at posterior sample",
                index: i,
            });
        }
        Ok(lf - lr)
    })
}

fn finish(
    value: f64,
    standard_error: f64,
    n: usize,
    cross: f64,
    ratio: f64,
    normalizer: NormalizerStrategy,
) -> Result<KlEstimate> {
    if !value.is_finite() || !standard_error.is_finite() {
        return Err(Error::NonFinite("KL estimate".into()));
    }
    Ok(KlEstimate {
        value,
        standard_error,
        n_samples: n,
        cross_entropy_term: cross,
        log_normalizer_ratio: ratio,
        normalizer,
        negative_flag: value + 3.0 * standard_error < 0.0,
    })
}

/// `D_KL(ν ‖ ν̂) = E_ν[log f − log F̂] − log(Z_f / Z_F̂)` with both normalizers
/// averaged over the same prior samples.
///
/// The standard error combines batch means on the posterior term with a
/// delta-method error for the normalizer ratio.
pub fn estimate_kl(
    posterior_samples: &[DVector<f64>],
    model: &dyn LikelihoodModel,
    ridge: &RidgeLikelihood,
    prior_samples: &[DVector<f64>],
) -> Result<KlEstimate> {
    if posterior_samples.is_empty() || prior_samples.is_empty() {
        return Err(Error::InvalidArgument(
            "KL estimate needs posterior and prior samples".into(),
        ));
    }
    let diffs = log_ratios(posterior_samples, model, ridge)?;
    let n = diffs.len();
    let cross = diffs.iter().sum::<f64>() / n as f64;
    let cross_se = batch_means_stderr(&diffs);

    let pairs = try_map_indexed(prior_samples.len(), |i| -> Result<(f64, f64)> {
        Ok((
            model.log_likelihood(&prior_samples[i])?,
            ridge.log_value(&prior_samples[i])?,
        ))
    })?;
    let lf: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let lr: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let log_zf = log_mean_exp(&lf);
    let log_zr = log_mean_exp(&lr);
    if !log_zf.is_finite() || !log_zr.is_finite() {
        return Err(Error::DegenerateNormalizer);
    }
    let influence: Vec<f64> = lf
        .iter()
        .zip(&lr)
        .map(|(a, b)| (a - log_zf).exp() - (b - log_zr).exp())
        .collect();
    let norm_se = batch_means_stderr(&influence);
    let ratio = log_zf - log_zr;
    finish(
        cross - ratio,
        cross_se.hypot(norm_se),
        n,
        cross,
        ratio,
        NormalizerStrategy::PriorSamples,
    )
}

/// `D_KL(ν ‖ ν̂) = E_ν[log(f/F̂)] + log E_ν[F̂/f]`, using posterior samples only.
/// Nonnegative by Jensen's inequality; suited to concentrated posteriors where
/// prior-sample normalizers degenerate.
pub fn estimate_kl_posterior_ratio(
    posterior_samples: &[DVector<f64>],
    model: &dyn LikelihoodModel,
    ridge: &RidgeLikelihood,
) -> Result<KlEstimate> {
    if posterior_samples.is_empty() {
        return Err(Error::InvalidArgument("KL estimate needs posterior samples".into()));
    }
    let diffs = log_ratios(posterior_samples, model, ridge)?;
    let n = diffs.len();
    let cross = diffs.iter().sum::<f64>() / n as f64;
    let neg: Vec<f64> = diffs.iter().map(|v| -v).collect();
    let log_back = log_mean_exp(&neg);
    if !log_back.is_finite() {
        return Err(Error::DegenerateNormalizer);
    }
    // Influence function of the plug-in estimator, averaged by batch means
    // so chain autocorrelation enters the error.
    let influence: Vec<f64> = diffs.iter().map(|a| a + (-a - log_back).exp()).collect();
    let se = batch_means_stderr(&influence);
    finish(
        cross + log_back,
        se,
        n,
        cross,
        -log_back,
        NormalizerStrategy::PosteriorRatio,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct KlSettings {
    pub posterior_samples: usize,
    pub prior_samples: usize,
    pub normalizer: NormalizerStrategy,
}

impl Default for KlSettings {
    fn default() -> Self {
        KlSettings {
            posterior_samples: 20_000,
            prior_samples: 20_000,
            normalizer: NormalizerStrategy::PriorSamples,
        }
    }
}

/// Posterior and prior sample sets reused by every KL estimate of one run.
#[derive(Clone)]
pub struct KlSamples {
    pub posterior: SampleSet,
    pub prior: SampleSet,
    pub normalizer: NormalizerStrategy,
}

impl KlSamples {
    pub fn draw(problem: &InverseProblem, settings: &KlSettings, seed: u64, mcmc: &McmcSettings) -> Result<Self> {
        let kl_seed = derive_seed(seed, streams::NORMALIZER);
        let (posterior, _) = posterior_samples(problem, settings.posterior_samples, kl_seed, mcmc)?;
        let prior = match settings.normalizer {
            NormalizerStrategy::PriorSamples => {
                problem
                    .prior
                    .sample_stream(settings.prior_samples, kl_seed, streams::NORMALIZER)
            }
            NormalizerStrategy::PosteriorRatio => Vec::new(),
        };
        Ok(KlSamples {
            posterior,
            prior,
            normalizer: settings.normalizer,
        })
    }

    pub fn estimate(&self, model: &dyn LikelihoodModel, ridge: &RidgeLikelihood) -> Result<KlEstimate> {
        match self.normalizer {
            NormalizerStrategy::PriorSamples => estimate_kl(&self.posterior, model, ridge, &self.prior),
            NormalizerStrategy::PosteriorRatio => estimate_kl_posterior_ratio(&self.posterior, model, ridge),
        }
    }
}

/// Projector construction methods of the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CertifiedPosterior,
    CertifiedPrior,
    CertifiedLaplace,
    LisPosterior,
    LisPrior,
    LisLaplace,
    AsPrior,
    PriorBased,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::CertifiedPosterior,
        Method::CertifiedPrior,
        Method::CertifiedLaplace,
        Method::LisPosterior,
        Method::LisPrior,
        Method::LisLaplace,
        Method::AsPrior,
        Method::PriorBased,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::CertifiedPosterior => "certified_posterior",
            Method::CertifiedPrior => "certified_prior",
            Method::CertifiedLaplace => "certified_laplace",
            Method::LisPosterior => "lis_posterior",
            Method::LisPrior => "lis_prior",
            Method::LisLaplace => "lis_laplace",
            Method::AsPrior => "as_prior",
            Method::PriorBased => "prior_based",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.label() == s)
    }

    /// Reference measure of the method's samples.
    pub fn source(self) -> Option<SampleSource> {
        match self {
            Method::CertifiedPosterior | Method::LisPosterior => Some(SampleSource::PosteriorMcmc),
            Method::CertifiedPrior | Method::LisPrior | Method::AsPrior => Some(SampleSource::Prior),
            Method::CertifiedLaplace | Method::LisLaplace => Some(SampleSource::Laplace),
            Method::PriorBased => None,
        }
    }

    pub fn is_lis(self) -> bool {
        matches!(self, Method::LisPosterior | Method::LisPrior | Method::LisLaplace)
    }
}

/// Profile choices of the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileChoice {
    MonteCarlo(usize),
    PriorMean,
}

impl ProfileChoice {
    /// Parses `monte_carlo(M)` or `prior_mean`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s == "prior_mean" {
            return Some(ProfileChoice::PriorMean);
        }
        let inner = s.strip_prefix("monte_carlo(")?.strip_suffix(')')?;
        inner
            .trim()
            .parse()
            .ok()
            .filter(|m: &usize| *m > 0)
            .map(ProfileChoice::MonteCarlo)
    }

    pub fn label(self) -> String {
        match self {
            ProfileChoice::MonteCarlo(m) => format!("monte_carlo({m})"),
            ProfileChoice::PriorMean => "prior_mean".into(),
        }
    }

    fn profile_for(self, method: Method) -> Profile {
        match (self, method) {
            (ProfileChoice::MonteCarlo(m), Method::AsPrior) => Profile::ActiveSubspace { anchors: m },
            (ProfileChoice::MonteCarlo(m), _) => Profile::MonteCarlo { anchors: m },
            (ProfileChoice::PriorMean, _) => Profile::PriorMean,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSettings {
    /// Samples per diagnostic-matrix estimate.
    pub k: usize,
    pub seed: u64,
    pub mcmc: McmcSettings,
    pub kl: KlSettings,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub profile: String,
    pub rank: usize,
    pub bound: Option<f64>,
    pub reconstruction_error: f64,
    pub kl_estimate: Option<f64>,
    pub kl_stderr: Option<f64>,
    /// Prior truncation error `Σ_{i>r} σᵢ²`, reported for the prior-based method.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_mse: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonTable {
    pub problem: String,
    /// `exact` when the reference matrix is an oracle, otherwise the sample
    /// count of the posterior estimate used in its place.
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

pub const COMPARISON_CSV_HEADER: &str = "method,profile,rank,bound,reconstruction_error,kl_estimate,kl_stderr";

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(COMPARISON_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},\"{}\",{},{},{},{},{}\n",
                r.method,
                r.profile,
                r.rank,
                cell(r.bound),
                r.reconstruction_error,
                cell(r.kl_estimate),
                cell(r.kl_stderr)
            ));
        }
        out
    }
}

fn estimate_from_samples(
    problem: &InverseProblem,
    method: Method,
    samples: &[DVector<f64>],
) -> Result<Option<DiagnosticMatrixEstimate>> {
    let Some(source) = method.source() else {
        return Ok(None);
    };
    if method.is_lis() {
        let forward = problem.forward.as_ref().ok_or_else(|| Error::MissingCapability {
            method: method.label().into(),
            capability: "forward model",
        })?;
        return estimate_h_lis(samples, forward).map(Some);
    }
    let label = match source {
        SampleSource::PosteriorMcmc => EstimateSource::PosteriorSamples,
        SampleSource::Prior => EstimateSource::Prior,
        SampleSource::Laplace => EstimateSource::Laplace,
    };
    estimate_h(samples, None, problem.likelihood.as_ref(), label).map(Some)
}

/// The diagnostic matrix a method builds its projector from, using `k`
/// samples of its reference measure. `None` for the prior-based method,
/// whose projector ignores the likelihood.
pub fn method_estimate(
    problem: &InverseProblem,
    method: Method,
    k: usize,
    seed: u64,
    mcmc: &McmcSettings,
) -> Result<Option<DiagnosticMatrixEstimate>> {
    let Some(source) = method.source() else {
        return Ok(None);
    };
    let samples = reference_samples(problem, source, k, seed, 0, mcmc)?;
    estimate_from_samples(problem, method, &samples)
}

struct MethodBasis {
    spectrum: Option<GeneralizedSpectrum>,
    estimate: Option<DiagnosticMatrixEstimate>,
}

/// Runs every `(method, profile, rank)` combination, method-major.
///
/// All rows share the posterior samples used for KL estimation and the
/// anchor set. The reference matrix is the oracle when available, otherwise
/// the estimate from the KL posterior samples.
pub fn compare_methods(
    problem: &InverseProblem,
    methods: &[Method],
    profiles: &[ProfileChoice],
    ranks: &[usize],
    settings: &CompareSettings,
) -> Result<ComparisonTable> {
    if methods.is_empty() || profiles.is_empty() || ranks.is_empty() {
        return Err(Error::InvalidArgument(
            "methods, profiles and ranks must be non-empty".into(),
        ));
    }
    let d = problem.dim();
    if let Some(&r) = ranks.iter().find(|&&r| r > d) {
        return Err(Error::RankOutOfRange { rank: r, dim: d });
    }
    for m in methods {
        if m.is_lis() && problem.forward.is_none() {
            return Err(Error::MissingCapability {
                method: m.label().into(),
                capability: "forward model",
            });
        }
    }
    let gamma = problem.gamma();
    let model = problem.likelihood.as_ref();
    let kl_samples = KlSamples::draw(problem, &settings.kl, settings.seed, &settings.mcmc)?;

    let (h_ref, reference) = match &problem.oracle_h {
        Some(h) => (h.clone(), "exact".to_string()),
        None => {
            let est = estimate_h(&kl_samples.posterior, None, model, EstimateSource::PosteriorSamples)?;
            (
                est.matrix,
                format!("posterior_estimate(K={})", kl_samples.posterior.len()),
            )
        }
    };

    let mut sample_cache: Vec<(SampleSource, SampleSet)> = Vec::new();
    let mut bases = Vec::with_capacity(methods.len());
    for &method in methods {
        let Some(source) = method.source() else {
            bases.push(MethodBasis {
                spectrum: None,
                estimate: None,
            });
            continue;
        };
        if !sample_cache.iter().any(|(s, _)| *s == source) {
            let samples = reference_samples(problem, source, settings.k, settings.seed, 0, &settings.mcmc)?;
            sample_cache.push((source, samples));
        }
        let samples = &sample_cache.iter().find(|(s, _)| *s == source).expect("cached").1;
        let estimate = estimate_from_samples(problem, method, samples)?.expect("method has a sample source");
        let spectrum = generalized_eigendecomposition(&estimate.matrix, gamma)?;
        bases.push(MethodBasis {
            spectrum: Some(spectrum),
            estimate: Some(estimate),
        });
    }

    let max_m = profiles
        .iter()
        .filter_map(|p| match p {
            ProfileChoice::MonteCarlo(m) => Some(*m),
            ProfileChoice::PriorMean => None,
        })
        .max()
        .unwrap_or(0);
    let anchors = draw_anchors(&problem.prior, max_m, settings.seed);
    let h_norm = h_ref.spectral_norm();
    let sigma = covariance_eigenvalues(gamma)?;

    let jobs: Vec<(usize, ProfileChoice, usize)> = (0..methods.len())
        .flat_map(|mi| {
            profiles
                .iter()
                .flat_map(move |&p| ranks.iter().map(move |&r| (mi, p, r)))
        })
        .collect();

    let rows = map_indexed(jobs.len(), |j| -> Result<ComparisonRow> {
        let (mi, choice, r) = jobs[j];
        let method = methods[mi];
        let basis = &bases[mi];
        let projector: RankRProjector = match &basis.spectrum {
            Some(spec) => build_projector(spec, r)?,
            None => prior_based_projector(gamma, r)?,
        };
        let bound = match (method, &basis.spectrum, &basis.estimate) {
            (Method::PriorBased, _, _) => Some(prior_bound(h_norm, gamma, r, problem.kappa)?),
            (m, Some(spec), Some(_)) if !m.is_lis() && m != Method::AsPrior => {
                Some(certified_bound(spec, r, problem.kappa)?.bound)
            }
            _ => None,
        };
        let error = reconstruction_error(&projector, &h_ref, gamma)?;
        let (kl_estimate, kl_stderr, truncation_mse) = if method == Method::PriorBased {
            (None, None, Some(sigma[r..].iter().rev().sum::<f64>()))
        } else {
            let base: Arc<dyn LikelihoodModel> = problem.likelihood.clone();
            let ridge = ridge_with_anchors(projector, base, &problem.prior, choice.profile_for(method), &anchors)?;
            let kl = kl_samples.estimate(model, &ridge)?;
            (Some(kl.value), Some(kl.standard_error), None)
        };
        Ok(ComparisonRow {
            method: method.label().into(),
            profile: choice.label(),
            rank: r,
            bound,
            reconstruction_error: error,
            kl_estimate,
            kl_stderr,
            truncation_mse,
        })
    });
    let rows: Vec<ComparisonRow> = rows.into_iter().collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    if methods
        .iter()
        .any(|m| m.source().is_some() && !m.is_lis() && *m != Method::AsPrior)
    {
        warnings.push(UNDERESTIMATION_WARNING.to_string());
    }
    for row in &rows {
        if let (Some(v), Some(se)) = (row.kl_estimate, row.kl_stderr) {
            if v + 3.0 * se < 0.0 {
                warnings.push(format!(
                    "negative KL estimate for {} {} r={}: {v} (se {se})",
                    row.method, row.profile, row.rank
                ));
            }
        }
    }
    Ok(ComparisonTable {
        problem: problem.name.clone(),
        reference,
        rows,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::analytic_oracle;
    use crate::problem::analytic_problem;
    use crate::ridge::make_ridge;

    fn diag_a() -> SpdMatrix {
        SpdMatrix::from_diagonal(&[2.0, 1.0, 0.5]).unwrap()
    }

    #[test]
    fn certified_bound_examples() {
        let oracle = analytic_oracle(&diag_a(), 1).unwrap();
        let spec = generalized_eigendecomposition(&oracle.h_exact, &SpdMatrix::identity(3)).unwrap();
        let b = certified_bound(&spec, 1, 1.0).unwrap();
        assert!((b.bound - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(certified_bound(&spec, 3, 1.0).unwrap().bound, 0.0);
        let doubled = certified_bound(&spec, 1, 2.0).unwrap();
        assert!((doubled.bound - 2.0 * b.bound).abs() < 1e-15);
        assert_eq!(b.label(), "certified");
        assert_eq!(b.estimated(10, 9.0).label(), "estimated bound");
    }

    #[test]
    fn prior_bound_examples() {
        let id = SpdMatrix::identity(5);
        assert!((prior_bound(2.0, &id, 0, 1.0).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(prior_bound(0.0, &id, 2, 1.0).unwrap(), 0.0);
        assert_eq!(prior_bound(3.0, &id, 5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn identity_ridge_has_zero_kl() {
        let problem = analytic_problem(&diag_a()).unwrap();
        let spec = generalized_eigendecomposition(problem.oracle_h.as_ref().unwrap(), problem.gamma()).unwrap();
        let p = build_projector(&spec, 3).unwrap();
        let ridge = make_ridge(
            p,
            problem.likelihood.clone(),
            &problem.prior,
            Profile::MonteCarlo { anchors: 3 },
            1,
        )
        .unwrap();
        let post = problem.exact_posterior.as_ref().unwrap().sample_stream(2000, 1, 9);
        let prior = problem.prior.sample_stream(2000, 1, 8);
        let kl = estimate_kl(&post, problem.likelihood.as_ref(), &ridge, &prior).unwrap();
        assert!(kl.value.abs() <= 3.0 * kl.standard_error + 1e-12);
        let kl = estimate_kl_posterior_ratio(&post, problem.likelihood.as_ref(), &ridge).unwrap();
        assert!(kl.value.abs() < 1e-12);
    }

    #[test]
    fn exact_profile_kl_matches_closed_form() {
        let a = diag_a();
        let problem = analytic_problem(&a).unwrap();
        let spec = generalized_eigendecomposition(problem.oracle_h.as_ref().unwrap(), problem.gamma()).unwrap();
        let p = build_projector(&spec, 1).unwrap();
        let ridge = make_ridge(
            p,
            problem.likelihood.clone(),
            &problem.prior,
            Profile::ExactGaussian { a },
            1,
        )
        .unwrap();
        let post = problem.exact_posterior.as_ref().unwrap().sample_stream(20_000, 4, 9);
        let prior = problem.prior.sample_stream(20_000, 4, 8);
        let expected = 0.132_639_477_667_388_18;
        for kl in [
            estimate_kl(&post, problem.likelihood.as_ref(), &ridge, &prior).unwrap(),
            estimate_kl_posterior_ratio(&post, problem.likelihood.as_ref(), &ridge).unwrap(),
        ] {
            assert!(
                (kl.value - expected).abs() <= (3.0 * kl.standard_error).max(0.02 * expected),
                "{kl:?}"
            );
        }
    }

    #[test]
    fn batch_means_on_constant_series() {
        assert_eq!(batch_means_stderr(&[1.0; 100]), 0.0);
        assert!(batch_means_stderr(&[1.0, 2.0, 3.0]) > 0.0);
    }

    #[test]
    fn profile_parsing() {
        assert_eq!(
            ProfileChoice::parse("monte_carlo(10)"),
            Some(ProfileChoice::MonteCarlo(10))
        );
        assert_eq!(ProfileChoice::parse("prior_mean"), Some(ProfileChoice::PriorMean));
        assert_eq!(ProfileChoice::parse("monte_carlo(0)"), None);
        assert_eq!(ProfileChoice::parse("mc"), None);
        assert_eq!(Method::parse("as_prior"), Some(Method::AsPrior));
    }

    #[test]
    fn comparison_shape_and_optimality() {
        let problem = analytic_problem(&SpdMatrix::from_diagonal(&[3.0, 1.5, 0.8, 0.3, 0.1]).unwrap()).unwrap();
        let settings = CompareSettings {
            k: 400,
            seed: 5,
            mcmc: McmcSettings::default(),
            kl: KlSettings {
                posterior_samples: 2000,
                prior_samples: 2000,
                normalizer: NormalizerStrategy::PriorSamples,
            },
        };
        let profiles = [ProfileChoice::MonteCarlo(8), ProfileChoice::PriorMean];
        let ranks = [1, 2, 3];
        let table = compare_methods(&problem, &Method::ALL, &profiles, &ranks, &settings).unwrap();
        assert_eq!(table.rows.len(), Method::ALL.len() * profiles.len() * ranks.len());
        assert_eq!(table.rows[0].method, "certified_posterior");
        let csv = table.to_csv();
        assert!(csv.starts_with(COMPARISON_CSV_HEADER));
        assert_eq!(csv.lines().count(), table.rows.len() + 1);
        let optimal = analytic_oracle(problem.quadratic.as_ref().unwrap(), 0)
            .unwrap()
            .eigenvalues;
        for row in &table.rows {
            let tail: f64 = optimal[row.rank..].iter().sum();
            assert!(row.reconstruction_error >= tail * (1.0 - 1e-9));
        }
    }
}
