//! Test problems bundled with everything the pipeline may need from them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::elliptic::{elliptic_problem, EllipticConfig, EllipticProblem};
use crate::error::{Error, Result};
use crate::estimators::{laplace_approximation, LaplaceApproximation, LaplaceOptions};
use crate::linalg::SpdMatrix;
use crate::model::{
    analytic_oracle, ForwardModel, ForwardSetup, GaussianMeasure, LikelihoodModel, LinearForward, PriorMeasure,
    QuadraticLikelihood, SampleSet,
};
use crate::rng::{derive_seed, streams};
use crate::sampler::{sample_posterior_rwm, sample_posterior_with_reference, ChainConfig, ChainDiagnostics};

/// A Gaussian-prior inverse problem together with its optional closed forms.
#[derive(Clone)]
pub struct InverseProblem {
    pub name: String,
    pub prior: GaussianMeasure,
    pub likelihood: Arc<dyn LikelihoodModel>,
    pub forward: Option<ForwardSetup>,
    pub kappa: f64,
    /// Exact diagnostic matrix under the posterior.
    pub oracle_h: Option<SpdMatrix>,
    pub exact_posterior: Option<GaussianMeasure>,
    /// `A` when `f = exp(-½ xᵀ A x)` under `N(0, I)`.
    pub quadratic: Option<SpdMatrix>,
}

impl InverseProblem {
    pub fn dim(&self) -> usize {
        self.prior.mean_vector().len()
    }

    pub fn gamma(&self) -> &SpdMatrix {
        self.prior.precision()
    }
}

/// `μ = N(0, I)`, `f(x) = exp(-½ xᵀ A x)`. The same likelihood is exposed as
/// a linear forward model `G = A^{1/2}` with zero data and unit noise.
pub fn analytic_problem(a: &SpdMatrix) -> Result<InverseProblem> {
    let d = a.dim();
    let oracle = analytic_oracle(a, 0)?;
    let eig = SymmetricEigen::new(a.matrix().clone());
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let sqrt_a = &eig.eigenvectors * root * eig.eigenvectors.transpose();
    let forward: Arc<dyn ForwardModel> = Arc::new(LinearForward::new(sqrt_a));
    let posterior_precision = SpdMatrix::new(DMatrix::identity(d, d) + a.matrix())?;
    Ok(InverseProblem {
        name: "analytic".into(),
        prior: GaussianMeasure::standard(d),
        likelihood: Arc::new(QuadraticLikelihood::new(a.clone())?),
        forward: Some(ForwardSetup {
            model: forward,
            data: DVector::zeros(d),
            noise: SpdMatrix::identity(d),
        }),
        kappa: 1.0,
        oracle_h: Some(oracle.h_exact),
        exact_posterior: Some(GaussianMeasure::from_precision(DVector::zeros(d), posterior_precision)?),
        quadratic: Some(a.clone()),
    })
}

impl From<&EllipticProblem> for InverseProblem {
    fn from(p: &EllipticProblem) -> Self {
        InverseProblem {
            name: "elliptic".into(),
            prior: p.prior.clone(),
            likelihood: p.likelihood.clone(),
            forward: Some(p.likelihood.setup().clone()),
            kappa: 1.0,
            oracle_h: None,
            exact_posterior: None,
            quadratic: None,
        }
    }
}

pub fn elliptic_inverse_problem(config: &EllipticConfig) -> Result<(EllipticProblem, InverseProblem)> {
    let p = elliptic_problem(config)?;
    let ip = InverseProblem::from(&p);
    Ok((p, ip))
}

/// Reference measure used to draw samples for a diagnostic matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    PosteriorMcmc,
    Prior,
    Laplace,
}

impl SampleSource {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "posterior_mcmc" | "posterior" => Some(SampleSource::PosteriorMcmc),
            "prior" => Some(SampleSource::Prior),
            "laplace" => Some(SampleSource::Laplace),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SampleSource::PosteriorMcmc => "posterior_mcmc",
            SampleSource::Prior => "prior",
            SampleSource::Laplace => "laplace",
        }
    }
}

/// Chain settings shared by every posterior sampling call.
#[derive(Clone, Debug, Serialize)]
pub struct McmcSettings {
    pub step_size: f64,
    pub thinning: usize,
    pub burn_in_fraction: f64,
    pub target_acceptance: f64,
    /// Use the Laplace approximation as pCN reference when no exact
    /// posterior is available.
    pub laplace_reference: bool,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            step_size: 0.5,
            thinning: 5,
            burn_in_fraction: 0.2,
            target_acceptance: 0.3,
            laplace_reference: true,
        }
    }
}

impl McmcSettings {
    pub fn chain(&self, n: usize, seed: u64) -> ChainConfig {
        let mut cfg = ChainConfig::new(n, seed);
        cfg.step_size = self.step_size;
        cfg.thinning = self.thinning.max(1);
        cfg.burn_in = Some(((n * cfg.thinning) as f64 * self.burn_in_fraction).round() as usize);
        cfg.adapt_target_acceptance = self.target_acceptance;
        cfg
    }
}

/// Posterior draws: exact when the posterior is Gaussian, otherwise pCN.
pub fn posterior_samples(
    problem: &InverseProblem,
    n: usize,
    seed: u64,
    mcmc: &McmcSettings,
) -> Result<(SampleSet, Option<ChainDiagnostics>)> {
    if let Some(post) = &problem.exact_posterior {
        return Ok((post.sample_stream(n, seed, streams::POSTERIOR), None));
    }
    let cfg = mcmc.chain(n, derive_seed(seed, streams::POSTERIOR));
    let out = if mcmc.laplace_reference {
        let lap = laplace(problem)?;
        sample_posterior_with_reference(problem.likelihood.as_ref(), &problem.prior, &lap.measure()?, &cfg)?
    } else {
        sample_posterior_rwm(problem.likelihood.as_ref(), &problem.prior, &cfg)?
    };
    Ok((out.samples, Some(out.diagnostics)))
}

pub fn laplace(problem: &InverseProblem) -> Result<LaplaceApproximation> {
    laplace_approximation(
        &problem.prior,
        problem.likelihood.as_ref(),
        problem.forward.as_ref(),
        &LaplaceOptions::default(),
    )
}

/// `n` samples from the chosen reference measure. Prior samples for a given
/// `(seed, iteration)` are shared by every caller.
pub fn reference_samples(
    problem: &InverseProblem,
    source: SampleSource,
    n: usize,
    seed: u64,
    iteration: u64,
    mcmc: &McmcSettings,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count K must be at least 1".into()));
    }
    let seed = derive_seed(seed, iteration);
    match source {
        SampleSource::Prior => Ok(problem.prior.sample(n, seed)),
        SampleSource::Laplace => {
            let lap = laplace(problem)?;
            Ok(lap.measure()?.sample_stream(n, seed, streams::LAPLACE))
        }
        SampleSource::PosteriorMcmc => Ok(posterior_samples(problem, n, seed, mcmc)?.0),
    }
}
