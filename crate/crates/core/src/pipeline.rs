//! End-to-end reduction runs: the ideal single-pass algorithm and the
//! iterative importance-weighted refinement.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::certify::{certified_bound, CertifiedBound, KlEstimate, KlSamples, KlSettings};
use crate::error::{Error, Result};
use crate::estimators::{estimate_h, self_normalized_weights, EstimateSource};
use crate::linalg::{build_projector, generalized_eigendecomposition, minimal_rank, SubspaceDocument};
use crate::model::{LikelihoodModel, SampleSet};
use crate::problem::{reference_samples, InverseProblem, McmcSettings, SampleSource};
use crate::ridge::{draw_anchors, ridge_with_anchors, Profile, RidgeDocument, RidgeLikelihood};
use crate::rng::derive_seed;
use crate::sampler::{ess, sample_ridge_posterior, ChainDiagnostics};

pub const REPORT_VERSION: u32 = 1;

/// ESS below which an iteration records a weight-degeneracy warning.
pub const ESS_WARNING_THRESHOLD: f64 = 10.0;

/// Early-stop threshold on the distance between successive projectors.
pub const STABILIZATION_DISTANCE: f64 = 1e-3;

const CHAIN_TAG: u64 = 0x5EED_C4A1;

/// Likelihood wrapper that counts evaluations and gradients.
pub struct CountingLikelihood {
    inner: Arc<dyn LikelihoodModel>,
    evaluations: AtomicUsize,
    gradients: AtomicUsize,
}

impl CountingLikelihood {
    pub fn new(inner: Arc<dyn LikelihoodModel>) -> Self {
        CountingLikelihood {
            inner,
            evaluations: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
        }
    }

    pub fn counts(&self) -> CostCounters {
        CostCounters {
            likelihood_evaluations: self.evaluations.load(Ordering::Relaxed),
            gradient_evaluations: self.gradients.load(Ordering::Relaxed),
        }
    }
}

impl LikelihoodModel for CountingLikelihood {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.inner.log_likelihood(x)
    }

    fn grad_log_likelihood(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.grad_log_likelihood(x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostCounters {
    pub likelihood_evaluations: usize,
    pub gradient_evaluations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    pub tail_bound: CertifiedBound,
    pub weight_ess: f64,
    pub kl_estimate: Option<KlEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainDiagnostics>,
    /// Distance to the previous iteration's projector.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspace_distance: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Seeds {
    pub root: u64,
    pub anchors: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    pub report_version: u32,
    pub algorithm: String,
    pub problem: String,
    pub iterations: Vec<IterationRecord>,
    pub final_rank: usize,
    pub projector: SubspaceDocument,
    pub ridge: RidgeDocument,
    pub config: serde_json::Value,
    pub seeds: Seeds,
    pub costs: CostCounters,
    pub stopped_early: bool,
}

impl ReductionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `iteration,index,lambda` with 1-based indices.
    pub fn eigenvalue_trajectories_csv(&self) -> String {
        let mut out = String::from("iteration,index,lambda\n");
        for rec in &self.iterations {
            for (i, l) in rec.eigenvalues.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", rec.iteration, i + 1, l));
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdealSettings {
    pub epsilon: f64,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub sample_source: SampleSource,
    pub mcmc: McmcSettings,
    pub kl: Option<KlSettings>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterativeSettings {
    pub epsilon: f64,
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub r_max: usize,
    pub seed: u64,
    pub early_stop: bool,
    pub mcmc: McmcSettings,
    pub kl: Option<KlSettings>,
}

fn check_common(epsilon: f64, k: usize, m: usize) -> Result<()> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    Ok(())
}

struct Counted {
    problem: InverseProblem,
    counter: Arc<CountingLikelihood>,
}

fn counted(problem: &InverseProblem) -> Counted {
    let counter = Arc::new(CountingLikelihood::new(problem.likelihood.clone()));
    let mut p = problem.clone();
    p.likelihood = counter.clone();
    Counted { problem: p, counter }
}

struct Step {
    record: IterationRecord,
    ridge: RidgeLikelihood,
}

/// Builds `Ĥ`, picks the rank, and rebuilds the ridge for one iteration.
#[allow(clippy::too_many_arguments)]
fn reduction_step(
    problem: &InverseProblem,
    original: &InverseProblem,
    iteration: usize,
    samples: &[DVector<f64>],
    weights: Option<&[f64]>,
    source: EstimateSource,
    epsilon: f64,
    r_max: Option<usize>,
    anchors: &[DVector<f64>],
    m: usize,
    kl: Option<&KlSamples>,
) -> Result<Step> {
    let est = estimate_h(samples, weights, problem.likelihood.as_ref(), source)?;
    let spectrum = generalized_eigendecomposition(&est.matrix, problem.gamma())?;
    let mut r = minimal_rank(&spectrum, problem.kappa, epsilon)?;
    if let Some(cap) = r_max {
        r = r.min(cap);
    }
    let projector = build_projector(&spectrum, r)?;
    let ridge = ridge_with_anchors(
        projector,
        problem.likelihood.clone(),
        &problem.prior,
        Profile::MonteCarlo { anchors: m },
        anchors,
    )?;
    let mut warnings = Vec::new();
    if est.ess < ESS_WARNING_THRESHOLD {
        warnings.push(format!(
            "weight degeneracy: ESS {:.3} below {}",
            est.ess, ESS_WARNING_THRESHOLD
        ));
    }
    let kl_estimate = match kl {
        Some(s) => {
            let quiet = ridge.with_base(original.likelihood.clone());
            Some(s.estimate(original.likelihood.as_ref(), &quiet)?)
        }
        None => None,
    };
    let tail_bound = certified_bound(&spectrum, r, problem.kappa)?.estimated(est.sample_count, est.ess);
    Ok(Step {
        record: IterationRecord {
            iteration,
            rank: r,
            eigenvalues: spectrum.eigenvalues().to_vec(),
            tail_bound,
            weight_ess: est.ess,
            kl_estimate,
            chain: None,
            subspace_distance: None,
            warnings,
        },
        ridge,
    })
}

fn draw_kl(
    problem: &InverseProblem,
    kl: &Option<KlSettings>,
    seed: u64,
    mcmc: &McmcSettings,
) -> Result<Option<KlSamples>> {
    kl.as_ref().map(|s| KlSamples::draw(problem, s, seed, mcmc)).transpose()
}

/// Single pass: `K` samples from one reference measure, rank from `ε`,
/// Monte Carlo ridge with `M` anchors.
pub fn run_ideal(problem: &InverseProblem, settings: &IdealSettings) -> Result<ReductionReport> {
    check_common(settings.epsilon, settings.k, settings.m)?;
    let kl = draw_kl(problem, &settings.kl, settings.seed, &settings.mcmc)?;
    let c = counted(problem);
    let samples = reference_samples(
        &c.problem,
        settings.sample_source,
        settings.k,
        settings.seed,
        0,
        &settings.mcmc,
    )?;
    let anchors = draw_anchors(&problem.prior, settings.m, settings.seed);
    let source = match settings.sample_source {
        SampleSource::Prior => EstimateSource::Prior,
        SampleSource::Laplace => EstimateSource::Laplace,
        SampleSource::PosteriorMcmc => EstimateSource::PosteriorSamples,
    };
    let step = reduction_step(
        &c.problem,
        problem,
        0,
        &samples,
        None,
        source,
        settings.epsilon,
        None,
        &anchors,
        settings.m,
        kl.as_ref(),
    )?;
    Ok(ReductionReport {
        report_version: REPORT_VERSION,
        algorithm: "ideal".into(),
        problem: problem.name.clone(),
        final_rank: step.record.rank,
        projector: step.ridge.projector().to_document(),
        ridge: step.ridge.to_document(),
        iterations: vec![step.record],
        config: serde_json::to_value(settings)?,
        seeds: Seeds {
            root: settings.seed,
            anchors: settings.seed,
        },
        costs: c.counter.counts(),
        stopped_early: false,
    })
}

/// Iterative refinement: iteration 0 uses unit-weight prior samples; each
/// later iteration samples the current ridge posterior, reweights by
/// `f / F̂`, and rebuilds `Ĥ`, the rank (capped at `r_max`) and the ridge.
/// Anchors are drawn once.
pub fn run_iterative(problem: &InverseProblem, settings: &IterativeSettings) -> Result<ReductionReport> {
    check_common(settings.epsilon, settings.k, settings.m)?;
    let kl = draw_kl(problem, &settings.kl, settings.seed, &settings.mcmc)?;
    let c = counted(problem);
    let anchors = draw_anchors(&problem.prior, settings.m, settings.seed);
    let prior_samples: SampleSet = reference_samples(
        &c.problem,
        SampleSource::Prior,
        settings.k,
        settings.seed,
        0,
        &settings.mcmc,
    )?;
    let mut step = reduction_step(
        &c.problem,
        problem,
        0,
        &prior_samples,
        None,
        EstimateSource::Prior,
        settings.epsilon,
        Some(settings.r_max),
        &anchors,
        settings.m,
        kl.as_ref(),
    )?;
    let mut mean = weighted_mean(&prior_samples, None);
    let mut records = Vec::new();
    let mut stopped_early = false;

    for l in 1..=settings.l {
        let mut cfg = settings
            .mcmc
            .chain(settings.k, derive_seed(settings.seed, CHAIN_TAG + l as u64));
        cfg.initial = Some(mean.clone());
        let chain = sample_ridge_posterior(&step.ridge, &c.problem.prior, &cfg)?;
        let weights = self_normalized_weights(c.problem.likelihood.as_ref(), &step.ridge, &chain.samples)?;
        ess(&weights)?;
        let next = reduction_step(
            &c.problem,
            problem,
            l,
            &chain.samples,
            Some(&weights),
            EstimateSource::ImportanceIteration,
            settings.epsilon,
            Some(settings.r_max),
            &anchors,
            settings.m,
            kl.as_ref(),
        )?;
        mean = weighted_mean(&chain.samples, Some(&weights));
        let distance = step.ridge.projector().distance(next.ridge.projector())?;
        let previous = std::mem::replace(&mut step, next);
        records.push(previous.record);
        step.record.chain = Some(chain.diagnostics);
        step.record.subspace_distance = Some(distance);
        if settings.early_stop && distance < STABILIZATION_DISTANCE {
            stopped_early = true;
            break;
        }
    }
    records.push(step.record.clone());

    Ok(ReductionReport {
        report_version: REPORT_VERSION,
        algorithm: "iterative".into(),
        problem: problem.name.clone(),
        final_rank: step.record.rank,
        projector: step.ridge.projector().to_document(),
        ridge: step.ridge.to_document(),
        iterations: records,
        config: serde_json::to_value(settings)?,
        seeds: Seeds {
            root: settings.seed,
            anchors: settings.seed,
        },
        costs: c.counter.counts(),
        stopped_early,
    })
}

fn weighted_mean(samples: &[DVector<f64>], weights: Option<&[f64]>) -> DVector<f64> {
    let d = samples[0].len();
    let mut total = DVector::zeros(d);
    let mut norm = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        total += s * w;
        norm += w;
    }
    total / norm
}
