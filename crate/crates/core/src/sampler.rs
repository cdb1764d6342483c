//! Preconditioned Crank–Nicolson samplers.
//!
//! The ridge sampler runs Metropolis only on the `r` informed coordinates and
//! draws the complement exactly from the prior. The full-space samplers target
//! `dν/dμ ∝ f` and exist for validation at desk scale.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::model::{GaussianMeasure, LikelihoodModel, SampleSet};
use crate::parallel::map_indexed;
use crate::ridge::RidgeLikelihood;
use crate::rng::{standard_normal_vector, streams, substream};

#[derive(Clone, Debug, Serialize)]
pub struct ChainConfig {
    pub n_samples: usize,
    /// Defaults to 20% of `n_samples` when `None`.
    pub burn_in: Option<usize>,
    pub thinning: usize,
    /// Initial pCN step `β ∈ (0, 1]`.
    pub step_size: f64,
    pub seed: u64,
    pub adapt_target_acceptance: f64,
    /// Starting point; the reference mean when `None`.
    #[serde(skip)]
    pub initial: Option<DVector<f64>>,
}

impl ChainConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        ChainConfig {
            n_samples,
            burn_in: None,
            thinning: 1,
            step_size: 0.5,
            seed,
            adapt_target_acceptance: 0.3,
            initial: None,
        }
    }

    pub fn burn_in_steps(&self) -> usize {
        self.burn_in.unwrap_or(self.n_samples / 5)
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pCN step size must lie in (0, 1], got {}",
                self.step_size
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be at least 1".into()));
        }
        if !(self.adapt_target_acceptance > 0.0 && self.adapt_target_acceptance < 1.0) {
            return Err(Error::InvalidArgument("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub ess_per_coordinate: f64,
    pub n_evaluations: usize,
    pub final_step_size: f64,
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub samples: SampleSet,
    pub diagnostics: ChainDiagnostics,
}

/// `(Σw)² / Σw²`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::ZeroWeights);
    }
    let sum: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(sum * sum / sq)
}

/// Effective sample size of a scalar chain by batch means, capped at `n`.
pub fn batch_means_ess(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return n as f64;
    }
    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let used = batches * size;
    let mean = values[..used].iter().sum::<f64>() / used as f64;
    let var = values[..used].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (used - 1) as f64;
    if var == 0.0 {
        return n as f64;
    }
    let batch_var = values[..used]
        .chunks(size)
        .map(|c| (c.iter().sum::<f64>() / size as f64 - mean).powi(2))
        .sum::<f64>()
        / (batches - 1) as f64;
    if batch_var == 0.0 {
        return n as f64;
    }
    (used as f64 * var / (size as f64 * batch_var)).min(n as f64)
}

fn min_coordinate_ess(samples: &[DVector<f64>]) -> f64 {
    let Some(first) = samples.first() else {
        return 0.0;
    };
    (0..first.len())
        .map(|j| batch_means_ess(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .fold(samples.len() as f64, f64::min)
}

struct PcnRun {
    states: Vec<DVector<f64>>,
    accepted: usize,
    proposals: usize,
    evaluations: usize,
    step: f64,
}

/// pCN in whitened coordinates `z ~ N(0, I)` for the log target density
/// `log_weight(z)` relative to the standard normal.
fn pcn_chain<F>(dim: usize, start: DVector<f64>, cfg: &ChainConfig, log_weight: F) -> Result<PcnRun>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut rng: ChaCha8Rng = substream(cfg.seed, streams::CHAIN, 0);
    let mut z = start;
    let mut current = log_weight(&z)?;
    let mut evaluations = 1;
    if !current.is_finite() {
        return Err(Error::NonFinite("target density at chain initialization".into()));
    }
    let burn = cfg.burn_in_steps();
    let total = burn + cfg.n_samples * cfg.thinning;
    let mut log_step = cfg.step_size.ln();
    let mut states = Vec::with_capacity(cfg.n_samples);
    let mut accepted = 0;
    let mut proposals = 0;
    for t in 0..total {
        let beta = log_step.exp();
        let xi = standard_normal_vector(&mut rng, dim);
        let proposal = &z * (1.0 - beta * beta).sqrt() + xi * beta;
        let candidate = match log_weight(&proposal) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) if e.is_numerical() => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        evaluations += 1;
        let u: f64 = rng.gen();
        let accept = u.ln() < candidate - current;
        if accept {
            z = proposal;
            current = candidate;
        }
        if t < burn {
            let gain = 1.0 / ((t + 1) as f64).powf(0.6);
            let hit = if accept { 1.0 } else { 0.0 };
            log_step = (log_step + gain * (hit - cfg.adapt_target_acceptance))
                .min(0.0)
                .max((1e-4f64).ln());
        } else {
            proposals += 1;
            if accept {
                accepted += 1;
            }
            if (t - burn + 1).is_multiple_of(cfg.thinning) {
                states.push(z.clone());
            }
        }
    }
    Ok(PcnRun {
        states,
        accepted,
        proposals,
        evaluations,
        step: log_step.exp(),
    })
}

fn check_metric(ridge: &RidgeLikelihood, prior: &GaussianMeasure) -> Result<()> {
    let gamma = ridge.projector().gamma().matrix();
    check_dim("ridge sampler prior", gamma.nrows(), prior.mean_vector().len())?;
    let scale = gamma.amax().max(1.0);
    if (gamma - prior.precision().matrix()).amax() > 1e-10 * scale {
        return Err(Error::InvalidArgument(
            "ridge projector is not orthogonal with respect to the prior precision".into(),
        ));
    }
    Ok(())
}

/// Samples `dν̂/dμ ∝ F̂(P x)`.
///
/// States are `x = m + V ξ_r + W ξ_⊥` with `[V W]` Γ-orthonormal. `ξ_r` follows
/// a pCN chain whose acceptance ratio only involves `log F̂`; `ξ_⊥` is drawn
/// independently for each retained sample from its own substream.
pub fn sample_ridge_posterior(
    ridge: &RidgeLikelihood,
    prior: &GaussianMeasure,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    cfg.validate()?;
    check_metric(ridge, prior)?;
    let p = ridge.projector();
    let v = p.informed_basis();
    let w = p.complement_basis()?;
    let r = p.rank();
    let m = prior.mean_vector();
    let pm = p.apply(m);

    let (coords, diagnostics) = if r == 0 {
        let ess = cfg.n_samples as f64;
        (
            vec![DVector::zeros(0); cfg.n_samples],
            ChainDiagnostics {
                acceptance_rate: 1.0,
                ess_per_coordinate: ess,
                n_evaluations: 0,
                final_step_size: cfg.step_size,
            },
        )
    } else {
        let start = match &cfg.initial {
            Some(x0) => {
                check_dim("chain initial state", m.len(), x0.len())?;
                p.informed_coordinates(&(x0 - m))
            }
            None => DVector::zeros(r),
        };
        let run = pcn_chain(r, start, cfg, |xi| ridge.log_value_projected(&(&pm + v * xi)))?;
        let diagnostics = ChainDiagnostics {
            acceptance_rate: run.accepted as f64 / run.proposals.max(1) as f64,
            ess_per_coordinate: min_coordinate_ess(&run.states),
            n_evaluations: run.evaluations,
            final_step_size: run.step,
        };
        (run.states, diagnostics)
    };

    let samples = assemble(m, v, &w, &coords, cfg.seed);
    Ok(ChainOutput { samples, diagnostics })
}

fn assemble(m: &DVector<f64>, v: &DMatrix<f64>, w: &DMatrix<f64>, coords: &[DVector<f64>], seed: u64) -> SampleSet {
    let k = w.ncols();
    map_indexed(coords.len(), |i| {
        let mut rng = substream(seed, streams::COMPLEMENT, i as u64);
        let perp = standard_normal_vector(&mut rng, k);
        let mut x = m + w * perp;
        if !coords[i].is_empty() {
            x += v * &coords[i];
        }
        x
    })
}

/// Full-space pCN targeting `dν/dμ ∝ f`.
pub fn sample_posterior_rwm(
    model: &dyn LikelihoodModel,
    prior: &GaussianMeasure,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    cfg.validate()?;
    check_dim("posterior sampler", prior.mean_vector().len(), model.dim())?;
    let m = prior.mean_vector();
    let l = prior.covariance_factor();
    let start = whitened_start(cfg, m, l)?;
    let run = pcn_chain(m.len(), start, cfg, |z| model.log_likelihood(&(m + l * z)))?;
    Ok(finish(run, m, l))
}

/// pCN reversible with respect to a Gaussian `reference` (typically the
/// Laplace approximation), targeting `dν/dμ ∝ f`. The acceptance ratio
/// carries the density ratio between prior and reference.
pub fn sample_posterior_with_reference(
    model: &dyn LikelihoodModel,
    prior: &GaussianMeasure,
    reference: &GaussianMeasure,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let d = prior.mean_vector().len();
    check_dim("posterior sampler", d, model.dim())?;
    check_dim("reference measure", d, reference.mean_vector().len())?;
    let m = reference.mean_vector();
    let l = reference.covariance_factor();
    let start = whitened_start(cfg, m, l)?;
    let run = pcn_chain(d, start, cfg, |z| {
        let x = m + l * z;
        Ok(model.log_likelihood(&x)? + prior.log_density_unnormalized(&x) + 0.5 * z.norm_squared())
    })?;
    Ok(finish(run, m, l))
}

fn whitened_start(cfg: &ChainConfig, m: &DVector<f64>, l: &DMatrix<f64>) -> Result<DVector<f64>> {
    match &cfg.initial {
        Some(x0) => {
            check_dim("chain initial state", m.len(), x0.len())?;
            l.solve_lower_triangular(&(x0 - m))
                .ok_or_else(|| Error::NonFinite("chain initial state".into()))
        }
        None => Ok(DVector::zeros(m.len())),
    }
}

fn finish(run: PcnRun, m: &DVector<f64>, l: &DMatrix<f64>) -> ChainOutput {
    let samples: SampleSet = run.states.iter().map(|z| m + l * z).collect();
    ChainOutput {
        diagnostics: ChainDiagnostics {
            acceptance_rate: run.accepted as f64 / run.proposals.max(1) as f64,
            ess_per_coordinate: min_coordinate_ess(&samples),
            n_evaluations: run.evaluations,
            final_step_size: run.step,
        },
        samples,
    }
}

/// Samples as CSV, one row per retained draw.
pub fn samples_csv(samples: &[DVector<f64>]) -> String {
    let mut out = String::new();
    if let Some(first) = samples.first() {
        let header: Vec<String> = (1..=first.len()).map(|i| format!("x{i}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
    }
    for s in samples {
        let row: Vec<String> = s.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
