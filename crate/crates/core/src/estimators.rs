//! Sample estimates of the diagnostic matrices.
//!
//! `Ĥ = Σ wₖ gₖ gₖᵀ / Σ wₖ` with `gₖ = ∇log f(Xₖ)`. Gradients are evaluated in
//! parallel; the outer products are accumulated by a pairwise tree whose split
//! points depend only on `K`, so the result is bitwise stable across worker
//! counts.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{build_projector, generalized_eigendecomposition, reconstruction_error, SpdMatrix};
use crate::model::{ForwardSetup, GaussianMeasure, LikelihoodModel};
use crate::parallel::{map_indexed, pairwise_reduce, pairwise_sum, DEFAULT_LEAF};
use crate::ridge::RidgeLikelihood;
use crate::sampler::ess;

/// Where the samples behind an estimate came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Prior,
    PosteriorSamples,
    Laplace,
    ImportanceIteration,
    LisVariant,
    Oracle,
}

/// A PSD estimate of a diagnostic matrix with its sample provenance.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticMatrixEstimate {
    pub matrix: SpdMatrix,
    #[serde(rename = "K")]
    pub sample_count: usize,
    #[serde(skip)]
    pub weights: Vec<f64>,
    pub ess: f64,
    pub source: EstimateSource,
}

impl DiagnosticMatrixEstimate {
    /// Wraps an exactly known matrix.
    pub fn exact(matrix: SpdMatrix) -> Self {
        DiagnosticMatrixEstimate {
            matrix,
            sample_count: 0,
            weights: Vec::new(),
            ess: f64::INFINITY,
            source: EstimateSource::Oracle,
        }
    }
}

/// Weighted second moment of `vectors`, normalized by the weight sum.
fn weighted_second_moment(vectors: &[DVector<f64>], weights: Option<&[f64]>, dim: usize) -> DMatrix<f64> {
    let leaf = |range: Range<usize>| {
        let rows = range.len();
        let mut block = DMatrix::zeros(rows, dim);
        for (row, k) in range.enumerate() {
            let scale = weights.map_or(1.0, |w| w[k].sqrt());
            for j in 0..dim {
                block[(row, j)] = vectors[k][j] * scale;
            }
        }
        block.tr_mul(&block)
    };
    let combine = |a: DMatrix<f64>, b: DMatrix<f64>| a + b;
    let total = pairwise_reduce(0..vectors.len(), DEFAULT_LEAF, &leaf, &combine);
    let norm = match weights {
        Some(w) => pairwise_sum(w),
        None => vectors.len() as f64,
    };
    total / norm
}

fn validate_weights(weights: &[f64], k: usize) -> Result<()> {
    check_dim("weights", k, weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::ZeroWeights);
    }
    if !(pairwise_sum(weights) > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(())
}

/// `Ĥ` from samples and optional self-normalized importance weights.
pub fn estimate_h(
    samples: &[DVector<f64>],
    weights: Option<&[f64]>,
    model: &dyn LikelihoodModel,
    source: EstimateSource,
) -> Result<DiagnosticMatrixEstimate> {
    let k = samples.len();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if let Some(w) = weights {
        validate_weights(w, k)?;
    }
    let d = model.dim();
    let gradients = map_indexed(k, |i| model.grad_log_likelihood(&samples[i]));
    let mut grads = Vec::with_capacity(k);
    for (i, g) in gradients.into_iter().enumerate() {
        let g = g?;
        check_dim("gradient", d, g.len())?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                what: "gradient",
                index: i,
            });
        }
        grads.push(g);
    }
    // Equal weights cancel in the normalization; take the unweighted path so
    // the two agree bitwise.
    let weights = weights.filter(|w| w.iter().any(|v| v.to_bits() != w[0].to_bits()));
    let matrix = SpdMatrix::new(weighted_second_moment(&grads, weights, d))?;
    let stored = weights.map_or_else(|| vec![1.0; k], |w| w.to_vec());
    Ok(DiagnosticMatrixEstimate {
        matrix,
        sample_count: k,
        ess: ess(&stored)?,
        weights: stored,
        source,
    })
}

/// Sample average of the Gauss–Newton matrix `∇Gᵀ Σ_obs⁻¹ ∇G`.
pub fn estimate_h_lis(samples: &[DVector<f64>], forward: &ForwardSetup) -> Result<DiagnosticMatrixEstimate> {
    let k = samples.len();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let d = forward.model.input_dim();
    let m = forward.model.output_dim();
    let rows = map_indexed(k, |i| forward.whitened_jacobian_rows(&samples[i]));
    let mut flat = Vec::with_capacity(k * m);
    for (i, r) in rows.into_iter().enumerate() {
        for u in r? {
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteSample {
                    what: "jacobian row",
                    index: i,
                });
            }
            flat.push(u);
        }
    }
    // Each sample contributes m rows; rescale the row average back to a sample average.
    let matrix = weighted_second_moment(&flat, None, d) * m as f64;
    Ok(DiagnosticMatrixEstimate {
        matrix: SpdMatrix::new(matrix)?,
        sample_count: k,
        weights: vec![1.0; k],
        ess: k as f64,
        source: EstimateSource::LisVariant,
    })
}

/// Raw importance weights `f(Xₖ) / F̂(Xₖ)`, computed in log space and scaled
/// so the largest weight is one.
pub fn self_normalized_weights(
    model: &dyn LikelihoodModel,
    ridge: &RidgeLikelihood,
    samples: &[DVector<f64>],
) -> Result<Vec<f64>> {
    let logs = map_indexed(samples.len(), |i| -> Result<f64> {
        let lf = model.log_likelihood(&samples[i])?;
        let lr = ridge.log_value(&samples[i])?;
        if lr == f64::NEG_INFINITY {
            return Err(Error::DegenerateRidge(i));
        }
        if !lf.is_finite() && lf != f64::NEG_INFINITY {
            return Err(Error::NonFiniteSample {
                what: "log-likelihood",
                index: i,
            });
        }
        Ok(lf - lr)
    });
    let logs: Vec<f64> = logs.into_iter().collect::<Result<_>>()?;
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::ZeroWeights);
    }
    Ok(logs.iter().map(|l| (l - peak).exp()).collect())
}

/// Gaussian approximation at the posterior mode.
#[derive(Clone, Debug, Serialize)]
pub struct LaplaceApproximation {
    pub mode: DVector<f64>,
    pub covariance: SpdMatrix,
    pub converged: bool,
    pub gradient_norm_at_mode: f64,
    pub iterations: usize,
}

impl LaplaceApproximation {
    pub fn measure(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::from_covariance(self.mode.clone(), self.covariance.clone())
    }
}

#[derive(Clone, Debug)]
pub struct LaplaceOptions {
    pub max_iterations: usize,
    /// Stop when `‖∇J‖ ≤ tolerance · (1 + ‖x‖)`.
    pub tolerance: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions {
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

/// Minimizes `J(x) = ½‖x − m‖²_Γ − log f(x)` by a damped Newton-type method.
///
/// With a forward model the curvature is Gauss–Newton, `Γ + ∇Gᵀ Σ_obs⁻¹ ∇G`,
/// and that matrix at the mode gives the covariance. Otherwise BFGS drives the
/// search and the covariance comes from a central-difference Hessian of `∇J`
/// at the mode.
pub fn laplace_approximation(
    prior: &GaussianMeasure,
    model: &dyn LikelihoodModel,
    gauss_newton: Option<&ForwardSetup>,
    opts: &LaplaceOptions,
) -> Result<LaplaceApproximation> {
    let gamma = prior.precision();
    let m = prior.mean_vector();
    let d = m.len();
    let objective =
        |x: &DVector<f64>| -> Result<f64> { Ok(0.5 * gamma.quadratic_form(&(x - m)) - model.log_likelihood(x)?) };
    let gradient =
        |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(gamma.mul_vector(&(x - m)) - model.grad_log_likelihood(x)?) };

    let mut x = m.clone();
    let mut value = objective(&x)?;
    let mut grad = gradient(&x)?;
    let mut inverse_hessian = prior.covariance().matrix().clone();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if grad.norm() <= opts.tolerance * (1.0 + x.norm()) {
            converged = true;
            break;
        }
        iterations += 1;
        let direction = match gauss_newton {
            Some(setup) => {
                let curvature = SpdMatrix::new(gamma.matrix() + setup.gauss_newton(&x)?)?;
                -curvature.solve_vector(&grad)?
            }
            None => -(&inverse_hessian * &grad),
        };
        let slope = grad.dot(&direction);
        let (direction, slope) = if slope < 0.0 {
            (direction, slope)
        } else {
            let fallback = -prior.covariance().mul_vector(&grad);
            let s = grad.dot(&fallback);
            (fallback, s)
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &x + &direction * step;
            if let Ok(v) = objective(&candidate) {
                if v.is_finite() && v <= value + 1e-4 * step * slope {
                    accepted = Some((candidate, v));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            break;
        };
        let next_grad = gradient(&next)?;
        if gauss_newton.is_none() {
            let s = &next - &x;
            let y = &next_grad - &grad;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                let rho = 1.0 / sy;
                let id = DMatrix::<f64>::identity(d, d);
                let left = &id - &s * y.transpose() * rho;
                let right = &id - &y * s.transpose() * rho;
                inverse_hessian = &left * &inverse_hessian * &right + &s * s.transpose() * rho;
            }
        }
        x = next;
        value = next_value;
        grad = next_grad;
    }
    if !converged && grad.norm() <= opts.tolerance * (1.0 + x.norm()) {
        converged = true;
    }

    let precision = match gauss_newton {
        Some(setup) => gamma.matrix() + setup.gauss_newton(&x)?,
        None => finite_difference_hessian(&gradient, &x)?,
    };
    let covariance = match SpdMatrix::new(precision).and_then(|p| p.inverse()) {
        Ok(c) if c.cholesky().is_ok() => c,
        _ => SpdMatrix::new(inverse_hessian)?,
    };
    Ok(LaplaceApproximation {
        gradient_norm_at_mode: grad.norm(),
        mode: x,
        covariance,
        converged,
        iterations,
    })
}

fn finite_difference_hessian<F>(gradient: &F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (gradient(&xp)? - gradient(&xm)?) / (2.0 * step);
        h.set_column(j, &col);
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// One row of the quasi-optimality study.
#[derive(Clone, Debug, Serialize)]
pub struct QuasiOptimalityRow {
    pub estimate: usize,
    pub rank: usize,
    /// `R_Γ(P̂_r, H_ref) / min_P R_Γ(P, H_ref)`.
    pub optimality_ratio: f64,
    /// `R_Γ(P̂_r, Ĥ) / R_Γ(P̂_r, H_ref)`; below one means the estimate
    /// underestimates the error of its own projector.
    pub underestimation_ratio: f64,
}

/// Compares projectors built from estimates against a reference matrix.
pub fn quasi_optimality_check(
    h_ref: &SpdMatrix,
    estimates: &[DiagnosticMatrixEstimate],
    gamma: &SpdMatrix,
    ranks: &[usize],
) -> Result<Vec<QuasiOptimalityRow>> {
    let reference = generalized_eigendecomposition(h_ref, gamma)?;
    let scale = reference.tail_sum(0).max(f64::MIN_POSITIVE);
    let ratio = |num: f64, den: f64| {
        if den.abs() <= 1e-14 * scale {
            if num.abs() <= 1e-12 * scale {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        }
    };
    let mut rows = Vec::new();
    for (idx, est) in estimates.iter().enumerate() {
        let spec = generalized_eigendecomposition(&est.matrix, gamma)?;
        for &r in ranks {
            let p = build_projector(&spec, r)?;
            let against_ref = reconstruction_error(&p, h_ref, gamma)?;
            let against_self = reconstruction_error(&p, &est.matrix, gamma)?;
            rows.push(QuasiOptimalityRow {
                estimate: idx,
                rank: r,
                optimality_ratio: ratio(against_ref, reference.tail_sum(r)),
                underestimation_ratio: ratio(against_self, against_ref),
            });
        }
    }
    Ok(rows)
}
