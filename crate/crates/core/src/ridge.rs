//! Ridge approximations of the likelihood.
//!
//! A ridge likelihood depends on `x` only through `P x`. The Monte Carlo
//! profile averages `f(P x + (I − P) Yᵢ)` over a fixed set of prior anchors
//! `Yᵢ`; the active-subspace profile averages `log f` over the same fibers
//! instead; the exact Gaussian profile evaluates the prior conditional
//! expectation in closed form for `f = exp(-½ xᵀ A x)` under `N(0, I)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{matrix_rows, RankRProjector, SpdMatrix};
use crate::model::{LikelihoodModel, PriorMeasure, SampleSet};
use crate::parallel::try_map_indexed;
use crate::rng::streams;

/// How the profile function is approximated.
#[derive(Clone, Debug)]
pub enum Profile {
    /// `(1/M) Σ f(P x + (I − P) Yᵢ)`.
    MonteCarlo { anchors: usize },
    /// `f(P x + (I − P) m)`.
    PriorMean,
    /// Closed-form conditional expectation for the quadratic likelihood.
    ExactGaussian { a: SpdMatrix },
    /// `exp((1/M) Σ log f(P x + (I − P) Yᵢ))`.
    ActiveSubspace { anchors: usize },
}

impl Profile {
    pub fn label(&self) -> String {
        match self {
            Profile::MonteCarlo { anchors } => format!("monte_carlo({anchors})"),
            Profile::PriorMean => "prior_mean".into(),
            Profile::ExactGaussian { .. } => "exact_gaussian".into(),
            Profile::ActiveSubspace { anchors } => format!("as_profile({anchors})"),
        }
    }

    fn anchor_count(&self) -> Option<usize> {
        match self {
            Profile::MonteCarlo { anchors } | Profile::ActiveSubspace { anchors } => Some(*anchors),
            _ => None,
        }
    }
}

/// `value = exp(log_value)`; the value may underflow, the log does not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidgeValue {
    pub value: f64,
    pub log_value: f64,
}

/// Precomputed pieces of the closed-form Gaussian conditional expectation.
#[derive(Clone, Debug)]
struct ExactProfile {
    /// Orthonormal basis of `Im(P)`.
    image: DMatrix<f64>,
    /// Schur complement `A_rr − A_r⊥ (I + A_⊥⊥)⁻¹ A_⊥r`.
    reduced: DMatrix<f64>,
    log_constant: f64,
}

impl ExactProfile {
    fn new(a: &SpdMatrix, p: &RankRProjector) -> Result<Self> {
        check_dim("exact profile", a.dim(), p.dim())?;
        a.require_positive_semidefinite()?;
        let gamma = p.gamma().matrix();
        let d = a.dim();
        if (gamma - DMatrix::<f64>::identity(d, d)).amax() > 1e-12 {
            return Err(Error::InvalidArgument(
                "exact Gaussian profile requires an orthogonal projector (identity metric)".into(),
            ));
        }
        let image = p.informed_basis().clone();
        let kernel = p.complement_basis()?;
        let a_rr = image.transpose() * a.matrix() * &image;
        let a_rk = image.transpose() * a.matrix() * &kernel;
        let shifted = SpdMatrix::new(
            DMatrix::identity(kernel.ncols(), kernel.ncols()) + kernel.transpose() * a.matrix() * &kernel,
        )?;
        let reduced = &a_rr - &a_rk * shifted.solve_matrix(&a_rk.transpose())?;
        let reduced = (&reduced + reduced.transpose()) * 0.5;
        Ok(ExactProfile {
            image,
            reduced,
            log_constant: -0.5 * shifted.log_determinant()?,
        })
    }

    fn log_value(&self, x: &DVector<f64>) -> f64 {
        let xr = self.image.tr_mul(x);
        self.log_constant - 0.5 * xr.dot(&(&self.reduced * &xr))
    }

    /// `log ∫ f dμ`, the normalizer shared with the original likelihood.
    fn log_normalizer(&self) -> f64 {
        let r = self.reduced.nrows();
        let m = DMatrix::identity(r, r) + &self.reduced;
        let logdet = SpdMatrix::new(m).and_then(|s| s.log_determinant()).unwrap_or(f64::NAN);
        self.log_constant - 0.5 * logdet
    }
}

/// The function `x ↦ F̂(P x)` together with its anchors.
#[derive(Clone)]
pub struct RidgeLikelihood {
    projector: RankRProjector,
    base: Arc<dyn LikelihoodModel>,
    profile: Profile,
    anchors: SampleSet,
    /// `(I − P) Yᵢ`.
    offsets: SampleSet,
    exact: Option<ExactProfile>,
}

/// Draws `count` anchors from the prior; reuse them across ranks and
/// iterations by passing them to [`ridge_with_anchors`].
pub fn draw_anchors(prior: &dyn PriorMeasure, count: usize, seed: u64) -> SampleSet {
    prior.sample(count, crate::rng::derive_seed(seed, streams::ANCHORS))
}

/// Builds a ridge likelihood, drawing fresh anchors from `prior` when the
/// profile needs them.
pub fn make_ridge(
    projector: RankRProjector,
    base: Arc<dyn LikelihoodModel>,
    prior: &dyn PriorMeasure,
    profile: Profile,
    seed: u64,
) -> Result<RidgeLikelihood> {
    let anchors = match profile.anchor_count() {
        Some(0) => {
            return Err(Error::InvalidArgument(
                "profile needs at least one anchor sample".into(),
            ))
        }
        Some(m) => draw_anchors(prior, m, seed),
        None => vec![prior.mean()],
    };
    ridge_with_anchors(projector, base, prior, profile, &anchors)
}

/// Builds a ridge likelihood from existing anchors. Monte Carlo and
/// active-subspace profiles use the first `M` of them; the prior-mean
/// profile ignores them and anchors at the prior mean.
pub fn ridge_with_anchors(
    projector: RankRProjector,
    base: Arc<dyn LikelihoodModel>,
    prior: &dyn PriorMeasure,
    profile: Profile,
    anchors: &[DVector<f64>],
) -> Result<RidgeLikelihood> {
    check_dim("ridge projector", base.dim(), projector.dim())?;
    let used: SampleSet = match profile.anchor_count() {
        Some(0) => {
            return Err(Error::InvalidArgument(
                "profile needs at least one anchor sample".into(),
            ))
        }
        Some(m) => {
            if anchors.len() < m {
                return Err(Error::InvalidArgument(format!(
                    "profile needs {m} anchors, {} supplied",
                    anchors.len()
                )));
            }
            anchors[..m].to_vec()
        }
        None => vec![prior.mean()],
    };
    for y in &used {
        check_dim("anchor", projector.dim(), y.len())?;
    }
    let exact = match &profile {
        Profile::ExactGaussian { a } => Some(ExactProfile::new(a, &projector)?),
        _ => None,
    };
    let offsets = used.iter().map(|y| projector.apply_complement(y)).collect();
    Ok(RidgeLikelihood {
        projector,
        base,
        profile,
        anchors: used,
        offsets,
        exact,
    })
}

impl RidgeLikelihood {
    pub fn projector(&self) -> &RankRProjector {
        &self.projector
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn anchors(&self) -> &[DVector<f64>] {
        &self.anchors
    }

    pub fn base(&self) -> &Arc<dyn LikelihoodModel> {
        &self.base
    }

    /// Same ridge evaluated through another likelihood object (for example
    /// an uncounted copy of the same model).
    pub fn with_base(&self, base: Arc<dyn LikelihoodModel>) -> RidgeLikelihood {
        RidgeLikelihood { base, ..self.clone() }
    }

    /// Number of base-likelihood evaluations per ridge evaluation.
    pub fn fiber_count(&self) -> usize {
        if self.exact.is_some() {
            0
        } else {
            self.offsets.len()
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<RidgeValue> {
        let log_value = self.log_value(x)?;
        Ok(RidgeValue {
            value: log_value.exp(),
            log_value,
        })
    }

    pub fn log_value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim("ridge input", self.projector.dim(), x.len())?;
        let px = self.projector.apply(x);
        self.log_value_projected(&px)
    }

    /// Evaluates at a point already in `Im(P)`.
    pub fn log_value_projected(&self, px: &DVector<f64>) -> Result<f64> {
        if let Some(exact) = &self.exact {
            return Ok(exact.log_value(px));
        }
        let mut logs = Vec::with_capacity(self.offsets.len());
        for offset in &self.offsets {
            let l = self.base.log_likelihood(&(px + offset))?;
            if l.is_nan() || l == f64::INFINITY {
                return Err(Error::NonFinite("ridge fiber evaluation".into()));
            }
            logs.push(l);
        }
        Ok(match self.profile {
            Profile::ActiveSubspace { .. } => logs.iter().sum::<f64>() / logs.len() as f64,
            _ => log_mean_exp(&logs),
        })
    }

    /// `log F̂` at every sample, fanned out over workers.
    pub fn log_values(&self, samples: &[DVector<f64>]) -> Result<Vec<f64>> {
        try_map_indexed(samples.len(), |i| self.log_value(&samples[i]))
    }

    /// `log ∫ F̂ dμ` in closed form, available for the exact Gaussian profile.
    pub fn exact_log_normalizer(&self) -> Option<f64> {
        self.exact.as_ref().map(|e| e.log_normalizer())
    }

    pub fn to_document(&self) -> RidgeDocument {
        RidgeDocument {
            profile: self.profile.label(),
            projector: self.projector.to_document(),
            anchors: matrix_rows(&DMatrix::from_fn(self.anchors.len(), self.projector.dim(), |i, j| {
                self.anchors[i][j]
            })),
        }
    }
}

/// Replayable JSON form of a ridge likelihood.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RidgeDocument {
    pub profile: String,
    pub projector: crate::linalg::SubspaceDocument,
    pub anchors: Vec<Vec<f64>>,
}

/// `log((1/n) Σ exp(vᵢ))` with a max shift.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - peak).exp()).sum();
    peak + (sum / values.len() as f64).ln()
}

/// Closed-form `E_μ(f | σ(P))(x)` for `μ = N(0, I)`, `f = exp(-½ xᵀ A x)` and
/// an orthogonal projector `P`.
///
/// With `U` an orthonormal basis of `Im(P)` and `W` one of `Ker(P)`, the value
/// is `det(I + Wᵀ A W)^{-1/2} exp(-½ (Uᵀx)ᵀ S (Uᵀx))` where `S` is the Schur
/// complement `UᵀAU − UᵀAW (I + WᵀAW)⁻¹ WᵀAU`. When `P` commutes with `A` this
/// reduces to `det(Σ_r⁻¹ Σ)^{1/2} exp(-½ xᵀ P A P x)`.
pub fn exact_cond_exp_gaussian(a: &SpdMatrix, p: &RankRProjector, x: &DVector<f64>) -> Result<f64> {
    check_dim("exact profile input", a.dim(), x.len())?;
    Ok(ExactProfile::new(a, p)?.log_value(x).exp())
}

/// `sup f / E_μ(f | σ(P)) = Π_{i>r} (1 + αᵢ)^{1/2}` for the optimal projector,
/// computed as `det(I + Wᵀ A W)^{1/2}` on the kernel of `P`.
pub fn sup_ratio_gaussian(a: &SpdMatrix, p: &RankRProjector) -> Result<f64> {
    Ok((-ExactProfile::new(a, p)?.log_constant).exp())
}
