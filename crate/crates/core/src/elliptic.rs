//! One-dimensional elliptic inverse problem.
//!
//! The log-transmissivity `x` is piecewise constant on `n` cells of `[0, 1]`,
//! `T = exp(x)`, and the pressure solves `-(T p')' = q` with `p(0) = p(1) = 0`.
//! Nodal finite differences give a symmetric tridiagonal system; gradients use
//! the discrete adjoint, one extra tridiagonal solve per product.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;
use crate::model::{gaussian_noise_likelihood, ForwardModel, GaussianMeasure, GaussianNoiseLikelihood};
use crate::rng::{standard_normal_vector, streams, substream};

/// Parameters of the 1-D test problem.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticConfig {
    pub cells: usize,
    pub sensors: Vec<f64>,
    pub snr: f64,
    /// Reaction coefficient of the prior SPDE operator.
    pub kappa_sde: f64,
    /// Diffusion coefficient of the prior SPDE operator.
    pub delta: f64,
    /// Uniform source strength.
    pub source: f64,
    pub seed: u64,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        EllipticConfig {
            cells: 128,
            sensors: evenly_spaced_sensors(7),
            snr: 20.0,
            kappa_sde: 1.35,
            delta: 0.01,
            source: 1.0,
            seed: 2024,
        }
    }
}

/// `count` sensors at `k/(count+1)`.
pub fn evenly_spaced_sensors(count: usize) -> Vec<f64> {
    (1..=count).map(|k| k as f64 / (count + 1) as f64).collect()
}

/// Finite-difference forward map from log-transmissivity to sensor pressures.
#[derive(Clone, Debug)]
pub struct EllipticForward {
    cells: usize,
    /// Source at interior nodes `1..cells`.
    source: DVector<f64>,
    /// `(left node, weight of right node)` for each sensor.
    sensors: Vec<(usize, f64)>,
    positions: Vec<f64>,
}

impl EllipticForward {
    pub fn new(cells: usize, sensors: &[f64], source: impl Fn(f64) -> f64) -> Result<Self> {
        if cells < 8 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 8 cells, got {cells}"
            )));
        }
        let h = 1.0 / cells as f64;
        let mut located = Vec::with_capacity(sensors.len());
        for &s in sensors {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "sensor position {s} is not strictly inside (0, 1)"
                )));
            }
            let t = s / h;
            let node = (t.floor() as usize).min(cells - 1);
            located.push((node, t - node as f64));
        }
        let source = DVector::from_iterator(cells - 1, (1..cells).map(|j| source(j as f64 * h)));
        Ok(EllipticForward {
            cells,
            source,
            sensors: located,
            positions: sensors.to_vec(),
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn sensor_positions(&self) -> &[f64] {
        &self.positions
    }

    /// Nodal pressure including the two boundary zeros.
    pub fn pressure(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("elliptic input", self.cells, x.len())?;
        let t = transmissivity(x)?;
        let interior = self.solve(&t, &self.source);
        Ok(with_boundary(&interior))
    }

    /// Solves `K(T) u = rhs` on interior nodes by the Thomas algorithm.
    fn solve(&self, t: &[f64], rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.cells;
        let inv_h2 = (n * n) as f64;
        let m = n - 1;
        // Interior node j (1-based) touches cells j-1 and j.
        let diag = |j: usize| (t[j - 1] + t[j]) * inv_h2;
        let off = |j: usize| -t[j] * inv_h2; // couples nodes j and j+1
        let mut c_prime = vec![0.0; m];
        let mut d_prime = vec![0.0; m];
        let mut pivot = diag(1);
        assert!(pivot > 0.0, "singular tridiagonal system");
        c_prime[0] = off(1) / pivot;
        d_prime[0] = rhs[0] / pivot;
        for i in 1..m {
            let j = i + 1;
            pivot = diag(j) - off(j - 1) * c_prime[i - 1];
            assert!(pivot > 0.0, "singular tridiagonal system");
            c_prime[i] = if i + 1 < m { off(j) / pivot } else { 0.0 };
            d_prime[i] = (rhs[i] - off(j - 1) * d_prime[i - 1]) / pivot;
        }
        let mut u = DVector::zeros(m);
        u[m - 1] = d_prime[m - 1];
        for i in (0..m - 1).rev() {
            u[i] = d_prime[i] - c_prime[i] * u[i + 1];
        }
        u
    }

    fn observe(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.sensors.len(),
            self.sensors.iter().map(|&(k, w)| (1.0 - w) * p[k] + w * p[k + 1]),
        )
    }

    /// `Sᵀ w` restricted to interior nodes.
    fn observe_adjoint(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.cells + 1);
        for (&(k, t), &wi) in self.sensors.iter().zip(w.iter()) {
            full[k] += (1.0 - t) * wi;
            full[k + 1] += t * wi;
        }
        full.rows(1, self.cells - 1).into_owned()
    }

    fn adjoint_gradient(&self, t: &[f64], p: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.cells;
        let lambda = with_boundary(&self.solve(t, &self.observe_adjoint(w)));
        let inv_h2 = (n * n) as f64;
        DVector::from_iterator(
            n,
            (0..n).map(|i| -t[i] * (lambda[i + 1] - lambda[i]) * (p[i + 1] - p[i]) * inv_h2),
        )
    }
}

fn transmissivity(x: &DVector<f64>) -> Result<Vec<f64>> {
    let t: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    if t.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::NonFiniteForward);
    }
    Ok(t)
}

fn with_boundary(interior: &DVector<f64>) -> DVector<f64> {
    let m = interior.len();
    let mut p = DVector::zeros(m + 2);
    p.rows_mut(1, m).copy_from(interior);
    p
}

impl ForwardModel for EllipticForward {
    fn input_dim(&self) -> usize {
        self.cells
    }

    fn output_dim(&self) -> usize {
        self.sensors.len()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.observe(&self.pressure(x)?))
    }

    fn vjp(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.vjp_many(x, std::slice::from_ref(w))?.remove(0))
    }

    fn vjp_many(&self, x: &DVector<f64>, ws: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        check_dim("elliptic input", self.cells, x.len())?;
        let t = transmissivity(x)?;
        let p = with_boundary(&self.solve(&t, &self.source));
        ws.iter()
            .map(|w| {
                check_dim("vjp weight", self.sensors.len(), w.len())?;
                Ok(self.adjoint_gradient(&t, &p, w))
            })
            .collect()
    }
}

/// Prior precision `h·(δ L + κ² I)²` with `L` the Neumann Laplacian on cells:
/// the discretization of `(κ² − δ Δ) x = W` driven by white noise.
pub fn spde_precision(cells: usize, kappa_sde: f64, delta: f64) -> Result<SpdMatrix> {
    if !(kappa_sde > 0.0 && delta > 0.0) {
        return Err(Error::InvalidArgument(
            "prior.kappa_sde and prior.delta must be positive".into(),
        ));
    }
    let h = 1.0 / cells as f64;
    let inv_h2 = 1.0 / (h * h);
    let mut op = DMatrix::zeros(cells, cells);
    for i in 0..cells {
        let mut degree = 0.0;
        if i > 0 {
            op[(i, i - 1)] = -delta * inv_h2;
            degree += 1.0;
        }
        if i + 1 < cells {
            op[(i, i + 1)] = -delta * inv_h2;
            degree += 1.0;
        }
        op[(i, i)] = delta * inv_h2 * degree + kappa_sde * kappa_sde;
    }
    SpdMatrix::new(&op * &op * h)
}

/// The assembled test problem.
#[derive(Clone)]
pub struct EllipticProblem {
    pub forward: Arc<EllipticForward>,
    pub prior: GaussianMeasure,
    pub likelihood: Arc<GaussianNoiseLikelihood>,
    pub data: DVector<f64>,
    pub noise_sigma: f64,
    pub truth: DVector<f64>,
    pub config: EllipticConfig,
}

/// Builds the forward model, the SPDE prior and synthetic data from a seeded
/// prior draw, with noise level `σ = RMS(G(x_true)) / snr`.
pub fn elliptic_problem(config: &EllipticConfig) -> Result<EllipticProblem> {
    if !(config.snr > 0.0) {
        return Err(Error::InvalidArgument("noise.snr must be positive".into()));
    }
    let source = config.source;
    let forward = Arc::new(EllipticForward::new(config.cells, &config.sensors, |_| source)?);
    let precision = spde_precision(config.cells, config.kappa_sde, config.delta)?;
    let prior = GaussianMeasure::from_precision(DVector::zeros(config.cells), precision)?;

    let truth = prior.draw_with(&mut substream(config.seed, streams::TRUTH, 0));
    let clean = forward.evaluate(&truth)?;
    let rms = (clean.norm_squared() / clean.len() as f64).sqrt();
    let sigma = rms / config.snr;
    let noise = standard_normal_vector(&mut substream(config.seed, streams::NOISE, 0), clean.len());
    let data = &clean + noise * sigma;

    let m = clean.len();
    let noise_cov = SpdMatrix::new(DMatrix::identity(m, m) * (sigma * sigma))?;
    let likelihood = Arc::new(gaussian_noise_likelihood(forward.clone(), data.clone(), noise_cov)?);
    Ok(EllipticProblem {
        forward,
        prior,
        likelihood,
        data,
        noise_sigma: sigma,
        truth,
        config: config.clone(),
    })
}

impl EllipticProblem {
    /// CSV with header `sensor_pos,y`.
    pub fn data_csv(&self) -> String {
        let mut out = String::from("sensor_pos,y\n");
        for (s, y) in self.forward.sensor_positions().iter().zip(self.data.iter()) {
            out.push_str(&format!("{s},{y}\n"));
        }
        out
    }
}
