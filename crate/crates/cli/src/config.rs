//! Run configuration: a sectioned TOML file plus command-line overrides.

use std::path::PathBuf;

use ridgecert::certify::{CompareSettings, KlSettings, Method, NormalizerStrategy, ProfileChoice};
use ridgecert::elliptic::{evenly_spaced_sensors, EllipticConfig};
use ridgecert::linalg::SpdMatrix;
use ridgecert::nalgebra::{DMatrix, DVector};
use ridgecert::pipeline::{IdealSettings, IterativeSettings};
use ridgecert::problem::{analytic_problem, elliptic_inverse_problem, InverseProblem, McmcSettings, SampleSource};
use serde::{Deserialize, Serialize};

/// Schema printed by `--help`.
pub const SCHEMA: &str = "\
CONFIG FILE (TOML; every key optional, unknown keys rejected)

  seed = 2024                      root seed for all randomness
  methods = [\"certified_posterior\"] certified_{posterior,prior,laplace},
                                   lis_{posterior,prior,laplace}, as_prior, prior_based
  profiles = [\"monte_carlo(10)\"]   monte_carlo(M) | prior_mean
  ranks = [1, 2]                   ranks for compare

  [problem]
  kind = \"analytic\"               analytic | elliptic
  a_diag = [2.0, 1.0, 0.5]         analytic: diagonal of A (used when a_rows is absent)
  a_rows = [[...], ...]            analytic: full symmetric PSD A

  [grid]
  n = 128                          elliptic: number of cells

  [sensors]
  count = 7                        elliptic: evenly spaced sensors at k/(count+1)
  positions = [...]                elliptic: explicit positions in (0, 1), overrides count

  [noise]
  snr = 20.0                       elliptic: noise sigma = RMS(G(truth)) / snr

  [prior]
  kappa_sde = 1.35                 elliptic: SPDE reaction coefficient
  delta = 0.01                     elliptic: SPDE diffusion coefficient

  [algorithm]
  epsilon = 0.1                    target KL tolerance for the rank rule
  k = 500                          samples per diagnostic-matrix estimate
  m = 10                           anchor samples of the ridge profile
  l = 4                            iterations (iterate)
  r_max = 30                       rank cap (iterate)
  sample_source = \"posterior_mcmc\" posterior_mcmc | prior | laplace (reduce)
  early_stop = false               stop iterate when successive projectors agree

  [mcmc]
  step_size = 0.5                  initial pCN step in (0, 1]
  thinning = 5
  burn_in_fraction = 0.2           burn-in length relative to the retained chain
  target_acceptance = 0.3
  laplace_reference = true         pCN around the Laplace approximation

  [kl]
  enabled = true                   estimate KL in reduce/iterate
  posterior_samples = 20000
  prior_samples = 20000
  normalizer = \"prior_samples\"    prior_samples | posterior_ratio

  [spectrum]
  oracle = false                   use the exact H for certified_posterior (analytic)

  [certificate]
  kappa = 1.0                      override the prior's certificate constant

  [output]
  dir = \"out\"                     overridden by --out
";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub methods: Vec<String>,
    pub profiles: Vec<String>,
    pub ranks: Vec<usize>,
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub sensors: SensorSection,
    pub noise: NoiseSection,
    pub prior: PriorSection,
    pub algorithm: AlgorithmSection,
    pub mcmc: McmcSection,
    pub kl: KlSection,
    pub spectrum: SpectrumSection,
    pub certificate: CertificateSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            methods: vec!["certified_posterior".into()],
            profiles: vec!["monte_carlo(10)".into()],
            ranks: vec![1, 2],
            problem: ProblemSection::default(),
            grid: GridSection::default(),
            sensors: SensorSection::default(),
            noise: NoiseSection::default(),
            prior: PriorSection::default(),
            algorithm: AlgorithmSection::default(),
            mcmc: McmcSection::default(),
            kl: KlSection::default(),
            spectrum: SpectrumSection::default(),
            certificate: CertificateSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub kind: String,
    pub a_diag: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_rows: Option<Vec<Vec<f64>>>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            kind: "analytic".into(),
            a_diag: vec![2.0, 1.0, 0.5],
            a_rows: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 128 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSection {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection {
            count: 7,
            positions: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub snr: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { snr: 20.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub kappa_sde: f64,
    pub delta: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let e = EllipticConfig::default();
        PriorSection {
            kappa_sde: e.kappa_sde,
            delta: e.delta,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub epsilon: f64,
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub r_max: usize,
    pub sample_source: String,
    pub early_stop: bool,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            epsilon: 0.1,
            k: 500,
            m: 10,
            l: 4,
            r_max: 30,
            sample_source: "posterior_mcmc".into(),
            early_stop: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub step_size: f64,
    pub thinning: usize,
    pub burn_in_fraction: f64,
    pub target_acceptance: f64,
    pub laplace_reference: bool,
}

impl Default for McmcSection {
    fn default() -> Self {
        let m = McmcSettings::default();
        McmcSection {
            step_size: m.step_size,
            thinning: m.thinning,
            burn_in_fraction: m.burn_in_fraction,
            target_acceptance: m.target_acceptance,
            laplace_reference: m.laplace_reference,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct KlSection {
    pub enabled: bool,
    pub posterior_samples: usize,
    pub prior_samples: usize,
    pub normalizer: String,
}

impl Default for KlSection {
    fn default() -> Self {
        let k = KlSettings::default();
        KlSection {
            enabled: true,
            posterior_samples: k.posterior_samples,
            prior_samples: k.prior_samples,
            normalizer: "prior_samples".into(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub oracle: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CertificateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

/// Configuration problems, reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl RunConfig {
    /// Parses a config file body; errors name the offending line.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(l) => bad(format!("{origin}:{l}: {}", e.message())),
                None => bad(format!("{origin}: {}", e.message())),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every value that does not need the problem to be built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.problem.kind.as_str() {
            "analytic" | "elliptic" => {}
            other => return Err(bad(format!("problem.kind: unknown problem '{other}'"))),
        }
        for m in &self.methods {
            Method::parse(m).ok_or_else(|| bad(format!("methods: unknown method '{m}'")))?;
        }
        for p in &self.profiles {
            ProfileChoice::parse(p).ok_or_else(|| bad(format!("profiles: unknown profile '{p}'")))?;
        }
        SampleSource::parse(&self.algorithm.sample_source).ok_or_else(|| {
            bad(format!(
                "algorithm.sample_source: unknown source '{}'",
                self.algorithm.sample_source
            ))
        })?;
        NormalizerStrategy::parse(&self.kl.normalizer)
            .ok_or_else(|| bad(format!("kl.normalizer: unknown strategy '{}'", self.kl.normalizer)))?;
        if !(self.algorithm.epsilon >= 0.0) {
            return Err(bad("algorithm.epsilon must be nonnegative"));
        }
        if self.algorithm.k == 0 || self.algorithm.m == 0 {
            return Err(bad("algorithm.k and algorithm.m must be at least 1"));
        }
        if !(self.mcmc.step_size > 0.0 && self.mcmc.step_size <= 1.0) {
            return Err(bad("mcmc.step_size must lie in (0, 1]"));
        }
        if self.mcmc.thinning == 0 {
            return Err(bad("mcmc.thinning must be at least 1"));
        }
        if !(self.mcmc.burn_in_fraction >= 0.0) {
            return Err(bad("mcmc.burn_in_fraction must be nonnegative"));
        }
        if !(self.mcmc.target_acceptance > 0.0 && self.mcmc.target_acceptance < 1.0) {
            return Err(bad("mcmc.target_acceptance must lie in (0, 1)"));
        }
        if self.kl.posterior_samples == 0 {
            return Err(bad("kl.posterior_samples must be at least 1"));
        }
        if let Some(k) = self.certificate.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(bad("certificate.kappa must be positive"));
            }
        }
        if self.problem.kind == "analytic" && self.problem.a_rows.is_none() && self.problem.a_diag.is_empty() {
            return Err(bad("problem.a_diag must not be empty"));
        }
        Ok(())
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.iter().filter_map(|m| Method::parse(m)).collect()
    }

    pub fn profiles(&self) -> Vec<ProfileChoice> {
        self.profiles.iter().filter_map(|p| ProfileChoice::parse(p)).collect()
    }

    pub fn analytic_matrix(&self) -> Result<SpdMatrix, ConfigError> {
        let m = match &self.problem.a_rows {
            Some(rows) => {
                let d = rows.len();
                ridgecert::linalg::matrix_from_rows(rows, d).map_err(|e| bad(format!("problem.a_rows: {e}")))?
            }
            None => nalgebra_diag(&self.problem.a_diag),
        };
        let a = SpdMatrix::new(m).map_err(|e| bad(format!("problem.a: {e}")))?;
        a.require_positive_semidefinite()
            .map_err(|e| bad(format!("problem.a: {e}")))?;
        Ok(a)
    }

    pub fn elliptic_config(&self) -> EllipticConfig {
        EllipticConfig {
            cells: self.grid.n,
            sensors: self
                .sensors
                .positions
                .clone()
                .unwrap_or_else(|| evenly_spaced_sensors(self.sensors.count)),
            snr: self.noise.snr,
            kappa_sde: self.prior.kappa_sde,
            delta: self.prior.delta,
            seed: self.seed,
            ..EllipticConfig::default()
        }
    }

    /// Builds the configured inverse problem. Failures here are configuration
    /// errors (bad geometry, non-PSD matrices).
    pub fn build_problem(&self) -> Result<InverseProblem, ConfigError> {
        let mut problem = match self.problem.kind.as_str() {
            "analytic" => analytic_problem(&self.analytic_matrix()?).map_err(|e| bad(format!("problem: {e}")))?,
            _ => {
                elliptic_inverse_problem(&self.elliptic_config())
                    .map_err(|e| bad(format!("problem: {e}")))?
                    .1
            }
        };
        if let Some(k) = self.certificate.kappa {
            problem.kappa = k;
        }
        Ok(problem)
    }

    pub fn mcmc(&self) -> McmcSettings {
        McmcSettings {
            step_size: self.mcmc.step_size,
            thinning: self.mcmc.thinning,
            burn_in_fraction: self.mcmc.burn_in_fraction,
            target_acceptance: self.mcmc.target_acceptance,
            laplace_reference: self.mcmc.laplace_reference,
        }
    }

    pub fn kl_settings(&self) -> KlSettings {
        KlSettings {
            posterior_samples: self.kl.posterior_samples,
            prior_samples: self.kl.prior_samples,
            normalizer: NormalizerStrategy::parse(&self.kl.normalizer).unwrap_or(NormalizerStrategy::PriorSamples),
        }
    }

    fn optional_kl(&self) -> Option<KlSettings> {
        self.kl.enabled.then(|| self.kl_settings())
    }

    pub fn ideal_settings(&self) -> IdealSettings {
        IdealSettings {
            epsilon: self.algorithm.epsilon,
            k: self.algorithm.k,
            m: self.algorithm.m,
            seed: self.seed,
            sample_source: SampleSource::parse(&self.algorithm.sample_source).unwrap_or(SampleSource::PosteriorMcmc),
            mcmc: self.mcmc(),
            kl: self.optional_kl(),
        }
    }

    pub fn iterative_settings(&self) -> IterativeSettings {
        IterativeSettings {
            epsilon: self.algorithm.epsilon,
            k: self.algorithm.k,
            m: self.algorithm.m,
            l: self.algorithm.l,
            r_max: self.algorithm.r_max,
            seed: self.seed,
            early_stop: self.algorithm.early_stop,
            mcmc: self.mcmc(),
            kl: self.optional_kl(),
        }
    }

    pub fn compare_settings(&self) -> CompareSettings {
        CompareSettings {
            k: self.algorithm.k,
            seed: self.seed,
            mcmc: self.mcmc(),
            kl: self.kl_settings(),
        }
    }
}

fn nalgebra_diag(diag: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(diag))
}
