//! `check-analytic`: certificates against closed forms on the linear-Gaussian
//! problem.

use ridgecert::certify::{certified_bound, KlSamples};
use ridgecert::linalg::{build_projector, generalized_eigendecomposition, reconstruction_error, SpdMatrix};
use ridgecert::model::analytic_oracle;
use ridgecert::ridge::{make_ridge, sup_ratio_gaussian, Profile};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::Failure;

#[derive(Serialize)]
struct Check {
    name: String,
    passed: bool,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    limit: f64,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            passed: value <= limit,
            value,
            lower: None,
            limit,
        }
    }

    fn within(name: impl Into<String>, value: f64, lower: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            passed: value >= lower && value <= limit,
            value,
            lower: Some(lower),
            limit,
        }
    }
}

/// Largest eigenvalue of `A` after rescaling for the tightness check.
const SMALL_ALPHA: f64 = 0.1;

pub fn check_analytic(cfg: &RunConfig, as_json: bool) -> Result<(), Failure> {
    if cfg.problem.kind != "analytic" {
        return Err(Failure::Usage(
            "check-analytic needs problem.kind = \"analytic\"".into(),
        ));
    }
    let a = cfg.analytic_matrix()?;
    let d = a.dim();
    let mut problem = ridgecert::problem::analytic_problem(&a)?;
    if let Some(k) = cfg.certificate.kappa {
        problem.kappa = k;
    }
    let kappa = problem.kappa;
    let gamma = problem.gamma().clone();
    let h = problem.oracle_h.clone().expect("analytic problem has an oracle");
    let spec = generalized_eigendecomposition(&h, &gamma)?;
    let exact = analytic_oracle(&a, 0)?;
    let scale = exact.eigenvalues[0].max(f64::MIN_POSITIVE);
    let mut checks = Vec::new();

    let worst = spec
        .eigenvalues()
        .iter()
        .zip(&exact.eigenvalues)
        .map(|(l, e)| (l - e).abs() / e.max(1e-12 * scale))
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "eigenvalues match alpha^2/(1+alpha) (relative error)",
        worst,
        1e-10,
    ));

    let kl_samples = KlSamples::draw(&problem, &cfg.kl_settings(), cfg.seed, &cfg.mcmc())?;
    for r in 0..=d {
        let oracle = analytic_oracle(&a, r)?;
        let bound = certified_bound(&spec, r, kappa)?;
        checks.push(Check::new(
            format!("r={r}: exact KL minus certified bound"),
            oracle.kl_exact - bound.bound,
            1e-12,
        ));

        let p = build_projector(&spec, r)?;
        let err = reconstruction_error(&p, &h, &gamma)?;
        checks.push(Check::new(
            format!("r={r}: |reconstruction error - tail sum|"),
            (err - spec.tail_sum(r)).abs(),
            1e-8 * scale.max(1.0),
        ));

        let sup = sup_ratio_gaussian(&a, &p)?;
        checks.push(Check::new(
            format!("r={r}: sup-ratio relative error"),
            (sup / oracle.sup_ratio - 1.0).abs(),
            1e-10,
        ));

        let ridge = make_ridge(
            p,
            problem.likelihood.clone(),
            &problem.prior,
            Profile::ExactGaussian { a: a.clone() },
            cfg.seed,
        )?;
        let kl = kl_samples.estimate(problem.likelihood.as_ref(), &ridge)?;
        checks.push(Check::new(
            format!("r={r}: estimated KL minus bound (limit 3 SE)"),
            kl.value - bound.bound,
            3.0 * kl.standard_error,
        ));
        if r == 1.min(d) {
            let tol = (3.0 * kl.standard_error).max(0.02 * oracle.kl_exact);
            checks.push(Check::new(
                format!("r={r}: |estimated KL - exact KL|"),
                (kl.value - oracle.kl_exact).abs(),
                tol,
            ));
        }
    }

    // In the small-α regime the bound is twice the exact KL up to O(α).
    if exact.alphas[0] > 0.0 {
        let small = SpdMatrix::new(a.matrix() * (SMALL_ALPHA / exact.alphas[0]))?;
        for r in 0..d {
            let oracle = analytic_oracle(&small, r)?;
            if oracle.kl_exact > 0.0 {
                let ratio = kappa * oracle.bound / oracle.kl_exact;
                checks.push(Check::within(
                    format!("r={r}: bound / exact KL with max alpha {SMALL_ALPHA}"),
                    ratio,
                    1.8,
                    2.3,
                ));
            }
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    if as_json {
        let body = json!({ "passed": passed, "kappa": kappa, "checks": checks });
        println!("{}", serde_json::to_string_pretty(&body).expect("json"));
    } else {
        for c in &checks {
            let range = match c.lower {
                Some(lo) => format!("range=[{lo}, {}]", c.limit),
                None => format!("limit={:.6e}", c.limit),
            };
            println!(
                "{}  {}  value={:.6e}  {range}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
            );
        }
        println!(
            "{}",
            if passed {
                "all checks passed"
            } else {
                "certificate check FAILED"
            }
        );
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
