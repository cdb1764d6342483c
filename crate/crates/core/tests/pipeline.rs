use ridgecert::certify::KlSettings;
use ridgecert::linalg::{build_projector, generalized_eigendecomposition, minimal_rank, RankRProjector, SpdMatrix};
use ridgecert::parallel::with_workers;
use ridgecert::pipeline::{run_ideal, run_iterative, IdealSettings, IterativeSettings, REPORT_VERSION};
use ridgecert::problem::{analytic_problem, InverseProblem, McmcSettings, SampleSource};

fn problem() -> InverseProblem {
    analytic_problem(&SpdMatrix::from_diagonal(&[4.0, 1.5, 0.2, 0.05, 0.01]).unwrap()).unwrap()
}

fn iterative(l: usize) -> IterativeSettings {
    IterativeSettings {
        epsilon: 0.05,
        k: 400,
        m: 16,
        l,
        r_max: 5,
        seed: 12,
        early_stop: false,
        mcmc: McmcSettings::default(),
        kl: Some(KlSettings {
            posterior_samples: 5000,
            prior_samples: 5000,
            ..KlSettings::default()
        }),
    }
}

#[test]
fn iterative_run_recovers_the_oracle_rank_and_subspace() {
    let p = problem();
    let report = run_iterative(&p, &iterative(3)).unwrap();
    let spec = generalized_eigendecomposition(p.oracle_h.as_ref().unwrap(), p.gamma()).unwrap();
    let r = minimal_rank(&spec, 1.0, 0.05).unwrap();
    assert_eq!(report.final_rank, r);
    let oracle = build_projector(&spec, r).unwrap();
    let found = RankRProjector::from_document(&report.projector, p.gamma()).unwrap();
    assert!(oracle.distance(&found).unwrap() < 0.1);
    assert_eq!(report.iterations.len(), 4);
    for (l, it) in report.iterations.iter().enumerate() {
        assert_eq!(it.iteration, l);
        assert_eq!(it.subspace_distance.is_some(), l > 0);
        assert_eq!(it.chain.is_some(), l > 0);
        let kl = it.kl_estimate.as_ref().unwrap();
        assert!(kl.value <= it.tail_bound.bound + 3.0 * kl.standard_error);
    }
}

#[test]
fn report_serializes_with_its_configuration() {
    let report = run_iterative(&problem(), &iterative(2)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(json["report_version"], REPORT_VERSION);
    assert_eq!(json["algorithm"], "iterative");
    assert_eq!(json["config"]["l"], 2);
    assert_eq!(json["seeds"]["root"], 12);
    assert_eq!(json["iterations"].as_array().unwrap().len(), 3);
    let csv = report.eigenvalue_trajectories_csv();
    assert_eq!(csv.lines().next().unwrap(), "iteration,index,lambda");
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let p = problem();
    let one = with_workers(Some(1), || run_iterative(&p, &iterative(2)).unwrap().to_json().unwrap());
    let four = with_workers(Some(4), || run_iterative(&p, &iterative(2)).unwrap().to_json().unwrap());
    assert_eq!(one, four);
    let ideal = IdealSettings {
        epsilon: 0.05,
        k: 300,
        m: 8,
        seed: 2,
        sample_source: SampleSource::Laplace,
        mcmc: McmcSettings::default(),
        kl: None,
    };
    let one = with_workers(Some(1), || run_ideal(&p, &ideal).unwrap().to_json().unwrap());
    let three = with_workers(Some(3), || run_ideal(&p, &ideal).unwrap().to_json().unwrap());
    assert_eq!(one, three);
}

#[test]
fn invalid_settings_are_rejected() {
    let p = problem();
    let mut s = iterative(1);
    s.k = 0;
    assert!(run_iterative(&p, &s).is_err());
    let mut s = iterative(1);
    s.m = 0;
    assert!(run_iterative(&p, &s).is_err());
    let mut s = iterative(1);
    s.epsilon = f64::NAN;
    assert!(run_iterative(&p, &s).is_err());
}
