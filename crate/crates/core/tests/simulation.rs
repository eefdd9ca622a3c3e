use pathmed::inference::CiMethod;
use pathmed::montecarlo::{generate_dataset, run_study, SimulationDesign, SimulationError};

#[test]
fn generator_reproduces_design_moments() {
    let mut design = SimulationDesign::new(0.5, 0.3, 0.2, 1_000_000, 1, 17);
    design.sd_x = 2.0;
    design.sd_e2 = 0.5;
    design.sd_e1 = 1.5;
    let data = generate_dataset(&design, 0).unwrap();
    let col = |name: &str| data.column(name).unwrap();
    let (x, m, y) = (col("X"), col("M"), col("Y"));
    let n = x.len() as f64;
    let mean = |v: &nalgebra::DVector<f64>| v.sum() / n;
    let cov = |a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>| {
        let (ma, mb) = (mean(a), mean(b));
        a.iter().zip(b.iter()).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / (n - 1.0)
    };
    let vx = 4.0;
    let vm = 0.25 * vx + 0.25;
    let cxm = 0.5 * vx;
    let cxy = 0.2 * vx + 0.3 * cxm;
    let vy = 0.04 * vx + 0.09 * vm + 2.0 * 0.2 * 0.3 * cxm + 2.25;
    for (got, want) in [(cov(&x, &x), vx), (cov(&m, &m), vm), (cov(&x, &m), cxm), (cov(&x, &y), cxy), (cov(&y, &y), vy)] {
        assert!((got - want).abs() < 0.02 * want.abs().max(1.0), "{got} vs {want}");
    }
    assert!(mean(&x).abs() < 0.01);
}

#[test]
fn estimator_is_unbiased_and_sharpens_with_sample_size() {
    let small = run_study(&SimulationDesign::new(0.39, 0.39, 0.0, 25, 4000, 5)).unwrap();
    let large = run_study(&SimulationDesign::new(0.39, 0.39, 0.0, 1000, 4000, 5)).unwrap();
    let s = small.estimator("product").unwrap();
    let l = large.estimator("product").unwrap();
    // The product of two uncorrelated unbiased slopes is unbiased; allow
    // four Monte Carlo standard errors.
    for e in [s, l] {
        assert!(e.bias.abs() < 4.0 * e.empirical_sd / 4000f64.sqrt(), "{e:?}");
    }
    assert!(l.empirical_sd < 0.25 * s.empirical_sd);
}

#[test]
fn studies_are_reproducible_across_worker_counts() {
    let design = SimulationDesign::new(0.3, 0.3, 0.1, 60, 300, 8)
        .with_methods(&[CiMethod::Normal, CiMethod::ProductDistribution]);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_study(&design).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run_study(&design).unwrap());
    assert!(a.max_identity_error < 1e-10);
}

#[test]
fn design_documents_are_strict() {
    let ok: SimulationDesign =
        serde_json::from_str(r#"{"a":0.3,"b":0.3,"tau_prime":0,"n":50,"R":10,"methods":["normal","product"]}"#).unwrap();
    assert_eq!(ok.methods, vec![CiMethod::Normal, CiMethod::ProductDistribution]);
    assert_eq!(ok.seed, None);
    assert!(matches!(run_study(&ok), Err(SimulationError::MissingSeed)));
    assert!(serde_json::from_str::<SimulationDesign>(r#"{"a":0.3,"b":0.3,"tau_prime":0,"n":50,"R":10,"bogus":1}"#).is_err());
    let mut bad = SimulationDesign::new(0.3, 0.3, 0.0, 50, 10, 1);
    bad.sd_x = 0.0;
    assert!(matches!(run_study(&bad), Err(SimulationError::InvalidDesign(_))));
}
