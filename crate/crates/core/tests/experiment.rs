use surfsense::experiment::{resolve_basis, run_phase_diagram, sparsity, write_outputs, ExperimentConfig};
use surfsense::sampling::{MeasureKind, SamplingMeasure};

fn run(config: &ExperimentConfig) -> surfsense::experiment::PhaseDiagram {
    let (profile, basis) = resolve_basis(config).unwrap();
    let measure = SamplingMeasure::new(&profile, config.measure).unwrap();
    run_phase_diagram(config, &basis, &measure).unwrap()
}

#[test]
fn square_volume_system_recovers_one_sparse_signals() {
    let config = ExperimentConfig {
        measure: MeasureKind::Volume,
        m_grid: Some(vec![400]),
        s_grid: Some(vec![1.0 / 400.0]),
        trials: 5,
        ..Default::default()
    };
    let d = run(&config);
    assert_eq!(d.s_value(0, 0), 1);
    assert_eq!(d.rate(0, 0), 1.0);
}

#[test]
fn ten_samples_cannot_recover_ten_sparse_signals() {
    let config = ExperimentConfig {
        measure: MeasureKind::Preconditioned,
        m_grid: Some(vec![10]),
        s_grid: Some(vec![1.0]),
        trials: 5,
        ..Default::default()
    };
    let d = run(&config);
    assert_eq!(d.s_value(0, 0), 10);
    assert_eq!(d.rate(0, 0), 0.0);
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let config = ExperimentConfig {
        bandlimit: Some(5),
        m_grid: Some(vec![5, 10, 15, 20, 25]),
        s_grid: Some(vec![0.2, 0.4, 0.6]),
        trials: 4,
        seed: 12,
        ..Default::default()
    };
    let in_pool = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run(&config))
    };
    let one = in_pool(1);
    assert_eq!(one, in_pool(4));
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_outputs(&config, &one, &a).unwrap();
    write_outputs(&config, &in_pool(3), &b).unwrap();
    for f in ["phase.csv", "phase.pgm"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn rates_stay_in_range_and_cells_match_the_grid() {
    let config = ExperimentConfig {
        bandlimit: Some(4),
        measure: MeasureKind::Uniform,
        m_grid: Some(vec![2, 6, 10, 16]),
        s_grid: Some(vec![0.1, 0.5, 0.9]),
        trials: 3,
        ..Default::default()
    };
    let d = run(&config);
    assert_eq!(d.successes.len() * d.successes[0].len(), 12);
    for si in 0..3 {
        for mi in 0..4 {
            let r = d.rate(si, mi);
            assert!((0.0..=1.0).contains(&r));
            assert!(d.s_value(si, mi) <= d.m_values[mi]);
        }
    }
    assert_eq!(sparsity(16, 0.9), 14);
}

#[test]
fn surface_profiles_run_through_a_stored_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let profile_path = dir.path().join("bump.json");
    std::fs::write(&profile_path, r#"{"builtin": "bumped_sphere", "epsilon": 0.2}"#).unwrap();
    let profile = surfsense::surface::SurfaceProfile::from_json_file(&profile_path).unwrap();
    let table = surfsense::surface::build_spectrum(&profile, 25, 1000).unwrap();
    table.save(dir.path(), "spec").unwrap();
    let config = ExperimentConfig {
        surface: profile_path.to_string_lossy().into_owned(),
        modes: Some(25),
        spectrum: Some(dir.path().join("spec.json")),
        m_grid: Some(vec![25]),
        s_grid: Some(vec![0.04, 0.2]),
        trials: 2,
        ..Default::default()
    };
    let d = run(&config);
    assert_eq!(d.basis_size, 25);
    assert_eq!(d.rate(0, 0), 1.0);
    // the sphere takes a bandlimit, not a mode count
    let bad = ExperimentConfig { modes: Some(25), ..Default::default() };
    assert!(resolve_basis(&bad).is_err());
}
