use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surfsense::sampling::{MeasureKind, SamplingMeasure};
use surfsense::sensing::{assemble, random_sparse, synthesize, Basis, Convention};
use surfsense::solver::{
    basis_pursuit, basis_pursuit_denoise, oracle_bp, recovered, BasisPursuit, SolverConfig,
};
use surfsense::surface::SurfaceProfile;
use surfsense::Error;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn real_instance(rng: &mut ChaCha8Rng, m: usize, n: usize, s: usize) -> (DMatrix<f64>, Vec<f64>) {
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let mut x = vec![0.0; n];
    for _ in 0..s {
        x[rng.gen_range(0..n)] = rng.gen::<f64>() * 4.0 - 2.0;
    }
    let y = (0..m).map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum()).collect();
    (a, y)
}

fn complexify(a: &DMatrix<f64>, y: &[f64]) -> (DMatrix<Complex64>, Vec<Complex64>) {
    (a.map(c), y.iter().map(|&v| c(v)).collect())
}

fn l1(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

#[test]
fn matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..100 {
        let (m, n) = (rng.gen_range(3..=6), rng.gen_range(7..=12));
        let s = rng.gen_range(1..=3);
        let (a, y) = real_instance(&mut rng, m, n, s);
        let oracle = oracle_bp(&a, &y, m).unwrap();
        let (ac, yc) = complexify(&a, &y);
        let bp = basis_pursuit(&ac, &yc, &SolverConfig::default()).unwrap();
        assert!(bp.converged);
        assert!((bp.objective - oracle.objective).abs() <= 1e-6, "{} vs {}", bp.objective, oracle.objective);
        if oracle.unique {
            for (u, v) in bp.coefficients.iter().zip(&oracle.coefficients) {
                assert!((u - c(*v)).norm() < 1e-6);
            }
        }
    }
}

#[test]
fn sparse_signals_are_recovered_from_preconditioned_samples() {
    let measure = SamplingMeasure::new(&SurfaceProfile::sphere(), MeasureKind::Preconditioned).unwrap();
    let samples = measure.draw(120, 17).unwrap();
    let p = assemble(&Basis::sphere(16).unwrap(), &measure, &samples, Convention::Orthonormal).unwrap();
    let solver = BasisPursuit::new(&p.matrix).unwrap();
    for seed in 0..5 {
        let sig = random_sparse(256, 8, seed).unwrap();
        let y = synthesize(&sig, &p).unwrap();
        let res = solver.solve(&y, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(recovered(&sig.coefficients, &res.coefficients, 1e-4).unwrap());
        let yn = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(res.residual <= 1e-9 * (1.0 + yn));
    }
}

#[test]
fn zero_data_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, _) = real_instance(&mut rng, 4, 9, 1);
    let res = basis_pursuit(&a.map(c), &[c(0.0); 4], &SolverConfig::default()).unwrap();
    assert!(res.coefficients.iter().all(|v| v.norm() == 0.0));
    assert!(res.converged);
}

#[test]
fn inconsistent_systems_are_reported() {
    // two identical rows with different data
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).map(c);
    match basis_pursuit(&a, &[c(1.0), c(2.0)], &SolverConfig::default()) {
        Err(Error::Infeasible(_)) => {}
        other => panic!("expected an infeasibility error, got {other:?}"),
    }
    let wide = DMatrix::<Complex64>::zeros(5, 3);
    assert!(BasisPursuit::new(&wide).is_err());
}

#[test]
fn objective_trace_settles_at_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, y) = real_instance(&mut rng, 6, 12, 2);
    let (ac, yc) = complexify(&a, &y);
    let cfg = SolverConfig { record_objective: true, ..Default::default() };
    let res = basis_pursuit(&ac, &yc, &cfg).unwrap();
    assert_eq!(res.objective_trace.len(), res.iterations);
    let oracle = oracle_bp(&a, &y, 6).unwrap();
    let mut best = f64::INFINITY;
    for &v in &res.objective_trace {
        let next = best.min(v);
        assert!(next <= best);
        best = next;
    }
    let tail = &res.objective_trace[res.objective_trace.len() - cfg.stagnation_window..];
    assert!(tail.iter().all(|&v| (v - oracle.objective).abs() < 1e-6 * (1.0 + oracle.objective)));
}

#[test]
fn denoising_tends_to_basis_pursuit() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (a, y) = real_instance(&mut rng, 6, 12, 2);
    let (ac, yc) = complexify(&a, &y);
    let oracle = oracle_bp(&a, &y, 6).unwrap();
    let res = basis_pursuit_denoise(&ac, &yc, 1e-7, &SolverConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.residual <= 1e-7 * 6f64.sqrt() * (1.0 + 1e-6) + 1e-8);
    // relaxing the constraint can only lower the optimum, by at most O(ε)
    assert!(res.objective <= oracle.objective + 1e-6);
    assert!(oracle.objective - res.objective < 1e-4);
}

#[test]
fn denoising_objective_decreases_with_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (a, y) = real_instance(&mut rng, 8, 16, 3);
    let (ac, yc) = complexify(&a, &y);
    let mut prev = f64::INFINITY;
    for eps in [0.0, 0.01, 0.05, 0.2] {
        let res = basis_pursuit_denoise(&ac, &yc, eps, &SolverConfig::default()).unwrap();
        assert!(res.objective <= prev + 1e-6);
        prev = res.objective;
    }
}

#[test]
fn denoising_error_scales_with_the_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (m, n) = (8, 16);
    for eps in [1e-4, 1e-3, 1e-2] {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let (a, _) = real_instance(&mut rng, m, n, 0);
            let mut x = vec![0.0; n];
            x[rng.gen_range(0..n)] = 1.0 + rng.gen::<f64>();
            let clean: Vec<f64> = (0..m).map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum()).collect();
            // noise of norm exactly ε√m
            let e: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() - 0.5).collect();
            let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            let y: Vec<f64> = clean.iter().zip(&e).map(|(c, v)| c + v * eps * (m as f64).sqrt() / en).collect();
            let (ac, yc) = complexify(&a, &y);
            let res = basis_pursuit_denoise(&ac, &yc, eps, &SolverConfig::default()).unwrap();
            assert!(res.converged);
            let err = res.coefficients.iter().zip(&x).map(|(u, v)| (u - c(*v)).norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(err / eps);
        }
        println!("ε = {eps:e}: max ‖c − c♯‖₂ / ε = {worst:.2}");
        assert!(worst < 50.0, "ε = {eps}: ratio {worst}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_and_phase_equivariance(seed in any::<u64>(), t in prop::sample::select(vec![0.1, 10.0]), angle in 0.0f64..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, y) = real_instance(&mut rng, 5, 10, 2);
        let (ac, yc) = complexify(&a, &y);
        prop_assume!(yc.iter().any(|v| v.norm() > 1e-3));
        let cfg = SolverConfig::default();
        let base = basis_pursuit(&ac, &yc, &cfg).unwrap();
        let rot = Complex64::from_polar(t, angle);
        let scaled: Vec<Complex64> = yc.iter().map(|v| v * rot).collect();
        let res = basis_pursuit(&ac, &scaled, &cfg).unwrap();
        let scale = l1(&base.coefficients) * t;
        prop_assert!((res.objective - base.objective * t).abs() <= 1e-7 * scale.max(1e-12));
        let oracle = oracle_bp(&a, &y, 5).unwrap();
        if oracle.unique {
            for (u, v) in res.coefficients.iter().zip(&base.coefficients) {
                prop_assert!((u - v * rot).norm() <= 1e-6 * scale.max(1e-12));
            }
        }
    }

    #[test]
    fn joint_scaling_keeps_the_minimizer(seed in any::<u64>(), t in prop::sample::select(vec![0.1, 10.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, y) = real_instance(&mut rng, 6, 12, 2);
        let oracle = oracle_bp(&a, &y, 6).unwrap();
        prop_assume!(oracle.unique && oracle.objective > 1e-3);
        let (ac, yc) = complexify(&a, &y);
        let cfg = SolverConfig::default();
        let base = basis_pursuit(&ac, &yc, &cfg).unwrap();
        let ta = ac.map(|v| v * t);
        let ty: Vec<Complex64> = yc.iter().map(|v| v * t).collect();
        let res = basis_pursuit(&ta, &ty, &cfg).unwrap();
        for (u, v) in res.coefficients.iter().zip(&base.coefficients) {
            prop_assert!((u - v).norm() <= 1e-7 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn solutions_are_feasible(seed in any::<u64>(), m in 2usize..8, extra in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = m + extra;
        let a = DMatrix::from_fn(m, n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let y: Vec<Complex64> = (0..m).map(|_| Complex64::new(rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let res = basis_pursuit(&a, &y, &SolverConfig::default()).unwrap();
        let yn = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(res.converged);
        prop_assert!(res.residual <= 1e-9 * (1.0 + yn));
        // no feasible point has smaller ℓ1 norm than the least-squares one minus slack
        let ls = a.clone().pseudo_inverse(1e-14).unwrap() * nalgebra::DVector::from_vec(y.clone());
        prop_assert!(res.objective <= l1(ls.as_slice()) + 1e-7);
    }

    #[test]
    fn recovery_criterion_is_scale_free(seed in any::<u64>(), t in 1e-3f64..1e3) {
        let sig = random_sparse(30, 4, seed).unwrap();
        let mut noisy = sig.coefficients.clone();
        noisy[sig.support[0]] += Complex64::new(1e-6, 0.0);
        let scaled: Vec<Complex64> = sig.coefficients.iter().map(|v| v * t).collect();
        let scaled_noisy: Vec<Complex64> = noisy.iter().map(|v| v * t).collect();
        prop_assert_eq!(
            recovered(&sig.coefficients, &noisy, 1e-4).unwrap(),
            recovered(&scaled, &scaled_noisy, 1e-4).unwrap()
        );
    }
}
