use atc_core::coupling_opt::*;
use atc_core::domain_mesh::NormMode;
use atc_core::linalg::max_norm;
use atc_core::models::LatticeField;
use atc_core::AtcError;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn problem(r_core: i64) -> CouplingProblem {
    CouplingProblem::manufactured(r_core, 1.5, NormMode::Energy).unwrap()
}

/// Random state: displacements of size `amp`, multipliers of size 1.
fn random_state(p: &CouplingProblem, rng: &mut StdRng, amp: f64) -> SystemState {
    let l = p.layout();
    let v: Vec<f64> = (0..l.len())
        .map(|i| {
            if i < l.la() {
                rng.gen_range(-amp..amp)
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    p.from_vector(&v).unwrap()
}

fn width(p: &CouplingProblem) -> usize {
    (p.dec.r_a() - p.dec.r_core()) as usize
}

#[test]
fn gradient_matches_differences_of_lagrangian() {
    let p = problem(4);
    let mut rng = StdRng::seed_from_u64(1);
    for _ in 0..10 {
        let z = random_state(&p, &mut rng, 0.05);
        let g = p.lagrangian_gradient(&z).unwrap();
        let base = p.to_vector(&z);
        let step = 1e-6;
        for k in 0..base.len() {
            let at = |d: f64| {
                let mut v = base.clone();
                v[k] += d;
                p.lagrangian(&p.from_vector(&v).unwrap()).unwrap()
            };
            let fd = (at(step) - at(-step)) / (2.0 * step);
            assert!(
                (g[k] - fd).abs() <= 1e-6 * g[k].abs().max(1.0),
                "component {k}: {} vs {fd}",
                g[k]
            );
        }
    }
}

#[test]
fn hessian_vector_products_match_differences() {
    let p = problem(4);
    let mut rng = StdRng::seed_from_u64(2);
    for _ in 0..10 {
        let z = random_state(&p, &mut rng, 0.05);
        let kkt = p.lagrangian_hessian(&z, HessianMode::FullNewton).unwrap();
        let base = p.to_vector(&z);
        let dir: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hv = kkt.hessian.matvec(&dir);
        let step = 1e-6;
        let grad_at = |t: f64| {
            let v: Vec<f64> = base.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            p.lagrangian_gradient(&p.from_vector(&v).unwrap()).unwrap()
        };
        let (gp, gm) = (grad_at(step), grad_at(-step));
        let scale = max_norm(&hv);
        for i in 0..hv.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * step);
            assert!((hv[i] - fd).abs() <= 1e-5 * scale, "row {i}: {} vs {fd}", hv[i]);
        }
    }
}

#[test]
fn hessian_is_symmetric_with_exact_zero_blocks() {
    let p = problem(10);
    let mut rng = StdRng::seed_from_u64(3);
    for mode in [HessianMode::FullNewton, HessianMode::GaussNewton] {
        for _ in 0..10 {
            let z = random_state(&p, &mut rng, 0.05);
            let kkt = p.lagrangian_hessian(&z, mode).unwrap();
            assert!(kkt.hessian.asymmetry() <= 1e-12 * kkt.hessian.max_abs());
            assert_eq!(kkt.structural_zero_max(), 0.0);
            assert_eq!(kkt.block_max_abs(Block::Eta, Block::Eta), 0.0);
            assert_eq!(kkt.block_max_abs(Block::AtomisticAdjoint, Block::ContinuumAdjoint), 0.0);
        }
    }
}

#[test]
fn zero_multipliers_make_modes_agree() {
    let p = problem(10);
    let mut rng = StdRng::seed_from_u64(4);
    let mut z = random_state(&p, &mut rng, 0.05);
    z.lambda_a.iter_mut().for_each(|v| *v = 0.0);
    z.lambda_c.iter_mut().flatten().for_each(|v| *v = 0.0);
    let full = p.lagrangian_hessian(&z, HessianMode::FullNewton).unwrap();
    let gauss = p.lagrangian_hessian(&z, HessianMode::GaussNewton).unwrap();
    assert_eq!(full.hessian, gauss.hessian);
}

#[test]
fn adjoint_blocks_are_raw_residuals() {
    let p = problem(10);
    let mut rng = StdRng::seed_from_u64(5);
    let mut z = random_state(&p, &mut rng, 0.02);
    z.lambda_a.iter_mut().for_each(|v| *v = 0.0);
    z.lambda_c.iter_mut().flatten().for_each(|v| *v = 0.0);
    z.eta = [0.0; 2];
    let g = p.lagrangian_gradient(&z).unwrap();
    let l = p.layout();
    assert_eq!(g[l.range(Block::AtomisticAdjoint)], p.atomistic.residual(&z.u_a).unwrap()[..]);
    let rc = p.continuum.residual(&z.u_c).unwrap();
    let c = [rc[0].clone(), rc[1].clone()].concat();
    assert_eq!(g[l.range(Block::ContinuumAdjoint)], c[..]);
    let mz = p.mean_zero_constraints(&z.u_a, &z.u_c);
    assert_eq!(g[l.range(Block::Eta)], mz[..]);
}

#[test]
fn kkt_round_trip() {
    let p = problem(10);
    let mut rng = StdRng::seed_from_u64(6);
    let z = random_state(&p, &mut rng, 0.02);
    let kkt = p.lagrangian_hessian(&z, HessianMode::FullNewton).unwrap();
    let e: Vec<f64> = (0..p.layout().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rhs = kkt.hessian.matvec(&e);
    let s = solve_kkt_linear(&p, &kkt, &rhs).unwrap();
    assert!(s.relative_residual < 1e-10);
    let err = e.iter().zip(&s.solution).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-8 * max_norm(&e), "round trip error {err}");

    let zero = solve_kkt_linear(&p, &kkt, &vec![0.0; rhs.len()]).unwrap();
    assert!(zero.solution.iter().all(|&v| v == 0.0));
    assert!(matches!(solve_kkt_linear(&p, &kkt, &rhs[1..]), Err(AtcError::Usage(_))));
}

#[test]
fn objective_instances() {
    let p = problem(10);
    let mut z = p.zero_state();
    // u_c equal to Iu_a on the overlap
    for (i, v) in z.u_a.values.iter_mut().enumerate() {
        *v = ((i as f64) * 0.3).sin() * 0.01;
    }
    for side in 0..2 {
        let nodes = p.continuum.sides()[side].nodes().to_vec();
        for (j, &x) in nodes.iter().take(width(&p) + 1).enumerate() {
            z.u_c.sides[side][j] = z.u_a.get(p.dec.r_a(), x);
        }
    }
    assert_eq!(p.objective(&z.u_a, &z.u_c), 0.0);
    assert_eq!(p.mean_zero_constraints(&z.u_a, &z.u_c), [0.0, 0.0]);

    // unit strain on one overlap element
    let mut z = p.zero_state();
    for v in &mut z.u_c.sides[0][1..] {
        *v = 1.0;
    }
    assert_eq!(p.objective(&z.u_a, &z.u_c), 0.5);

    // constant offset of one on both components
    let mut z = p.zero_state();
    z.u_a.values.iter_mut().for_each(|v| *v = 1.0);
    let w = width(&p) as f64;
    assert_eq!(p.mean_zero_constraints(&z.u_a, &z.u_c), [w, w]);
}

#[test]
fn objective_and_constraints_match_brute_force() {
    let p = problem(10);
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..10 {
        let z = random_state(&p, &mut rng, 0.05);
        let interp = p.interpolate_atomistic(&z.u_a);
        let mut j = 0.0;
        let mut c = [0.0; 2];
        for side in 0..2 {
            let nodes = p.continuum.sides()[side].nodes();
            let ga = interp.element_gradients(side);
            for e in 0..width(&p) {
                let dx = (nodes[e + 1] - nodes[e]) as f64;
                let gc = (z.u_c.sides[side][e + 1] - z.u_c.sides[side][e]) / dx;
                j += 0.5 * (ga[e] - gc).powi(2) * dx.abs();
                let diff = |k: usize| interp.value_at(nodes[k] as f64).unwrap() - z.u_c.sides[side][k];
                c[side] += 0.5 * (diff(e) + diff(e + 1)) * dx.abs();
            }
        }
        assert!((p.objective(&z.u_a, &z.u_c) - j).abs() <= 1e-14 * j.max(1e-3));
        let mz = p.mean_zero_constraints(&z.u_a, &z.u_c);
        for s in 0..2 {
            assert!((mz[s] - c[s]).abs() <= 1e-14, "{} vs {}", mz[s], c[s]);
        }
    }
}

#[test]
fn shift_invariance_on_one_component() {
    let p = problem(10);
    let mut rng = StdRng::seed_from_u64(8);
    let z = random_state(&p, &mut rng, 0.05);
    let shift = 0.25;
    let mut y = z.clone();
    for xi in p.dec.r_core()..=p.dec.r_a() {
        y.u_a.values[(xi + p.dec.r_a()) as usize] += shift;
    }
    for v in &mut y.u_c.sides[0][..=width(&p)] {
        *v += shift;
    }
    assert!((p.objective(&y.u_a, &y.u_c) - p.objective(&z.u_a, &z.u_c)).abs() < 1e-15);
    // shift u_a alone: the positive-side constraint changes by shift·width
    let mut a = z.clone();
    for xi in p.dec.r_core()..=p.dec.r_a() {
        a.u_a.values[(xi + p.dec.r_a()) as usize] += shift;
    }
    let (before, after) = (
        p.mean_zero_constraints(&z.u_a, &z.u_c),
        p.mean_zero_constraints(&a.u_a, &a.u_c),
    );
    assert!((after[0] - before[0] - shift * width(&p) as f64).abs() < 1e-13);
    assert_eq!(after[1], before[1]);
}

#[test]
fn newton_converges_quadratically() {
    let p = problem(10);
    let (z, diag) = newton_solve(&p, p.zero_state(), &NewtonOptions::default()).unwrap();
    assert!(diag.final_residual() < 1e-10);
    assert_eq!(diag.iterations(), 6);
    assert!(diag.worst_linear_residual() < 1e-10);
    // quadratic window: the last three residuals above the roundoff floor
    let r: Vec<f64> = diag.residuals().into_iter().filter(|&v| v > 1e-12).collect();
    let n = r.len();
    for k in n - 3..n - 1 {
        assert!(r[k + 1] / (r[k] * r[k]) < 10.0, "{:?}", r);
    }

    // feasibility and stationarity of the converged state
    let g = p.lagrangian_gradient(&z).unwrap();
    assert!(max_norm(&g) < 1e-10);
    let mz = p.mean_zero_constraints(&z.u_a, &z.u_c);
    assert!(mz.iter().all(|c| c.abs() < 1e-10));

    // restarting at the solution takes no steps
    let (_, again) = newton_solve(&p, z, &NewtonOptions::default()).unwrap();
    assert_eq!(again.iterations(), 0);

    let csv = diag.to_csv();
    assert!(csv.starts_with("iter,residual,step_length,objective\n"));
    assert_eq!(csv.lines().count(), diag.history.len() + 1);
}

#[test]
fn gauss_newton_reaches_the_same_solution() {
    let p = problem(10);
    let full = newton_solve(&p, p.zero_state(), &NewtonOptions::default()).unwrap().0;
    let opts = NewtonOptions {
        hessian_mode: HessianMode::GaussNewton,
        ..NewtonOptions::default()
    };
    let gauss = newton_solve(&p, p.zero_state(), &opts).unwrap().0;
    let d = full
        .u_a
        .values
        .iter()
        .zip(&gauss.u_a.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(d < 1e-9, "{d}");
}

#[test]
fn iteration_limit_reports_history() {
    let p = problem(10);
    let opts = NewtonOptions {
        max_iterations: 2,
        ..NewtonOptions::default()
    };
    match newton_solve(&p, p.zero_state(), &opts) {
        Err(AtcError::NonConvergence { iterations, history }) => {
            assert_eq!(iterations, 2);
            assert_eq!(history.len(), 3);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
    let bad = NewtonOptions {
        backtrack: 1.5,
        ..NewtonOptions::default()
    };
    assert!(matches!(newton_solve(&p, p.zero_state(), &bad), Err(AtcError::Usage(_))));
}

#[test]
fn composite_solution_layout() {
    let p = problem(10);
    let (z, _) = newton_solve(&p, p.zero_state(), &NewtonOptions::default()).unwrap();
    let u = p.assemble_atc_solution(&z);
    let (r_a, r_c) = (p.dec.r_a(), p.dec.r_c());
    assert_eq!(u.sites(), -r_c..=r_c);
    for xi in -r_a..=r_a {
        assert_eq!(u.value(xi), z.u_a.get(r_a, xi));
    }
    assert_eq!(u.value(r_c), 0.0);
    assert_eq!(u.value(-r_c), 0.0);
    for side in 0..2 {
        let sign = if side == 0 { 1 } else { -1 };
        for x in (r_a + 1)..r_c {
            let expect = p.continuum.interpolate(&z.u_c, side, (sign * x) as f64).unwrap();
            assert!((u.value(sign * x) - expect).abs() < 1e-15);
        }
    }
}
