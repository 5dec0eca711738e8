use atc_core::domain_mesh::*;
use atc_core::lattice_potential::LatticeModel;
use atc_core::models::*;
use atc_core::oracle_error::*;
use proptest::prelude::*;

fn decomposition(r_core: i64, r_a: i64, r_c: i64) -> (LatticeModel, DomainDecomposition) {
    let m = LatticeModel::reference();
    let dec = DomainDecomposition::new(r_core, r_a, r_c, &m).unwrap();
    (m, dec)
}

fn field(first: i64, values: Vec<f64>) -> LatticeDisplacement {
    LatticeDisplacement { first, values }
}

#[test]
fn reference_solve_converges() {
    let (m, dec) = decomposition(10, 20, 400);
    let sol = solve_full_atomistic(&dec, 1.5, &m).unwrap();
    assert!(sol.residual < 1e-10);
    assert_eq!(sol.values.sites(), -400..=400);
    assert!(sol.iterations > 0);
}

#[test]
fn reference_approaches_exact_solution_as_domain_grows() {
    // compare on the common inner window |ξ| ≤ 100
    let exact = ExactSolution::new(1.5);
    let inner_error = |r_c: i64| {
        let (m, dec) = decomposition(10, 20, r_c);
        let sol = solve_full_atomistic(&dec, 1.5, &m).unwrap();
        let window = LatticeDisplacement::from_fn(-100..=100, |x| sol.values.value(x));
        let reference = LatticeDisplacement::from_fn(-100..=100, |x| exact.value(x));
        let opts = ErrorOptions {
            boundary_differences: false,
        };
        energy_seminorm_error(&window, &reference, opts).unwrap()
    };
    let (coarse, fine) = (inner_error(200), inner_error(1600));
    assert!(fine < coarse, "{fine} vs {coarse}");
}

#[test]
fn bound_is_finite_and_positive() {
    let m = LatticeModel::reference();
    let dec = DomainDecomposition::from_core_radius(10, 1.5, NormMode::Energy, &m).unwrap();
    let mesh = build_graded_mesh(&dec, 1.5, NormMode::Energy);
    for mode in [BoundMode::Exact, BoundMode::Asymptotic] {
        let b = conjectured_bound(1.5, &dec, &mesh, &m, mode).unwrap();
        assert!(b.far_field > 0.0 && b.continuum > 0.0);
        assert!(b.total().is_finite());
        assert!(b.total() >= b.far_field.max(b.continuum));
    }
}

#[test]
fn refining_the_mesh_shrinks_the_continuum_term() {
    let m = LatticeModel::reference();
    let dec = DomainDecomposition::from_core_radius(10, 1.5, NormMode::Energy, &m).unwrap();
    let mesh = build_graded_mesh(&dec, 1.5, NormMode::Energy);
    // bisect every element longer than one
    let mut refined = Vec::new();
    for w in mesh.nodes().windows(2) {
        refined.push(w[0]);
        if w[1] - w[0] > 1 {
            refined.push(w[0] + (w[1] - w[0]) / 2);
        }
    }
    refined.push(*mesh.nodes().last().unwrap());
    let fine = GradedMesh::from_nodes(refined).unwrap();
    let a = conjectured_bound(1.5, &dec, &mesh, &m, BoundMode::Exact).unwrap();
    let b = conjectured_bound(1.5, &dec, &fine, &m, BoundMode::Exact).unwrap();
    assert!(b.continuum < a.continuum);
    assert_eq!(a.far_field, b.far_field);
}

#[test]
fn enlarging_the_domain_shrinks_the_far_field_term() {
    let m = LatticeModel::reference();
    let mut last = f64::INFINITY;
    for r_c in [100, 200, 400, 800] {
        let dec = DomainDecomposition::new(10, 20, r_c, &m).unwrap();
        let mesh = build_graded_mesh(&dec, 1.5, NormMode::Energy);
        let b = conjectured_bound(1.5, &dec, &mesh, &m, BoundMode::Exact).unwrap();
        assert!(b.far_field < last);
        last = b.far_field;
    }
}

#[test]
fn far_field_tail_matches_long_sum() {
    // closed-form tail vs summing far beyond 2R_c
    let m = LatticeModel::reference();
    let dec = DomainDecomposition::new(10, 20, 300, &m).unwrap();
    let mesh = build_graded_mesh(&dec, 1.5, NormMode::Energy);
    let b = conjectured_bound(1.5, &dec, &mesh, &m, BoundMode::Exact).unwrap();
    let u = ExactSolution::new(1.5);
    let mut sum = 0.0;
    for xi in 301..2_000_000i64 {
        for rho in [-2i64, -1, 1, 2] {
            sum += (u.value(xi + rho) - u.value(xi)).powi(2);
        }
    }
    let long = (2.0 * sum).sqrt();
    assert!((b.far_field - long).abs() < 0.01 * long, "{} vs {long}", b.far_field);
}

#[test]
fn bound_rejects_divergent_tail() {
    let m = LatticeModel::reference();
    let dec = DomainDecomposition::new(10, 20, 100, &m).unwrap();
    let mesh = build_graded_mesh(&dec, 1.5, NormMode::Energy);
    assert!(conjectured_bound(0.5, &dec, &mesh, &m, BoundMode::Exact).is_err());
}

#[test]
fn closed_form_reference_is_accepted_for_any_support() {
    let u = LatticeDisplacement::from_fn(-50..=50, |x| exact_solution(x, 1.5));
    let e = energy_seminorm_error(&u, &ExactSolution::new(1.5), ErrorOptions::default()).unwrap();
    // only the boundary difference remains: (0 − ū(50)) − (ū(51) − ū(50))
    assert!((e - exact_solution(51, 1.5)).abs() < 1e-16);
}

proptest! {
    #[test]
    fn error_functionals_are_norms(
        a in prop::collection::vec(-1.0f64..1.0, 12),
        b in prop::collection::vec(-1.0f64..1.0, 12),
        c in prop::collection::vec(-1.0f64..1.0, 12),
        boundary in any::<bool>(),
    ) {
        let opts = ErrorOptions { boundary_differences: boundary };
        let (fa, fb, fc) = (field(-5, a.clone()), field(-5, b.clone()), field(-5, c));
        let l2 = |x: &LatticeDisplacement, y: &LatticeDisplacement| energy_seminorm_error(x, y, opts).unwrap();
        let linf = |x: &LatticeDisplacement, y: &LatticeDisplacement| max_norm_error(x, y, opts).unwrap();
        prop_assert!(l2(&fa, &fb) >= 0.0);
        prop_assert_eq!(l2(&fa, &fa), 0.0);
        prop_assert!((l2(&fa, &fb) - l2(&fb, &fa)).abs() < 1e-15);
        prop_assert!(l2(&fa, &fc) <= l2(&fa, &fb) + l2(&fb, &fc) + 1e-14);
        prop_assert!(linf(&fa, &fc) <= linf(&fa, &fb) + linf(&fb, &fc) + 1e-14);
        prop_assert!(linf(&fa, &fb) <= l2(&fa, &fb) + 1e-15);

        // independent sum over differences
        let last = if boundary { 12 } else { 11 };
        let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let brute: f64 = (0..last)
            .map(|i| ((at(&a, i + 1) - at(&a, i)) - (at(&b, i + 1) - at(&b, i))).powi(2))
            .sum::<f64>()
            .sqrt();
        prop_assert!((l2(&fa, &fb) - brute).abs() < 1e-14);
    }
}
