use atc_core::domain_mesh::*;
use atc_core::lattice_potential::LatticeModel;
use atc_core::AtcError;
use proptest::prelude::*;

fn build(r_core: i64, gamma: f64, norm: NormMode) -> (DomainDecomposition, GradedMesh) {
    let m = LatticeModel::reference();
    let dec = DomainDecomposition::from_core_radius(r_core, gamma, norm, &m).unwrap();
    let mesh = build_graded_mesh(&dec, gamma, norm);
    (dec, mesh)
}

#[test]
fn radii_instances() {
    assert_eq!(optimal_radii(10, 1.5, 1, NormMode::Energy).unwrap(), (20, 1789));
    assert_eq!(optimal_radii(10, 1.5, 1, NormMode::Uniform).unwrap(), (20, 148));
    assert!(matches!(
        optimal_radii(10, 0.5, 1, NormMode::Energy),
        Err(AtcError::IllPosed(_))
    ));
}

#[test]
fn mesh_size_instances() {
    assert_eq!(mesh_size(20.0, 20, 1.5, 1, NormMode::Energy), 1);
    assert_eq!(mesh_size(40.0, 20, 1.5, 1, NormMode::Energy), 3);
    assert_eq!(mesh_size(100.0, 20, 1.5, 1, NormMode::Energy), 14);
}

/// Radii, node counts and DoF from an independent replay of the recursion.
#[test]
fn replayed_sweep_meshes() {
    let expected = [
        (4, 8, 182, 47, 45),
        (10, 20, 1789, 115, 113),
        (20, 40, 10120, 227, 225),
        (40, 80, 57244, 449, 447),
        (80, 160, 323818, 887, 885),
        (160, 320, 1831787, 1767, 1765),
    ];
    for (r_core, r_a, r_c, nodes, dof) in expected {
        let (dec, mesh) = build(r_core, 1.5, NormMode::Energy);
        assert_eq!((dec.r_a(), dec.r_c()), (r_a, r_c), "r_core = {r_core}");
        assert_eq!(mesh.nodes().len(), nodes, "r_core = {r_core}");
        assert_eq!(count_dof(&dec, &mesh), dof, "r_core = {r_core}");
    }
}

#[test]
fn first_coarse_node_and_ends() {
    let (_, mesh) = build(10, 1.5, NormMode::Energy);
    let n = mesh.nodes();
    let i = n.iter().position(|&x| x == 20).unwrap();
    assert_eq!(n[i + 1], 21);
    assert_eq!((n[0], *n.last().unwrap()), (-1789, 1789));
}

#[test]
fn dof_grows_linearly() {
    let sweep = [10i64, 20, 40, 80, 160];
    let pts: Vec<(f64, f64)> = sweep
        .iter()
        .map(|&r| {
            let (dec, mesh) = build(r, 1.5, NormMode::Energy);
            ((dec.r_a() as f64).ln(), (count_dof(&dec, &mesh) as f64).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((0.9..=1.3).contains(&slope), "slope {slope}");

    let dof = |r| {
        let (dec, mesh) = build(r, 1.5, NormMode::Energy);
        count_dof(&dec, &mesh) as f64
    };
    let ratio = dof(20) / dof(10);
    assert!((1.9..=2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn degenerate_mesh_counts_only_lattice_sites() {
    let m = LatticeModel::reference();
    let dec = DomainDecomposition::new(10, 20, 21, &m).unwrap();
    let mesh = build_graded_mesh(&dec, 1.5, NormMode::Energy);
    assert_eq!(count_dof(&dec, &mesh), 41);
}

#[test]
fn inadmissible_overlap_is_rejected() {
    let m = LatticeModel::reference();
    assert!(DomainDecomposition::from_core_radius(4, 1.5, NormMode::Energy, &m).is_ok());
    assert!(matches!(
        DomainDecomposition::from_core_radius(3, 1.5, NormMode::Energy, &m),
        Err(AtcError::Usage(_))
    ));
}

#[test]
fn dump_round_trip() {
    let (_, mesh) = build(10, 1.5, NormMode::Uniform);
    assert_eq!(GradedMesh::parse_dump(&mesh.dump()).unwrap(), mesh);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn mesh_invariants(
        r_core in 4i64..60,
        gamma in 0.8f64..3.0,
        uniform in any::<bool>(),
    ) {
        let norm = if uniform { NormMode::Uniform } else { NormMode::Energy };
        let (dec, mesh) = build(r_core, gamma, norm);
        let n = mesh.nodes();
        prop_assert!(dec.r_core() < dec.r_a() && dec.r_a() < dec.r_c());
        prop_assert!(dec.r_a() - dec.r_core() >= 2 * dec.reach());
        prop_assert_eq!(n[0], -dec.r_c());
        prop_assert_eq!(*n.last().unwrap(), dec.r_c());
        prop_assert!(n.windows(2).all(|w| w[0] < w[1]));
        for xi in -dec.r_a()..=dec.r_a() {
            prop_assert!(n.binary_search(&xi).is_ok());
        }
        let mut mirrored: Vec<i64> = n.iter().map(|x| -x).collect();
        mirrored.reverse();
        prop_assert_eq!(&mirrored, &n.to_vec());
        // sizes non-decreasing outward, except the clamped last element
        let right = mesh.side(0, 1);
        let sizes: Vec<i64> = right.windows(2).map(|w| w[1] - w[0]).collect();
        if sizes.len() > 2 {
            prop_assert!(sizes[..sizes.len() - 1].windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn mesh_size_is_monotone(a in 20.0f64..5000.0, b in 20.0f64..5000.0, gamma in 0.8f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for norm in [NormMode::Energy, NormMode::Uniform] {
            prop_assert!(mesh_size(lo, 20, gamma, 1, norm) <= mesh_size(hi, 20, gamma, 1, norm));
            prop_assert_eq!(mesh_size(20.0, 20, gamma, 1, norm), 1);
        }
    }
}
