use nalgebra::DMatrix;
use wavekit::laplacian::graph_laplacian;
use wavekit::lattice::{apply_scatterer, build_grid, Face, GridSpec, ScattererMask, Wall};
use wavekit::linalg::symmetric_eigenvalues;
use wavekit::Error;

fn dense(rows: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.concat())
}

fn neumann_path4() -> DMatrix<f64> {
    dense(&[&[1., -1., 0., 0.], &[-1., 2., -1., 0.], &[0., -1., 2., -1.], &[0., 0., -1., 1.]])
}

fn dirichlet_path4() -> DMatrix<f64> {
    dense(&[&[2., -1., 0., 0.], &[-1., 2., -1., 0.], &[0., -1., 2., -1.], &[0., 0., -1., 2.]])
}

#[test]
fn neumann_path_matches_published_laplacian() {
    let g = build_grid(&GridSpec::uniform(vec![4], 1.0, Face::Neumann).unwrap()).unwrap();
    assert!(g.self_loops().is_empty());
    assert_eq!(g.edges().len(), 3);
    assert_eq!(graph_laplacian(&g).dense(), neumann_path4());
}

#[test]
fn dirichlet_path_matches_published_laplacian() {
    let g = build_grid(&GridSpec::uniform(vec![4], 1.0, Face::Dirichlet).unwrap()).unwrap();
    assert_eq!(g.self_loops().len(), 2);
    assert!(g.self_loops().iter().all(|l| l.weight == 1.0));
    assert_eq!(graph_laplacian(&g).dense(), dirichlet_path4());
}

#[test]
fn periodic_triangle_annihilates_constants() {
    let g = build_grid(&GridSpec::uniform(vec![3], 1.0, Face::Periodic).unwrap()).unwrap();
    assert_eq!(g.edges().len(), 3);
    let l = graph_laplacian(&g).dense();
    for i in 0..3 {
        assert_eq!(l.row(i).sum(), 0.0);
    }
}

#[test]
fn invalid_specs_are_configuration_errors() {
    for spec in [
        GridSpec::uniform(vec![1], 1.0, Face::Dirichlet),
        GridSpec::uniform(vec![2], 1.0, Face::Periodic),
        GridSpec::uniform(vec![4], 0.0, Face::Neumann),
        GridSpec::uniform(vec![], 1.0, Face::Neumann),
        GridSpec::new(vec![4], 1.0, vec![[Face::Periodic, Face::Dirichlet]]),
    ] {
        let err = spec.unwrap_err();
        assert!(err.is_configuration(), "{err}");
    }
}

#[test]
fn dirichlet_hole_gets_corner_and_edge_loops() {
    let g = build_grid(&GridSpec::uniform(vec![7, 7], 1.0, Face::Neumann).unwrap()).unwrap();
    let mask = ScattererMask::cuboid(&[2, 2], &[4, 4], Wall::Dirichlet);
    let h = apply_scatterer(&g, &mask).unwrap();
    assert_eq!(h.num_vertices(), 49 - 9);
    let weight_at = |c: [usize; 2]| {
        let v = h.vertex_at(&c).unwrap();
        h.self_loops().iter().filter(|l| l.vertex == v).map(|l| l.weight).sum::<f64>()
    };
    // Rim vertices edge-adjacent to the hole.
    assert_eq!(weight_at([1, 3]), 1.0);
    assert_eq!(weight_at([3, 5]), 1.0);
    assert_eq!(weight_at([1, 2]), 1.0);
    // Diagonal neighbours of the hole touch no removed edge.
    assert_eq!(weight_at([1, 1]), 0.0);
    // Outer Neumann walls add nothing.
    assert_eq!(weight_at([0, 0]), 0.0);
}

#[test]
fn dirichlet_notch_corner_carries_weight_two() {
    // Removing (1,2) and (2,1) strips two edges from the concave corner (2,2).
    let g = build_grid(&GridSpec::uniform(vec![5, 5], 1.0, Face::Neumann).unwrap()).unwrap();
    let mask = ScattererMask::new([vec![1, 2], vec![2, 1]], Wall::Dirichlet);
    let h = apply_scatterer(&g, &mask).unwrap();
    let v = h.vertex_at(&[2, 2]).unwrap();
    let w: f64 = h.self_loops().iter().filter(|l| l.vertex == v).map(|l| l.weight).sum();
    assert_eq!(w, 2.0);
}

#[test]
fn dirichlet_degree_plus_loop_weight_is_constant() {
    let g = build_grid(&GridSpec::uniform(vec![7, 6], 1.0, Face::Dirichlet).unwrap()).unwrap();
    let h = apply_scatterer(&g, &ScattererMask::cuboid(&[2, 2], &[3, 3], Wall::Dirichlet)).unwrap();
    for graph in [&g, &h] {
        for v in 0..graph.num_vertices() {
            assert_eq!(graph.total_weight(v), 4.0, "vertex {v}");
        }
    }
}

#[test]
fn empty_mask_is_identity() {
    let g = build_grid(&GridSpec::uniform(vec![4, 3], 1.0, Face::Dirichlet).unwrap()).unwrap();
    let h = apply_scatterer(&g, &ScattererMask::new(Vec::<Vec<usize>>::new(), Wall::Dirichlet)).unwrap();
    assert_eq!(graph_laplacian(&g).dense(), graph_laplacian(&h).dense());
    assert_eq!(g.edge_list(), h.edge_list());
}

#[test]
fn neumann_hole_keeps_constant_kernel() {
    let g = build_grid(&GridSpec::uniform(vec![7, 7], 1.0, Face::Neumann).unwrap()).unwrap();
    let h = apply_scatterer(&g, &ScattererMask::cuboid(&[2, 2], &[4, 4], Wall::Neumann)).unwrap();
    assert!(h.self_loops().is_empty());
    let l = graph_laplacian(&h).dense();
    let ones = nalgebra::DVector::from_element(l.nrows(), 1.0);
    assert!((&l * ones).amax() < 1e-14);
    let ev = symmetric_eigenvalues(&l);
    assert!(ev[0].abs() < 1e-10);
    assert!(ev[1] > 1e-6, "exactly one zero eigenvalue");
}

#[test]
fn disconnecting_mask_is_a_topology_error() {
    let g = build_grid(&GridSpec::uniform(vec![5, 5], 1.0, Face::Neumann).unwrap()).unwrap();
    let wall = ScattererMask::cuboid(&[0, 2], &[4, 2], Wall::Dirichlet);
    assert!(matches!(apply_scatterer(&g, &wall), Err(Error::Topology(_))));
    let missing = ScattererMask::new([vec![9, 9]], Wall::Dirichlet);
    assert!(apply_scatterer(&g, &missing).is_err());
}

#[test]
fn edge_counts_follow_the_closed_forms() {
    let ext = vec![3, 4, 5];
    let periodic = build_grid(&GridSpec::uniform(ext.clone(), 1.0, Face::Periodic).unwrap()).unwrap();
    assert_eq!(periodic.edges().len(), 3 * 60);
    let neumann = build_grid(&GridSpec::uniform(ext, 1.0, Face::Neumann).unwrap()).unwrap();
    assert_eq!(neumann.edges().len(), 2 * 20 + 3 * 15 + 4 * 12);
}

#[test]
fn vertices_are_row_major_and_edges_lexicographic() {
    let g = build_grid(&GridSpec::uniform(vec![2, 3], 1.0, Face::Neumann).unwrap()).unwrap();
    assert_eq!(g.coordinate(0), &[0, 0]);
    assert_eq!(g.coordinate(1), &[0, 1]);
    assert_eq!(g.coordinate(3), &[1, 0]);
    assert_eq!(g.vertex_at(&[1, 2]), Some(5));
    assert!(g.edges().iter().all(|e| e.src < e.dst && e.weight > 0.0));
}

#[test]
fn edge_list_export_lists_loops() {
    let g = build_grid(&GridSpec::uniform(vec![3], 1.0, Face::Dirichlet).unwrap()).unwrap();
    let list = g.edge_list();
    assert_eq!(list.len(), 4);
    assert_eq!(list.iter().filter(|r| r.is_self_loop).count(), 2);
    assert!(list.iter().filter(|r| r.is_self_loop).all(|r| r.src == r.dst));
}

#[test]
fn side_lengths_account_for_wall_offsets() {
    let spec = GridSpec::new(vec![9, 8], 0.1, vec![[Face::Dirichlet; 2], [Face::Periodic; 2]]).unwrap();
    let s = spec.side_lengths();
    assert!((s[0] - 1.0).abs() < 1e-12);
    assert!((s[1] - 0.8).abs() < 1e-12);
}
