use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use proptest::prelude::*;

use super::*;
use crate::geometry::ChartManifold;

fn to_r3(x: &[f64]) -> Vector3<f64> {
    let (st, ct) = x[0].sin_cos();
    let (sp, cp) = x[1].sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

// Area of the spherical triangle with unit vertices a, b, c.
fn spherical_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let num = a.dot(&b.cross(c)).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

fn equator_point() -> DVector<f64> {
    DVector::from_column_slice(&[FRAC_PI_2, 0.0])
}

#[test]
fn flat_holonomy_is_trivial() {
    let m = ChartManifold::euclidean(2, 10.0);
    let s = sample_holonomy(&m, &DVector::zeros(2), 6, 1.0, 3).unwrap();
    assert_eq!(s.len(), 7);
    let id = DMatrix::<f64>::identity(2, 2);
    for a in &s.elements {
        assert!((a - &id).norm() <= 1e-8);
    }
}

#[test]
fn sphere_triangle_matches_area() {
    let m = ChartManifold::sphere(1.0);
    let s = sample_holonomy(&m, &equator_point(), 8, 0.5, 11).unwrap();
    for (a, origin) in s.elements.iter().zip(&s.origins).skip(1) {
        let ElementOrigin::Loop(info) = origin else {
            panic!("sampled element without loop");
        };
        let [p, q, r] = &info.vertices;
        let area = spherical_area(
            &to_r3(p.as_slice()),
            &to_r3(q.as_slice()),
            &to_r3(r.as_slice()),
        );
        assert!(area > 1e-3);
        assert!((rotation_angle(a).abs() - area).abs() <= 1e-3, "{} vs {area}", rotation_angle(a));
    }
}

#[test]
fn octant_triangle_is_quarter_turn() {
    let m = ChartManifold::sphere(1.0);
    // Octant turned so that its centroid sits on the x-axis, away from the chart poles.
    let rot = Rotation3::rotation_between(&Vector3::<f64>::new(1.0, 1.0, 1.0), &Vector3::x()).unwrap();
    let v: Vec<DVector<f64>> = [Vector3::x(), Vector3::y(), Vector3::z()]
        .iter()
        .map(|e| {
            let u: Vector3<f64> = rot * e;
            DVector::from_column_slice(&[u.z.acos(), u.y.atan2(u.x)])
        })
        .collect();
    let (a, _) = triangle_holonomy(&m, &v[0], &v[1], &v[2]).unwrap();
    assert!((rotation_angle(&a).abs() - FRAC_PI_2).abs() <= 1e-4);
}

#[test]
fn product_holonomy_is_blockwise() {
    let m = ChartManifold::sphere_times_line();
    let sphere = ChartManifold::sphere(1.0);
    let p = DVector::from_column_slice(&[FRAC_PI_2, 0.0, 0.0]);
    let s = sample_holonomy(&m, &p, 5, 0.5, 2).unwrap();
    for (a, origin) in s.elements.iter().zip(&s.origins).skip(1) {
        for i in 0..2 {
            assert!(a[(i, 2)].abs() <= 1e-4 && a[(2, i)].abs() <= 1e-4);
        }
        assert!((a[(2, 2)] - 1.0).abs() <= 1e-4);
        // Per-factor oracle: the sphere block is the holonomy of the projected triangle.
        let ElementOrigin::Loop(info) = origin else {
            panic!("sampled element without loop");
        };
        let proj = |x: &DVector<f64>| DVector::from_column_slice(&x.as_slice()[..2]);
        let [p, q, r] = &info.vertices;
        let (b, _) = triangle_holonomy(&sphere, &proj(p), &proj(q), &proj(r)).unwrap();
        assert!((a.view((0, 0), (2, 2)) - b).norm() <= 1e-6);
    }
}

#[test]
fn sampling_validates_arguments() {
    let m = ChartManifold::sphere(1.0);
    assert!(sample_holonomy(&m, &equator_point(), 0, 0.5, 1).is_err());
    assert!(sample_holonomy(&m, &equator_point(), 3, 0.0, 1).is_err());
    // Legs of length 20 leave the chart every time.
    assert!(matches!(
        sample_holonomy(&m, &equator_point(), 3, 20.0, 1),
        Err(crate::Error::Sampling(_))
    ));
}

#[test]
fn sampling_is_reproducible() {
    let m = ChartManifold::sphere(1.0);
    let a = sample_holonomy(&m, &equator_point(), 4, 0.5, 9).unwrap();
    let b = sample_holonomy(&m, &equator_point(), 4, 0.5, 9).unwrap();
    assert_eq!(a.elements, b.elements);
}

#[test]
fn closure_of_identity() {
    let s = HolonomySample::from_matrices(vec![DMatrix::identity(2, 2)]);
    let c = group_closure(&s, 3).unwrap();
    assert_eq!(c.len(), 1);
}

#[test]
fn closure_of_fifth_turn() {
    let s = HolonomySample::from_matrices(vec![rotation2(2.0 * PI / 5.0)]);
    let c = group_closure(&s, 5).unwrap();
    assert_eq!(c.len(), 5);
    assert!(c.orthogonality_residual() <= 1e-12);
    assert!(group_closure(&s, 0).is_err());
}

#[test]
fn closure_grows_with_depth() {
    let m = ChartManifold::sphere(1.0);
    let s = sample_holonomy(&m, &equator_point(), 2, 0.5, 4).unwrap();
    let mut last = s.len();
    for depth in 1..=4 {
        let c = group_closure(&s, depth).unwrap();
        assert!(c.len() >= last);
        assert!(c.orthogonality_residual() <= 1e-6);
        last = c.len();
    }
}

#[test]
fn closure_respects_limit() {
    let s = HolonomySample::from_matrices(vec![rotation2(1.0), rotation2(0.3)]);
    let c = group_closure_with_limit(&s, 20, 50).unwrap();
    assert!(c.truncated);
    assert!(c.len() <= 50);
}

#[test]
fn sphere_is_transitive_after_closure() {
    let m = ChartManifold::sphere(1.0);
    let s = sample_holonomy(&m, &equator_point(), 5, 1.0, 7).unwrap();
    let c = group_closure(&s, 4).unwrap();
    let t = transitivity_test(&c, 200, 0.1).unwrap();
    assert_eq!(t.verdict, Verdict::Transitive, "score {}", t.coverage_score);
    assert!(t.coverage_score <= 0.1);
}

#[test]
fn identity_sample_is_not_transitive() {
    let s = HolonomySample::from_matrices(vec![DMatrix::identity(2, 2)]);
    let t = transitivity_test(&s, 200, 0.1).unwrap();
    assert_eq!(t.verdict, Verdict::NonTransitive);
    assert!((t.coverage_score - FRAC_PI_2).abs() < 0.05);
}

#[test]
fn product_is_not_transitive() {
    let m = ChartManifold::sphere_times_line();
    let p = DVector::from_column_slice(&[FRAC_PI_2, 0.0, 0.0]);
    let s = sample_holonomy(&m, &p, 5, 0.5, 7).unwrap();
    let c = group_closure(&s, 3).unwrap();
    let t = transitivity_test(&c, 200, 0.1).unwrap();
    assert_eq!(t.verdict, Verdict::NonTransitive);
}

#[test]
fn transitivity_rejects_bad_input() {
    let empty = HolonomySample {
        base: DVector::zeros(2),
        frame: DMatrix::identity(2, 2),
        elements: vec![],
        origins: vec![],
        generation_depth: 1,
        truncated: false,
    };
    assert!(transitivity_test(&empty, 10, 0.1).is_err());
    let one = HolonomySample::from_matrices(vec![DMatrix::identity(1, 1)]);
    assert!(transitivity_test(&one, 10, 0.1).is_err());
}

#[test]
fn identity_splitting_is_one_fixed_block() {
    let s = HolonomySample::from_matrices(vec![DMatrix::identity(3, 3)]);
    let r = invariant_subspaces(&s, 1e-3).unwrap();
    assert_eq!(r.block_dims, vec![3]);
    assert_eq!(r.fixed_dim, 3);
    assert_eq!(r.fixed_block, Some(0));
}

#[test]
fn sphere_times_line_splits() {
    let m = ChartManifold::sphere_times_line();
    let p = DVector::from_column_slice(&[FRAC_PI_2, 0.0, 0.0]);
    let s = sample_holonomy(&m, &p, 5, 0.5, 1).unwrap();
    let r = invariant_subspaces(&s, 1e-3).unwrap();
    assert_eq!(r.block_dims, vec![2, 1]);
    assert_eq!(r.fixed_dim, 1);
    assert!(r.invariance_residual <= 1e-4);
}

#[test]
fn sphere_times_sphere_splits() {
    let m = ChartManifold::sphere_times_sphere();
    let p = DVector::from_column_slice(&[FRAC_PI_2, 0.0, FRAC_PI_2, 0.0]);
    let s = sample_holonomy(&m, &p, 5, 0.5, 1).unwrap();
    let r = invariant_subspaces(&s, 1e-3).unwrap();
    assert_eq!(r.block_dims, vec![2, 2]);
    assert_eq!(r.fixed_dim, 0);
    assert!(r.invariance_residual <= 1e-4);
    // Bases are orthonormal, mutually orthogonal and span the space.
    let all = DMatrix::from_columns(
        &r.subspace_bases
            .iter()
            .flat_map(|b| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    assert!((all.transpose() * &all - DMatrix::<f64>::identity(4, 4)).norm() <= 1e-9);
}

#[test]
fn irreducible_rotation_is_one_block() {
    let s = HolonomySample::cyclic_rotations(7);
    let r = invariant_subspaces(&s, 1e-3).unwrap();
    assert_eq!(r.block_dims, vec![2]);
    assert_eq!(r.fixed_dim, 0);
}

fn rot_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI..PI, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampled_elements_are_special_orthogonal(seed in 0u64..1000, scale in 0.2f64..0.6) {
        let m = ChartManifold::sphere(1.0);
        let s = sample_holonomy(&m, &equator_point(), 3, scale, seed).unwrap();
        prop_assert!(s.orthogonality_residual() <= 1e-6);
        prop_assert!(s.determinant_residual() <= 1e-6);
    }

    #[test]
    fn closure_keeps_transitivity(angles in rot_strategy(), depth in 1usize..4) {
        let s = HolonomySample::from_matrices(angles.iter().map(|a| rotation2(*a)).collect());
        let before = transitivity_test(&s, 100, 0.2).unwrap();
        let after = transitivity_test(&group_closure(&s, depth).unwrap(), 100, 0.2).unwrap();
        prop_assert!(after.coverage_score <= before.coverage_score + 1e-12);
        if before.verdict == Verdict::Transitive {
            prop_assert_eq!(after.verdict, Verdict::Transitive);
        }
    }

    #[test]
    fn blocks_are_invariant(a in -PI..PI, b in -PI..PI) {
        let mut m = DMatrix::<f64>::identity(4, 4);
        m.view_mut((0, 0), (2, 2)).copy_from(&rotation2(a));
        m.view_mut((2, 2), (2, 2)).copy_from(&rotation2(b));
        let s = HolonomySample::from_matrices(vec![m]);
        let r = invariant_subspaces(&s, 1e-3).unwrap();
        prop_assert!(r.invariance_residual <= 1e-3);
        prop_assert_eq!(r.dim(), 4);
    }
}

