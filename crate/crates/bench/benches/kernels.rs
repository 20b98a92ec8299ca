use criterion::{black_box, criterion_group, criterion_main, Criterion};
use geoaffine::affine::{kernel_distribution, metric_norm};
use geoaffine::geometry::{integrate_geodesic, parallel_transport};
use geoaffine::holonomy::{group_closure, sample_holonomy, transitivity_test};
use geoaffine::norms::{distance_to_euclidean, norm_distance, NormField};
use geoaffine::{ChartManifold, TangentVector};
use geoaffine_bench::{plane_linf, sphere_start};
use nalgebra::DVector;

fn geometry(c: &mut Criterion) {
    let m = ChartManifold::sphere(1.0);
    let v = sphere_start();
    c.bench_function("sphere geodesic 1024 steps", |b| {
        b.iter(|| integrate_geodesic(&m, black_box(&v), 1.5, 1024).unwrap())
    });
    let gamma = integrate_geodesic(&m, &v, 1.5, 64).unwrap();
    let w = TangentVector::from_slices(&[std::f64::consts::FRAC_PI_2, 0.0], &[0.3, -0.8]);
    c.bench_function("parallel transport 64 steps", |b| {
        b.iter(|| parallel_transport(&m, black_box(&gamma), &w).unwrap())
    });
}

fn holonomy(c: &mut Criterion) {
    let m = ChartManifold::sphere(1.0);
    let p = DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0]);
    c.bench_function("sample 5 loops", |b| b.iter(|| sample_holonomy(&m, &p, 5, 1.0, black_box(7)).unwrap()));
    let s = sample_holonomy(&m, &p, 5, 1.0, 7).unwrap();
    c.bench_function("closure depth 4 + transitivity", |b| {
        b.iter(|| transitivity_test(&group_closure(black_box(&s), 4).unwrap(), 200, 0.1).unwrap())
    });
}

fn norms(c: &mut Criterion) {
    c.bench_function("norm_distance 3d grid", |b| {
        b.iter(|| {
            let (q1, q2) = (NormField::l1(3, 720), NormField::lp(3, 3.0, 720));
            norm_distance(black_box(&q1), &q2).unwrap()
        })
    });
    let q = NormField::linf(2, 720);
    c.bench_function("euclidean fit 2d", |b| b.iter(|| distance_to_euclidean(black_box(&q)).unwrap()));
}

fn affine(c: &mut Criterion) {
    let o = plane_linf();
    let v = TangentVector::from_slices(&[0.0, 0.0], &[1.0, 0.4]);
    c.bench_function("metric differential", |b| b.iter(|| metric_norm(&o, black_box(&v)).unwrap()));
    let p = DVector::from_vec(vec![0.0, 0.0]);
    c.bench_function("kernel search 2d", |b| b.iter(|| kernel_distribution(&o, black_box(&p), 162, None).unwrap()));
}

criterion_group!(benches, geometry, holonomy, norms, affine);
criterion_main!(benches);
