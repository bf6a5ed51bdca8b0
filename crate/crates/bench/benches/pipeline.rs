use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cglab_core::coarsegrain::coarse_matrix;
use cglab_core::fem::SolveConfig;
use cglab_core::fieldgen::checkerboard;
use cglab_core::geometry::AdaptedGeometry;
use cglab_core::sobolev::{neg_sobolev_seminorm, NormConfig, RectGrid};

fn field_generation(c: &mut Criterion) {
    c.bench_function("checkerboard_81", |b| {
        b.iter(|| checkerboard(2, 81, 1.0, black_box(9.0), 0.5, 1).unwrap())
    });
    c.bench_function("checkerboard_243", |b| {
        b.iter(|| checkerboard(2, 243, 1.0, black_box(9.0), 0.5, 1).unwrap())
    });
}

fn coarse_graining(c: &mut Criterion) {
    let field = checkerboard(2, 27, 1.0, 9.0, 0.5, 1).unwrap();
    let geom = AdaptedGeometry::identity(2).unwrap();
    let cfg = SolveConfig::default();
    let cube1 = geom.cube(1, [0, 0]).unwrap();
    let cube2 = geom.cube(2, [0, 0]).unwrap();
    c.bench_function("coarse_matrix_3x3", |b| {
        b.iter(|| coarse_matrix(black_box(&field), &geom, &cube1, &cfg).unwrap())
    });
    c.bench_function("coarse_matrix_9x9", |b| {
        b.iter(|| coarse_matrix(black_box(&field), &geom, &cube2, &cfg).unwrap())
    });
}

fn negative_norm(c: &mut Criterion) {
    let grid = RectGrid::new(2, [27, 27], [1.0 / 27.0, 1.0 / 27.0]).unwrap();
    let values: Vec<f64> =
        (0..grid.len()).map(|i| ((i * 37) % 101) as f64 / 101.0 - 0.5).collect();
    let cfg = NormConfig::full(0.4).unwrap();
    c.bench_function("neg_sobolev_27x27", |b| {
        b.iter(|| neg_sobolev_seminorm(&grid, black_box(&values), &cfg).unwrap())
    });
}

criterion_group!(benches, field_generation, coarse_graining, negative_norm);
criterion_main!(benches);
