use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use pmfocus::aberrations::WavefrontMap;
use pmfocus::beams::DonutBeam;
use pmfocus::focal::{plane_points, Axis, FocusingSetup};
use pmfocus::geometry::{angular_domain, MirrorGeometry};
use pmfocus::{Execution, QuadratureSpec};

fn plane(c: &mut Criterion) {
    let geom = MirrorGeometry::default();
    let beam = DonutBeam::at_excitation(4.7584, 1.0).unwrap();
    let domain = angular_domain(&geom).unwrap();
    let quad = QuadratureSpec::new(256, 128).unwrap();
    let setup = FocusingSetup::new(&geom, &beam, &WavefrontMap::zero(), &domain, &quad).unwrap();
    let pts = plane_points([0.0; 3], Axis::X, 300.0, Axis::Z, 300.0, 30.0).unwrap();

    let mut g = c.benchmark_group("focal_plane_21x21");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| black_box(setup.field_grid(black_box(&pts), exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, plane);
criterion_main!(benches);
