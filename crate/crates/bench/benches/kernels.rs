//! Criterion benchmarks for the hot kernels: translation-operator
//! evaluation, forward/adjoint operator application, and image generation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num_complex::Complex64;
use refimg_core::imaging::{generate_image, SpectralWindow, VoxelGeometry};
use refimg_core::linalg::Component;
use refimg_core::pws::{select_order, translation_operator, PlaneWaveSpectrum, PwsOperator};
use refimg_core::solver::{build_regions, RegionSpec};
use refimg_core::specfun::sphere_quadrature;
use refimg_core::{wavenumber, Vec3};

const FREQUENCY_HZ: f64 = 8e9;
const REGION_RADIUS: f64 = 0.08;

fn probe_plane(n: usize) -> Vec<Vec3> {
    let span = 1.0;
    let step = span / (n - 1) as f64;
    let mut probes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            probes.push(Vec3::new(
                -0.5 * span + i as f64 * step,
                -0.5 * span + j as f64 * step,
                1.0,
            ));
        }
    }
    probes
}

fn operator() -> PwsOperator {
    let specs = [RegionSpec {
        center: Vec3::ZERO,
        radius: REGION_RADIUS,
        incident: false,
    }];
    let regions = build_regions(&specs, FREQUENCY_HZ, 2).unwrap();
    PwsOperator::new(regions, probe_plane(20), vec![Component::Y], FREQUENCY_HZ).unwrap()
}

fn unit_spectrum(op: &PwsOperator) -> PlaneWaveSpectrum {
    let mut s = PlaneWaveSpectrum::zero(op.regions[0].clone(), FREQUENCY_HZ);
    for v in s.samples.iter_mut() {
        *v = refimg_core::CVec3([Complex64::new(1.0, 0.0); 3]);
    }
    s.project_transverse();
    s
}

fn bench_translation(c: &mut Criterion) {
    let k = wavenumber(FREQUENCY_HZ);
    let order = select_order(k, 2.0 * REGION_RADIUS, 2);
    let grid = sphere_quadrature(order).unwrap();
    let x = Vec3::new(0.2, -0.3, 1.0);
    c.bench_function("translation_operator_8ghz", |b| {
        b.iter(|| translation_operator(order, k, x, &grid).unwrap())
    });
}

fn bench_forward_adjoint(c: &mut Criterion) {
    let op = operator();
    let spectrum = vec![unit_spectrum(&op)];
    let fields = op.forward(&spectrum).unwrap();
    c.bench_function("pws_forward_400_probes", |b| {
        b.iter(|| op.forward(&spectrum).unwrap())
    });
    c.bench_function("pws_adjoint_400_probes", |b| {
        b.iter_batched(|| fields.clone(), |f| op.adjoint(&f).unwrap(), BatchSize::SmallInput)
    });
}

fn bench_image(c: &mut Criterion) {
    let op = operator();
    let spectrum = unit_spectrum(&op);
    let geometry = VoxelGeometry::axis_aligned(Vec3::ZERO, [0.15, 0.15, 0.0], [31, 31, 1]);
    let window = SpectralWindow {
        center_direction: Vec3::new(0.0, 0.0, 1.0),
        cutoff_angle: 0.7,
        taper_fraction: 0.3,
    };
    c.bench_function("generate_image_31x31", |b| {
        b.iter(|| generate_image(&spectrum, &geometry, &window).unwrap())
    });
}

criterion_group!(benches, bench_translation, bench_forward_adjoint, bench_image);
criterion_main!(benches);
