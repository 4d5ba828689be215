//! Microbenchmarks for the hot paths: exact nearest-point queries, k-NN,
//! quantization, batched inference, and marching cubes.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use nvf_bench::{cloud, default_model, queries, small_model, torus};
use nvf_core::codebook::MultiHeadCodebook;
use nvf_core::extract::{assign_pseudo_signs, marching_cubes, ExtractParams, LatticeField};
use nvf_core::geom::{nearest_point_on_mesh, Bvh, PointIndex, Vec3};
use nvf_core::metrics::chamfer;
use nvf_core::model::infer_batch;

fn bench_nearest_point(c: &mut Criterion) {
    let mesh = torus();
    let bvh = Bvh::build(&mesh).unwrap();
    let pc = cloud(512);
    let qs = queries(&pc, 1000);
    let mut group = c.benchmark_group("nearest_point_on_mesh");
    group.throughput(Throughput::Elements(qs.len() as u64));
    group.bench_function(BenchmarkId::from_parameter(mesh.triangles.len()), |b| {
        b.iter(|| {
            let mut acc = 0.0f64;
            for &q in &qs {
                acc += nearest_point_on_mesh(&mesh, &bvh, q).distance();
            }
            black_box(acc)
        })
    });
    group.finish();
}

fn bench_knn(c: &mut Criterion) {
    let pc = cloud(2048);
    let index = PointIndex::build(&pc.points).unwrap();
    let qs = queries(&pc, 1000);
    let mut group = c.benchmark_group("kdtree_knn16");
    group.throughput(Throughput::Elements(qs.len() as u64));
    group.bench_function("cloud2048", |b| {
        b.iter(|| {
            let mut acc = 0.0f64;
            for &q in &qs {
                acc += index.knn(q, 16)[15].1;
            }
            black_box(acc)
        })
    });
    group.finish();
}

fn bench_quantize(c: &mut Criterion) {
    let book: MultiHeadCodebook<f32> =
        MultiHeadCodebook::new(4, 128, 64, 0.99, 0.25, 5).unwrap();
    let z = ndarray::Array2::<f32>::from_shape_fn((512, 256), |(i, j)| {
        ((i * 31 + j * 7) % 97) as f32 * 0.01 - 0.5
    });
    let mut group = c.benchmark_group("quantize_batch");
    group.throughput(Throughput::Elements(512));
    group.bench_function("h4_r128_d256", |b| {
        b.iter(|| black_box(book.quantize_batch(z.view()).unwrap()))
    });
    group.finish();
}

fn bench_inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("infer_batch512");
    for (name, (model, fcloud)) in
        [("small_d64", small_model()), ("default_d256", default_model())]
    {
        let pc = cloud(2048);
        let qs = queries(&pc, 512);
        group.throughput(Throughput::Elements(qs.len() as u64));
        group.bench_function(name, |b| {
            b.iter(|| black_box(infer_batch(&model, &fcloud, &qs).unwrap()))
        });
    }
    group.finish();
}

fn bench_marching_cubes(c: &mut Criterion) {
    let field = LatticeField::from_fn(64, |p: Vec3| {
        let n = p.norm().max(1e-12);
        p * (0.3 / n - 1.0)
    })
    .unwrap();
    let params = ExtractParams::default();
    let signs = assign_pseudo_signs(&field, &params);
    c.bench_function("marching_cubes_res64", |b| {
        b.iter(|| black_box(marching_cubes(&field, &signs, &params)))
    });
}

fn bench_chamfer(c: &mut Criterion) {
    let a = cloud(10_000);
    let b_cloud = cloud(10_000);
    c.bench_function("chamfer_10k", |b| {
        b.iter(|| black_box(chamfer(&a, &b_cloud).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_nearest_point,
    bench_knn,
    bench_quantize,
    bench_inference,
    bench_marching_cubes,
    bench_chamfer
);
criterion_main!(benches);
