use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uncerseg::{entropy_map, gen_box_set, refine_segmentation, ugmp, JitterSpec, OracleParams, OracleSegmenter, PromptSet, RefineConfig};
use uncerseg_bench::{fixture, ramp};

fn bench_entropy(c: &mut Criterion) {
    let mut group = c.benchmark_group("entropy_map");
    for size in [64, 128, 256] {
        let mask = ramp(size);
        group.bench_with_input(BenchmarkId::from_parameter(size), &mask, |b, m| b.iter(|| entropy_map(m)));
    }
    group.finish();
}

fn bench_ugmp(c: &mut Criterion) {
    let f = fixture(128);
    let backend = OracleSegmenter::new(f.gt.clone(), OracleParams::default()).unwrap();
    let spec = JitterSpec::new(0.05, 0).unwrap();
    let boxes = gen_box_set(&f.b_init, 3, &spec, f.gt.dims()).unwrap();
    let prompts = PromptSet::new(boxes, vec![]).unwrap();
    c.bench_function("ugmp_n3_128", |b| b.iter(|| ugmp(&f.image, &prompts, &backend).unwrap()));
}

fn bench_pipeline(c: &mut Criterion) {
    let f = fixture(128);
    let backend = OracleSegmenter::new(f.gt.clone(), OracleParams::default()).unwrap();
    let mut group = c.benchmark_group("refine_128");
    for k in [0, 10] {
        let cfg = RefineConfig { k_points: k, ..RefineConfig::default() };
        group.bench_with_input(BenchmarkId::new("k_points", k), &cfg, |b, cfg| {
            b.iter(|| refine_segmentation(&f.image, &f.b_init, &[], cfg, &backend).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_entropy, bench_ugmp, bench_pipeline);
criterion_main!(benches);
