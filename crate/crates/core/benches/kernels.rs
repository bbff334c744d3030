use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use layoutforge::optimizer::{optimize_scene, OptimConfig};
use layoutforge::plausibility::{evaluate, MetricParams};
use layoutforge::synth::fixtures::table_and_cup;
use layoutforge::synth::primitives::icosphere;
use layoutforge::synth::suite::suite_scene;
use layoutforge::{GridSdf, Pose5DoF};

/// Runs `f` on the default rayon pool and on a single-thread pool. Without
/// the `parallel` feature there is only the sequential path.
fn both_ways(c: &mut Criterion, name: &str, f: impl Fn() + Sync) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool builds");
        group.bench_function(BenchmarkId::new("single_thread", 1), |b| b.iter(|| one.install(&f)));
        let n = rayon::current_num_threads();
        group.bench_function(BenchmarkId::new("rayon_pool", n), |b| b.iter(&f));
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function(BenchmarkId::new("sequential", 1), |b| b.iter(&f));
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let sphere = icosphere(0.5, 3);
    both_ways(c, "grid_build_64", || {
        GridSdf::build(&sphere, &Pose5DoF::identity(), 64, None).expect("grid builds");
    });

    let scene = suite_scene(0).raw;
    let params = MetricParams::default();
    both_ways(c, "plausibility_report", || {
        evaluate(&scene, &params).expect("report");
    });

    let cup = table_and_cup(0.03);
    let config = OptimConfig::default();
    both_ways(c, "optimize_table_cup", || {
        optimize_scene(&cup, &config).expect("optimizes");
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
