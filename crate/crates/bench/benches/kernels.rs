use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ftlflow_core::measure::{micro_to_cells, CellAttribution};
use ftlflow_core::micro::{init_state, step_euler};
use ftlflow_core::stability::{scan_stability, stability_map, MapAxis};
use ftlflow_core::{InitKind, MacroGrid, RingConfig, Scheme, StabilityQuery, StabilityScheme, TriangularOV};

fn micro_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("micro_step");
    for n in [50usize, 500, 5000] {
        let mut cfg = RingConfig::reference();
        cfg.n_agents = n;
        cfg.ring_length = 2.02 * n as f64;
        let state = init_state(&cfg, InitKind::Random).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &state, |b, s| {
            b.iter(|| step_euler(black_box(s), &cfg).unwrap())
        });
    }
    g.finish();
}

fn macro_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("macro_step");
    let cfg = RingConfig::reference();
    let state = init_state(&cfg, InitKind::Jam).unwrap();
    let rho = micro_to_cells(&state, 2.02, 50, CellAttribution::Spacing).unwrap();
    for scheme in Scheme::ALL {
        let grid = MacroGrid::new(rho.clone(), 2.02, TriangularOV::reference(), 1.0, 0.01, scheme).unwrap();
        g.bench_function(scheme.name(), |b| b.iter(|| black_box(&grid).step().unwrap()));
    }
    g.finish();
}

fn stability(c: &mut Criterion) {
    let q = StabilityQuery::reference(StabilityScheme::GodunovGodunov);
    c.bench_function("scan_stability/n50", |b| b.iter(|| scan_stability(black_box(&q)).unwrap()));
    let mut g = c.benchmark_group("stability_map");
    g.sample_size(10);
    for res in [50usize, 200] {
        g.bench_with_input(BenchmarkId::from_parameter(res), &res, |b, &r| {
            b.iter(|| stability_map(&q, (-1.5, 1.5), (0.01, 3.0), MapAxis::Dt, r).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, micro_step, macro_step, stability);
criterion_main!(benches);
