use criterion::{criterion_group, criterion_main, Criterion};
use escapade_bench::{cascade_delay, certificate, options};
use escapade_core::probes::{equivalence_check, es_check, EquivalenceConfig, EsConfig};
use escapade_core::systems::cascade_system;
use escapade_core::PlanarParams;

fn probes(c: &mut Criterion) {
    let params = PlanarParams::default();
    let cert = certificate(&params);
    let tau = cascade_delay(&params);
    let opts = options();
    let mut group = c.benchmark_group("probes");
    group.sample_size(10);

    let es = EsConfig {
        n_ics: 8,
        ..Default::default()
    };
    group.bench_function("es_check/8 histories", |b| {
        b.iter(|| es_check(&params, &cert, tau, &es, &opts).unwrap())
    });

    let sys = cascade_system(&params, tau).unwrap();
    let equiv = EquivalenceConfig {
        pairs: 4,
        ..Default::default()
    };
    group.bench_function("equivalence_check/4 pairs", |b| {
        b.iter(|| equivalence_check(&sys, &equiv, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, probes);
criterion_main!(benches);
