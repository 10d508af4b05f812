use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cuechart_core::catalog::{apply_transforms, Predicate, Transform};
use cuechart_core::session::SessionConfig;
use cuechart_core::stages::vega::{exemplars, validate_spec};
use cuechart_testkit::climate_scenario_dir;
use cuechart_testkit::gen::{random_chain, random_table, rng};
use cuechart_testkit::scenario::{catalog, climate_session, engine, replay};

fn transforms(c: &mut Criterion) {
    let catalog = catalog();
    let climate = &catalog.get("climate").unwrap().table;
    let recent = [Transform::Filter {
        column: "year".into(),
        predicate: Predicate::Range([2005.0, 2025.0]),
    }];
    c.bench_function("filter climate to recent 20 years", |b| {
        b.iter(|| apply_transforms(black_box(climate), &recent).unwrap())
    });

    let mut r = rng(7);
    let cases: Vec<_> = (0..64)
        .map(|_| {
            let t = random_table(&mut r, 50, 5);
            let chain = random_chain(&mut r, &t, 4);
            (t, chain)
        })
        .collect();
    c.bench_function("random chains over 64 tables", |b| {
        b.iter(|| {
            for (t, chain) in &cases {
                black_box(apply_transforms(t, chain).unwrap());
            }
        })
    });
}

fn validator(c: &mut Criterion) {
    c.bench_function("validate exemplar specs", |b| {
        b.iter(|| {
            for e in exemplars() {
                assert!(validate_spec(black_box(&e.spec), &e.schema).valid);
            }
        })
    });
}

fn rounds(c: &mut Criterion) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let backend = replay(climate_scenario_dir());
    c.bench_function("climate round, cold cache", |b| {
        b.to_async(&rt).iter(|| async {
            let engine = engine(catalog(), &backend, 8);
            let id = climate_session(&engine, SessionConfig::default());
            engine.run_round(&id).await.unwrap()
        })
    });

    let warm = engine(catalog(), &backend, 8);
    let id = climate_session(&warm, SessionConfig::default());
    rt.block_on(warm.run_round(&id)).unwrap();
    c.bench_function("climate round, warm cache", |b| {
        b.to_async(&rt).iter(|| warm.run_round(&id))
    });
}

criterion_group!(benches, transforms, validator, rounds);
criterion_main!(benches);
