use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mulesim::engine::EventEngine;
use mulesim::time::SimTime;

fn schedule_and_drain(c: &mut Criterion) {
    let mut group = c.benchmark_group("engine");
    for n in [10_000u64, 100_000] {
        group.throughput(Throughput::Elements(n));
        group.bench_function(format!("schedule_drain_{n}"), |b| {
            b.iter_batched(
                || {
                    let mut rng = ChaCha8Rng::seed_from_u64(1);
                    let times: Vec<SimTime> = (0..n)
                        .map(|_| SimTime::from_millis(rng.random_range(0..60_000)))
                        .collect();
                    times
                },
                |times| {
                    let mut engine = EventEngine::new(0);
                    for (i, at) in times.iter().enumerate() {
                        engine.schedule(*at, i).unwrap();
                    }
                    let mut count = 0usize;
                    engine
                        .run_until(SimTime::from_secs(60), |_, _| count += 1)
                        .unwrap();
                    count
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn cascading_timers(c: &mut Criterion) {
    c.bench_function("engine/cascade_100k", |b| {
        b.iter(|| {
            let mut engine = EventEngine::new(0);
            engine.schedule(SimTime::ZERO, ()).unwrap();
            let mut remaining = 100_000u32;
            engine
                .run_until(SimTime::MAX, |eng, _| {
                    if remaining > 0 {
                        remaining -= 1;
                        let next = eng.now() + SimTime::from_millis(1);
                        eng.schedule(next, ()).unwrap();
                    }
                })
                .unwrap();
        })
    });
}

criterion_group!(benches, schedule_and_drain, cascading_timers);
criterion_main!(benches);
