use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use herdsim::market::{expected_values, herding_verdict, update_belief, MarketState, Perspective};
use herdsim::{Action, TreatmentSpec};
use herdsim_bench::all_histories;
use std::hint::black_box;

fn belief_update(c: &mut Criterion) {
    let spec = TreatmentSpec::treatment_ii();
    c.bench_function("update_belief", |b| {
        b.iter(|| update_belief(&spec, black_box(0.42), black_box(Action::Buy), Perspective::MarketMaker))
    });
    let state = MarketState::from_history(&spec, &[Action::Buy, Action::Sell, Action::Buy]);
    c.bench_function("herding_verdict", |b| {
        b.iter(|| herding_verdict(&spec, black_box(&state)))
    });
    c.bench_function("expected_values", |b| {
        b.iter(|| expected_values(&spec, black_box(&state)))
    });
}

fn enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_verdicts");
    for len in [4usize, 6, 8] {
        let histories = all_histories(len);
        for (name, spec) in [
            ("I", TreatmentSpec::treatment_i()),
            ("II", TreatmentSpec::treatment_ii()),
        ] {
            group.bench_with_input(BenchmarkId::new(name, len), &histories, |b, hs| {
                b.iter(|| {
                    hs.iter()
                        .filter(|h| {
                            herding_verdict(&spec, &MarketState::from_history(&spec, h))
                                != herdsim::HerdingVerdict::None
                        })
                        .count()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, belief_update, enumeration);
criterion_main!(benches);
