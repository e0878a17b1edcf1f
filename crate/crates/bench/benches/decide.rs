use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use pcsp_bench::{applications, pairs, swap};
use pcsp_core::axioms::{synth_derivation, Theory};
use pcsp_core::simulation::{fsim_leq, sim_leq};
use pcsp_core::testing::{apply_test, outcomes, Flavour};

fn testing(c: &mut Criterion) {
    let (p, q, t) = swap();
    c.bench_function("state outcomes, swap", |b| {
        b.iter(|| (outcomes(Flavour::State, &t, &p).unwrap(), outcomes(Flavour::State, &t, &q).unwrap()))
    });
    let apps = applications(1, 20, 3);
    c.bench_function("vector outcomes, 20 applications", |b| {
        b.iter(|| {
            for (t, p) in &apps {
                black_box(apply_test(t, p).unwrap().results_vector());
            }
        })
    });
}

fn preorders(c: &mut Criterion) {
    let ps = pairs(2, 20, 3);
    c.bench_function("simulation, 20 pairs", |b| b.iter(|| ps.iter().filter(|(p, q)| sim_leq(p, q)).count()));
    c.bench_function("failure simulation, 20 pairs", |b| b.iter(|| ps.iter().filter(|(p, q)| fsim_leq(p, q)).count()));
}

fn proofs(c: &mut Criterion) {
    let ps = pairs(3, 20, 2);
    c.bench_function("must derivations, 20 pairs", |b| {
        b.iter(|| ps.iter().filter_map(|(p, q)| synth_derivation(p, q, Theory::Must)).count())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = testing, preorders, proofs
}
criterion_main!(benches);
