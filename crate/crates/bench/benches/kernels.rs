use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use itinerant_bench::desk_network;
use itinerant_core::feedback::{run_closed_loop, Classifier, ClosedLoop};
use itinerant_core::innate::rls_update_in_place;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn network_step(c: &mut Criterion) {
    let net = desk_network(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut state = net.washout(500.0, None, &mut rng).unwrap();
    let mut scratch = Vec::new();
    c.bench_function("network_step_desk", |b| {
        b.iter(|| {
            net.step_in_place(&mut state, Some(0), &mut scratch)
                .unwrap()
        })
    });
}

fn rls(c: &mut Criterion) {
    // presynaptic set of a desk-scale chaotic row is about 30 wide
    let k = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let identity: Vec<f64> = DMatrix::<f64>::identity(k, k).as_slice().to_vec();
    let (mut px, mut dj) = (vec![0.0; k], vec![0.0; k]);
    c.bench_function("rls_update_k30", |b| {
        b.iter_batched_ref(
            || identity.clone(),
            |p| rls_update_in_place(p, &x, 0.1, &mut px, &mut dj).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn closed_loop(c: &mut Criterion) {
    let net = desk_network(3);
    let n = net.n_total();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = DMatrix::from_fn(3, n + 1, |_, _| rng.random_range(-1.0..1.0));
    let classifier = Classifier::new(w, true).unwrap();
    let cl = ClosedLoop::new(&net, &classifier, 0.0).unwrap();
    let start = net.washout(500.0, None, &mut rng).unwrap();
    let mut group = c.benchmark_group("closed_loop");
    group.sample_size(10);
    group.bench_function("closed_loop_1000_steps", |b| {
        b.iter(|| run_closed_loop(&cl, None, &start, 1000.0, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, network_step, rls, closed_loop);
criterion_main!(benches);
