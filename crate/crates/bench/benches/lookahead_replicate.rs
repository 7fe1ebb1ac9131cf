use criterion::{criterion_group, criterion_main, Criterion};
use lr_core::algo::{lookahead, replicate, run_lr, Hyperparams, RunOptions};
use lr_core::harness::{generate_instance, Bundled};
use lr_core::ParamPair;
use nalgebra::DVector;
use std::hint::black_box;

fn inner_loops(c: &mut Criterion) {
    let inst = generate_instance(1, 20, 8, 0.9..0.9).unwrap();
    let ctx = &inst.ctx;
    let theta = DVector::from_element(8, 0.1);
    let w = DVector::from_element(8, -0.1);
    let alpha = 1.0 / lr_core::theory::linear_constants(ctx).l;

    c.bench_function("lookahead_20x8_k100", |b| {
        b.iter(|| lookahead(ctx, black_box(&theta), black_box(&w), alpha, 100).unwrap())
    });
    c.bench_function("replicate_20x8_k100", |b| {
        b.iter(|| replicate(ctx, black_box(&w), black_box(&theta), &[0.01], 100).unwrap())
    });
}

fn two_state(c: &mut Criterion) {
    let exp = Bundled::B1.config().build().unwrap();
    let hp = Hyperparams { outer_iters: 100, ..exp.hp.clone() };
    let init = ParamPair::new(exp.init.theta.clone(), exp.init.w.clone());
    c.bench_function("run_lr_b1_t100_k400", |b| {
        b.iter(|| run_lr(&exp.ctx, black_box(&init), &hp, &RunOptions::default()).unwrap())
    });
}

criterion_group!(benches, inner_loops, two_state);
criterion_main!(benches);
