use std::hint::black_box;

use bicmdp::blp::{Block, BlpInstance};
use bicmdp::casegen::{self, EpidemicParams};
use bicmdp::grc::{self, GrcConfig};
use bicmdp::instances::{random_cmdp, random_policy, Shape};
use bicmdp::lp;
use bicmdp::model::normalize;
use bicmdp::occupancy::{evaluate_direct, policy_to_occupancy};
use bicmdp::AugmentedMdp;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn epidemic() -> (AugmentedMdp, BlpInstance) {
    let cmdp = casegen::generate(&EpidemicParams::default()).unwrap();
    let aug = AugmentedMdp::build(&normalize(&cmdp).unwrap()).unwrap();
    let blp = BlpInstance::assemble(&aug).unwrap();
    (aug, blp)
}

fn augment(c: &mut Criterion) {
    let mut group = c.benchmark_group("augment");
    for bits in 1..=3 {
        let mut rng = ChaCha8Rng::seed_from_u64(bits as u64);
        let cmdp = normalize(&random_cmdp(&mut rng, &Shape::new(6, 3, 5, vec![true; bits]))).unwrap();
        group.bench_with_input(BenchmarkId::new("build", bits), &cmdp, |b, cmdp| {
            b.iter(|| AugmentedMdp::build(black_box(cmdp)).unwrap())
        });
        let aug = AugmentedMdp::build(&cmdp).unwrap();
        group.bench_with_input(BenchmarkId::new("assemble", bits), &aug, |b, aug| {
            b.iter(|| BlpInstance::assemble(black_box(aug)).unwrap())
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cmdp = random_cmdp(&mut rng, &Shape::new(6, 3, 5, vec![true, true]));
    let policy = random_policy(&mut rng, &cmdp);
    let aug = AugmentedMdp::build(&normalize(&cmdp).unwrap()).unwrap();
    c.bench_function("evaluate_direct", |b| b.iter(|| evaluate_direct(black_box(&cmdp), &policy, 0)));
    c.bench_function("policy_to_occupancy", |b| b.iter(|| policy_to_occupancy(black_box(&aug), &policy)));
}

fn block_lp(c: &mut Criterion) {
    let (aug, blp) = epidemic();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let point = grc::random_feasible_point(&aug, &mut rng);
    let reduced = blp.fix_block(&point, Block::FixSecond);
    c.bench_function("block_lp_solve", |b| b.iter(|| lp::solve(black_box(&reduced.program)).unwrap()));
    let relaxation = blp.relaxation();
    c.bench_function("relaxation_solve", |b| b.iter(|| lp::solve(black_box(&relaxation.program)).unwrap()));
}

fn search(c: &mut Criterion) {
    let (aug, blp) = epidemic();
    let mut group = c.benchmark_group("grc_epidemic_1000");
    group.sample_size(10);
    for (name, weight) in [("restarts_only", 1000.0), ("mostly_local", 1.0)] {
        let config = GrcConfig { max_iterations: 1000, restart_weight: weight, ..Default::default() };
        group.bench_function(name, |b| b.iter(|| grc::run(&aug, &blp, black_box(&config)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, augment, evaluation, block_lp, search);
criterion_main!(benches);
