use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use xrguide_bench::{camera, drafts, started_fsm, GAS_KNOB};
use xrguide_core::fsm::SubPlan;
use xrguide_core::plan::parse_plan_document;
use xrguide_core::spatial::unproject_with_depth;

fn unproject(c: &mut Criterion) {
    let frame = camera();
    c.bench_function("unproject_with_depth", |b| {
        b.iter(|| unproject_with_depth(black_box(&frame), black_box(412.0), black_box(655.0), black_box(0.9)))
    });
    let p = unproject_with_depth(&frame, 412.0, 655.0, 0.9);
    c.bench_function("project", |b| b.iter(|| black_box(&frame).project(black_box(&p))));
}

fn parse(c: &mut Criterion) {
    c.bench_function("parse_plan_document", |b| b.iter(|| parse_plan_document(black_box(GAS_KNOB)).unwrap()));
}

fn splice(c: &mut Criterion) {
    c.bench_function("splice_subplan_3_into_12", |b| {
        b.iter_batched(
            || (started_fsm(12), drafts(3)),
            |(mut fsm, substeps)| fsm.splice_subplan(SubPlan { parent_index: 0, substeps }).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, unproject, parse, splice);
criterion_main!(benches);
