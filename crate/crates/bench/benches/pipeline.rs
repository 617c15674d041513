use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use egomkl::descriptors::{extract_descriptors, frame_planes, ExtractParams};
use egomkl::flow::{dense_flow, FlowParams};
use egomkl::kernels::{gram_matrix, Channel, KernelBank, KernelKind, KernelSpec};
use egomkl::mkl::{simple_mkl_train, MklParams};
use egomkl::svm::{smo_train, SvmParams};
use egomkl::DescriptorKind;
use egomkl_bench::{histograms, labels, sample_video};

const BLOCKS: [usize; 3] = [64, 64, 64];

fn channels() -> Vec<Channel> {
    let mut at = 0;
    BLOCKS
        .iter()
        .map(|&len| {
            let c = Channel { offset: at, len };
            at += len;
            c
        })
        .collect()
}

fn flow(c: &mut Criterion) {
    let video = sample_video();
    let planes = frame_planes(&video);
    let params = FlowParams::default();
    c.bench_function("horn_schunck_32x32", |b| b.iter(|| dense_flow(black_box(&planes[0]), &planes[1], &params).unwrap()));
    let extract = ExtractParams::default();
    c.bench_function("extract_all_descriptors", |b| {
        b.iter(|| extract_descriptors(black_box(&video), &extract, &DescriptorKind::ALL).unwrap())
    });
}

fn gram(c: &mut Criterion) {
    let data = histograms(100, &BLOCKS, 1);
    let dim = BLOCKS.iter().sum();
    for kind in [KernelKind::Gaussian, KernelKind::HInt] {
        let mut spec = KernelSpec::new(kind, KernelSpec::whole(dim));
        if kind == KernelKind::Gaussian {
            spec.sigma = Some(0.5);
        }
        c.bench_function(&format!("gram_{kind}_100"), |b| b.iter(|| gram_matrix(black_box(&data), &spec).unwrap()));
    }
    let spec = KernelSpec::new(KernelKind::JplInt, channels());
    c.bench_function("gram_jpl_int_100", |b| b.iter(|| gram_matrix(black_box(&data), &spec).unwrap()));
}

fn solvers(c: &mut Criterion) {
    let data = histograms(100, &BLOCKS, 2);
    let y = labels(data.len());
    let specs: Vec<KernelSpec> = channels()
        .into_iter()
        .flat_map(|ch| [KernelSpec::gaussian(0.5, vec![ch]), KernelSpec::new(KernelKind::HInt, vec![ch])])
        .collect();
    let bank = KernelBank::build(&data, &specs).unwrap();
    c.bench_function("smo_100", |b| b.iter(|| smo_train(black_box(bank.gram(0)), &y, &SvmParams::default(), None).unwrap()));
    let mut group = c.benchmark_group("mkl");
    group.sample_size(10);
    group.bench_function("simple_mkl_100x6", |b| b.iter(|| simple_mkl_train(black_box(&bank), &y, &MklParams::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, flow, gram, solvers);
criterion_main!(benches);
