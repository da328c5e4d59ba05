use std::hint::black_box;
use std::sync::Arc;

use conclab_core::diff::{h_tensor, Kernels};
use conclab_core::dynamics::{run_chains, ChainKind, ChainSpec, Observable};
use conclab_core::exec::{self, Mode};
use conclab_core::ising::CouplingMode;
use conclab_core::{IndexFamily, IsingModel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(Mode, &str); 2] = [(Mode::Sequential, "sequential"), (Mode::Parallel, "parallel")];

fn model(n: usize) -> IsingModel {
    IsingModel::random(n, 0.5, 0.5, &mut ChaCha8Rng::seed_from_u64(1))
}

fn gibbs(c: &mut Criterion) {
    let mut g = c.benchmark_group("gibbs_measure");
    let m = model(16);
    for (mode, name) in MODES {
        g.bench_function(BenchmarkId::new(name, 16), |b| {
            exec::set_mode(mode);
            b.iter(|| black_box(m.gibbs_measure().unwrap()))
        });
    }
    g.finish();
}

fn tensor(c: &mut Criterion) {
    let mut g = c.benchmark_group("h_tensor");
    let n = 8;
    let mu = model(n).gibbs_measure().unwrap();
    let kernels = Kernels::new(&mu, &IndexFamily::singletons(n)).unwrap();
    let f: Vec<f64> = (0..1u64 << n).map(|x| (x.count_ones() as f64).powi(3)).collect();
    for (mode, name) in MODES {
        g.bench_function(BenchmarkId::new(name, "n8_d3"), |b| {
            exec::set_mode(mode);
            b.iter(|| black_box(h_tensor(&f, &kernels, 3).unwrap()))
        });
    }
    g.finish();
}

fn coupling(c: &mut Criterion) {
    let mut g = c.benchmark_group("coupling_exact");
    let m = model(14);
    for (mode, name) in MODES {
        g.bench_function(BenchmarkId::new(name, 14), |b| {
            exec::set_mode(mode);
            b.iter(|| black_box(m.coupling_matrix(CouplingMode::Exact { max_n: 20 }).unwrap()))
        });
    }
    g.finish();
}

fn chains(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_chains");
    g.sample_size(10);
    let n = 100;
    let spec = ChainSpec {
        kind: ChainKind::Glauber(Arc::new(IsingModel::curie_weiss(n, 0.5, nalgebra::DVector::zeros(n)).unwrap())),
        steps: 200_000,
        burn_in: ChainSpec::default_burn_in(n),
        thinning: n as u64,
        seed: 3,
    };
    let obs = Observable::Elementary { d: 2 };
    for (mode, name) in MODES {
        g.bench_function(BenchmarkId::new(name, "4_chains"), |b| {
            exec::set_mode(mode);
            b.iter(|| black_box(run_chains(&spec, &obs, 4).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, gibbs, tensor, coupling, chains);
criterion_main!(benches);
