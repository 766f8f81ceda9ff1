use std::hint::black_box;

use biclkt_bench::{planted, random_graph};
use biclkt_core::augment::{make_views, AugmentationConfig};
use biclkt_core::contrastive::{nt_xent_graph, ContrastiveConfig};
use biclkt_core::encoder::{encode_nodes, project, readout, EncoderConfig, EncoderParams};
use biclkt_core::eval::auc;
use biclkt_core::graph::{build_all_graphs, pagerank, PAGERANK_DAMPING};
use biclkt_core::numerics::rng_for;
use biclkt_core::pipeline::pretrain_embeddings;
use biclkt_core::predict::{fuse, predict, train_head, FusionMode, HeadConfig, HeadKind};
use biclkt_core::{Matrix, Tape};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn graph_kernels(c: &mut Criterion) {
    let g = random_graph(20, 1);
    c.bench_function("pagerank n=20", |b| b.iter(|| pagerank(20, black_box(&g.edges), PAGERANK_DAMPING).unwrap()));
    let cfg = AugmentationConfig::default();
    let mut stream = 0;
    c.bench_function("view pair n=20", |b| {
        b.iter(|| {
            stream += 1;
            make_views(&g, &cfg, 64, stream).unwrap()
        })
    });
    let (_, ds, prep) = planted(0);
    c.bench_function("build graphs (synthetic)", |b| {
        b.iter(|| build_all_graphs(black_box(&prep.split.train), &ds.catalog, &Default::default()).unwrap())
    });
}

fn encoder_step(c: &mut Criterion) {
    let cfg = EncoderConfig::default();
    let g = random_graph(20, 2);
    let p = EncoderParams::init(&cfg, 20, 0).unwrap();
    let aug = AugmentationConfig::default();
    let (v1, v2) = make_views(&g, &aug, cfg.d_in, 0).unwrap();
    let ids: Vec<usize> = (0..20).collect();
    c.bench_function("encoder forward+backward, 2 views", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let enc = p.bind(&mut t, &ids, true).unwrap();
            let mut zs = Vec::new();
            for v in [&v1, &v2] {
                let h = encode_nodes(&mut t, v, &enc, &cfg).unwrap().h;
                let r = readout(&mut t, h);
                zs.push(project(&mut t, r, &enc).unwrap());
            }
            let s = t.sub(zs[0], zs[1]).unwrap();
            let l = t.mul(s, s).unwrap();
            let l = t.sum(l);
            t.backward(l).unwrap()
        })
    });
    let ccfg = ContrastiveConfig::default();
    let z1 = Matrix::uniform(16, 32, 1.0, &mut rng_for(3, &[]));
    let z2 = Matrix::uniform(16, 32, 1.0, &mut rng_for(4, &[]));
    c.bench_function("nt-xent graph loss 16x32 + grad", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let (a, bb) = (t.var(z1.clone()), t.var(z2.clone()));
            let l = nt_xent_graph(&mut t, a, bb, &ccfg).unwrap();
            t.backward(l).unwrap()
        })
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = rng_for(5, &[]);
    let m = Matrix::uniform(1, 10_000, 1.0, &mut rng);
    let labels: Vec<f64> = Matrix::uniform(1, 10_000, 1.0, &mut rng).as_slice().iter().map(|&x| f64::from(u8::from(x > 0.0))).collect();
    c.bench_function("auc n=10000", |b| b.iter(|| auc(black_box(m.as_slice()), &labels).unwrap()));
}

fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthetic");
    group.sample_size(10);
    let (mut cfg, ds, prep) = planted(0);
    cfg.contrastive.epochs = 10;
    group.bench_function("pretrain 10 epochs", |b| b.iter(|| pretrain_embeddings(&ds, &prep, &cfg).unwrap()));
    let pre = pretrain_embeddings(&ds, &prep, &cfg).unwrap();
    let fused = fuse(&pre.e2e, &pre.c2c, &ds.catalog, FusionMode::Concate).unwrap();
    for kind in [HeadKind::R, HeadKind::M] {
        let hc = HeadConfig { kind, epochs: 1, val_fraction: 0.0, ..HeadConfig::default() };
        group.bench_function(format!("{kind} head, one epoch"), |b| {
            b.iter_batched(|| hc.clone(), |hc| train_head(&prep.train, &fused, &hc).unwrap(), BatchSize::SmallInput)
        });
        let state = train_head(&prep.train, &fused, &hc).unwrap();
        group.bench_function(format!("{kind} head, predict test"), |b| b.iter(|| predict(&state.params, &fused, &prep.test).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, graph_kernels, encoder_step, metrics, end_to_end);
criterion_main!(benches);
