use rand::Rng;

use super::*;
use crate::dataio::{generate_synthetic, split, to_sequences, SplitSpec, SyntheticConfig, MAX_SEQUENCE_LEN};
use crate::numerics::gradcheck::check_gradients;

fn vecmat(v: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols()).map(|c| v.iter().enumerate().map(|(r, x)| x * m.get(r, c)).sum()).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn small_cfg(kind: HeadKind) -> HeadConfig {
    HeadConfig { kind, hidden: 5, response_dim: 3, mem_slots: 3, key_dim: 4, value_dim: 3, ..HeadConfig::default() }
}

fn random_fused(n: usize, d: usize, seed: u64) -> FusedEmbedding {
    FusedEmbedding { mode: FusionMode::E2E, values: Matrix::uniform(n, d, 1.0, &mut rng_for(seed, &[1])) }
}

fn random_seqs(n: usize, n_ex: usize, seed: u64) -> Vec<Sequence> {
    let mut rng = rng_for(seed, &[2]);
    (0..n)
        .map(|s| {
            let len = rng.gen_range(2..7);
            Sequence { student: s, steps: (0..len).map(|_| (rng.gen_range(0..n_ex), rng.gen_bool(0.5))).collect() }
        })
        .collect()
}

fn table(ids: &[&str], rows: &[&[f64]]) -> EmbeddingTable {
    EmbeddingTable { ids: ids.iter().map(|s| s.to_string()).collect(), values: Matrix::from_rows(rows).unwrap() }
}

fn catalog() -> ConceptCatalog {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    ConceptCatalog::new(s(&["u"]), s(&["e0", "e1"]), s(&["c0", "c1"]), vec![vec![0], vec![0, 1]]).unwrap()
}

#[test]
fn fuse_modes() {
    let e2e = table(&["e1", "e0"], &[&[1.0, 2.0], &[3.0, 4.0]]);
    let c2c = table(&["c0", "c1"], &[&[1.0, 1.0, 1.0], &[3.0, 5.0, -1.0]]);
    let cat = catalog();
    let e = fuse(&e2e, &c2c, &cat, FusionMode::E2E).unwrap();
    assert_eq!(e.values, Matrix::from_rows(&[[3.0, 4.0], [1.0, 2.0]]).unwrap());
    let c = fuse(&e2e, &c2c, &cat, FusionMode::C2C).unwrap();
    assert_eq!(c.values.row(0), &[1.0, 1.0, 1.0]);
    assert_eq!(c.values.row(1), &[2.0, 3.0, 0.0]);
    let both = fuse(&e2e, &c2c, &cat, FusionMode::Concate).unwrap();
    assert_eq!(both.dim(), 5);
    assert_eq!(both.values.row(1), &[1.0, 2.0, 2.0, 3.0, 0.0]);

    let partial = table(&["e0"], &[&[0.0, 0.0]]);
    assert!(matches!(fuse(&partial, &c2c, &cat, FusionMode::E2E), Err(Error::Lookup { .. })));
    // C2C ignores the exercise table
    assert!(fuse(&partial, &c2c, &cat, FusionMode::C2C).is_ok());
    assert_eq!("CONCAT".parse::<FusionMode>().unwrap(), FusionMode::Concate);
    assert_eq!("dkvmn".parse::<HeadKind>().unwrap(), HeadKind::M);
    assert!("x".parse::<HeadKind>().is_err());
}

#[test]
fn build_input_layout() {
    let fused = random_fused(3, 4, 0);
    let resp = Matrix::from_rows(&[[0.5, -1.0], [2.0, 3.0]]).unwrap();
    let x0 = build_input(2, false, &fused, &resp).unwrap();
    let x1 = build_input(2, true, &fused, &resp).unwrap();
    assert_eq!(x0.len(), 6);
    assert_eq!(x0[..4], x1[..4]);
    assert_eq!(&x0[..4], fused.values.row(2));
    assert_eq!(&x1[4..], &[2.0, 3.0]);
    let zero = build_input(1, true, &fused, &Matrix::zeros(2, 2)).unwrap();
    assert_eq!(&zero[4..], &[0.0, 0.0]);
    assert!(build_input(3, true, &fused, &resp).is_err());
}

fn dkt_vars(tape: &mut Tape, p: &DktParams) -> Vec<Var> {
    HeadParams::Dkt(p.clone()).tensors().into_iter().map(|m| tape.constant(m.clone())).collect()
}

#[test]
fn dkt_zero_params_give_one_half() {
    let cfg = small_cfg(HeadKind::R);
    let mut p = DktParams::init(4, 6, &cfg, &mut rng_for(0, &[]));
    p.w_hx = Matrix::zeros(7, 5);
    p.w_hh = Matrix::zeros(5, 5);
    p.w_yh = Matrix::zeros(5, 6);
    let mut tape = Tape::new();
    let vars = dkt_vars(&mut tape, &p);
    let x = tape.constant(Matrix::uniform(3, 7, 1.0, &mut rng_for(1, &[])));
    let h0 = tape.constant(Matrix::uniform(3, 5, 1.0, &mut rng_for(2, &[])));
    let (h, y) = dkt_step(&mut tape, x, h0, &vars).unwrap();
    assert!(tape.value(h).as_slice().iter().all(|&v| v == 0.0));
    assert!(tape.value(y).as_slice().iter().all(|&v| v == 0.5));
}

#[test]
fn dkt_memoryless_without_recurrence() {
    let cfg = small_cfg(HeadKind::R);
    let mut p = DktParams::init(4, 6, &cfg, &mut rng_for(3, &[]));
    p.w_hh = Matrix::zeros(5, 5);
    let x = Matrix::uniform(1, 7, 1.0, &mut rng_for(4, &[]));
    let run = |h_prev: Matrix| {
        let mut tape = Tape::new();
        let vars = dkt_vars(&mut tape, &p);
        let (xv, hv) = (tape.constant(x.clone()), tape.constant(h_prev));
        let (h, y) = dkt_step(&mut tape, xv, hv, &vars).unwrap();
        (tape.value(h).clone(), tape.value(y).clone())
    };
    assert_eq!(run(Matrix::zeros(1, 5)), run(Matrix::filled(1, 5, 0.7)));
}

fn dkt_manual(p: &DktParams, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut h = vec![0.0; p.hidden()];
    let mut out = Vec::new();
    for x in xs {
        let a = vecmat(x, &p.w_hx);
        let b = vecmat(&h, &p.w_hh);
        h = (0..h.len()).map(|i| (a[i] + b[i] + p.b_h.get(0, i)).tanh()).collect();
        let z = vecmat(&h, &p.w_yh);
        out.push(z.iter().enumerate().map(|(i, v)| sig(v + p.b_y.get(0, i))).collect());
    }
    out
}

#[test]
fn dkt_three_steps_match_unrolled_oracle() {
    let cfg = small_cfg(HeadKind::R);
    for seed in 0..5 {
        let p = DktParams::init(4, 6, &cfg, &mut rng_for(seed, &[5]));
        let xs: Vec<Vec<f64>> = (0..3).map(|t| Matrix::uniform(1, 7, 1.0, &mut rng_for(seed, &[6, t])).into_vec()).collect();
        let want = dkt_manual(&p, &xs);
        let mut tape = Tape::new();
        let vars = dkt_vars(&mut tape, &p);
        let mut h = tape.constant(Matrix::zeros(1, 5));
        for (t, x) in xs.iter().enumerate() {
            let xv = tape.constant(Matrix::row_vector(x));
            let (h_t, y) = dkt_step(&mut tape, xv, h, &vars).unwrap();
            for (a, b) in tape.value(y).as_slice().iter().zip(&want[t]) {
                assert!((a - b).abs() < 1e-12);
            }
            h = h_t;
        }
    }
}

#[test]
fn dkt_predictions_match_oracle_on_ragged_batches() {
    let cfg = small_cfg(HeadKind::R);
    let fused = random_fused(6, 4, 7);
    let seqs = random_seqs(11, 6, 7);
    let params = HeadParams::init(&cfg, 4, 6).unwrap();
    let HeadParams::Dkt(p) = &params else { unreachable!() };
    let got = predict(&params, &fused, &seqs).unwrap();
    let mut want = Vec::new();
    for s in &seqs {
        let xs: Vec<Vec<f64>> = s.steps.iter().map(|&(e, a)| build_input(e, a, &fused, &p.response).unwrap()).collect();
        let ys = dkt_manual(p, &xs);
        for t in 0..s.steps.len() - 1 {
            want.push((ys[t][s.steps[t + 1].0], s.steps[t + 1].1));
        }
    }
    assert_eq!(got.len(), want.len());
    for (i, (s, l)) in want.iter().enumerate() {
        assert!((got.scores[i] - s).abs() < 1e-12);
        assert_eq!(got.labels[i], *l);
    }
}

struct ManualStep {
    logit: f64,
    w: Vec<f64>,
    read: Vec<f64>,
    memory: Vec<Vec<f64>>,
}

fn dkvmn_manual(p: &DkvmnParams, q: &[f64], qa: &[f64], mem: &[Vec<f64>]) -> ManualStep {
    let k = vecmat(q, &p.query);
    let logits: Vec<f64> = (0..p.slots()).map(|i| p.key_memory.row(i).iter().zip(&k).map(|(a, b)| a * b).sum()).collect();
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = ex.iter().sum();
    let w: Vec<f64> = ex.iter().map(|e| e / z).collect();
    let dv = p.value_dim();
    let read: Vec<f64> = (0..dv).map(|j| (0..p.slots()).map(|i| w[i] * mem[i][j]).sum()).collect();
    let mut rk = read.clone();
    rk.extend_from_slice(&k);
    let f: Vec<f64> = vecmat(&rk, &p.w_f).iter().enumerate().map(|(i, v)| (v + p.b_f.get(0, i)).tanh()).collect();
    let logit = vecmat(&f, &p.w_p)[0] + p.b_p.get(0, 0);
    let v = vecmat(qa, &p.value_in);
    let e: Vec<f64> = vecmat(&v, &p.erase).iter().enumerate().map(|(i, x)| sig(x + p.erase_b.get(0, i))).collect();
    let a: Vec<f64> = vecmat(&v, &p.add).iter().enumerate().map(|(i, x)| (x + p.add_b.get(0, i)).tanh()).collect();
    let memory = (0..p.slots()).map(|i| (0..dv).map(|j| mem[i][j] * (1.0 - w[i] * e[j]) + w[i] * a[j]).collect()).collect();
    ManualStep { logit, w, read, memory }
}

fn slots_of(flat: &[f64], dv: usize) -> Vec<Vec<f64>> {
    flat.chunks(dv).map(|c| c.to_vec()).collect()
}

fn dkvmn_vars(tape: &mut Tape, p: &DkvmnParams) -> Vec<Var> {
    HeadParams::Dkvmn(p.clone()).tensors().into_iter().map(|m| tape.constant(m.clone())).collect()
}

fn run_step(p: &DkvmnParams, q: &[f64], qa: &[f64], mem: &Matrix) -> (f64, Vec<f64>, Vec<f64>, Matrix) {
    let mut tape = Tape::new();
    let vars = dkvmn_vars(&mut tape, p);
    let (qv, qav, mv) = (tape.constant(Matrix::row_vector(q)), tape.constant(Matrix::row_vector(qa)), tape.constant(mem.clone()));
    let s = dkvmn_step(&mut tape, qv, qav, mv, &vars).unwrap();
    (
        tape.value(s.logit).item().unwrap(),
        tape.value(s.attention).as_slice().to_vec(),
        tape.value(s.read).as_slice().to_vec(),
        tape.value(s.memory).clone(),
    )
}

#[test]
fn dkvmn_uniform_attention_reads_slot_mean() {
    let cfg = small_cfg(HeadKind::M);
    let mut p = DkvmnParams::init(4, &cfg, &mut rng_for(8, &[]));
    p.key_memory = Matrix::filled(3, 4, 0.3);
    let mem = Matrix::uniform(1, 9, 1.0, &mut rng_for(9, &[]));
    let (_, w, read, _) = run_step(&p, &[0.1, 0.2, 0.3, 0.4], &[0.0; 7], &mem);
    assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    let slots = slots_of(mem.as_slice(), 3);
    for j in 0..3 {
        let mean = (slots[0][j] + slots[1][j] + slots[2][j]) / 3.0;
        assert!((read[j] - mean).abs() < 1e-12);
    }
}

#[test]
fn dkvmn_full_erase_overwrites_attended_slot() {
    let cfg = HeadConfig { mem_slots: 2, key_dim: 2, value_dim: 3, ..small_cfg(HeadKind::M) };
    let mut p = DkvmnParams::init(2, &cfg, &mut rng_for(10, &[]));
    p.query = Matrix::identity(2).scale(100.0);
    p.key_memory = Matrix::identity(2);
    p.erase = Matrix::zeros(3, 3);
    p.erase_b = Matrix::filled(1, 3, 50.0);
    let mem = Matrix::uniform(1, 6, 1.0, &mut rng_for(11, &[]));
    let qa = [0.3, -0.2, 0.5, 0.1, 0.9];
    let (_, w, _, next) = run_step(&p, &[1.0, 0.0], &qa, &mem);
    assert_eq!(w[0], 1.0);
    let v = vecmat(&qa, &p.value_in);
    let add: Vec<f64> = vecmat(&v, &p.add).iter().enumerate().map(|(i, x)| (x + p.add_b.get(0, i)).tanh()).collect();
    for j in 0..3 {
        assert!((next.get(0, j) - add[j]).abs() < 1e-12);
        assert!((next.get(0, 3 + j) - mem.get(0, 3 + j)).abs() < 1e-12);
    }
}

#[test]
fn dkvmn_two_slot_two_steps_match_unrolled_oracle() {
    let cfg = HeadConfig { mem_slots: 2, key_dim: 3, value_dim: 2, hidden: 4, response_dim: 2, ..small_cfg(HeadKind::M) };
    for seed in 0..5 {
        let p = DkvmnParams::init(3, &cfg, &mut rng_for(seed, &[12]));
        let mut mem = p.value_init.clone();
        let mut manual = slots_of(p.value_init.as_slice(), 2);
        for t in 0..2u64 {
            let q = Matrix::uniform(1, 3, 1.0, &mut rng_for(seed, &[13, t])).into_vec();
            let mut qa = q.clone();
            qa.extend_from_slice(p.response.row((t % 2) as usize));
            let want = dkvmn_manual(&p, &q, &qa, &manual);
            let (logit, w, read, next) = run_step(&p, &q, &qa, &mem);
            assert!((logit - want.logit).abs() < 1e-12);
            for (a, b) in w.iter().zip(&want.w).chain(read.iter().zip(&want.read)) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in next.as_slice().iter().zip(want.memory.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            mem = next;
            manual = want.memory;
        }
    }
}

#[test]
fn dkvmn_predictions_match_oracle_on_ragged_batches() {
    let cfg = small_cfg(HeadKind::M);
    let fused = random_fused(6, 4, 14);
    let seqs = random_seqs(9, 6, 14);
    let params = HeadParams::init(&cfg, 4, 6).unwrap();
    let HeadParams::Dkvmn(p) = &params else { unreachable!() };
    let got = predict(&params, &fused, &seqs).unwrap();
    let mut k = 0;
    for s in &seqs {
        let mut mem = slots_of(p.value_init.as_slice(), p.value_dim());
        for (t, &(e, a)) in s.steps.iter().enumerate() {
            let q = fused.values.row(e).to_vec();
            let qa = build_input(e, a, &fused, &p.response).unwrap();
            let st = dkvmn_manual(p, &q, &qa, &mem);
            if t > 0 {
                assert!((got.scores[k] - sig(st.logit)).abs() < 1e-12);
                assert_eq!(got.labels[k], a);
                k += 1;
            }
            mem = st.memory;
        }
    }
    assert_eq!(k, got.len());
}

#[test]
fn attention_rows_sum_to_one() {
    let cfg = HeadConfig { mem_slots: 20, key_dim: 8, value_dim: 4, ..small_cfg(HeadKind::M) };
    for seed in 0..20 {
        let p = DkvmnParams::init(5, &cfg, &mut rng_for(seed, &[15]));
        let mut tape = Tape::new();
        let vars = dkvmn_vars(&mut tape, &p);
        let q = tape.constant(Matrix::uniform(6, 5, 3.0, &mut rng_for(seed, &[16])));
        let qa = tape.constant(Matrix::uniform(6, 5 + cfg.response_dim, 1.0, &mut rng_for(seed, &[17])));
        let m = tape.constant(Matrix::uniform(6, 80, 1.0, &mut rng_for(seed, &[18])));
        let s = dkvmn_step(&mut tape, q, qa, m, &vars).unwrap();
        let w = tape.value(s.attention);
        for r in 0..6 {
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn step_gradients_match_finite_differences() {
    for seed in 0..20 {
        let cfg = small_cfg(HeadKind::R);
        let p = DktParams::init(3, 4, &cfg, &mut rng_for(seed, &[19]));
        let mut params: Vec<Matrix> = HeadParams::Dkt(p).tensors().into_iter().cloned().collect();
        let mut rng = rng_for(seed, &[20]);
        params.push(Matrix::uniform(2, 6, 1.0, &mut rng));
        params.push(Matrix::uniform(2, 5, 1.0, &mut rng));
        let coef = Matrix::uniform(2, 4, 1.0, &mut rng);
        let r = check_gradients(&params, |t, v| {
            let (h, y) = dkt_step(t, v[6], v[7], &v[..6])?;
            let y = t.mul_const(y, coef.clone())?;
            let s1 = t.sum(y);
            let s2 = t.sum(h);
            t.add(s1, s2)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "dkt seed {seed}: {:?}", r.per_param);

        let cfg = small_cfg(HeadKind::M);
        let p = DkvmnParams::init(3, &cfg, &mut rng_for(seed, &[21]));
        let mut params: Vec<Matrix> = HeadParams::Dkvmn(p).tensors().into_iter().cloned().collect();
        params.push(Matrix::uniform(2, 3, 1.0, &mut rng));
        params.push(Matrix::uniform(2, 6, 1.0, &mut rng));
        params.push(Matrix::uniform(2, 9, 1.0, &mut rng));
        let coef = Matrix::uniform(2, 9, 1.0, &mut rng);
        let r = check_gradients(&params, |t, v| {
            let s = dkvmn_step(t, v[13], v[14], v[15], &v[..13])?;
            let m = t.mul_const(s.memory, coef.clone())?;
            let (a, b) = (t.sum(m), t.sum(s.logit));
            t.add(a, b)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "dkvmn seed {seed}: {:?}", r.per_param);
    }
}

#[test]
fn sequence_loss_gradients_match_finite_differences() {
    for kind in [HeadKind::R, HeadKind::M] {
        for seed in 0..5 {
            let cfg = HeadConfig { seed, ..small_cfg(kind) };
            let fused = random_fused(4, 3, seed);
            let seqs = random_seqs(3, 4, seed + 30);
            let refs: Vec<&Sequence> = seqs.iter().collect();
            let params = HeadParams::init(&cfg, 3, 4).unwrap();
            let mut all: Vec<Matrix> = params.tensors().into_iter().cloned().collect();
            all.push(fused.values.clone());
            let n = all.len() - 1;
            let r = check_gradients(&all, |t, v| {
                let fw = forward_batch(t, &refs, v[n], &v[..n], kind)?;
                let mut total: Option<Var> = None;
                let mut k = 0;
                for l in &fw.logits {
                    let rows = t.shape(*l).0;
                    let part = t.bce_with_logits(*l, &fw.labels[k..k + rows])?;
                    k += rows;
                    total = Some(match total {
                        Some(acc) => t.add(acc, part)?,
                        None => part,
                    });
                }
                Ok(total.expect("targets"))
            })
            .unwrap();
            assert!(r.max_rel_error < 1e-4, "{kind} seed {seed}: {:?}", r.per_param);
        }
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    for kind in [HeadKind::R, HeadKind::M] {
        let cfg = HeadConfig { lr: 0.0, epochs: 3, val_fraction: 0.0, seed: 4, ..small_cfg(kind) };
        let fused = random_fused(5, 3, 1);
        let seqs = random_seqs(12, 5, 2);
        let state = train_head(&seqs, &fused, &cfg).unwrap();
        assert_eq!(state.params, HeadParams::init(&cfg, 3, 5).unwrap());
        assert_eq!(state.trace.len(), 3);
    }
}

#[test]
fn frozen_table_is_untouched_unless_fine_tuning() {
    let fused = random_fused(5, 3, 5);
    let seqs = random_seqs(12, 5, 6);
    let cfg = HeadConfig { epochs: 2, val_fraction: 0.0, lr: 0.05, ..small_cfg(HeadKind::R) };
    let state = train_head(&seqs, &fused, &cfg).unwrap();
    assert_eq!(state.fused.checksum(), fused.checksum());
    let tuned = train_head(&seqs, &fused, &HeadConfig { fine_tune: true, ..cfg }).unwrap();
    assert_ne!(tuned.fused.checksum(), fused.checksum());
}

#[test]
fn rejects_sequences_without_targets() {
    let fused = random_fused(2, 2, 0);
    let seqs = vec![Sequence { student: 0, steps: vec![(0, true)] }];
    assert!(matches!(train_head(&seqs, &fused, &HeadConfig::default()), Err(Error::EmptyDataset(_))));
}

#[test]
fn memorizes_a_repeated_sequence() {
    let mut rng = rng_for(21, &[]);
    let steps: Vec<(usize, bool)> = (0..30).map(|_| (rng.gen_range(0..6), rng.gen_bool(0.5))).collect();
    let seqs: Vec<Sequence> = (0..4).map(|s| Sequence { student: s, steps: steps.clone() }).collect();
    let fused = random_fused(6, 4, 22);
    for kind in [HeadKind::R, HeadKind::M] {
        let cfg = HeadConfig { kind, hidden: 32, epochs: 300, lr: 0.01, val_fraction: 0.0, ..HeadConfig::default() };
        let state = train_head(&seqs, &fused, &cfg).unwrap();
        let p = predict(&state.params, &fused, &seqs).unwrap();
        let a = auc(&p.scores, &p.labels_f64()).unwrap();
        assert!(a >= 0.95, "{kind}: train auc {a}");
    }
}

#[test]
fn shuffled_labels_carry_no_signal() {
    let data = generate_synthetic(&SyntheticConfig { n_students: 120, sequence_len: 30, seed: 3, ..SyntheticConfig::default() }).unwrap();
    let tt = split(&data.interactions, SplitSpec { train_fraction: 0.7, seed: 3 }).unwrap();
    let fused = random_fused(data.catalog.n_exercises(), 8, 3);
    let mut aucs = Vec::new();
    for seed in 0..5u64 {
        let shuffle = |seqs: Vec<Sequence>, key: u64| {
            let mut rng = rng_for(seed, &[key]);
            let mut labels: Vec<bool> = seqs.iter().flat_map(|s| s.steps.iter().map(|x| x.1)).collect();
            labels.shuffle(&mut rng);
            let mut it = labels.into_iter();
            seqs.into_iter()
                .map(|mut s| {
                    s.steps.iter_mut().for_each(|x| x.1 = it.next().unwrap());
                    s
                })
                .collect::<Vec<_>>()
        };
        let train = shuffle(to_sequences(&tt.train, MAX_SEQUENCE_LEN), 1);
        let test = shuffle(to_sequences(&tt.test, MAX_SEQUENCE_LEN), 2);
        let cfg = HeadConfig { hidden: 16, epochs: 15, lr: 0.01, seed, ..HeadConfig::default() };
        let state = train_head(&train, &fused, &cfg).unwrap();
        let p = predict(&state.params, &fused, &test).unwrap();
        aucs.push(auc(&p.scores, &p.labels_f64()).unwrap());
    }
    let mean = aucs.iter().sum::<f64>() / 5.0;
    assert!((0.45..=0.55).contains(&mean), "{aucs:?}");
    assert!(aucs.iter().all(|a| (0.40..=0.60).contains(a)), "{aucs:?}");
}

#[test]
fn head_checkpoint_roundtrip_through_tensors() {
    for kind in [HeadKind::R, HeadKind::M] {
        let p = HeadParams::init(&small_cfg(kind), 3, 4).unwrap();
        let t: Vec<Matrix> = p.tensors().into_iter().cloned().collect();
        assert_eq!(p.names().len(), t.len());
        assert_eq!(HeadParams::from_tensors(kind, t).unwrap(), p);
        assert!(HeadParams::from_tensors(kind, vec![]).is_err());
    }
}
