use rand::Rng;
use rand::SeedableRng;

use super::{ConceptCatalog, Interaction};
use crate::error::{Error, Result};
use crate::numerics::Rng64;

/// Knowledge-state dynamics of the generator.
///
/// A student's answer to exercise `e` is correct with probability
/// `m·(1 - slip) + (1 - m)·guess`, where `m` is the mean mastery of the
/// exercise's concepts minus the exercise difficulty, clamped to `[0, 1]`.
/// Every attempt moves each involved concept's mastery towards 1 by
/// `learn_rate · (1 - mastery)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasteryModel {
    pub guess: f64,
    pub slip: f64,
    pub learn_rate: f64,
    /// Initial mastery is uniform in `[lo, hi]` per (student, concept).
    pub initial_mastery: (f64, f64),
    /// Concept difficulty offsets are uniform in `±difficulty_spread`;
    /// exercises of a concept share its offset plus a quarter-width jitter.
    pub difficulty_spread: f64,
}

impl Default for MasteryModel {
    fn default() -> Self {
        MasteryModel {
            guess: 0.2,
            slip: 0.1,
            learn_rate: 0.15,
            initial_mastery: (0.0, 0.6),
            difficulty_spread: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_students: usize,
    pub n_concepts: usize,
    pub n_exercises: usize,
    pub sequence_len: usize,
    pub model: MasteryModel,
    /// Probability that an exercise gets a second concept.
    pub second_concept_prob: f64,
    /// Students practise one concept for a block of this many attempts (inclusive range).
    pub block_len: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_students: 200,
            n_concepts: 12,
            n_exercises: 60,
            sequence_len: 50,
            model: MasteryModel::default(),
            second_concept_prob: 0.2,
            block_len: (2, 5),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub interactions: Vec<Interaction>,
    pub catalog: ConceptCatalog,
    /// Effective mastery at the moment of each interaction (aligned with `interactions`).
    pub mastery: Vec<f64>,
    /// Per-exercise difficulty offsets.
    pub difficulty: Vec<f64>,
}

fn validate(cfg: &SyntheticConfig) -> Result<()> {
    let m = &cfg.model;
    let bad = |what: &str| Err(Error::Config(format!("synthetic generator: {what}")));
    if cfg.n_students == 0 || cfg.n_concepts == 0 || cfg.n_exercises == 0 || cfg.sequence_len == 0 {
        return bad("all counts must be >= 1");
    }
    if cfg.n_exercises < cfg.n_concepts {
        return bad("need at least one exercise per concept");
    }
    for (name, p) in [("guess", m.guess), ("slip", m.slip), ("learn_rate", m.learn_rate), ("second_concept_prob", cfg.second_concept_prob)] {
        if !(0.0..=1.0).contains(&p) {
            return bad(&format!("{name} must be in [0, 1], got {p}"));
        }
    }
    let (lo, hi) = m.initial_mastery;
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return bad("initial mastery range must satisfy 0 <= lo <= hi <= 1");
    }
    if m.difficulty_spread < 0.0 {
        return bad("difficulty spread must be >= 0");
    }
    if cfg.block_len.0 == 0 || cfg.block_len.0 > cfg.block_len.1 {
        return bad("block length range must satisfy 1 <= lo <= hi");
    }
    Ok(())
}

/// Generates a log with planted concept structure. Bit-reproducible per seed.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    validate(cfg)?;
    let mut rng = Rng64::seed_from_u64(cfg.seed);
    let m = cfg.model;

    // exercise e's primary concept is e mod n_concepts, so every concept is covered
    let mut membership: Vec<Vec<usize>> = (0..cfg.n_exercises)
        .map(|e| vec![e % cfg.n_concepts])
        .collect();
    if cfg.n_concepts > 1 {
        for (e, concepts) in membership.iter_mut().enumerate() {
            if rng.gen_bool(cfg.second_concept_prob) {
                let mut other = rng.gen_range(0..cfg.n_concepts - 1);
                if other >= e % cfg.n_concepts {
                    other += 1;
                }
                concepts.push(other);
                concepts.sort_unstable();
            }
        }
    }
    let spread = m.difficulty_spread;
    let concept_offset: Vec<f64> = (0..cfg.n_concepts)
        .map(|_| if spread > 0.0 { rng.gen_range(-spread..=spread) } else { 0.0 })
        .collect();
    let difficulty: Vec<f64> = membership
        .iter()
        .map(|cs| {
            let base = cs.iter().map(|&c| concept_offset[c]).sum::<f64>() / cs.len() as f64;
            let jitter = if spread > 0.0 { rng.gen_range(-spread / 4.0..=spread / 4.0) } else { 0.0 };
            base + jitter
        })
        .collect();
    let by_concept: Vec<Vec<usize>> = (0..cfg.n_concepts)
        .map(|c| (0..cfg.n_exercises).filter(|&e| membership[e].contains(&c)).collect())
        .collect();

    let width = |n: usize| n.to_string().len();
    let (ws, we, wc) = (width(cfg.n_students), width(cfg.n_exercises), width(cfg.n_concepts));
    let students: Vec<String> = (0..cfg.n_students).map(|s| format!("s{s:0ws$}")).collect();
    let exercises: Vec<String> = (0..cfg.n_exercises).map(|e| format!("e{e:0we$}")).collect();
    let concepts: Vec<String> = (0..cfg.n_concepts).map(|c| format!("c{c:0wc$}")).collect();

    let mut interactions = Vec::with_capacity(cfg.n_students * cfg.sequence_len);
    let mut mastery_trace = Vec::with_capacity(interactions.capacity());
    let (lo, hi) = m.initial_mastery;
    for s in 0..cfg.n_students {
        let mut mastery: Vec<f64> = (0..cfg.n_concepts)
            .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
            .collect();
        let mut t = 0usize;
        while t < cfg.sequence_len {
            let concept = rng.gen_range(0..cfg.n_concepts);
            let block = rng.gen_range(cfg.block_len.0..=cfg.block_len.1);
            for _ in 0..block.min(cfg.sequence_len - t) {
                let pool = &by_concept[concept];
                let e = pool[rng.gen_range(0..pool.len())];
                let cs = &membership[e];
                let level = cs.iter().map(|&c| mastery[c]).sum::<f64>() / cs.len() as f64;
                let eff = (level - difficulty[e]).clamp(0.0, 1.0);
                let p = eff * (1.0 - m.slip) + (1.0 - eff) * m.guess;
                let correct = rng.gen_bool(p.clamp(0.0, 1.0));
                interactions.push(Interaction {
                    student: s,
                    exercise: e,
                    concepts: cs.clone(),
                    correct,
                    order: t as i64,
                });
                mastery_trace.push(eff);
                for &c in cs {
                    mastery[c] += m.learn_rate * (1.0 - mastery[c]);
                }
                t += 1;
            }
        }
    }
    let catalog = ConceptCatalog::new(students, exercises, concepts, membership)?;
    Ok(SyntheticData {
        interactions,
        catalog,
        mastery: mastery_trace,
        difficulty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_correct() {
        let cfg = SyntheticConfig {
            n_students: 20,
            model: MasteryModel {
                guess: 0.0,
                slip: 0.0,
                initial_mastery: (1.0, 1.0),
                difficulty_spread: 0.0,
                ..MasteryModel::default()
            },
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        assert!(d.interactions.iter().all(|i| i.correct));
    }

    #[test]
    fn coin_flip_rate() {
        let cfg = SyntheticConfig {
            n_students: 200,
            model: MasteryModel {
                guess: 0.5,
                slip: 0.5,
                ..MasteryModel::default()
            },
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let n = d.interactions.len() as f64;
        assert_eq!(n, 10_000.0);
        let rate = d.interactions.iter().filter(|i| i.correct).count() as f64 / n;
        let sigma = (0.25 / n).sqrt();
        assert!((rate - 0.5).abs() < 3.0 * sigma, "rate {rate}");
    }

    /// Least-squares slope of mean correctness against sequence position.
    #[test]
    fn accuracy_rises_with_practice() {
        let cfg = SyntheticConfig::default();
        let d = generate_synthetic(&cfg).unwrap();
        let len = cfg.sequence_len;
        let mut sums = vec![0.0; len];
        let mut counts = vec![0.0; len];
        for it in &d.interactions {
            sums[it.order as usize] += f64::from(u8::from(it.correct));
            counts[it.order as usize] += 1.0;
        }
        let ys: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
        let xm = (len as f64 - 1.0) / 2.0;
        let ym = ys.iter().sum::<f64>() / len as f64;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, y) in ys.iter().enumerate() {
            sxy += (x as f64 - xm) * (y - ym);
            sxx += (x as f64 - xm).powi(2);
        }
        assert!(sxy / sxx > 0.0, "slope {}", sxy / sxx);
    }

    #[test]
    fn reproducible_and_covering() {
        let cfg = SyntheticConfig { seed: 9, ..SyntheticConfig::default() };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.catalog, b.catalog);
        for e in 0..a.catalog.n_exercises() {
            let n = a.catalog.concepts_of(e).len();
            assert!((1..=2).contains(&n));
        }
    }

    #[test]
    fn rejects_bad_params() {
        let cfg = SyntheticConfig { n_students: 0, ..SyntheticConfig::default() };
        assert!(generate_synthetic(&cfg).is_err());
    }
}
