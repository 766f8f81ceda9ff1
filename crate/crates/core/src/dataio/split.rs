use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::Interaction;
use crate::error::{Error, Result};
use crate::numerics::Rng64;

/// By-student train/test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTest {
    pub train: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub train_students: Vec<usize>,
    pub test_students: Vec<usize>,
}

/// Shuffles the distinct students with `spec.seed` and assigns the first
/// `round(fraction * n)` to train. Interaction order is preserved.
pub fn split(interactions: &[Interaction], spec: SplitSpec) -> Result<TrainTest> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let students: Vec<usize> = interactions
        .iter()
        .map(|i| i.student)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if students.len() < 2 {
        return Err(Error::Split(format!("need at least 2 students, have {}", students.len())));
    }
    let n_train = (spec.train_fraction * students.len() as f64).round() as usize;
    if n_train == 0 || n_train == students.len() {
        return Err(Error::Split(format!(
            "fraction {} over {} students leaves one side empty",
            spec.train_fraction,
            students.len()
        )));
    }
    let mut shuffled = students;
    shuffled.shuffle(&mut Rng64::seed_from_u64(spec.seed));
    let mut train_students = shuffled[..n_train].to_vec();
    let mut test_students = shuffled[n_train..].to_vec();
    train_students.sort_unstable();
    test_students.sort_unstable();
    let (train, test) = interactions
        .iter()
        .cloned()
        .partition(|i| train_students.binary_search(&i.student).is_ok());
    Ok(TrainTest {
        train,
        test,
        train_students,
        test_students,
    })
}
