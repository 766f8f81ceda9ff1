//! Interaction logs: parsing, canonical CSV, student splits and a
//! synthetic generator with planted concept structure.

mod parse;
mod split;
mod synth;

use std::collections::HashMap;

pub use parse::{parse_log, parse_reader, write_canonical, ColumnRef, FormatConfig, ParsedLog};
pub use split::{split, SplitSpec, TrainTest};
pub use synth::{generate_synthetic, MasteryModel, SyntheticConfig, SyntheticData};

/// Longest sequence fed to a prediction head; longer histories continue in a new sequence.
pub const MAX_SEQUENCE_LEN: usize = 200;

/// One answered exercise. Ids are indices into a [`ConceptCatalog`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub student: usize,
    pub exercise: usize,
    /// Sorted, deduplicated concept indices; never empty.
    pub concepts: Vec<usize>,
    pub correct: bool,
    pub order: i64,
}

/// Interned students, exercises and concepts with exercise → concept membership.
///
/// Ids are stored in sorted order so index assignment does not depend on
/// row order in the source file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptCatalog {
    students: Vec<String>,
    exercises: Vec<String>,
    concepts: Vec<String>,
    membership: Vec<Vec<usize>>,
    student_index: HashMap<String, usize>,
    exercise_index: HashMap<String, usize>,
    concept_index: HashMap<String, usize>,
}

fn index_of(ids: &[String]) -> HashMap<String, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
}

impl ConceptCatalog {
    /// Builds a catalog from sorted id lists and per-exercise concept sets.
    pub fn new(
        students: Vec<String>,
        exercises: Vec<String>,
        concepts: Vec<String>,
        membership: Vec<Vec<usize>>,
    ) -> crate::Result<Self> {
        if exercises.is_empty() || concepts.is_empty() {
            return Err(crate::Error::EmptyDataset("catalog has no exercises or concepts".into()));
        }
        if membership.len() != exercises.len() || membership.iter().any(|m| m.is_empty()) {
            return Err(crate::Error::Data(
                "every exercise must belong to at least one concept".into(),
            ));
        }
        Ok(ConceptCatalog {
            student_index: index_of(&students),
            exercise_index: index_of(&exercises),
            concept_index: index_of(&concepts),
            students,
            exercises,
            concepts,
            membership,
        })
    }

    pub fn students(&self) -> &[String] {
        &self.students
    }

    pub fn exercises(&self) -> &[String] {
        &self.exercises
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_exercises(&self) -> usize {
        self.exercises.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    /// Concepts of exercise `e`, sorted.
    pub fn concepts_of(&self, e: usize) -> &[usize] {
        &self.membership[e]
    }

    /// Exercises whose membership contains concept `c`, ascending.
    pub fn exercises_of(&self, c: usize) -> Vec<usize> {
        (0..self.exercises.len())
            .filter(|&e| self.membership[e].binary_search(&c).is_ok())
            .collect()
    }

    pub fn student_id(&self, id: &str) -> Option<usize> {
        self.student_index.get(id).copied()
    }

    pub fn exercise_id(&self, id: &str) -> Option<usize> {
        self.exercise_index.get(id).copied()
    }

    pub fn concept_id(&self, id: &str) -> Option<usize> {
        self.concept_index.get(id).copied()
    }

    pub fn require_concept(&self, id: &str) -> crate::Result<usize> {
        self.concept_id(id).ok_or_else(|| crate::Error::Lookup {
            kind: "concept",
            id: id.to_string(),
        })
    }
}

/// One student's ordered `(exercise, correct)` history, at most
/// [`MAX_SEQUENCE_LEN`] long.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub student: usize,
    pub steps: Vec<(usize, bool)>,
}

impl Sequence {
    /// Number of scored next-step targets.
    pub fn n_targets(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

/// Groups interactions per student (in order) and cuts histories into
/// chunks of at most `max_len`. Chunks shorter than 2 carry no target and
/// are dropped.
pub fn to_sequences(interactions: &[Interaction], max_len: usize) -> Vec<Sequence> {
    let max_len = max_len.max(2);
    let mut by_student: Vec<(usize, Vec<&Interaction>)> = Vec::new();
    let mut pos: HashMap<usize, usize> = HashMap::new();
    for it in interactions {
        let slot = *pos.entry(it.student).or_insert_with(|| {
            by_student.push((it.student, Vec::new()));
            by_student.len() - 1
        });
        by_student[slot].1.push(it);
    }
    by_student.sort_by_key(|(s, _)| *s);
    let mut out = Vec::new();
    for (student, mut items) in by_student {
        items.sort_by_key(|it| it.order);
        for chunk in items.chunks(max_len) {
            if chunk.len() < 2 {
                continue;
            }
            out.push(Sequence {
                student,
                steps: chunk.iter().map(|it| (it.exercise, it.correct)).collect(),
            });
        }
    }
    out
}
