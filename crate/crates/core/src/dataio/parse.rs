use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};

use super::{ConceptCatalog, Interaction};
use crate::error::{Error, Result};

/// A column addressed by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl ColumnRef {
    /// `#3` is a position, anything else a header name.
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix('#').and_then(|n| n.parse().ok()) {
            Some(i) => ColumnRef::Index(i),
            None => ColumnRef::Name(s.to_string()),
        }
    }
}

/// Column mapping and value encoding for an interaction export.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatConfig {
    pub student: ColumnRef,
    pub exercise: ColumnRef,
    pub concepts: ColumnRef,
    pub correct: ColumnRef,
    /// `None` orders rows by file position.
    pub order: Option<ColumnRef>,
    pub delimiter: u8,
    pub concept_delimiter: char,
    /// `None` detects a header by looking for the student column name.
    pub header: Option<bool>,
    pub correct_values: Vec<String>,
    pub incorrect_values: Vec<String>,
    /// Rows sharing (student, order, exercise) are one interaction with the union of their concepts.
    pub merge_same_order: bool,
    /// Legacy: one interaction per (row, concept) instead of a concept set.
    pub split_multi_concept: bool,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig {
            student: ColumnRef::Name("student_id".into()),
            exercise: ColumnRef::Name("exercise_id".into()),
            concepts: ColumnRef::Name("concept_ids".into()),
            correct: ColumnRef::Name("correct".into()),
            order: Some(ColumnRef::Name("order".into())),
            delimiter: b',',
            concept_delimiter: ';',
            header: None,
            correct_values: vec!["1".into(), "true".into()],
            incorrect_values: vec!["0".into(), "false".into()],
            merge_same_order: true,
            split_multi_concept: false,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects a boolean, got `{v}`"))),
    }
}

fn single_char(key: &str, v: &str) -> Result<char> {
    let v = if v == "\\t" || v == "tab" { "\t" } else { v };
    let mut chars = v.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(Error::Config(format!("`{key}` expects a single character, got `{v}`"))),
    }
}

impl FormatConfig {
    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = FormatConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("format config line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "student" => cfg.student = ColumnRef::parse(v),
                "exercise" => cfg.exercise = ColumnRef::parse(v),
                "concepts" => cfg.concepts = ColumnRef::parse(v),
                "correct" => cfg.correct = ColumnRef::parse(v),
                "order" => cfg.order = (!v.is_empty()).then(|| ColumnRef::parse(v)),
                "delimiter" => {
                    let c = single_char(k, v)?;
                    cfg.delimiter = u8::try_from(c)
                        .map_err(|_| Error::Config("delimiter must be ASCII".into()))?;
                }
                "concept_delimiter" => cfg.concept_delimiter = single_char(k, v)?,
                "header" => cfg.header = if v == "auto" { None } else { Some(parse_bool(k, v)?) },
                "correct_values" => cfg.correct_values = v.split(',').map(|s| s.trim().to_string()).collect(),
                "incorrect_values" => {
                    cfg.incorrect_values = v.split(',').map(|s| s.trim().to_string()).collect()
                }
                "merge_same_order" => cfg.merge_same_order = parse_bool(k, v)?,
                "split_multi_concept" => cfg.split_multi_concept = parse_bool(k, v)?,
                _ => return Err(Error::Config(format!("unknown format config key `{k}`"))),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    fn refs(&self) -> [(&'static str, Option<&ColumnRef>); 5] {
        [
            ("student", Some(&self.student)),
            ("exercise", Some(&self.exercise)),
            ("concepts", Some(&self.concepts)),
            ("correct", Some(&self.correct)),
            ("order", self.order.as_ref()),
        ]
    }
}

/// Result of [`parse_log`].
#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub interactions: Vec<Interaction>,
    pub catalog: ConceptCatalog,
    /// Rows dropped because a field was missing or unparseable.
    pub skipped: usize,
}

struct RawRow {
    student: String,
    exercise: String,
    concepts: Vec<String>,
    correct: bool,
    order: i64,
    position: usize,
}

/// Resolves column positions. `Ok(None)` for an optional column that is absent.
fn resolve(
    cfg: &FormatConfig,
    header: Option<&csv::StringRecord>,
    width: usize,
) -> Result<[Option<usize>; 5]> {
    let defaults = FormatConfig::default();
    let default_refs = defaults.refs();
    let mut out = [None; 5];
    for (slot, ((name, r), (_, dflt))) in cfg.refs().iter().zip(default_refs.iter()).enumerate() {
        let Some(r) = r else { continue };
        let idx = match (r, header) {
            (ColumnRef::Index(i), _) => Some(*i),
            (ColumnRef::Name(n), Some(h)) => h.iter().position(|f| f.trim() == n),
            // headerless canonical file: default names fall back to canonical positions
            (ColumnRef::Name(_), None) if Some(*r) == *dflt => {
                (slot < width).then_some(slot)
            }
            (ColumnRef::Name(_), None) => None,
        };
        match idx {
            Some(i) => out[slot] = Some(i),
            None if *name == "order" => out[slot] = None,
            None => {
                return Err(Error::Config(format!(
                    "cannot resolve {name} column {r:?}{}",
                    if header.is_some() { " in header" } else { " (file has no header)" }
                )))
            }
        }
    }
    Ok(out)
}

/// Parses an interaction export from any reader.
pub fn parse_reader<R: Read>(reader: R, cfg: &FormatConfig) -> Result<ParsedLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(cfg.delimiter)
        .from_reader(reader);

    // free-text columns of real exports are not always UTF-8
    let mut records = rdr.byte_records().map(|r| r.map(csv::StringRecord::from_byte_record_lossy));
    let first = match records.next() {
        Some(Ok(r)) => r,
        Some(Err(e)) => return Err(Error::Data(format!("unreadable first row: {e}"))),
        None => return Err(Error::EmptyDataset("input has no rows".into())),
    };
    let has_header = match cfg.header {
        Some(h) => h,
        None => match &cfg.student {
            ColumnRef::Name(n) => first.iter().any(|f| f.trim() == n),
            ColumnRef::Index(_) => false,
        },
    };
    let cols = resolve(cfg, has_header.then_some(&first), first.len())?;
    let [c_student, c_exercise, c_concepts, c_correct] =
        [cols[0], cols[1], cols[2], cols[3]].map(|c| c.expect("required column resolved"));
    let c_order = cols[4];

    let mut rows = Vec::new();
    let mut skipped = 0usize;
    let data_rows = (!has_header).then_some(Ok(first)).into_iter().chain(records);
    for (position, rec) in data_rows.enumerate() {
        let Ok(rec) = rec else {
            skipped += 1;
            continue;
        };
        match parse_row(&rec, cfg, [c_student, c_exercise, c_concepts, c_correct], c_order, position) {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("skipped {skipped} malformed rows");
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(format!("no valid rows ({skipped} skipped)")));
    }
    let parsed = assemble(rows, cfg, skipped)?;
    info!(
        "parsed {} interactions: {} students, {} exercises, {} concepts",
        parsed.interactions.len(),
        parsed.catalog.n_students(),
        parsed.catalog.n_exercises(),
        parsed.catalog.n_concepts()
    );
    Ok(parsed)
}

fn parse_row(
    rec: &csv::StringRecord,
    cfg: &FormatConfig,
    cols: [usize; 4],
    c_order: Option<usize>,
    position: usize,
) -> Option<RawRow> {
    let field = |i: usize| rec.get(i).map(str::trim).filter(|s| !s.is_empty());
    let student = field(cols[0])?.to_string();
    let exercise = field(cols[1])?.to_string();
    let mut concepts: Vec<String> = field(cols[2])?
        .split(cfg.concept_delimiter)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if concepts.is_empty() {
        return None;
    }
    concepts.sort();
    concepts.dedup();
    let c = field(cols[3])?;
    let correct = if cfg.correct_values.iter().any(|v| v == c) {
        true
    } else if cfg.incorrect_values.iter().any(|v| v == c) {
        false
    } else {
        return None;
    };
    let order = match c_order {
        Some(i) => field(i)?.parse::<i64>().ok()?,
        None => position as i64,
    };
    Some(RawRow {
        student,
        exercise,
        concepts,
        correct,
        order,
        position,
    })
}

fn assemble(mut rows: Vec<RawRow>, cfg: &FormatConfig, skipped: usize) -> Result<ParsedLog> {
    rows.sort_by(|a, b| {
        (&a.student, a.order, a.position).cmp(&(&b.student, b.order, b.position))
    });
    if cfg.merge_same_order {
        let mut merged: Vec<RawRow> = Vec::with_capacity(rows.len());
        for row in rows {
            match merged.last_mut() {
                Some(prev)
                    if prev.student == row.student
                        && prev.order == row.order
                        && prev.exercise == row.exercise =>
                {
                    prev.concepts.extend(row.concepts);
                    prev.concepts.sort();
                    prev.concepts.dedup();
                }
                _ => merged.push(row),
            }
        }
        rows = merged;
    }
    if cfg.split_multi_concept {
        rows = rows
            .into_iter()
            .flat_map(|r| {
                let RawRow { student, exercise, concepts, correct, order, position } = r;
                concepts.into_iter().map(move |c| RawRow {
                    student: student.clone(),
                    exercise: exercise.clone(),
                    concepts: vec![c],
                    correct,
                    order,
                    position,
                })
            })
            .collect();
    }

    let students: BTreeSet<&str> = rows.iter().map(|r| r.student.as_str()).collect();
    let concepts: BTreeSet<&str> = rows.iter().flat_map(|r| r.concepts.iter().map(String::as_str)).collect();
    let mut membership: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &rows {
        membership
            .entry(r.exercise.as_str())
            .or_default()
            .extend(r.concepts.iter().map(String::as_str));
    }
    let concept_list: Vec<String> = concepts.iter().map(|s| s.to_string()).collect();
    let concept_pos = |c: &str| concept_list.binary_search_by(|x| x.as_str().cmp(c)).expect("known concept");
    let exercise_list: Vec<String> = membership.keys().map(|s| s.to_string()).collect();
    let member_idx: Vec<Vec<usize>> = membership
        .values()
        .map(|cs| cs.iter().map(|c| concept_pos(c)).collect())
        .collect();
    let catalog = ConceptCatalog::new(
        students.iter().map(|s| s.to_string()).collect(),
        exercise_list,
        concept_list.clone(),
        member_idx,
    )?;

    let interactions = rows
        .iter()
        .map(|r| Interaction {
            student: catalog.student_id(&r.student).expect("known student"),
            exercise: catalog.exercise_id(&r.exercise).expect("known exercise"),
            concepts: r.concepts.iter().map(|c| concept_pos(c)).collect(),
            correct: r.correct,
            order: r.order,
        })
        .collect();
    Ok(ParsedLog {
        interactions,
        catalog,
        skipped,
    })
}

/// Parses an interaction file.
pub fn parse_log(path: &Path, cfg: &FormatConfig) -> Result<ParsedLog> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(std::io::BufReader::new(f), cfg)
}

/// Writes the canonical `student_id,exercise_id,concept_ids,correct,order` CSV.
pub fn write_canonical<W: Write>(
    mut w: W,
    interactions: &[Interaction],
    catalog: &ConceptCatalog,
) -> std::io::Result<()> {
    writeln!(w, "student_id,exercise_id,concept_ids,correct,order")?;
    for it in interactions {
        let concepts: Vec<&str> = it.concepts.iter().map(|&c| catalog.concepts()[c].as_str()).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            catalog.students()[it.student],
            catalog.exercises()[it.exercise],
            concepts.join(";"),
            u8::from(it.correct),
            it.order
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParsedLog> {
        parse_reader(text.as_bytes(), &FormatConfig::default())
    }

    #[test]
    fn latin1_free_text_is_not_a_malformed_row() {
        let mut bytes = b"student_id,exercise_id,concept_ids,correct,note\ns1,e1,c1,1,caf".to_vec();
        bytes.extend([0xe9, b'\n']);
        let p = parse_reader(bytes.as_slice(), &FormatConfig::default()).unwrap();
        assert_eq!((p.interactions.len(), p.skipped), (1, 0));
    }

    #[test]
    fn single_headerless_row() {
        let p = parse("s1,e1,c1,1\n").unwrap();
        assert_eq!(p.interactions.len(), 1);
        assert_eq!(p.catalog.concepts(), &["c1".to_string()]);
        assert_eq!(p.catalog.exercises(), &["e1".to_string()]);
        assert!(p.interactions[0].correct);
        assert_eq!(p.skipped, 0);
    }

    #[test]
    fn malformed_rows_are_counted() {
        let p = parse("student_id,exercise_id,concept_ids,correct,order\ns1,e1,c1,1,1\ns1,e2,,0,2\ns2,e2,c2,0,1\n").unwrap();
        assert_eq!(p.interactions.len(), 2);
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn multi_concept_kept_as_set() {
        let p = parse("s1,e1,c2;c1,1,0\ns1,e2,c1,0,1\n").unwrap();
        assert_eq!(p.interactions.len(), 2);
        assert_eq!(p.interactions[0].concepts, vec![0, 1]);
        assert_eq!(p.catalog.concepts_of(0), &[0, 1]);
    }

    #[test]
    fn duplicate_rows_merge_into_concept_set() {
        let p = parse("s1,e1,c1,1,5\ns1,e1,c2,1,5\n").unwrap();
        assert_eq!(p.interactions.len(), 1);
        assert_eq!(p.interactions[0].concepts, vec![0, 1]);
    }

    #[test]
    fn legacy_split_explodes_concepts() {
        let cfg = FormatConfig {
            split_multi_concept: true,
            ..FormatConfig::default()
        };
        let p = parse_reader("s1,e1,c1;c2,1,0\n".as_bytes(), &cfg).unwrap();
        assert_eq!(p.interactions.len(), 2);
    }

    #[test]
    fn missing_column_is_config_error() {
        let err = parse("student_id,exercise_id,correct\ns1,e1,1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn all_rows_malformed_is_empty_dataset() {
        let err = parse("s1,e1,,1\ns2,,c1,1\n").unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)), "{err}");
    }

    #[test]
    fn custom_mapping() {
        let cfg = FormatConfig::from_kv(
            "student = user_id\nexercise = problem_id\nconcepts = skill_id\ncorrect = correct\norder = order_id\nconcept_delimiter = _\n",
        )
        .unwrap();
        let text = "order_id,user_id,problem_id,correct,skill_id,skill_name\n\
                    3,u1,p1,1,10,\"Addition, whole\"\n\
                    4,u1,p2,0,10_11,x\n";
        let p = parse_reader(text.as_bytes(), &cfg).unwrap();
        assert_eq!(p.interactions.len(), 2);
        assert_eq!(p.catalog.n_concepts(), 2);
        assert_eq!(p.interactions[1].concepts.len(), 2);
    }

    #[test]
    fn unknown_format_key_rejected() {
        assert!(FormatConfig::from_kv("colour = blue").is_err());
    }

    #[test]
    fn canonical_roundtrip_is_idempotent() {
        let p = parse("s2,e1,c1,1,3\ns1,e2,c2;c1,0,1\ns1,e1,c1,1,2\n").unwrap();
        let mut buf = Vec::new();
        write_canonical(&mut buf, &p.interactions, &p.catalog).unwrap();
        let q = parse_reader(buf.as_slice(), &FormatConfig::default()).unwrap();
        assert_eq!(q.interactions, p.interactions);
        assert_eq!(q.catalog, p.catalog);
        let mut buf2 = Vec::new();
        write_canonical(&mut buf2, &q.interactions, &q.catalog).unwrap();
        assert_eq!(buf, buf2);
    }
}
