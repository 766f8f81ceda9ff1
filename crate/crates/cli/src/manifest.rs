//! Per-stage manifest: config fingerprint, input and output hashes, wall time.
//!
//! Stored as `<stage>.manifest` in the output directory, one `key = value` per line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use biclkt_core::digest::digest_bytes;

use crate::fail::{Fail, Outcome};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub stage: String,
    pub fingerprint: String,
    pub wall_ms: u128,
    /// File name (relative to the output directory) to sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Free-form facts (row counts and the like).
    pub notes: BTreeMap<String, String>,
}

pub fn manifest_path(out: &Path, stage: &str) -> PathBuf {
    out.join(format!("{stage}.manifest"))
}

pub fn hash_file(path: &Path) -> Outcome<String> {
    let bytes = std::fs::read(path).map_err(|e| Fail::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

impl Manifest {
    pub fn new(stage: &str, fingerprint: &str) -> Self {
        Manifest { stage: stage.into(), fingerprint: fingerprint.into(), ..Self::default() }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("stage = {}\nfingerprint = {}\nwall_ms = {}\n", self.stage, self.fingerprint, self.wall_ms);
        for (prefix, map) in [("input", &self.inputs), ("output", &self.outputs), ("note", &self.notes)] {
            for (k, v) in map {
                s += &format!("{prefix}.{k} = {v}\n");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once(" = ")?;
            let v = v.to_string();
            match k {
                "stage" => m.stage = v,
                "fingerprint" => m.fingerprint = v,
                "wall_ms" => m.wall_ms = v.parse().ok()?,
                _ => {
                    let (prefix, name) = k.split_once('.')?;
                    let map = match prefix {
                        "input" => &mut m.inputs,
                        "output" => &mut m.outputs,
                        "note" => &mut m.notes,
                        _ => return None,
                    };
                    map.insert(name.to_string(), v);
                }
            }
        }
        Some(m)
    }

    pub fn save(&self, out: &Path) -> Outcome<()> {
        let p = manifest_path(out, &self.stage);
        std::fs::write(&p, self.to_text()).map_err(|e| Fail::io(&p, e))
    }

    /// Loads a predecessor's manifest; a missing one names the stage to run.
    pub fn load(out: &Path, stage: &str) -> Outcome<Self> {
        let p = manifest_path(out, stage);
        let text = std::fs::read_to_string(&p).map_err(|_| Fail::missing(stage, out))?;
        Manifest::parse(&text).ok_or_else(|| Fail::artifact(format!("{} is corrupt; run {stage} again", p.display())))
    }

    pub fn record_output(&mut self, out: &Path, name: &str) -> Outcome<()> {
        let h = hash_file(&out.join(name))?;
        self.outputs.insert(name.to_string(), h);
        Ok(())
    }

    pub fn record_input(&mut self, path: &Path, name: &str) -> Outcome<()> {
        let h = hash_file(path)?;
        self.inputs.insert(name.to_string(), h);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut m = Manifest::new("pretrain", "abc123");
        m.wall_ms = 42;
        m.inputs.insert("graphs/edges.csv".into(), "h1".into());
        m.outputs.insert("e2e.csv".into(), "h2".into());
        m.notes.insert("epochs".into(), "100".into());
        assert_eq!(Manifest::parse(&m.to_text()), Some(m));
        assert_eq!(Manifest::parse("junk"), None);
    }
}
