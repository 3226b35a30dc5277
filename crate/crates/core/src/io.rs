//! JSON-lines corpus files. One record per line; token sequences are
//! space-separated strings.
//!
//! ```json
//! {"da":"inform(name=Ananta,food=Indian)","text":"Ananta podává indické jídlo .",
//!  "delex_text":"X-name podává X-food jídlo .","lemmas":"X-name podávat X-food jídlo .",
//!  "tags":"NNFS1-----A---- VB-S---3P-AA--- AAIS4----1A---- NNNS4-----A---- Z:-------------"}
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::RawInstance;
use crate::da::{parse_da, Registry};
use crate::delex::Instance;
use crate::error::{Error, Result};
use crate::morph::{parse_tag, MorphTag};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub da: String,
    pub text: String,
    #[serde(default)]
    pub delex_text: String,
    #[serde(default)]
    pub lemmas: String,
    #[serde(default)]
    pub tags: String,
}

fn split(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

impl InstanceRecord {
    pub fn from_instance(inst: &Instance) -> Self {
        InstanceRecord {
            da: inst.da.to_string(),
            text: inst.text.join(" "),
            delex_text: inst.delex_text.join(" "),
            lemmas: inst.lemmas.join(" "),
            tags: inst
                .tags
                .iter()
                .map(MorphTag::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    pub fn to_instance(&self, registry: &Registry) -> Result<Instance> {
        let tags = self
            .tags
            .split_whitespace()
            .map(parse_tag)
            .collect::<Result<Vec<MorphTag>>>()?;
        let inst = Instance {
            da: parse_da(&self.da, registry)?,
            text: split(&self.text),
            delex_text: split(&self.delex_text),
            lemmas: split(&self.lemmas),
            tags,
        };
        inst.check()?;
        Ok(inst)
    }
}

impl InstanceRecord {
    /// Interprets the record as a raw row: `lemmas` and `tags` aligned with
    /// `text`, `delex_text` ignored.
    pub fn to_raw(&self, registry: &Registry) -> Result<RawInstance> {
        Ok(RawInstance {
            da: parse_da(&self.da, registry)?,
            text: split(&self.text),
            lemmas: split(&self.lemmas),
            tags: self
                .tags
                .split_whitespace()
                .map(parse_tag)
                .collect::<Result<Vec<MorphTag>>>()?,
        })
    }

    pub fn from_raw(raw: &RawInstance) -> Self {
        InstanceRecord {
            da: raw.da.to_string(),
            text: raw.text.join(" "),
            delex_text: String::new(),
            lemmas: raw.lemmas.join(" "),
            tags: raw.tags.iter().map(MorphTag::to_string).collect::<Vec<_>>().join(" "),
        }
    }
}

/// Reads raw rows (see [`InstanceRecord::to_raw`]).
pub fn read_raw<R: Read>(reader: R, registry: &Registry) -> Result<Vec<RawInstance>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(i + 1, e.to_string()))?;
        out.push(rec.to_raw(registry).map_err(|e| Error::format(i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_raw<W: Write>(mut w: W, rows: &[RawInstance]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, &InstanceRecord::from_raw(r))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<InstanceRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads a corpus, reporting the line number of the first bad record.
pub fn read_corpus<R: Read>(reader: R, registry: &Registry) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(i + 1, e.to_string()))?;
        out.push(
            rec.to_instance(registry)
                .map_err(|e| Error::format(i + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>, registry: &Registry) -> Result<Vec<Instance>> {
    read_corpus(std::fs::File::open(path)?, registry)
}

pub fn write_corpus<W: Write>(mut w: W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, &InstanceRecord::from_instance(inst))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_corpus(&mut w, instances)?;
    w.flush()?;
    Ok(())
}
