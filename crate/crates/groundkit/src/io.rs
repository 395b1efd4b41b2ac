//! JSONL/JSON reading and atomic writes.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use groundkit_core::forge::{ImageRecord, KnowledgeBase};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::wire::{KnowledgeRecord, ManifestRecord};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses one record per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    parse_jsonl(path, &text)
}

pub fn parse_jsonl<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, i + 1, e)))
        .collect()
}

/// Newline-terminated JSONL.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Vec<ImageRecord>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: ManifestRecord =
                serde_json::from_str(l).map_err(|e| Error::format(path, i + 1, e))?;
            rec.to_image().map_err(|e| Error::format(path, i + 1, e))
        })
        .collect()
}

/// Knowledge file: a JSON array of `{label, text, source}`. An empty file
/// is an empty base.
pub fn load_knowledge(path: &Path) -> Result<KnowledgeBase> {
    let text = read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(KnowledgeBase::default());
    }
    let records: Vec<KnowledgeRecord> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e))?;
    let entries = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_entry()
                .map_err(|e| Error::format(path, 0, format!("entry {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KnowledgeBase::from_entries(entries)?)
}

pub fn knowledge_json(kb: &KnowledgeBase) -> String {
    let records: Vec<KnowledgeRecord> = kb.entries().map(KnowledgeRecord::from).collect();
    to_json_pretty(&records)
}

pub fn save_knowledge(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    write_atomic(path, knowledge_json(kb).as_bytes())
}
