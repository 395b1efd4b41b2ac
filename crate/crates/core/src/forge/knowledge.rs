use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::types::UnknownName;
use crate::metrics::normalize_phrase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KnowledgeSource {
    Wikipedia,
    Umls,
    Manual,
}

impl KnowledgeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Wikipedia => "wikipedia",
            Self::Umls => "umls",
            Self::Manual => "manual",
        }
    }
}

impl fmt::Display for KnowledgeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KnowledgeSource {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wikipedia" => Ok(Self::Wikipedia),
            "umls" => Ok(Self::Umls),
            "manual" => Ok(Self::Manual),
            _ => Err(UnknownName {
                kind: "knowledge source",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeEntry {
    pub label: String,
    pub text: String,
    pub source: KnowledgeSource,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KnowledgeError {
    #[error("duplicate knowledge label {0:?}")]
    DuplicateLabel(String),
    #[error("knowledge label is empty")]
    EmptyLabel,
    #[error("no knowledge for label {0:?}")]
    NotFound(String),
}

/// Label-keyed knowledge. Keys are lowercased with whitespace collapsed, so
/// lookups ignore case and spacing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    entries: BTreeMap<String, KnowledgeEntry>,
    order: Vec<String>,
}

impl KnowledgeBase {
    pub fn from_entries(
        entries: impl IntoIterator<Item = KnowledgeEntry>,
    ) -> Result<Self, KnowledgeError> {
        let mut kb = Self::default();
        for e in entries {
            kb.insert(e)?;
        }
        Ok(kb)
    }

    pub fn insert(&mut self, entry: KnowledgeEntry) -> Result<(), KnowledgeError> {
        let key = normalize_phrase(&entry.label);
        if key.is_empty() {
            return Err(KnowledgeError::EmptyLabel);
        }
        if self.entries.contains_key(&key) {
            return Err(KnowledgeError::DuplicateLabel(entry.label));
        }
        self.order.push(key.clone());
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn lookup(&self, label: &str) -> Result<&KnowledgeEntry, KnowledgeError> {
        self.entries
            .get(&normalize_phrase(label))
            .ok_or_else(|| KnowledgeError::NotFound(label.into()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = &KnowledgeEntry> {
        self.order.iter().map(|k| &self.entries[k])
    }
}
