//! Dataset counts per perspective, modality and split.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: u64,
    pub val: u64,
    pub test: u64,
    pub total: u64,
}

impl SplitCounts {
    fn bump(&mut self, split: &str) {
        match split {
            "train" => self.train += 1,
            "val" => self.val += 1,
            "test" => self.test += 1,
            _ => {}
        }
        self.total += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub perspectives: BTreeMap<String, SplitCounts>,
    pub modalities: BTreeMap<String, SplitCounts>,
    pub totals: SplitCounts,
}

/// The two fields stats needs from a sample line.
#[derive(Deserialize)]
struct Keys {
    perspective: String,
    modality: String,
}

impl DatasetStats {
    pub fn add(&mut self, split: &str, perspective: &str, modality: &str) {
        self.perspectives
            .entry(perspective.into())
            .or_default()
            .bump(split);
        self.modalities
            .entry(modality.into())
            .or_default()
            .bump(split);
        self.totals.bump(split);
    }
}

/// Counts `<dir>/splits/{train,val,test}.jsonl`; missing files count as
/// empty.
pub fn dataset_stats(dir: &Path) -> Result<DatasetStats> {
    let mut stats = DatasetStats::default();
    for split in SPLITS {
        let path = dir.join("splits").join(format!("{split}.jsonl"));
        if !path.exists() {
            continue;
        }
        for k in io::read_jsonl::<Keys>(&path)? {
            stats.add(split, &k.perspective, &k.modality);
        }
    }
    Ok(stats)
}
