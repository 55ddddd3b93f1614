use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::ResourceSummary;

/// Summaries are reused only for the same resource id, the same payload
/// bytes and the same locale.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub logical_id: String,
    pub content_hash: String,
    pub locale: String,
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    key: CacheKey,
    summary: ResourceSummary,
}

/// In-memory summary map, optionally mirrored to an append-only NDJSON file.
#[derive(Debug, Default)]
pub struct SummaryCache {
    entries: RwLock<HashMap<CacheKey, ResourceSummary>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl SummaryCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) `dir/summaries.ndjson` and loads every
    /// readable record. Later records for a key replace earlier ones;
    /// unreadable lines, such as a torn final write, are skipped.
    pub fn persistent(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("summaries.ndjson");
        let mut entries = HashMap::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Record>(&line) {
                    Ok(record) => {
                        entries.insert(record.key, record.summary);
                    }
                    Err(e) => tracing::warn!(line = n + 1, error = %e, "skipping unreadable cache record"),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<ResourceSummary> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, summary: ResourceSummary) -> std::io::Result<()> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&Record {
                key: key.clone(),
                summary: summary.clone(),
            })?;
            line.push('\n');
            let mut file = file.lock().expect("cache file lock");
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.entries.write().expect("cache lock").insert(key, summary);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
