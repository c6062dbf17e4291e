//! One JSON document per model or session under a data directory.
//!
//! ```text
//! <root>/datasets/<name>.jsonl       corpus
//! <root>/datasets/<name>.meta.json   {"split_seed": ..}
//! <root>/models/<id>.json
//! <root>/sessions/<id>.json
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lime_core::data::{self, LabeledCorpus};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    split_seed: u64,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to a sibling temp file, syncs it, then renames over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> ApiResult<()> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Names become file names, so keep them to a safe alphabet.
pub fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> ApiResult<Self> {
        let root = root.into();
        for sub in ["datasets", "models", "sessions"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_path(&self, kind: &str, id: &str) -> PathBuf {
        self.root.join(kind).join(format!("{id}.json"))
    }

    pub fn save<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> ApiResult<()> {
        let bytes = serde_json::to_vec_pretty(value).map_err(|e| ApiError::Internal(e.to_string()))?;
        write_atomic(&self.doc_path(kind, id), &bytes)
    }

    /// Every `<kind>/*.json` document, in file-name order.
    pub fn load_all<T: DeserializeOwned>(&self, kind: &str) -> ApiResult<Vec<T>> {
        let mut out = Vec::new();
        for path in self.list(kind, "json")? {
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            out.push(serde_json::from_str(&text).map_err(|e| io_err(&path, e))?);
        }
        Ok(out)
    }

    fn list(&self, kind: &str, ext: &str) -> ApiResult<Vec<PathBuf>> {
        let dir = self.root.join(kind);
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| io_err(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == ext)
                    && !p.to_string_lossy().ends_with(".meta.json")
            })
            .collect();
        paths.sort();
        Ok(paths)
    }

    pub fn save_dataset(&self, corpus: &LabeledCorpus) -> ApiResult<()> {
        let path = self.root.join("datasets").join(format!("{}.jsonl", corpus.name));
        let mut buf = Vec::new();
        data::write_jsonl(corpus, &mut buf).map_err(|e| io_err(&path, e))?;
        write_atomic(&path, &buf)?;
        let meta = serde_json::to_vec(&DatasetMeta {
            split_seed: corpus.split_seed,
        })
        .map_err(|e| ApiError::Internal(e.to_string()))?;
        write_atomic(&self.root.join("datasets").join(format!("{}.meta.json", corpus.name)), &meta)
    }

    pub fn load_datasets(&self) -> ApiResult<Vec<LabeledCorpus>> {
        let mut out = Vec::new();
        for path in self.list("datasets", "jsonl")? {
            let mut corpus = data::load_jsonl(&path)?;
            let meta = path.with_extension("meta.json");
            if let Ok(text) = fs::read_to_string(&meta) {
                let m: DatasetMeta = serde_json::from_str(&text).map_err(|e| io_err(&meta, e))?;
                corpus.split_seed = m.split_seed;
            }
            out.push(corpus);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lime_core::textrepr::Document;

    #[test]
    fn documents_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.save("models", "b", &serde_json::json!({"x": 2})).unwrap();
        store.save("models", "a", &serde_json::json!({"x": 1})).unwrap();
        let all: Vec<serde_json::Value> = store.load_all("models").unwrap();
        assert_eq!(all, vec![serde_json::json!({"x": 1}), serde_json::json!({"x": 2})]);
        assert!(!dir.path().join("models/a.tmp").exists());
    }

    #[test]
    fn dataset_keeps_split_seed() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut c = LabeledCorpus::new("toy", vec![Document::new("a", "good film", Some(1))]);
        c.split_seed = 42;
        store.save_dataset(&c).unwrap();
        let back = store.load_datasets().unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].name, "toy");
        assert_eq!(back[0].split_seed, 42);
        assert_eq!(back[0].docs[0].text, "good film");
    }

    #[test]
    fn names() {
        assert!(valid_name("synth-1.v2"));
        assert!(!valid_name("../etc"));
        assert!(!valid_name(""));
        assert!(!valid_name("a/b"));
    }
}
