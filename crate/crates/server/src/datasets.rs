//! Datasets available under the data directory.
//!
//! A dataset is any `manifest.json` either directly in the data directory
//! or one level below it. The directory is rescanned on every lookup so
//! newly generated datasets show up without a restart.

use std::path::{Path, PathBuf};

use gantryflow_core::ingest::{Dataset, DatasetManifest, YearMonth};
use serde::Serialize;

use gantryflow_core::synth::MANIFEST_FILE;

#[derive(Debug, Clone, Serialize)]
pub struct DatasetInfo {
    pub id: String,
    pub months: Vec<YearMonth>,
    pub files: usize,
    #[serde(skip)]
    pub manifest_path: PathBuf,
}

fn candidates(data_dir: &Path) -> Vec<PathBuf> {
    let mut out = vec![data_dir.join(MANIFEST_FILE)];
    if let Ok(entries) = std::fs::read_dir(data_dir) {
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        out.extend(dirs.into_iter().map(|d| d.join(MANIFEST_FILE)));
    }
    out.retain(|p| p.is_file());
    out
}

/// Every readable dataset, sorted by id. Unreadable manifests are logged
/// and skipped; on duplicate ids the first path in sorted order wins.
pub fn scan(data_dir: &Path) -> Vec<DatasetInfo> {
    let mut found: Vec<DatasetInfo> = Vec::new();
    for path in candidates(data_dir) {
        let manifest: DatasetManifest = match std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(m) => m,
            Err(e) => {
                tracing::warn!(path = %path.display(), "skipping dataset manifest: {e}");
                continue;
            }
        };
        if found.iter().any(|d| d.id == manifest.id) {
            tracing::warn!(path = %path.display(), id = %manifest.id, "duplicate dataset id");
            continue;
        }
        found.push(DatasetInfo {
            id: manifest.id,
            months: manifest.months,
            files: manifest.files.len(),
            manifest_path: path,
        });
    }
    found.sort_by(|a, b| a.id.cmp(&b.id));
    found
}

pub fn find(data_dir: &Path, id: &str) -> Option<DatasetInfo> {
    scan(data_dir).into_iter().find(|d| d.id == id)
}

pub fn load(info: &DatasetInfo) -> Result<Dataset, gantryflow_core::IngestError> {
    Dataset::load(&info.manifest_path)
}
