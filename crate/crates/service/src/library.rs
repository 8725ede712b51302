//! The case library: uploaded bundles stored under `cases/<id>/`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Cursor, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use casegen_core::bundle::{self, BundleError, CASE_FILE};
use casegen_core::case::{CaseMeta, Violation};
use casegen_core::{parse_case_bundle, serialize_case, CaseDefinition};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{ZipArchive, ZipWriter};

#[derive(Debug, Error)]
pub enum UploadError {
    #[error("not a readable zip archive: {0}")]
    Archive(String),
    #[error("archive has no {CASE_FILE}")]
    NoCaseFile,
    #[error("{0}")]
    Malformed(String),
    #[error("invalid case")]
    Invalid(Vec<Violation>),
    #[error("missing media file(s): {}", .0.join(", "))]
    MissingMedia(Vec<String>),
    #[error("a different case with id `{0}` is already stored")]
    Duplicate(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CaseSummary {
    pub id: String,
    pub meta: CaseMeta,
}

#[derive(Debug, Default, Clone, Deserialize)]
pub struct CaseFilter {
    pub field: Option<String>,
    pub difficulty: Option<u8>,
    pub author: Option<String>,
    pub text: Option<String>,
}

impl CaseFilter {
    fn matches(&self, meta: &CaseMeta) -> bool {
        let same = |want: &Option<String>, have: &str| {
            want.as_ref()
                .is_none_or(|w| w.trim().eq_ignore_ascii_case(have.trim()))
        };
        let text_ok = self.text.as_ref().is_none_or(|t| {
            let t = t.to_lowercase();
            meta.name.to_lowercase().contains(&t) || meta.description.to_lowercase().contains(&t)
        });
        same(&self.field, &meta.field)
            && same(&self.author, &meta.author)
            && self.difficulty.is_none_or(|d| d == meta.difficulty)
            && text_ok
    }
}

pub struct Library {
    root: PathBuf,
    cases: RwLock<BTreeMap<String, Arc<CaseDefinition>>>,
}

/// `<case id>-<first 12 hex digits of the content hash>`.
fn storage_id(case: &CaseDefinition, media: &BTreeMap<String, Vec<u8>>) -> String {
    let mut h = Sha256::new();
    h.update(serialize_case(case).as_bytes());
    for (path, bytes) in media {
        h.update(path.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    let digest = h.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{}-{hex}", case.id)
}

impl Library {
    /// Opens (creating if needed) the library at `root` and loads every
    /// stored bundle.
    pub fn open(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        let mut cases = BTreeMap::new();
        for entry in fs::read_dir(root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            if id.starts_with('.') {
                // leftover staging directory from an interrupted upload
                let _ = fs::remove_dir_all(entry.path());
                continue;
            }
            match bundle::read_bundle_dir(&entry.path()) {
                Ok(case) => {
                    cases.insert(id, Arc::new(case));
                }
                Err(e) => tracing::warn!("skipping stored case {id}: {e}"),
            }
        }
        Ok(Library {
            root: root.to_path_buf(),
            cases: RwLock::new(cases),
        })
    }

    pub fn get(&self, id: &str) -> Option<Arc<CaseDefinition>> {
        self.cases.read().unwrap().get(id).cloned()
    }

    pub fn search(&self, filter: &CaseFilter) -> Vec<CaseSummary> {
        let mut out: Vec<CaseSummary> = self
            .cases
            .read()
            .unwrap()
            .iter()
            .filter(|(_, c)| filter.matches(&c.meta))
            .map(|(id, c)| CaseSummary {
                id: id.clone(),
                meta: c.meta.clone(),
            })
            .collect();
        out.sort_by(|a, b| (&a.meta.name, &a.id).cmp(&(&b.meta.name, &b.id)));
        out
    }
}

/// Zips every file under `dir` with paths relative to it. Entries are
/// sorted and undated, so equal trees give equal bytes.
pub fn zip_dir(dir: &Path) -> io::Result<Vec<u8>> {
    fn walk(dir: &Path, rel: &str, out: &mut Vec<(String, PathBuf)>) -> io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let rel = if rel.is_empty() {
                name
            } else {
                format!("{rel}/{name}")
            };
            if entry.file_type()?.is_dir() {
                walk(&entry.path(), &rel, out)?;
            } else {
                out.push((rel, entry.path()));
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, "", &mut files)?;
    files.sort();
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    for (rel, path) in files {
        zip.start_file(rel, SimpleFileOptions::default())
            .map_err(io::Error::other)?;
        io::Write::write_all(&mut zip, &fs::read(path)?)?;
    }
    Ok(zip.finish().map_err(io::Error::other)?.into_inner())
}

impl Library {
    /// Validates and stores a zipped bundle. Uploading identical content
    /// again returns the same id.
    pub fn upload_zip(&self, bytes: &[u8]) -> Result<String, UploadError> {
        let mut archive =
            ZipArchive::new(Cursor::new(bytes)).map_err(|e| UploadError::Archive(e.to_string()))?;
        let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        for i in 0..archive.len() {
            let mut f = archive
                .by_index(i)
                .map_err(|e| UploadError::Archive(e.to_string()))?;
            if f.is_dir() {
                continue;
            }
            // entries that would escape the archive root are ignored
            let Some(path) = f.enclosed_name() else {
                continue;
            };
            let name = path.to_string_lossy().replace('\\', "/");
            let mut buf = Vec::new();
            f.read_to_end(&mut buf)?;
            files.insert(name, buf);
        }
        // Accept both a flat archive and one wrapped in a single folder.
        let case_path = files
            .keys()
            .filter(|k| *k == CASE_FILE || k.ends_with(&format!("/{CASE_FILE}")))
            .min_by_key(|k| k.len())
            .cloned()
            .ok_or(UploadError::NoCaseFile)?;
        let prefix = &case_path[..case_path.len() - CASE_FILE.len()];
        let text = String::from_utf8(files[&case_path].clone())
            .map_err(|_| UploadError::Malformed(format!("{CASE_FILE} is not UTF-8")))?;
        let case = parse_case_bundle(&text).map_err(|e| match e {
            BundleError::Invalid(v) => UploadError::Invalid(v),
            other => UploadError::Malformed(other.to_string()),
        })?;

        let mut media: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut missing = Vec::new();
        for m in bundle::media_refs(&case).filter(|m| !m.is_link()) {
            match files.get(&format!("{prefix}{}", m.path)) {
                Some(b) => {
                    media.insert(m.path.clone(), b.clone());
                }
                None if !missing.contains(&m.path) => missing.push(m.path.clone()),
                None => {}
            }
        }
        if !missing.is_empty() {
            return Err(UploadError::MissingMedia(missing));
        }

        let id = storage_id(&case, &media);
        let mut cases = self.cases.write().unwrap();
        if cases.contains_key(&id) {
            return Ok(id);
        }
        if let Some(other) = cases.iter().find(|(_, c)| c.id == case.id).map(|(k, _)| k) {
            return Err(UploadError::Duplicate(other.clone()));
        }
        let staging = self.root.join(format!(".upload-{id}"));
        let _ = fs::remove_dir_all(&staging);
        bundle::write_bundle_dir(&case, &staging, None)?;
        for (path, bytes) in &media {
            let to = staging.join(path);
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(to, bytes)?;
        }
        fs::rename(&staging, self.root.join(&id))?;
        cases.insert(id.clone(), Arc::new(case));
        Ok(id)
    }
}
