//! Backups of every file the tool modifies, and their restoration.
//!
//! A session keeps its state under `<target>/.rtrace/`: an advisory lock
//! file held while files are being modified, and a backup directory with a
//! JSON manifest that is rewritten before each original is touched. A
//! process that dies mid-run leaves the manifest behind, which is enough for
//! `restore_target` to put every file back.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::InstrumentError;
use crate::fsutil::{self, FileLock};

pub const STATE_DIR: &str = ".rtrace";
pub const LOCK_FILE: &str = "lock";
pub const BACKUP_DIR: &str = "backup";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackupEntry {
    pub original: PathBuf,
    /// Copy location relative to the backup root; absent when the original
    /// did not exist and restoring means deleting it.
    pub backup: Option<PathBuf>,
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackupManifest {
    pub target_root: PathBuf,
    pub backup_root: PathBuf,
    pub plan_digest: Option<String>,
    pub created_at: DateTime<Utc>,
    /// Whether the session created `<target>/.rtrace` and should remove it.
    pub created_state_dir: bool,
    pub entries: Vec<BackupEntry>,
}

impl BackupManifest {
    /// A manifest with nothing backed up and nothing on disk.
    pub fn empty(target_root: &Path) -> Self {
        let target_root = fsutil::resolve(target_root);
        BackupManifest {
            backup_root: target_root.join(STATE_DIR).join(BACKUP_DIR),
            target_root,
            plan_digest: None,
            created_at: Utc::now(),
            created_state_dir: false,
            entries: Vec::new(),
        }
    }

    pub fn modified_files(&self) -> impl Iterator<Item = &Path> {
        self.entries.iter().map(|e| e.original.as_path())
    }

    fn manifest_path(&self) -> PathBuf {
        self.backup_root.join(MANIFEST_NAME)
    }

    fn persist(&self) -> Result<(), InstrumentError> {
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        let path = self.manifest_path();
        fsutil::atomic_write(&path, &json).map_err(|e| InstrumentError::io(&path, e))
    }
}

/// An open backup session holding the target's instrumentation lock.
///
/// Dropping a session that was neither restored nor detached restores it,
/// so an unwinding caller still leaves the tree as it found it.
#[derive(Debug)]
pub struct BackupSession {
    manifest: BackupManifest,
    _lock: FileLock,
    finished: bool,
}

impl BackupSession {
    pub fn begin(target_root: &Path) -> Result<Self, InstrumentError> {
        let mut manifest = BackupManifest::empty(target_root);
        let state = manifest.target_root.join(STATE_DIR);
        manifest.created_state_dir = !state.exists();
        fs::create_dir_all(&state).map_err(|e| InstrumentError::io(&state, e))?;
        let lock_path = state.join(LOCK_FILE);
        let lock = FileLock::try_acquire(&lock_path)
            .map_err(|e| InstrumentError::io(&lock_path, e))?
            .ok_or_else(|| InstrumentError::AlreadyInstrumented {
                path: manifest.target_root.clone(),
                detail: format!("another session holds {}", lock_path.display()),
            })?;
        if manifest.manifest_path().exists() {
            return Err(InstrumentError::AlreadyInstrumented {
                path: manifest.target_root.clone(),
                detail: format!(
                    "a backup from an earlier run is still present at {}; restore it first",
                    manifest.backup_root.display()
                ),
            });
        }
        let files = manifest.backup_root.join("files");
        fs::create_dir_all(&files).map_err(|e| InstrumentError::io(&files, e))?;
        manifest.persist()?;
        Ok(BackupSession {
            manifest,
            _lock: lock,
            finished: false,
        })
    }

    pub fn manifest(&self) -> &BackupManifest {
        &self.manifest
    }

    pub fn set_plan_digest(&mut self, digest: String) -> Result<(), InstrumentError> {
        self.manifest.plan_digest = Some(digest);
        self.manifest.persist()
    }

    /// Record the current state of `path` before it is changed. Repeated
    /// calls for the same file keep the first copy.
    pub fn protect(&mut self, path: &Path) -> Result<(), InstrumentError> {
        let original = fsutil::resolve(path);
        if self.manifest.entries.iter().any(|e| e.original == original) {
            return Ok(());
        }
        let entry = match fs::read(&original) {
            Ok(bytes) => {
                let rel = backup_name(&self.manifest, &original);
                let copy = self.manifest.backup_root.join(&rel);
                if let Some(parent) = copy.parent() {
                    fs::create_dir_all(parent).map_err(|e| InstrumentError::io(parent, e))?;
                }
                fsutil::atomic_write(&copy, &bytes).map_err(|e| InstrumentError::io(&copy, e))?;
                let digest = fsutil::digest_bytes(&bytes);
                let check = fsutil::digest_file(&copy).map_err(|e| InstrumentError::io(&copy, e))?;
                if check != digest {
                    return Err(InstrumentError::io(
                        &copy,
                        io::Error::other("backup copy does not match the original"),
                    ));
                }
                BackupEntry {
                    original,
                    backup: Some(rel),
                    digest: Some(digest),
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => BackupEntry {
                original,
                backup: None,
                digest: None,
            },
            Err(e) => return Err(InstrumentError::io(&original, e)),
        };
        self.manifest.entries.push(entry);
        self.manifest.persist()
    }

    /// Back up `path`, then replace its contents.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), InstrumentError> {
        self.protect(path)?;
        fsutil::atomic_write(path, bytes).map_err(|e| InstrumentError::io(path, e))
    }

    /// Put every protected file back and remove the session state.
    pub fn restore(mut self) -> Result<(), InstrumentError> {
        self.finished = true;
        restore(&self.manifest)
    }

    /// End the session with the modifications in place. The backup stays
    /// on disk for a later `restore`.
    pub fn detach(mut self) -> BackupManifest {
        self.finished = true;
        self.manifest.clone()
    }
}

impl Drop for BackupSession {
    fn drop(&mut self) {
        if !self.finished {
            if let Err(e) = restore(&self.manifest) {
                eprintln!("rtrace: restoring {} failed: {e}", self.manifest.target_root.display());
            }
        }
    }
}

fn backup_name(manifest: &BackupManifest, original: &Path) -> PathBuf {
    match original.strip_prefix(&manifest.target_root) {
        Ok(rel) => Path::new("files/target").join(rel),
        Err(_) => {
            let name = original.file_name().unwrap_or_default();
            Path::new("files/external")
                .join(manifest.entries.len().to_string())
                .join(name)
        }
    }
}

/// Restore from `manifest`. Without a backup on disk this is a no-op, so a
/// second call after a successful one also succeeds.
pub fn restore(manifest: &BackupManifest) -> Result<(), InstrumentError> {
    if !manifest.manifest_path().exists() {
        return Ok(());
    }
    let mut failed = Vec::new();
    for entry in &manifest.entries {
        if let Err(message) = restore_entry(manifest, entry) {
            failed.push((entry.original.clone(), message));
        }
    }
    if !failed.is_empty() {
        return Err(InstrumentError::RestoreIncomplete { failed });
    }
    let state = manifest.target_root.join(STATE_DIR);
    fs::remove_dir_all(&manifest.backup_root).map_err(|e| InstrumentError::io(&manifest.backup_root, e))?;
    let _ = fs::remove_file(state.join(LOCK_FILE));
    if manifest.created_state_dir {
        let _ = fs::remove_dir(&state);
    }
    Ok(())
}

fn restore_entry(manifest: &BackupManifest, entry: &BackupEntry) -> Result<(), String> {
    let (Some(rel), Some(digest)) = (&entry.backup, &entry.digest) else {
        return match fs::remove_file(&entry.original) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e.to_string()),
        };
    };
    let copy = manifest.backup_root.join(rel);
    let bytes = fs::read(&copy).map_err(|e| format!("reading backup {}: {e}", copy.display()))?;
    if fsutil::digest_bytes(&bytes) != *digest {
        return Err(format!("backup {} is corrupted", copy.display()));
    }
    if fsutil::digest_file(&entry.original).ok().as_ref() != Some(digest) {
        fsutil::atomic_write(&entry.original, &bytes).map_err(|e| e.to_string())?;
    }
    match fsutil::digest_file(&entry.original) {
        Ok(d) if d == *digest => Ok(()),
        Ok(_) => Err("restored content does not match the backup".to_owned()),
        Err(e) => Err(e.to_string()),
    }
}

/// Load the backup left in `target_root`, if any.
pub fn load_backup(target_root: &Path) -> Result<Option<BackupManifest>, InstrumentError> {
    let path = fsutil::resolve(target_root)
        .join(STATE_DIR)
        .join(BACKUP_DIR)
        .join(MANIFEST_NAME);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(InstrumentError::io(&path, e)),
    };
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| InstrumentError::CorruptBackup {
            path,
            message: e.to_string(),
        })
}

/// Restore whatever backup `target_root` holds. Returns false when there
/// was nothing to restore.
pub fn restore_target(target_root: &Path) -> Result<bool, InstrumentError> {
    let Some(manifest) = load_backup(target_root)? else {
        return Ok(false);
    };
    let lock_path = manifest.target_root.join(STATE_DIR).join(LOCK_FILE);
    let _lock = FileLock::try_acquire(&lock_path)
        .map_err(|e| InstrumentError::io(&lock_path, e))?
        .ok_or(InstrumentError::Busy {
            lock: lock_path.clone(),
        })?;
    restore(&manifest)?;
    Ok(true)
}
