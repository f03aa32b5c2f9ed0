//! File-backed state store.
//!
//! ```text
//! <root>/<name>/<name>.yaml     declaration plus last known state
//! <root>/<name>/<script>        sources the workflow's nodes reference
//! <root>/<name>/runtime/        scripts and logs of local jobs
//! ```

use std::path::{Path, PathBuf};

use chrono::{DateTime, Local};

use super::EngineError;
use crate::specfile::{archive_workflow_name, load_archive, LoadedArchive, MissingScript, WorkflowDocument};

#[derive(Debug, Clone)]
pub struct StateStore {
    root: PathBuf,
}

impl StateStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StateStore { root: root.into() }
    }

    /// `~/.cloudmesh-cc/workflows`.
    pub fn default_root() -> PathBuf {
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        home.join(".cloudmesh-cc").join("workflows")
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn workflow_dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn state_file(&self, name: &str) -> PathBuf {
        self.workflow_dir(name).join(format!("{name}.yaml"))
    }

    pub fn runtime_dir(&self, name: &str) -> PathBuf {
        self.workflow_dir(name).join("runtime")
    }

    /// The `key=value` file backing `{cm.X}` label variables.
    pub fn variables_file(&self) -> PathBuf {
        self.root.join("variables.txt")
    }

    pub fn exists(&self, name: &str) -> bool {
        valid_name(name).is_ok() && self.state_file(name).is_file()
    }

    /// Workflow names, sorted.
    pub fn list(&self) -> Result<Vec<String>, EngineError> {
        let mut names = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(names),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type()?.is_dir() && self.exists(&name) {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn load(&self, name: &str) -> Result<WorkflowDocument, EngineError> {
        valid_name(name)?;
        let path = self.state_file(name);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(EngineError::NotFound(format!("workflow `{name}`")))
            }
            Err(e) => return Err(e.into()),
        };
        let mut doc = WorkflowDocument::parse(&text, &self.workflow_dir(name))?;
        doc.name = name.to_string();
        Ok(doc)
    }

    /// Writes the state file atomically (temp file, then rename).
    pub fn save(&self, doc: &WorkflowDocument) -> Result<(), EngineError> {
        valid_name(&doc.name)?;
        let dir = self.workflow_dir(&doc.name);
        std::fs::create_dir_all(&dir)?;
        let text = doc.serialize(true)?;
        let tmp = dir.join(format!(".{}.yaml.{}.tmp", doc.name, std::process::id()));
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, self.state_file(&doc.name))?;
        Ok(())
    }

    /// Last modification of the state file.
    pub fn modified(&self, name: &str) -> Option<DateTime<Local>> {
        let meta = std::fs::metadata(self.state_file(name)).ok()?;
        meta.modified().ok().map(DateTime::<Local>::from)
    }

    pub fn remove(&self, name: &str) -> Result<(), EngineError> {
        valid_name(name)?;
        if !self.exists(name) {
            return Err(EngineError::NotFound(format!("workflow `{name}`")));
        }
        std::fs::remove_dir_all(self.workflow_dir(name))?;
        Ok(())
    }

    /// Copies a workflow YAML file and the scripts it references into the
    /// store under `name` (default: the file stem).
    pub fn import_file(
        &self,
        path: &Path,
        name: Option<&str>,
    ) -> Result<(WorkflowDocument, Vec<MissingScript>), EngineError> {
        let mut doc = WorkflowDocument::from_file(path)?;
        if let Some(name) = name {
            doc.name = name.to_string();
        }
        valid_name(&doc.name)?;
        if self.exists(&doc.name) {
            return Err(EngineError::AlreadyExists(doc.name));
        }
        let dir = self.workflow_dir(&doc.name);
        std::fs::create_dir_all(&dir)?;
        let mut warnings = Vec::new();
        for (node, script) in doc.referenced_scripts() {
            let source = doc.source_directory.join(script);
            let target = dir.join(script);
            if source.is_file() {
                if let Some(parent) = target.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                if source.canonicalize().ok() != target.canonicalize().ok() {
                    std::fs::copy(&source, &target)?;
                }
            } else {
                warnings.push(MissingScript {
                    node: node.to_string(),
                    script: script.to_string(),
                });
            }
        }
        doc.source_directory = dir;
        doc.clock.created = Some(Local::now());
        self.save(&doc)?;
        Ok((doc, warnings))
    }

    /// Extracts a tar archive into the store, optionally renaming the
    /// workflow it holds.
    pub fn import_archive(&self, archive: &Path, name: Option<&str>) -> Result<LoadedArchive, EngineError> {
        let archived = archive_workflow_name(archive)?;
        let name = match name {
            Some(n) if n != archived => n,
            _ => {
                valid_name(&archived)?;
                let mut loaded = load_archive(archive, &self.root)?;
                loaded.document.clock.created = Some(Local::now());
                self.save(&loaded.document)?;
                return Ok(loaded);
            }
        };
        valid_name(name)?;
        if self.exists(name) {
            return Err(EngineError::AlreadyExists(name.to_string()));
        }
        // Unpack beside the store, then import the YAML under the new name.
        std::fs::create_dir_all(&self.root)?;
        let staging = self.root.join(format!(".import-{}-{archived}", std::process::id()));
        let _ = std::fs::remove_dir_all(&staging);
        std::fs::create_dir_all(&staging)?;
        let result = load_archive(archive, &staging).map_err(EngineError::from).and_then(|loaded| {
            let yaml = loaded.directory.join(format!("{archived}.yaml"));
            let (document, warnings) = self.import_file(&yaml, Some(name))?;
            Ok(LoadedArchive {
                directory: self.workflow_dir(name),
                document,
                warnings,
            })
        });
        let _ = std::fs::remove_dir_all(&staging);
        result
    }
}

/// Workflow names become directory names.
pub fn valid_name(name: &str) -> Result<(), EngineError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(EngineError::InvalidArgument(format!("invalid workflow name `{name}`")))
    }
}
