//! Tar archives bundling one `<name>.yaml` with the scripts it references.

use std::fs::File;
use std::path::{Component, Path, PathBuf};

use super::{SpecError, WorkflowDocument};

/// A referenced script that was not part of the archive. Not fatal: nodes
/// may rely on scripts produced at run time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingScript {
    pub node: String,
    pub script: String,
}

#[derive(Debug)]
pub struct LoadedArchive {
    pub document: WorkflowDocument,
    pub directory: PathBuf,
    pub warnings: Vec<MissingScript>,
}

fn is_yaml(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("yaml") | Some("yml")
    )
}

/// Relative file paths in the archive, rejecting absolute or `..` entries.
fn entry_paths(archive: &Path) -> Result<Vec<PathBuf>, SpecError> {
    let file = File::open(archive).map_err(|e| SpecError::Archive(format!("{}: {e}", archive.display())))?;
    let mut tar = tar::Archive::new(file);
    let mut paths = Vec::new();
    let entries = tar.entries().map_err(|e| SpecError::Archive(e.to_string()))?;
    for entry in entries {
        let entry = entry.map_err(|e| SpecError::Archive(e.to_string()))?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let path = entry.path().map_err(|e| SpecError::Archive(e.to_string()))?.into_owned();
        if path
            .components()
            .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
        {
            return Err(SpecError::Archive(format!(
                "unsafe entry path {}",
                path.display()
            )));
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Name of the workflow an archive would create: the basename of its single
/// YAML file.
pub fn archive_workflow_name(archive: &Path) -> Result<String, SpecError> {
    let yamls: Vec<PathBuf> = entry_paths(archive)?
        .into_iter()
        .filter(|p| is_yaml(p))
        .collect();
    match yamls.as_slice() {
        [one] => Ok(one
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()),
        [] => Err(SpecError::Archive("archive contains no workflow yaml".into())),
        many => Err(SpecError::Archive(format!(
            "archive contains {} yaml files; expected exactly one",
            many.len()
        ))),
    }
}

/// Extracts `archive` into `destination/<name>/` (flattening any
/// directories) and parses the workflow it contains.
pub fn load_archive(archive: &Path, destination: &Path) -> Result<LoadedArchive, SpecError> {
    let name = archive_workflow_name(archive)?;
    let directory = destination.join(&name);
    if directory.join(format!("{name}.yaml")).exists() {
        return Err(SpecError::AlreadyExists(name));
    }
    let fresh = !directory.exists();
    std::fs::create_dir_all(&directory)?;
    let result = extract(archive, &name, &directory);
    if result.is_err() && fresh {
        let _ = std::fs::remove_dir_all(&directory);
    }
    result
}

fn extract(archive: &Path, name: &str, directory: &Path) -> Result<LoadedArchive, SpecError> {
    let file = File::open(archive)?;
    let mut tar = tar::Archive::new(file);
    let mut yaml_path = None;
    for entry in tar.entries().map_err(|e| SpecError::Archive(e.to_string()))? {
        let mut entry = entry.map_err(|e| SpecError::Archive(e.to_string()))?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let path = entry.path().map_err(|e| SpecError::Archive(e.to_string()))?;
        let Some(file_name) = path.file_name().map(|f| f.to_owned()) else {
            continue;
        };
        let target = if is_yaml(&path) {
            let t = directory.join(format!("{name}.yaml"));
            yaml_path = Some(t.clone());
            t
        } else {
            directory.join(file_name)
        };
        entry
            .unpack(&target)
            .map_err(|e| SpecError::Archive(format!("{}: {e}", target.display())))?;
    }
    let yaml_path = yaml_path.ok_or_else(|| SpecError::Archive("archive contains no workflow yaml".into()))?;

    let text = std::fs::read_to_string(&yaml_path)?;
    let mut document = WorkflowDocument::parse(&text, directory)?;
    document.name = name.to_string();
    let warnings = document
        .referenced_scripts()
        .filter(|(_, script)| !directory.join(script).is_file())
        .map(|(node, script)| MissingScript {
            node: node.to_string(),
            script: script.to_string(),
        })
        .collect();
    Ok(LoadedArchive {
        document,
        directory: directory.to_path_buf(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build_tar(path: &Path, files: &[(&str, &str)]) {
        let mut builder = tar::Builder::new(File::create(path).unwrap());
        for (name, body) in files {
            let mut header = tar::Header::new_gnu();
            header.set_size(body.len() as u64);
            header.set_mode(0o644);
            header.set_cksum();
            builder.append_data(&mut header, name, body.as_bytes()).unwrap();
        }
        builder.finish().unwrap();
    }

    const YAML: &str = "workflow:\n  nodes:\n    start: {}\n    a: {kind: local, script: a.sh}\n    b: {kind: local, exec: 'echo hi'}\n  dependencies: ['start,a,b']\n";

    #[test]
    fn extracts_and_parses() {
        let dir = tempfile::tempdir().unwrap();
        let tar = dir.path().join("demo.tar");
        build_tar(&tar, &[("demo.yaml", YAML), ("a.sh", "echo a\n")]);
        let loaded = load_archive(&tar, &dir.path().join("store")).unwrap();
        assert_eq!(loaded.document.name, "demo");
        assert_eq!(loaded.document.graph.len(), 3);
        assert!(loaded.warnings.is_empty());
        assert!(dir.path().join("store/demo/a.sh").is_file());
        assert!(dir.path().join("store/demo/demo.yaml").is_file());
        assert!(matches!(
            load_archive(&tar, &dir.path().join("store")),
            Err(SpecError::AlreadyExists(_))
        ));
    }

    #[test]
    fn missing_script_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        let tar = dir.path().join("demo.tar");
        build_tar(&tar, &[("demo.yaml", YAML)]);
        let loaded = load_archive(&tar, dir.path()).unwrap();
        assert_eq!(
            loaded.warnings,
            vec![MissingScript {
                node: "a".into(),
                script: "a.sh".into()
            }]
        );
    }

    #[test]
    fn rejects_ambiguous_or_broken_archives() {
        let dir = tempfile::tempdir().unwrap();
        let two = dir.path().join("two.tar");
        build_tar(&two, &[("a.yaml", YAML), ("b.yaml", YAML)]);
        assert!(matches!(load_archive(&two, dir.path()), Err(SpecError::Archive(_))));

        let none = dir.path().join("none.tar");
        build_tar(&none, &[("a.sh", "x")]);
        assert!(matches!(load_archive(&none, dir.path()), Err(SpecError::Archive(_))));

        let junk = dir.path().join("junk.tar");
        std::fs::write(&junk, b"this is not a tar archive at all, not even close......").unwrap();
        assert!(load_archive(&junk, dir.path()).is_err());

        assert!(matches!(
            load_archive(&dir.path().join("absent.tar"), dir.path()),
            Err(SpecError::Archive(_))
        ));
    }

    #[test]
    fn broken_document_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let tar = dir.path().join("bad.tar");
        build_tar(&tar, &[("bad.yaml", "workflow: [not, a, mapping]\n"), ("a.sh", "echo a\n")]);
        let store = dir.path().join("store");
        assert!(load_archive(&tar, &store).is_err());
        assert!(!store.join("bad").exists());
    }
}
