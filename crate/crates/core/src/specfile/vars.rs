use std::collections::BTreeMap;
use std::io;
use std::path::Path;

/// Values for `{os.X}` and `{cm.X}` label placeholders.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariableStore {
    pub os_vars: BTreeMap<String, String>,
    pub cm_vars: BTreeMap<String, String>,
}

impl VariableStore {
    /// Process environment plus the `key=value` file at `cm_file` (a missing
    /// file contributes nothing).
    pub fn load(cm_file: &Path) -> io::Result<Self> {
        let cm_vars = match std::fs::read_to_string(cm_file) {
            Ok(text) => parse_cm_vars(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(VariableStore {
            os_vars: std::env::vars().collect(),
            cm_vars,
        })
    }

    pub fn os(&self, key: &str) -> Option<&str> {
        self.os_vars.get(key).map(String::as_str)
    }

    pub fn cm(&self, key: &str) -> Option<&str> {
        self.cm_vars.get(key).map(String::as_str)
    }
}

/// One `key=value` per line; blank lines and `#` comments are skipped.
pub fn parse_cm_vars(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_values() {
        let vars = parse_cm_vars("# comment\ncloud=aws\n\n  user = alice \nbroken line\n=x\n");
        assert_eq!(vars.len(), 2);
        assert_eq!(vars["cloud"], "aws");
        assert_eq!(vars["user"], "alice");
    }

    #[test]
    fn missing_file_is_empty() {
        let store = VariableStore::load(Path::new("/nonexistent/cm-vars")).unwrap();
        assert!(store.cm_vars.is_empty());
    }
}
