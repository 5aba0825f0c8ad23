//! `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, MeshError, Result};

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped,
/// keys are lower-cased and `-` is folded to `_`.
pub fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, MeshError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(MeshError::Parse {
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            });
        };
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        if key.is_empty() {
            return Err(MeshError::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let c = parse_config("# run\nlevel0 = 4\n\ngamma0=400 # start\nRetry-Conservative = true\n").unwrap();
        assert_eq!(c["level0"], "4");
        assert_eq!(c["gamma0"], "400");
        assert_eq!(c["retry_conservative"], "true");
    }

    #[test]
    fn reports_line() {
        match parse_config("a = 1\nbroken\n") {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
