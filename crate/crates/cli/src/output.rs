//! Artifact writing: atomic replacement and the shared CSV conventions.

use std::io::Write;
use std::path::{Path, PathBuf};

use gradlab_core::metrics::csv_float;
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// CSV text whose first line is `# gradlab <config json>`.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(config: &serde_json::Value, header: &str) -> Self {
        let mut text = format!("# gradlab {config}\n");
        text.push_str(header);
        text.push('\n');
        Self { text }
    }

    pub fn comment(&mut self, line: &str) {
        self.text.push_str("# ");
        self.text.push_str(line);
        self.text.push('\n');
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn f(v: f64) -> String {
    csv_float(v)
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s.into_bytes()
}

/// Values of the second column of a saliency CSV, skipping comments and the header.
pub fn read_map_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
            continue;
        }
        let field = line.split(',').nth(1).ok_or_else(|| {
            CliError::Data(format!("{}:{}: expected `index,value`", path.display(), n + 1))
        })?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| CliError::Data(format!("{}:{}: bad number `{field}`", path.display(), n + 1)))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Data(format!("{} holds no values", path.display())));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut csv = Csv::new(&serde_json::json!({"k": 1}), "index,value");
        csv.row(&["0".into(), f(0.1)]);
        csv.row(&["1".into(), f(-2.5e-300)]);
        write_atomic(&path, &csv.into_bytes()).unwrap();
        assert_eq!(read_map_csv(&path).unwrap(), vec![0.1, -2.5e-300]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# gradlab {\"k\":1}\nindex,value\n"));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
