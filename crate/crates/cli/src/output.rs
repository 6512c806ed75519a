//! CSV tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Header plus rows, rendered as RFC-4180 style CSV with `.` decimals.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let escaped: Vec<String> = fields.iter().map(|f| escape(f)).collect();
        self.text.push_str(&escaped.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Collects written artifacts and emits the manifest last.
pub struct Run {
    command: String,
    inputs: Vec<(String, String)>,
    artifacts: Vec<(PathBuf, String)>,
}

impl Run {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Run {
            command: command.to_string(),
            inputs: cfg.describe(),
            artifacts: Vec::new(),
        }
    }

    /// Records an extra input (subcommand flags, input file checksums).
    pub fn input(&mut self, key: &str, value: impl ToString) {
        self.inputs.push((key.to_string(), value.to_string()));
    }

    pub fn input_file(&mut self, key: &str, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.input(key, format!("{} sha256:{}", path.display(), hex::encode(Sha256::digest(&bytes))));
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.artifacts.push((path.to_path_buf(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(self, path: &Path) -> Result<PathBuf, CliError> {
        let mut text = String::new();
        let _ = writeln!(text, "command = {}", self.command);
        for (k, v) in &self.inputs {
            let _ = writeln!(text, "{k} = {v}");
        }
        for (p, sum) in &self.artifacts {
            let name = p.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
            let _ = writeln!(text, "artifact {name} sha256:{sum}");
        }
        fs::write(path, text).map_err(|e| CliError::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

/// Manifest path for a single-file artifact: `<file>.manifest`.
pub fn manifest_beside(file: &Path) -> PathBuf {
    let mut s = file.as_os_str().to_os_string();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Manifest path inside an output directory.
pub fn manifest_in(dir: &Path) -> PathBuf {
    dir.join("manifest")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_when_needed() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&["1".into(), "x,y".into()]);
        c.row(&["say \"hi\"".into(), "2".into()]);
        assert_eq!(
            String::from_utf8(c.into_bytes()).unwrap(),
            "a,b\n1,\"x,y\"\n\"say \"\"hi\"\"\",2\n"
        );
    }

    #[test]
    fn manifest_names() {
        assert_eq!(manifest_beside(Path::new("out/s.csv")), PathBuf::from("out/s.csv.manifest"));
        assert_eq!(manifest_in(Path::new("run")), PathBuf::from("run/manifest"));
    }
}
