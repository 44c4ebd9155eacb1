use std::fmt::Display;
use std::path::Path;

use bcos::{Error, Result};

/// Ordered `key=value` record of one invocation.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

fn quote(arg: &str) -> String {
    if !arg.is_empty() && arg.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=,:+@".contains(c)) {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        let mut m = Manifest::default();
        m.set("command", command);
        m.set("invocation", argv.iter().map(|a| quote(a)).collect::<Vec<_>>().join(" "));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let v = value.to_string().replace('\\', r"\\").replace('\n', r"\n");
        self.entries.push((key.to_string(), v));
        self
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("manifest.txt"), self.render().as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
