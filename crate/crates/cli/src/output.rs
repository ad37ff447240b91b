use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const BUILD_HASH: &str = env!("INVOPT_BUILD_HASH");

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("INVOPT_BUILD_HASH"), ")");

fn build_stamp() -> Value {
    json!({ "version": env!("CARGO_PKG_VERSION"), "hash": BUILD_HASH })
}

/// A run folder. JSON files written through it carry a `build` field.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::Io(e.to_string()))?;
        match &mut v {
            Value::Object(map) => {
                map.insert("build".into(), build_stamp());
            }
            other => v = json!({ "build": build_stamp(), "value": other.take() }),
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Opens a log for appending, or truncates it when `fresh`.
    pub fn open_log(&self, name: &str, fresh: bool) -> CliResult<File> {
        let path = self.path(name);
        let file = if fresh {
            File::create(&path)?
        } else {
            OpenOptions::new().create(true).append(true).open(&path)?
        };
        Ok(file)
    }

    pub fn read_text(&self, name: &str) -> CliResult<Option<String>> {
        match fs::read_to_string(self.path(name)) {
            Ok(t) => Ok(Some(t)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Line-oriented progress output.
pub trait Log {
    fn line(&mut self, text: &str);
}

impl<W: Write> Log for W {
    fn line(&mut self, text: &str) {
        let _ = writeln!(self, "{text}");
    }
}
