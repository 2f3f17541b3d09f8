//! Output directory handling: every file is written to a temporary file in
//! the target directory and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::failure::CliResult;

pub use lpvgen::pac::experiment::fmt_f64;

/// Files are collected first and only written once the command succeeded.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn add_text(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut body = serde_json::to_string_pretty(value).expect("records serialize");
        body.push('\n');
        self.add_text(name, body);
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, body) in self.files {
            let target = self.dir.join(&name);
            let mut tmp = NamedTempFile::new_in(&self.dir)?;
            tmp.write_all(&body)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&target).map_err(|e| e.error)?;
            written.push(target);
        }
        Ok(written)
    }
}

/// CSV with a header row and full-precision floats.
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        let mut body = header.join(",");
        body.push('\n');
        Csv { body }
    }

    pub fn row_f64(&mut self, values: impl IntoIterator<Item = f64>) {
        let cells: Vec<String> = values.into_iter().map(fmt_f64).collect();
        self.row(&cells);
    }

    pub fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        self.body
    }
}
