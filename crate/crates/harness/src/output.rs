//! Files written by an experiment, tracked for the bundle and the plot manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::schema::CsvSchema;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    /// Schema name for CSVs, `plot` for plot data, `json` otherwise.
    pub schema: String,
}

/// One plot-data file: whitespace-separated columns with a `#` header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotEntry {
    pub file: String,
    pub title: String,
    pub columns: Vec<String>,
    pub x: String,
    pub y: String,
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    plots: Vec<PlotEntry>,
}

/// Shortest round-trip decimal form; empty for `None`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root.join("plots"))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            plots: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes `name` with the schema's header followed by `rows`.
    pub fn write_csv(&mut self, name: &str, schema: &CsvSchema, rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.root.join(name))?;
        w.write_record(schema.header())?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.register(name, schema.name);
        Ok(())
    }

    /// Records a file written by other code (critical paths, matrices).
    pub fn register(&mut self, name: &str, schema: &str) {
        self.files.push(FileEntry {
            path: name.to_string(),
            schema: schema.to_string(),
        });
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        std::fs::write(self.root.join(name), serde_json::to_string_pretty(value)?)?;
        self.register(name, "json");
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, schema: &str, body: &str) -> Result<()> {
        std::fs::write(self.root.join(name), body)?;
        self.register(name, schema);
        Ok(())
    }

    /// Writes `plots/<file>`; the first two columns are the plot axes.
    pub fn write_plot(&mut self, file: &str, title: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut body = format!("# {}\n", columns.join(" "));
        for r in rows {
            let cells: Vec<String> = r.iter().map(|&x| fmt_f64(x)).collect();
            body.push_str(&cells.join(" "));
            body.push('\n');
        }
        let rel = format!("plots/{file}");
        std::fs::write(self.root.join(&rel), body)?;
        self.register(&rel, "plot");
        self.plots.push(PlotEntry {
            file: file.to_string(),
            title: title.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            x: columns[0].to_string(),
            y: columns[1].to_string(),
        });
        Ok(())
    }

    /// Writes `plots/manifest.json` and returns the file table.
    pub fn finish(mut self) -> Result<Vec<FileEntry>> {
        std::fs::write(
            self.root.join("plots/manifest.json"),
            serde_json::to_string_pretty(&self.plots)?,
        )?;
        self.register("plots/manifest.json", "json");
        Ok(self.files)
    }
}
