//! CSV tables with `#` comment headers, written atomically.

use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub struct Table {
    comments: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    /// A table whose header names the command, the method and the units.
    pub fn new(command: &str, method: &str, units: &str, columns: &[&str]) -> Self {
        Table {
            comments: vec![
                format!("command: {command}"),
                format!("method: {method}"),
                format!("units: {units}"),
            ],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn render(&self, deterministic: bool) -> String {
        let mut out = String::new();
        if !deterministic {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            out.push_str(&format!("# generated: {secs} (unix seconds)\n"));
        }
        for c in &self.comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes to `path` through a temporary file in the same directory, or to
    /// standard output when no path is given.
    pub fn emit(&self, path: Option<&Path>, deterministic: bool) -> io::Result<()> {
        let text = self.render(deterministic);
        match path {
            None => io::stdout().write_all(text.as_bytes()),
            Some(path) => {
                let dir = match path.parent() {
                    Some(d) if !d.as_os_str().is_empty() => d,
                    _ => Path::new("."),
                };
                let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
                tmp.write_all(text.as_bytes())?;
                tmp.as_file().sync_all()?;
                tmp.persist(path).map_err(|e| e.error)?;
                Ok(())
            }
        }
    }
}

/// Full-precision float cell.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn point(p: &[i64]) -> String {
    p.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_persist() {
        let mut t = Table::new("x", "dp", "probability", &["a", "b"]);
        t.row(vec!["1".into(), num(0.5)]);
        let text = t.render(true);
        assert_eq!(text, "# command: x\n# method: dp\n# units: probability\na,b\n1,5e-1\n");
        assert!(t.render(false).starts_with("# generated: "));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        t.emit(Some(&path), true).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    }
}
