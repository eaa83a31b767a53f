//! Result files: CSV and gnuplot-style `.dat` tables.

use crate::config::Format;
use ratekit::{RateSeries, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// A header and rows of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    /// Whitespace separated, header commented out with `#`.
    pub fn write_dat<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", self.header.join(" "))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(" "))?;
        }
        Ok(())
    }
}

/// Shortest round-trip scientific notation, identical on every platform.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), num)
}

/// Output directory plus the requested formats.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub dir: PathBuf,
    pub format: Format,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path, format: Format) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    pub fn table(&mut self, stem: &str, t: &Table) -> Result<()> {
        if self.format.csv() {
            let mut w = self.open(&format!("{stem}.csv"))?;
            t.write_csv(&mut w)?;
            w.flush()?;
        }
        if self.format.dat() {
            let mut w = self.open(&format!("{stem}.dat"))?;
            t.write_dat(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn series(&mut self, stem: &str, s: &RateSeries) -> Result<()> {
        if self.format.csv() {
            let mut w = self.open(&format!("{stem}.csv"))?;
            s.write_csv(&mut w)?;
            w.flush()?;
        }
        if self.format.dat() {
            let mut w = self.open(&format!("{stem}.dat"))?;
            s.write_dat(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    /// A file in its own format, written regardless of the table format.
    pub fn raw(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.open(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_layouts() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(1.5e-8), num(2.0)]);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "a,b\n1.5e-8,2e0\n");
        let mut dat = Vec::new();
        t.write_dat(&mut dat).unwrap();
        assert_eq!(String::from_utf8(dat).unwrap(), "# a b\n1.5e-8 2e0\n");
    }
}
