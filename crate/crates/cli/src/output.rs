//! Artifact writers: the provenance header, CSV rows and JSON documents.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identity of a run, stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(seed: u64, config_sha256: String) -> Self {
        Self { version: VERSION, seed, config_sha256 }
    }

    /// `# jumpsde v<semver> seed=<u64> config_sha256=<hex>`
    pub fn header(&self) -> String {
        format!("# jumpsde v{} seed={} config_sha256={}", self.version, self.seed, self.config_sha256)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

pub fn join_floats(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:?}");
    }
    out
}

/// Buffered CSV file that starts with the provenance header and a column row.
pub struct CsvFile {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl CsvFile {
    pub fn create(path: &Path, prov: &Provenance, columns: &[String]) -> io::Result<Self> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", prov.header())?;
        writeln!(out, "{}", columns.join(","))?;
        Ok(Self { path: path.to_owned(), out })
    }

    pub fn row(&mut self, fields: &str) -> io::Result<()> {
        self.out.write_all(fields.as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn comment(&mut self, text: &str) -> io::Result<()> {
        writeln!(self.out, "# {text}")
    }

    pub fn finish(mut self) -> io::Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    config: &'a serde_json::Value,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON document carrying the provenance fields and the effective configuration.
pub fn write_json<T: Serialize>(
    path: &Path,
    prov: &Provenance,
    config: &serde_json::Value,
    body: &T,
) -> io::Result<PathBuf> {
    let doc = Stamped { provenance: prov, config, body };
    let mut text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(path.to_owned())
}

pub fn write_text(path: &Path, prov: &Provenance, body: &str) -> io::Result<PathBuf> {
    fs::write(path, format!("{}\n{body}", prov.header()))?;
    Ok(path.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_format() {
        let p = Provenance::new(42, "ab".repeat(32));
        assert_eq!(p.header(), format!("# jumpsde v{VERSION} seed=42 config_sha256={}", "ab".repeat(32)));
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0, -2.5e-300, 1.0 / 3.0, 123456789.125] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(join_floats([1.0, 0.5]), "1.0,0.5");
    }
}
