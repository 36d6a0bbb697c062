//! CSV/JSON writers with a provenance comment header.
//!
//! Every CSV starts with three comment lines:
//!
//! ```text
//! # schema: mhcov/<table>/v1
//! # config-sha256: <hex digest of the canonical run configuration>
//! # generated-unix: <seconds since the epoch>
//! ```
//!
//! followed by a header row. Only the last comment line changes between
//! reruns of the same configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mhcov::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

pub struct Output {
    dir: PathBuf,
    config_hash: String,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

impl Output {
    pub fn new<C: Serialize>(dir: &Path, config: &C) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_vec(config).map_err(|e| Error::Io(e.to_string()))?;
        let config_hash = hex::encode(Sha256::digest(&json));
        Ok(Output { dir: dir.to_path_buf(), config_hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header(&self, w: &mut impl Write, table: &str) -> Result<()> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(w, "# schema: mhcov/{table}/v{SCHEMA_VERSION}")?;
        writeln!(w, "# config-sha256: {}", self.config_hash)?;
        writeln!(w, "# generated-unix: {now}")?;
        Ok(())
    }

    pub fn csv<R: Serialize>(&self, name: &str, table: &str, rows: &[R]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        self.header(&mut w, table)?;
        let mut c = csv::Writer::from_writer(w);
        for r in rows {
            c.serialize(r).map_err(csv_err)?;
        }
        c.flush()?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}
