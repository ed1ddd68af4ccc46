use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;
use smc_lab::Trace;

use crate::CliError;

/// Writes every artifact of one command into a single directory.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|source| CliError::Output {
            path: root.clone(),
            source,
        })?;
        Ok(Self { root })
    }

    fn open(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        Ok((path, BufWriter::new(file)))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let (path, mut w) = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(smc_lab::Error::from)?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|source| CliError::Output {
                path: path.clone(),
                source,
            })?;
        Ok(path)
    }

    pub fn rows<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let (path, w) = self.open(name)?;
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r).map_err(smc_lab::Error::from)?;
        }
        out.flush().map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn trace(&self, name: &str, trace: &Trace) -> Result<PathBuf, CliError> {
        let (path, w) = self.open(name)?;
        trace.write_csv(w)?;
        Ok(path)
    }
}
