//! Atomic output files: everything is written to a temporary file in the
//! destination directory and renamed into place.

use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

fn temp_beside(path: &Path) -> Result<NamedTempFile> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))
}

fn persist(tmp: NamedTempFile, path: &Path) -> Result<()> {
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Write through `f` and move the result to `path`.
pub fn write_with(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let tmp = temp_beside(path)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        f(&mut w)?;
        w.flush()?;
    }
    persist(tmp, path)
}

/// For writers that insist on a path of their own.
pub fn write_via_path(path: &Path, f: impl FnOnce(&Path) -> idiolens_core::Result<()>) -> Result<()> {
    let tmp = temp_beside(path)?;
    f(tmp.path())?;
    persist(tmp, path)
}

/// CSV with a header row; `header` is only used when there are no rows to
/// derive it from.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    write_with(path, |w| {
        let mut out = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(w);
        if rows.is_empty() {
            out.write_record(header)?;
        }
        for r in rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}
