//! Dump directories: ACTD files plus a `manifest.json` of per-record offsets.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::container::{read_record, write_record, RecordReader};
use super::{ActivationDump, Variant};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const DUMP_FILE: &str = "dumps.actd";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sentence_id: String,
    pub file: String,
    pub offset: u64,
    pub variant: Variant,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    records: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct DumpStore {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DumpStore {
    /// Open a directory, using its manifest or, failing that, scanning `*.actd` files.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = dir.join(MANIFEST);
        let entries = if manifest.exists() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Metadata(e.to_string()))?;
            m.records
        } else {
            scan(&dir)?
        };
        Ok(DumpStore { dir, entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn get(&self, sentence_id: &str) -> Result<Option<ActivationDump>> {
        let Some(e) = self.entries.iter().find(|e| e.sentence_id == sentence_id) else {
            return Ok(None);
        };
        let path = self.dir.join(&e.file);
        let mut f = BufReader::new(File::open(&path).map_err(|err| Error::io(&path, err))?);
        f.seek(SeekFrom::Start(e.offset)).map_err(|err| Error::io(&path, err))?;
        let rec = read_record(&mut f)?
            .ok_or_else(|| Error::Metadata(format!("no record at offset {} of {}", e.offset, e.file)))?;
        ActivationDump::from_record(rec).map(Some)
    }

    /// Every dump in the store keyed by sentence id.
    pub fn load_all(&self) -> Result<BTreeMap<String, ActivationDump>> {
        let mut files: Vec<&str> = self.entries.iter().map(|e| e.file.as_str()).collect();
        files.sort_unstable();
        files.dedup();
        let mut out = BTreeMap::new();
        for file in files {
            let path = self.dir.join(file);
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for rec in RecordReader::new(BufReader::new(f)) {
                let d = ActivationDump::from_record(rec?)?;
                if out.contains_key(&d.sentence_id) {
                    return Err(Error::DuplicateId(d.sentence_id));
                }
                out.insert(d.sentence_id.clone(), d);
            }
        }
        Ok(out)
    }

    /// Write dumps into `dir` as one ACTD file and a manifest.
    pub fn write<'a>(dir: impl AsRef<Path>, dumps: impl IntoIterator<Item = &'a ActivationDump>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(DUMP_FILE);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for d in dumps {
            entries.push(ManifestEntry {
                sentence_id: d.sentence_id.clone(),
                file: DUMP_FILE.into(),
                offset,
                variant: d.variant.clone(),
            });
            offset += write_record(&mut w, &d.to_record()).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let manifest = Manifest {
            version: 1,
            records: entries.clone(),
        };
        let mpath = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
        Ok(DumpStore {
            dir: dir.to_path_buf(),
            entries,
        })
    }
}

fn scan(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "actd"))
        .collect();
    files.sort();
    let mut entries = Vec::new();
    for path in files {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut f = BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?);
        loop {
            let offset = f.stream_position().map_err(|e| Error::io(&path, e))?;
            let Some(rec) = read_record(&mut f)? else { break };
            let d = ActivationDump::from_record(rec)?;
            entries.push(ManifestEntry {
                sentence_id: d.sentence_id,
                file: name.clone(),
                offset,
                variant: d.variant,
            });
        }
    }
    Ok(entries)
}
