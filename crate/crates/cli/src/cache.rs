//! The preprocessed-spectrogram cache: one `.spg` file per record plus an
//! `index.csv` carrying labels, provenance, and split tags.

use std::path::{Path, PathBuf};

use auscult::data::{Label, Split};
use auscult::dsp::{read_spectrogram, write_spectrogram, MelConfig, Spectrogram};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const INDEX_HEADER: &str = "id,file,label,subject,recording,split";

/// One cache entry's metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: String,
    pub file: String,
    pub label: Label,
    pub subject: String,
    pub recording: String,
    pub split: Split,
}

/// A loaded record: metadata plus its spectrogram.
#[derive(Debug, Clone)]
pub struct CachedRecord {
    pub entry: IndexEntry,
    pub spec: Spectrogram,
}

/// Replaces anything outside `[A-Za-z0-9._-]` so ids become safe filenames.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn index_path(cache_dir: &Path) -> PathBuf {
    cache_dir.join("index.csv")
}

pub fn write_index(cache_dir: &Path, entries: &[IndexEntry]) -> Result<()> {
    let mut text = String::from(INDEX_HEADER);
    text.push('\n');
    for e in entries {
        if e.id.contains(',') {
            return Err(CliError::Data(format!("record id {:?} contains a comma", e.id)));
        }
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.id,
            e.file,
            e.label.name(),
            e.subject,
            e.recording,
            e.split.name()
        ));
    }
    std::fs::write(index_path(cache_dir), text)?;
    Ok(())
}

pub fn read_index(cache_dir: &Path) -> Result<Vec<IndexEntry>> {
    let path = index_path(cache_dir);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Data(format!(
            "cannot read cache index {} (run preprocess first?): {e}",
            path.display()
        ))
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == INDEX_HEADER => {}
        other => {
            return Err(CliError::Data(format!(
                "bad cache index header: {other:?}"
            )))
        }
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Data(format!("bad index row {}: {line:?}", i + 2)));
        }
        let label = Label::from_name(fields[2])
            .ok_or_else(|| CliError::Data(format!("unknown label {:?}", fields[2])))?;
        let split = Split::from_name(fields[5])
            .ok_or_else(|| CliError::Data(format!("unknown split {:?}", fields[5])))?;
        entries.push(IndexEntry {
            id: fields[0].to_string(),
            file: fields[1].to_string(),
            label,
            subject: fields[3].to_string(),
            recording: fields[4].to_string(),
            split,
        });
    }
    Ok(entries)
}

pub fn write_record(cache_dir: &Path, entry: &IndexEntry, spec: &Spectrogram) -> Result<()> {
    let mut bytes = Vec::new();
    write_spectrogram(spec, &mut bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(cache_dir.join(&entry.file), bytes)?;
    Ok(())
}

/// Loads every cache entry, optionally filtered by split.
pub fn load_records(config: &RunConfig, split: Option<Split>) -> Result<Vec<CachedRecord>> {
    let cache_dir = config.cache_dir();
    let entries = read_index(&cache_dir)?;
    let mel: MelConfig = config.mel.clone();
    let mut records = Vec::new();
    for entry in entries {
        if let Some(want) = split {
            if entry.split != want {
                continue;
            }
        }
        let path = cache_dir.join(&entry.file);
        let file = std::fs::File::open(&path).map_err(|e| {
            CliError::Data(format!("cannot open cached {}: {e}", path.display()))
        })?;
        let spec = read_spectrogram(std::io::BufReader::new(file), mel.clone())
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        records.push(CachedRecord { entry, spec });
    }
    Ok(records)
}

/// Confirms every record matches the model's declared input shape.
pub fn check_dims(records: &[CachedRecord], config: &RunConfig) -> Result<()> {
    for r in records {
        if r.spec.bins != config.model.input_bins || r.spec.frames != config.model.input_frames {
            return Err(CliError::Config(format!(
                "cached record {:?} is {}x{} but the model expects {}x{}",
                r.entry.id,
                r.spec.bins,
                r.spec.frames,
                config.model.input_bins,
                config.model.input_frames
            )));
        }
    }
    Ok(())
}
