//! Dataset ingestion: annotation parsing, respiratory-cycle slicing,
//! train/test splitting, weighted sampling, and synthetic audio.
//!
//! The on-disk layout mirrors the public lung-sound corpus convention: a
//! directory of paired `<name>.wav` / `<name>.txt` files, where annotation
//! rows are `start end crackle_flag wheeze_flag` and the first
//! underscore-separated filename field is the subject id. An optional split
//! list file assigns whole recordings to `train` or `test`.

mod sampler;
mod synth;

pub use sampler::{make_weights, weighted_sample, SamplerWeights};
pub use synth::{
    manifest_to_csv, parse_manifest, synth_generate, synth_generate_seeded, ManifestRow,
    SYNTH_SAMPLE_RATE,
};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dsp::{decode_wav, AudioClip, DspError};
use crate::seeds;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("range error at row {row}: {detail}")]
    Range { row: usize, detail: String },
    #[error("class {class} missing from training records")]
    MissingClass { class: &'static str },
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// The four cycle classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal = 0,
    Crackle = 1,
    Wheeze = 2,
    Both = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Normal, Label::Crackle, Label::Wheeze, Label::Both];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Crackle => "crackle",
            Label::Wheeze => "wheeze",
            Label::Both => "both",
        }
    }

    pub fn from_name(name: &str) -> Option<Label> {
        Label::ALL.iter().copied().find(|l| l.name() == name)
    }

    /// Anything but Normal counts as abnormal under the binary collapse.
    pub fn is_abnormal(self) -> bool {
        self != Label::Normal
    }
}

/// Maps the two annotation flags onto the four classes.
pub fn label_of(crackle: bool, wheeze: bool) -> Label {
    match (crackle, wheeze) {
        (false, false) => Label::Normal,
        (true, false) => Label::Crackle,
        (false, true) => Label::Wheeze,
        (true, true) => Label::Both,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Split> {
        match name {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One respiratory cycle: its waveform slice, class, and provenance.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub clip: AudioClip,
    pub label: Label,
    pub subject_id: String,
    pub recording_id: String,
    pub split: Split,
}

/// One parsed annotation row: start/end seconds and the two flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub start: f64,
    pub end: f64,
    pub crackle: bool,
    pub wheeze: bool,
}

/// Parses annotation text: one row per nonempty line, four whitespace
/// separated fields (two decimals, two binary flags).
pub fn parse_annotation(text: &str) -> Result<Vec<Annotation>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                line: line_no,
                detail: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let time = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| DataError::Parse {
                line: line_no,
                detail: format!("{what} {s:?} is not a decimal"),
            })
        };
        let flag = |s: &str, what: &str| -> Result<bool> {
            match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(DataError::Parse {
                    line: line_no,
                    detail: format!("{what} flag {s:?} is not binary"),
                }),
            }
        };
        let start = time(fields[0], "start")?;
        let end = time(fields[1], "end")?;
        if start >= end {
            return Err(DataError::Range {
                row: line_no,
                detail: format!("start {start} is not before end {end}"),
            });
        }
        rows.push(Annotation {
            start,
            end,
            crackle: flag(fields[2], "crackle")?,
            wheeze: flag(fields[3], "wheeze")?,
        });
    }
    Ok(rows)
}

/// Subject id: the first underscore-separated field of a recording name.
pub fn subject_of(recording_id: &str) -> String {
    recording_id
        .split('_')
        .next()
        .unwrap_or(recording_id)
        .to_string()
}

/// Cuts one recording into per-cycle records.
///
/// Sample indices are `round(start * rate) .. round(end * rate)`; annotation
/// times may overrun the clip by at most one sample. Records start in the
/// train split until a split assignment runs.
pub fn slice_cycles(clip: &AudioClip, annotations: &[Annotation]) -> Result<Vec<CycleRecord>> {
    let rate = clip.sample_rate as f64;
    let len = clip.samples.len();
    let mut records = Vec::with_capacity(annotations.len());
    for (i, ann) in annotations.iter().enumerate() {
        let row = i + 1;
        let start = (ann.start * rate).round() as usize;
        let end = (ann.end * rate).round() as usize;
        if end > len + 1 {
            return Err(DataError::Range {
                row,
                detail: format!(
                    "cycle {}..{} s runs past the {}-sample clip",
                    ann.start, ann.end, len
                ),
            });
        }
        let end = end.min(len);
        if start >= end {
            return Err(DataError::Range {
                row,
                detail: format!("cycle {}..{} s is empty at {rate} Hz", ann.start, ann.end),
            });
        }
        let cycle_id = format!("{}#{row}", clip.source_id);
        records.push(CycleRecord {
            clip: AudioClip::new(clip.samples[start..end].to_vec(), clip.sample_rate, cycle_id),
            label: label_of(ann.crackle, ann.wheeze),
            subject_id: subject_of(&clip.source_id),
            recording_id: clip.source_id.clone(),
            split: Split::Train,
        });
    }
    Ok(records)
}

/// How records are assigned to train/test.
#[derive(Debug, Clone)]
pub enum SplitMode {
    /// Recording-name → split assignments from a challenge-style list file.
    Official(BTreeMap<String, Split>),
    /// Partition by subject so no subject spans both splits.
    SubjectStratified { train_fraction: f64, seed: u64 },
}

/// Parses a split list: lines of `<recording>\t<train|test>`.
pub fn parse_split_list(text: &str) -> Result<BTreeMap<String, Split>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(DataError::Parse {
                line: i + 1,
                detail: format!("expected `<name> <train|test>`, found {line:?}"),
            });
        }
        let split = Split::from_name(fields[1]).ok_or_else(|| DataError::Parse {
            line: i + 1,
            detail: format!("unknown split {:?}", fields[1]),
        })?;
        map.insert(fields[0].to_string(), split);
    }
    Ok(map)
}

/// Tags every record with its split.
pub fn split_records(mut records: Vec<CycleRecord>, mode: &SplitMode) -> Result<Vec<CycleRecord>> {
    match mode {
        SplitMode::Official(list) => {
            for record in &mut records {
                let split = list.get(&record.recording_id).ok_or_else(|| {
                    DataError::Ingestion(format!(
                        "recording {:?} missing from the official split list",
                        record.recording_id
                    ))
                })?;
                record.split = *split;
            }
        }
        SplitMode::SubjectStratified {
            train_fraction,
            seed,
        } => {
            if !(0.0..=1.0).contains(train_fraction) {
                return Err(DataError::Ingestion(format!(
                    "train fraction {train_fraction} outside [0, 1]"
                )));
            }
            let mut subjects: Vec<String> = records
                .iter()
                .map(|r| r.subject_id.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut rng = seeds::rng(seeds::derive(*seed, "subject-split"));
            subjects.shuffle(&mut rng);
            let mut n_train = (subjects.len() as f64 * train_fraction).round() as usize;
            n_train = n_train.min(subjects.len());
            if subjects.len() >= 2 {
                n_train = n_train.clamp(1, subjects.len() - 1);
            }
            let train: std::collections::BTreeSet<&String> =
                subjects[..n_train].iter().collect();
            for record in &mut records {
                record.split = if train.contains(&record.subject_id) {
                    Split::Train
                } else {
                    Split::Test
                };
            }
        }
    }
    Ok(records)
}

/// Scans a directory of paired `<name>.wav` / `<name>.txt` recordings.
///
/// Returns the sliced cycles plus human-readable warnings for files that
/// were skipped (undecodable audio, bad annotations, missing pair).
pub fn ingest_icbhi_dir(dir: impl AsRef<Path>) -> Result<(Vec<CycleRecord>, Vec<String>)> {
    let dir = dir.as_ref();
    let mut wav_names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("wav") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                wav_names.push(stem.to_string());
            }
        }
    }
    wav_names.sort();
    if wav_names.is_empty() {
        return Err(DataError::Ingestion(format!(
            "no .wav recordings in {}",
            dir.display()
        )));
    }

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for name in wav_names {
        let wav_path = dir.join(format!("{name}.wav"));
        let txt_path = dir.join(format!("{name}.txt"));
        if !txt_path.exists() {
            warnings.push(format!("{name}: no annotation file, skipped"));
            continue;
        }
        let bytes = std::fs::read(&wav_path)?;
        let clip = match decode_wav(&bytes, name.clone()) {
            Ok(clip) => clip,
            Err(e) => {
                warnings.push(format!("{name}: undecodable wav ({e}), skipped"));
                continue;
            }
        };
        let annotations = match parse_annotation(&std::fs::read_to_string(&txt_path)?) {
            Ok(rows) => rows,
            Err(e) => {
                warnings.push(format!("{name}: bad annotations ({e}), skipped"));
                continue;
            }
        };
        match slice_cycles(&clip, &annotations) {
            Ok(cycles) => records.extend(cycles),
            Err(e) => warnings.push(format!("{name}: {e}, skipped")),
        }
    }
    Ok((records, warnings))
}
