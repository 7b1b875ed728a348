//! Subcommand implementations. Each validates its configuration fully
//! before writing anything, and emits byte-deterministic artifacts.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use auscult::data::{
    self, ingest_icbhi_dir, make_weights, parse_manifest, parse_split_list, synth_generate_seeded,
    weighted_sample, CycleRecord, Label, ManifestRow, SamplerWeights, Split, SplitMode,
};
use auscult::dsp::{cyclic_pad, decode_wav, encode_wav_pcm16, log_mel, resample, AudioClip};
use auscult::embed::{tsne_run, TsneConfig};
use auscult::eval::{report_csv, report_summary, EvalReport, Protocol};
use auscult::model::{
    extract_embedding, init_params, load_checkpoint, predict_logits, save_checkpoint, ForwardMode,
    ModelCheckpoint,
};
use auscult::optim::{sam_step, OptimizerState};
use auscult::params::ParamSet;
use auscult::seeds;
use auscult::Value;
use rayon::prelude::*;

use crate::cache::{self, CachedRecord, IndexEntry};
use crate::config::{DataKind, RunConfig, SamplerKind, SplitModeKind};
use crate::error::{CliError, Result};

pub struct PreprocessSummary {
    pub processed: usize,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Reads the data source, slices/labels records, assigns splits, and writes
/// the spectrogram cache. Re-running over an existing cache rewrites
/// byte-identical files.
pub fn cmd_preprocess(config: &RunConfig) -> Result<PreprocessSummary> {
    config.validate_data_paths()?;
    let mut warnings = Vec::new();

    let mut records = match config.data.kind {
        DataKind::Synthetic => load_synthetic_records(config, &mut warnings)?,
        DataKind::Icbhi => {
            let (records, ingest_warnings) = ingest_icbhi_dir(&config.data.path)?;
            warnings.extend(ingest_warnings);
            records
        }
    };

    let split_mode = match config.split.mode {
        SplitModeKind::Official => {
            let file = config.split.file.as_ref().expect("validated");
            let text = std::fs::read_to_string(file)?;
            SplitMode::Official(parse_split_list(&text)?)
        }
        SplitModeKind::Stratified => SplitMode::SubjectStratified {
            train_fraction: config.split.train_fraction,
            seed: config.split.seed,
        },
    };
    records = data::split_records(records, &split_mode)?;
    records.sort_by(|a, b| a.clip.source_id.cmp(&b.clip.source_id));

    let cache_dir = config.cache_dir();
    std::fs::create_dir_all(&cache_dir)?;

    type PerRecord = std::result::Result<(IndexEntry, auscult::dsp::Spectrogram), String>;
    let results: Vec<PerRecord> = records
        .par_iter()
        .map(|record| {
            let id = record.clip.source_id.clone();
            let prepare = || -> std::result::Result<_, String> {
                let clip = resample(&record.clip, config.mel.sample_rate)
                    .map_err(|e| e.to_string())?;
                if clip.samples.len() < config.mel.window {
                    return Err(format!(
                        "cycle of {} samples is shorter than one analysis window, dropped",
                        clip.samples.len()
                    ));
                }
                let padded =
                    cyclic_pad(&clip, config.data.pad_seconds).map_err(|e| e.to_string())?;
                let spec = log_mel(&padded, &config.mel).map_err(|e| e.to_string())?;
                Ok(spec)
            };
            match prepare() {
                Ok(spec) => Ok((
                    IndexEntry {
                        file: format!("{}.spg", cache::sanitize_id(&id)),
                        id,
                        label: record.label,
                        subject: record.subject_id.clone(),
                        recording: record.recording_id.clone(),
                        split: record.split,
                    },
                    spec,
                )),
                Err(e) => Err(format!("{id}: {e}")),
            }
        })
        .collect();

    let mut entries = Vec::new();
    for result in results {
        match result {
            Ok((entry, spec)) => {
                cache::write_record(&cache_dir, &entry, &spec)?;
                entries.push(entry);
            }
            Err(warning) => warnings.push(warning),
        }
    }
    if entries.is_empty() {
        return Err(CliError::Data("no records survived preprocessing".into()));
    }
    cache::write_index(&cache_dir, &entries)?;

    // every warning corresponds to one skipped input
    Ok(PreprocessSummary {
        processed: entries.len(),
        skipped: warnings.len(),
        warnings,
    })
}

fn load_synthetic_records(
    config: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<CycleRecord>> {
    let manifest_path = config.data.path.join("manifest.csv");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        CliError::Data(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let rows = parse_manifest(&text)?;
    let mut records = Vec::new();
    for row in rows {
        let wav_path = config.data.path.join(format!("{}.wav", row.id));
        let bytes = match std::fs::read(&wav_path) {
            Ok(b) => b,
            Err(e) => {
                warnings.push(format!("{}: unreadable wav ({e}), skipped", row.id));
                continue;
            }
        };
        let clip = match decode_wav(&bytes, row.id.clone()) {
            Ok(c) => c,
            Err(e) => {
                warnings.push(format!("{}: undecodable wav ({e}), skipped", row.id));
                continue;
            }
        };
        records.push(CycleRecord {
            clip,
            label: row.label,
            subject_id: row.id.clone(),
            recording_id: row.id,
            split: Split::Train,
        });
    }
    Ok(records)
}

pub struct TrainSummary {
    pub steps: usize,
    pub final_train_accuracy: f64,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

/// Deterministic training loop: `epochs x ceil(n/batch)` sampled batches,
/// one log line per step, a checkpoint per epoch, and the final model.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let train = cache::load_records(config, Some(Split::Train))?;
    if train.is_empty() {
        return Err(CliError::Data("no training records in cache".into()));
    }
    cache::check_dims(&train, config)?;

    let weights = match config.sampler {
        SamplerKind::Uniform => SamplerWeights::uniform(train.len()),
        SamplerKind::Weighted => {
            let records: Vec<CycleRecord> = train
                .iter()
                .map(|r| CycleRecord {
                    clip: AudioClip::new(vec![0.0], 1, r.entry.id.clone()),
                    label: r.entry.label,
                    subject_id: r.entry.subject.clone(),
                    recording_id: r.entry.recording.clone(),
                    split: r.entry.split,
                })
                .collect();
            make_weights(&records)?
        }
    };

    let mut params = init_params(&config.model, config.seed)?;
    let mut state = OptimizerState::new(&params);
    let mut sampler_rng = seeds::rng(seeds::derive(config.seed, "sampler"));
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let sam_active = config.optimizer.sam_active();

    std::fs::create_dir_all(&config.out_dir)?;
    let log_path = config.out_dir.join("train.log");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);

    let mut global_step = 0usize;
    for epoch in 1..=config.epochs {
        for _ in 0..steps_per_epoch {
            global_step += 1;
            let indices = weighted_sample(&weights, config.batch_size, &mut sampler_rng);
            let batch: Vec<(&auscult::dsp::Spectrogram, usize)> = indices
                .iter()
                .map(|&i| (&train[i].spec, train[i].entry.label.index()))
                .collect();
            let mode = ForwardMode::Train {
                dropout_seed: seeds::derive_indexed(config.seed, "dropout", global_step as u64),
            };
            let metrics = sam_step(
                auscult::model::loss_builder(&config.model, &batch, mode),
                &mut params,
                &mut state,
                &config.optimizer,
            )?;
            if sam_active {
                writeln!(
                    log,
                    "step={global_step} epoch={epoch} loss={} sharpness={}",
                    metrics.loss, metrics.sharpness
                )?;
            } else {
                writeln!(log, "step={global_step} epoch={epoch} loss={}", metrics.loss)?;
            }
        }
        let checkpoint = ModelCheckpoint {
            config: config.model.clone(),
            params: params.clone(),
            optimizer: Some(state.clone()),
            rng_seed: config.seed,
            epoch: epoch as u32,
        };
        save_checkpoint(
            &checkpoint,
            config.out_dir.join(format!("checkpoint_epoch_{epoch:03}.astc")),
        )?;
    }

    let final_train_accuracy = accuracy_of(&params, config, &train)?;
    writeln!(log, "final_train_accuracy={final_train_accuracy}")?;
    log.flush()?;

    let checkpoint_path = config.out_dir.join("model.astc");
    save_checkpoint(
        &ModelCheckpoint {
            config: config.model.clone(),
            params,
            optimizer: Some(state),
            rng_seed: config.seed,
            epoch: config.epochs as u32,
        },
        &checkpoint_path,
    )?;

    Ok(TrainSummary {
        steps: global_step,
        final_train_accuracy,
        checkpoint_path,
        log_path,
    })
}

/// Index of the largest logit; ties resolve to the lowest class index.
pub fn argmax_lowest(logits: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

fn accuracy_of(params: &ParamSet, config: &RunConfig, records: &[CachedRecord]) -> Result<f64> {
    let predictions = predict_all(params, config, records)?;
    let correct = records
        .iter()
        .zip(&predictions)
        .filter(|(r, p)| r.entry.label.index() == argmax_lowest(p.data()))
        .count();
    Ok(correct as f64 / records.len() as f64)
}

fn predict_all(
    params: &ParamSet,
    config: &RunConfig,
    records: &[CachedRecord],
) -> Result<Vec<Value>> {
    records
        .par_iter()
        .map(|r| {
            predict_logits(params, &config.model, &r.spec)
                .map(|v| Value::vector(v.data()))
                .map_err(CliError::from)
        })
        .collect()
}

#[derive(Debug)]
pub struct EvalOutputs {
    pub report: EvalReport,
    pub accuracy: f64,
    pub predictions_path: PathBuf,
    pub report_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Scores a checkpoint over the cached test split and writes the prediction
/// dump, the report CSV, and the summary.
pub fn cmd_evaluate(config: &RunConfig, checkpoint_path: &Path) -> Result<EvalOutputs> {
    cmd_evaluate_into(config, checkpoint_path, &config.out_dir)
}

fn cmd_evaluate_into(
    config: &RunConfig,
    checkpoint_path: &Path,
    out_dir: &Path,
) -> Result<EvalOutputs> {
    config.validate()?;
    let checkpoint = load_checkpoint(checkpoint_path)?;
    if checkpoint.config != config.model {
        return Err(CliError::Config(format!(
            "checkpoint architecture {:?} does not match configured model {:?}",
            checkpoint.config, config.model
        )));
    }
    let test = cache::load_records(config, Some(Split::Test))?;
    if test.is_empty() {
        return Err(CliError::Data("no test records in cache".into()));
    }
    cache::check_dims(&test, config)?;

    let logits = predict_all(&checkpoint.params, config, &test)?;
    let truth: Vec<usize> = test.iter().map(|r| r.entry.label.index()).collect();
    let predicted: Vec<usize> = logits.iter().map(|l| argmax_lowest(l.data())).collect();

    std::fs::create_dir_all(out_dir)?;
    let predictions_path = out_dir.join("predictions.csv");
    let mut dump = String::from("id,label,predicted,logit_0,logit_1,logit_2,logit_3\n");
    for ((record, logit), &pred) in test.iter().zip(&logits).zip(&predicted) {
        let _ = write!(
            dump,
            "{},{},{pred}",
            record.entry.id,
            record.entry.label.index()
        );
        for v in logit.data() {
            let _ = write!(dump, ",{v}");
        }
        dump.push('\n');
    }
    std::fs::write(&predictions_path, dump)?;

    let report = EvalReport::from_pairs(&truth, &predicted, Protocol::Relaxed)?;
    let report_path = out_dir.join("report.csv");
    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&report_path, report_csv(&report))?;
    std::fs::write(&summary_path, report_summary(&report))?;

    let accuracy = report.accuracy.value().unwrap_or(0.0);
    Ok(EvalOutputs {
        report,
        accuracy,
        predictions_path,
        report_path,
        summary_path,
    })
}

pub struct AblationOutputs {
    pub rows: Vec<(String, EvalReport)>,
    pub csv_path: PathBuf,
}

/// Runs the three-configuration comparison (uniform sampling, class-balanced
/// sampling, class-balanced + sharpness-aware) with a shared seed and test
/// split, then writes a comparison CSV.
pub fn cmd_ablation(config: &RunConfig) -> Result<AblationOutputs> {
    config.validate()?;
    let variants: [(&str, SamplerKind, bool); 3] = [
        ("baseline", SamplerKind::Uniform, false),
        ("weighted", SamplerKind::Weighted, false),
        ("weighted_sam", SamplerKind::Weighted, true),
    ];

    let mut rows = Vec::new();
    for (name, sampler, sam) in variants {
        let mut variant = config.clone();
        variant.sampler = sampler;
        variant.optimizer.sam = sam;
        variant.out_dir = config.out_dir.join("ablation").join(name);
        std::fs::create_dir_all(&variant.out_dir)?;

        // all variants read the shared cache written by preprocess
        let shared_cache = config.cache_dir();
        let variant_cache = variant.cache_dir();
        link_cache(&shared_cache, &variant_cache)?;

        let summary = cmd_train(&variant)?;
        let outputs = cmd_evaluate_into(&variant, &summary.checkpoint_path, &variant.out_dir)?;
        rows.push((name.to_string(), outputs.report));
    }

    let csv_path = config.out_dir.join("ablation.csv");
    let mut text = String::from("config,sensitivity,specificity,score\n");
    for (name, report) in &rows {
        let fmt = |m: auscult::eval::MetricValue| match m.value() {
            Some(v) => format!("{v:.4}"),
            None => "undefined".to_string(),
        };
        let _ = writeln!(
            text,
            "{name},{},{},{}",
            fmt(report.sensitivity),
            fmt(report.specificity),
            fmt(report.score)
        );
    }
    std::fs::write(&csv_path, text)?;
    Ok(AblationOutputs { rows, csv_path })
}

/// Copies the shared cache into a variant's out dir (cheap at desk scale
/// and keeps every variant's artifacts self-contained).
fn link_cache(shared: &Path, variant: &Path) -> Result<()> {
    std::fs::create_dir_all(variant)?;
    for entry in std::fs::read_dir(shared)? {
        let entry = entry?;
        let target = variant.join(entry.file_name());
        std::fs::copy(entry.path(), target)?;
    }
    Ok(())
}

pub struct EmbedOutputs {
    pub embeddings_path: PathBuf,
    pub coords_path: PathBuf,
    pub kl_path: PathBuf,
    pub coords: Vec<(String, usize, f64, f64)>,
}

/// Extracts per-record embeddings for the chosen split and projects them to
/// 2-D, writing the embedding matrix, coordinates, and KL trace.
pub fn cmd_embed(config: &RunConfig, checkpoint_path: &Path, split: Split) -> Result<EmbedOutputs> {
    config.validate()?;
    let checkpoint = load_checkpoint(checkpoint_path)?;
    if checkpoint.config != config.model {
        return Err(CliError::Config(
            "checkpoint architecture does not match configured model".into(),
        ));
    }
    let records = cache::load_records(config, Some(split))?;
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "no {} records in cache",
            split.name()
        )));
    }
    cache::check_dims(&records, config)?;

    let embeddings: Vec<Value> = records
        .par_iter()
        .map(|r| {
            extract_embedding(&checkpoint.params, &config.model, &r.spec).map_err(CliError::from)
        })
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(&config.out_dir)?;
    let dim = config.model.embed_dim;
    let mut text = String::from("id,label");
    for d in 0..dim {
        let _ = write!(text, ",dim_{d}");
    }
    text.push('\n');
    for (record, embedding) in records.iter().zip(&embeddings) {
        let _ = write!(text, "{},{}", record.entry.id, record.entry.label.index());
        for v in embedding.data() {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    let embeddings_path = config.out_dir.join("embeddings.csv");
    std::fs::write(&embeddings_path, &text)?;

    // t-SNE over the embedding matrix; the run seed keys the init
    let n = records.len();
    let mut flat = Vec::with_capacity(n * dim);
    for e in &embeddings {
        flat.extend_from_slice(e.data());
    }
    let max_perplexity = ((n - 1) as f64 / 3.0) - 1e-9;
    let tsne_config = TsneConfig {
        seed: seeds::derive(config.seed, "tsne"),
        perplexity: config.tsne.perplexity.min(max_perplexity).max(1.5),
        ..config.tsne.clone()
    };
    let result = tsne_run(&Value::matrix(n, dim, flat), &tsne_config)?;

    let coords_path = config.out_dir.join("tsne.csv");
    let mut text = String::from("id,label,x,y\n");
    let mut coords = Vec::with_capacity(n);
    for (record, &(x, y)) in records.iter().zip(&result.coords) {
        let label = record.entry.label.index();
        let _ = writeln!(text, "{},{label},{x},{y}", record.entry.id);
        coords.push((record.entry.id.clone(), label, x, y));
    }
    std::fs::write(&coords_path, text)?;

    let kl_path = config.out_dir.join("kl_trace.csv");
    let mut text = String::from("iteration,kl\n");
    for (i, kl) in result.kl_trace.iter().enumerate() {
        let _ = writeln!(text, "{i},{kl}");
    }
    std::fs::write(&kl_path, text)?;

    Ok(EmbedOutputs {
        embeddings_path,
        coords_path,
        kl_path,
        coords,
    })
}

/// What to generate: per-class record counts, duration range, and the
/// train fraction used for the emitted split list.
pub struct SynthSpec {
    pub out_dir: PathBuf,
    pub counts: [usize; 4],
    pub min_duration: f64,
    pub max_duration: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

pub struct SynthSummary {
    pub manifest_path: PathBuf,
    pub split_path: PathBuf,
    pub rows: usize,
}

/// Writes a seeded synthetic dataset: wavs, `manifest.csv`, `splits.tsv`.
pub fn cmd_synth(spec: &SynthSpec) -> Result<SynthSummary> {
    if spec.counts.iter().all(|&c| c == 0) {
        return Err(CliError::Config("requested zero records".into()));
    }
    if spec.min_duration <= 0.0 || spec.max_duration < spec.min_duration {
        return Err(CliError::Config(format!(
            "bad duration range {}..{}",
            spec.min_duration, spec.max_duration
        )));
    }
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(CliError::Config(format!(
            "train fraction {} outside [0, 1]",
            spec.train_fraction
        )));
    }
    std::fs::create_dir_all(&spec.out_dir)?;

    use rand::Rng;
    let mut plan_rng = seeds::rng(seeds::derive(spec.seed, "synth-plan"));
    let mut rows = Vec::new();
    let mut splits = Vec::new();
    let mut index = 0u64;
    for (c, &count) in spec.counts.iter().enumerate() {
        let label = Label::from_index(c).expect("class index");
        let n_train = (count as f64 * spec.train_fraction).round() as usize;
        for k in 0..count {
            let id = format!("synth-{}-{k:04}", label.name());
            let duration = if spec.max_duration > spec.min_duration {
                plan_rng.random_range(spec.min_duration..spec.max_duration)
            } else {
                spec.min_duration
            };
            // keep manifests readable: durations at millisecond resolution
            let duration = (duration * 1000.0).round() / 1000.0;
            let record_seed = seeds::derive_indexed(spec.seed, "synth-record", index);
            index += 1;
            let clip = synth_generate_seeded(label, duration, record_seed);
            std::fs::write(
                spec.out_dir.join(format!("{id}.wav")),
                encode_wav_pcm16(&clip),
            )?;
            splits.push((
                id.clone(),
                if k < n_train { Split::Train } else { Split::Test },
            ));
            rows.push(ManifestRow {
                id,
                label,
                seed: record_seed,
                duration,
            });
        }
    }

    let manifest_path = spec.out_dir.join("manifest.csv");
    std::fs::write(&manifest_path, data::manifest_to_csv(&rows))?;

    splits.sort_by(|a, b| a.0.cmp(&b.0));
    let split_path = spec.out_dir.join("splits.tsv");
    let mut text = String::new();
    for (id, split) in &splits {
        let _ = writeln!(text, "{id}\t{}", split.name());
    }
    std::fs::write(&split_path, text)?;

    Ok(SynthSummary {
        manifest_path,
        split_path,
        rows: rows.len(),
    })
}
