//! Acceptance suite: ten numbered criteria, one test each, every tolerance
//! pinned in code. Each test prints a `criterion N: PASS` line (visible
//! with `-- --nocapture`).
//!
//! Criteria 8 and 10 share one end-to-end fixture: the full synthetic
//! benchmark pipeline (generate -> preprocess -> train -> evaluate ->
//! ablation -> embed) executed twice with the same seed into separate
//! directories, so determinism can be checked byte-for-byte.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use auscult::data::{make_weights, weighted_sample, Split};
use auscult::dsp::{cyclic_pad, fft_in_place, hz_to_mel, log_mel, AudioClip, MelConfig};
use auscult::embed::{calibrate_perplexity, pairwise_sq_distances, tsne_run, TsneConfig};
use auscult::eval::{
    report_summary, ConfusionMatrix, EvalReport, MetricValue, Protocol,
};
use auscult::model::{batch_eval, init_params, ForwardMode, ModelConfig};
use auscult::optim::{
    sam_perturbation, sam_step, scalar_landscape, scalar_params, sgd_step, sharpness_probe,
    BaseKind, OptimizerConfig, OptimizerState,
};
use auscult::params::ParamSet;
use auscult::seeds;
use auscult::{Tape, Value};
use auscult_cli::{
    cmd_ablation, cmd_embed, cmd_evaluate, cmd_preprocess, cmd_synth, cmd_train, RunConfig,
    SamplerKind, SynthSpec,
};
use once_cell::sync::Lazy;

fn pass(criterion: u32, elapsed: Duration, detail: &str) {
    println!(
        "criterion {criterion}: PASS ({:.2}s) — {detail}",
        elapsed.as_secs_f64()
    );
}

// --- criterion 1: metric oracle ---------------------------------------------

#[test]
fn criterion_01_metric_oracle_reproduces_published_numbers() {
    let start = Instant::now();

    // 10000 abnormal with 6831 kept inside the abnormal block, 10000 normal
    // with 6789 kept normal
    let mut matrix = ConfusionMatrix::new();
    matrix.set(0, 0, 6789);
    matrix.set(0, 1, 1500);
    matrix.set(0, 2, 1000);
    matrix.set(0, 3, 711);
    matrix.set(1, 1, 2000);
    matrix.set(1, 2, 1500);
    matrix.set(1, 0, 900);
    matrix.set(2, 2, 1700);
    matrix.set(2, 3, 831);
    matrix.set(2, 0, 1269);
    matrix.set(3, 3, 500);
    matrix.set(3, 1, 300);
    matrix.set(3, 0, 1000);
    assert_eq!(matrix.row_total(0), 10_000);
    assert_eq!((1..4).map(|t| matrix.row_total(t)).sum::<u64>(), 10_000);
    let kept_abnormal: u64 = (1..4)
        .flat_map(|t| (1..4).map(move |p| matrix.count(t, p)))
        .sum();
    assert_eq!(kept_abnormal, 6831);

    let report = EvalReport::from_confusion(matrix, Protocol::Relaxed);
    assert_eq!(report.sensitivity, MetricValue::Defined(0.6831));
    assert_eq!(report.specificity, MetricValue::Defined(0.6789));
    assert_eq!(report.score, MetricValue::Defined(0.6810));
    let summary = report_summary(&report);
    assert!(summary.contains("0.6831,0.6789,0.6810"), "{summary}");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1));
    pass(1, elapsed, "Se=0.6831 Sp=0.6789 Score=0.6810 exactly");
}

// --- criterion 2: perturbation invariant -------------------------------------

#[test]
fn criterion_02_perturbation_norm_and_rho_zero_identity() {
    let start = Instant::now();
    use rand::Rng;
    let mut rng = seeds::rng(seeds::derive(2, "acceptance"));

    // 1000 random gradient configurations across random tensor layouts
    for case in 0..1000 {
        let groups = rng.random_range(1..5usize);
        let mut grads = ParamSet::new();
        let mut any = false;
        for g in 0..groups {
            let len = rng.random_range(1..40usize);
            let data: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
            any |= data.iter().any(|&v| v != 0.0);
            grads.insert(format!("p{g}"), Value::vector(&data));
        }
        if !any {
            continue;
        }
        let rho = rng.random_range(1e-3..1.0);
        let eps = sam_perturbation(&grads, rho).unwrap();
        let norm = eps.global_l2_norm();
        assert!(
            (norm - rho).abs() < 1e-12,
            "case {case}: ||eps|| = {norm}, rho = {rho}"
        );
    }

    // rho = 0 runs are bit-identical to the base optimizer, step for step
    let landscape = || scalar_landscape(|w| (w - 0.3) * (w - 0.3), |w| 2.0 * (w - 0.3));
    let run = |sam: bool| -> Vec<u64> {
        let config = OptimizerConfig {
            base: BaseKind::AdamW,
            learning_rate: 0.01,
            sam,
            rho: 0.0,
            ..OptimizerConfig::default()
        };
        let mut params = scalar_params(2.0);
        let mut state = OptimizerState::new(&params);
        let mut trace = Vec::new();
        for _ in 0..200 {
            sam_step(landscape(), &mut params, &mut state, &config).unwrap();
            trace.push(params.get("w").unwrap().data()[0].to_bits());
        }
        trace
    };
    assert_eq!(run(true), run(false));

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10));
    pass(2, elapsed, "||eps|| = rho to 1e-12 over 1000 configs; rho=0 bit-identical");
}

// --- criterion 3: hand-computed step -----------------------------------------

#[test]
fn criterion_03_sam_hand_computed_step() {
    let start = Instant::now();
    let config = OptimizerConfig {
        base: BaseKind::Sgd,
        learning_rate: 0.1,
        weight_decay: 0.0,
        sam: true,
        rho: 0.05,
        ..OptimizerConfig::default()
    };
    let mut params = scalar_params(1.0);
    let mut state = OptimizerState::new(&params);
    sam_step(
        scalar_landscape(|w| w * w, |w| 2.0 * w),
        &mut params,
        &mut state,
        &config,
    )
    .unwrap();
    assert_eq!(params.get("w").unwrap().data()[0], 0.79);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1));
    pass(3, elapsed, "w' = 0.79 exactly");
}

// --- criterion 4: flat-basin selection ---------------------------------------

const TAU: f64 = 0.2;

fn double_well(w: f64) -> f64 {
    let a = 100.0 * (w - 1.0) * (w - 1.0);
    let b = (w + 1.0) * (w + 1.0);
    let m = a.min(b);
    m - TAU * ((-(a - m) / TAU).exp() + (-(b - m) / TAU).exp()).ln()
}

fn double_well_grad(w: f64) -> f64 {
    let a = 100.0 * (w - 1.0) * (w - 1.0);
    let b = (w + 1.0) * (w + 1.0);
    let m = a.min(b);
    let ea = (-(a - m) / TAU).exp();
    let eb = (-(b - m) / TAU).exp();
    (ea * 200.0 * (w - 1.0) + eb * 2.0 * (w + 1.0)) / (ea + eb)
}

#[test]
fn criterion_04_flat_basin_selection() {
    let start = Instant::now();
    let sgd = OptimizerConfig {
        base: BaseKind::Sgd,
        learning_rate: 0.005,
        weight_decay: 0.0,
        sam: false,
        rho: 0.0,
        ..OptimizerConfig::default()
    };
    let sam = OptimizerConfig {
        sam: true,
        rho: 0.3,
        ..sgd.clone()
    };

    let trajectory = |w0: f64, config: &OptimizerConfig| -> f64 {
        let mut params = scalar_params(w0);
        let mut state = OptimizerState::new(&params);
        for _ in 0..800 {
            sam_step(
                scalar_landscape(double_well, double_well_grad),
                &mut params,
                &mut state,
                config,
            )
            .unwrap();
        }
        params.get("w").unwrap().data()[0]
    };

    // brute-force rolldown: which minimum plain gradient descent reaches
    // from an endpoint decides the basin it belongs to
    let rolls_to_flat = |w: f64| -> bool {
        let mut params = scalar_params(w);
        let cfg = OptimizerConfig {
            learning_rate: 0.002,
            ..sgd.clone()
        };
        for _ in 0..20_000 {
            let eval = scalar_landscape(double_well, double_well_grad)(&params).unwrap();
            sgd_step(&mut params, &eval.grads, &cfg).unwrap();
        }
        (params.get("w").unwrap().data()[0] + 1.0).abs() < 0.3
    };

    let mut sgd_flat = 0usize;
    let mut sam_flat = 0usize;
    for i in 0..101 {
        let w0 = -3.0 + 6.0 * i as f64 / 100.0;
        if rolls_to_flat(trajectory(w0, &sgd)) {
            sgd_flat += 1;
        }
        if rolls_to_flat(trajectory(w0, &sam)) {
            sam_flat += 1;
        }
    }
    assert!(
        sam_flat > sgd_flat,
        "flat-basin endpoints: sam {sam_flat}/101 vs sgd {sgd_flat}/101"
    );

    // flatness probe ordering at the two converged endpoints
    let flat_end = trajectory(-2.0, &sgd);
    let sharp_end = trajectory(2.0, &sgd);
    let probe = |w: f64| {
        sharpness_probe(
            scalar_landscape(double_well, double_well_grad),
            &scalar_params(w),
            0.3,
        )
        .unwrap()
        .estimate
    };
    assert!(
        probe(flat_end) < probe(sharp_end),
        "probe(flat) {} !< probe(sharp) {}",
        probe(flat_end),
        probe(sharp_end)
    );

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30));
    pass(
        4,
        elapsed,
        &format!("sam {sam_flat}/101 vs sgd {sgd_flat}/101 flat-basin endpoints; probes ordered"),
    );
}

// --- criterion 5: gradient suite ---------------------------------------------

fn random_value(shape: Vec<usize>, seed: u64) -> Value {
    use rand::Rng;
    let mut rng = seeds::rng(seed);
    let n: usize = shape.iter().product();
    Value::from_vec(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect())
}

fn weighted_sum(tape: &Tape, t: &auscult::Tensor, seed: u64) -> auscult::Tensor {
    let shape = t.shape();
    t.mul(&tape.constant(random_value(shape, seed))).unwrap().sum()
}

#[test]
fn criterion_05_gradient_suite() {
    let start = Instant::now();
    let step = 1e-5;

    type Builder = Box<dyn Fn(&Tape, &[auscult::Tensor]) -> auscult::autodiff::Result<auscult::Tensor>>;
    let smooth_cases: Vec<(&str, Vec<Value>, Builder)> = vec![
        (
            "matmul",
            vec![random_value(vec![3, 4], 1), random_value(vec![4, 2], 2)],
            Box::new(|tape, p| Ok(weighted_sum(tape, &p[0].matmul(&p[1])?, 3))),
        ),
        (
            "softmax",
            vec![random_value(vec![5], 4)],
            Box::new(|tape, p| Ok(weighted_sum(tape, &p[0].softmax(0)?, 5))),
        ),
        (
            "layer_norm",
            vec![
                random_value(vec![3, 6], 6),
                random_value(vec![6], 7),
                random_value(vec![6], 8),
            ],
            Box::new(|tape, p| Ok(weighted_sum(tape, &p[0].layer_norm(&p[1], &p[2], 1e-5)?, 9))),
        ),
        (
            "gelu",
            vec![Value::vector(
                &(0..25).map(|i| -3.0 + 0.25 * i as f64).collect::<Vec<_>>(),
            )],
            Box::new(|tape, p| Ok(weighted_sum(tape, &p[0].gelu(), 10))),
        ),
        (
            "cross_entropy",
            vec![random_value(vec![3, 4], 11)],
            Box::new(|_tape, p| p[0].cross_entropy(&[2, 0, 3])),
        ),
        (
            "structural",
            vec![random_value(vec![2, 3], 12), random_value(vec![3], 13)],
            Box::new(|tape, p| {
                let x = p[0].add_bias(&p[1])?.transpose()?;
                let mixed = x.slice_rows(0..2)?.mul(&x.slice_rows(1..3)?)?.scale(0.4);
                Ok(weighted_sum(tape, &mixed, 14))
            }),
        ),
    ];
    for (name, params, builder) in &smooth_cases {
        let report = auscult::autodiff::grad_check(builder, params, step, 1e-6).unwrap();
        assert!(report.passed(), "{name}: max rel err {:e}", report.max_rel_err);
    }

    // full toy transformer + cross-entropy against central differences
    let config = ModelConfig {
        patch_size: 16,
        embed_dim: 8,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        num_classes: 4,
        input_bins: 32,
        input_frames: 32,
        dropout: 0.0,
    };
    let mut params = init_params(&config, 31).unwrap();
    let spec = auscult::dsp::Spectrogram {
        bins: 32,
        frames: 32,
        values: random_value(vec![32, 32], 32),
        hop_seconds: 0.01,
        mel: MelConfig::default(),
    };
    let batch = [(&spec, 1usize)];
    let analytic = batch_eval(&params, &config, &batch, &ForwardMode::Eval)
        .unwrap()
        .grads;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut worst = 0.0f64;
    for name in &names {
        for i in 0..params.get(name).unwrap().len() {
            let original = params.get(name).unwrap().data()[i];
            params.get_mut(name).unwrap().data_mut()[i] = original + step;
            let up = batch_eval(&params, &config, &batch, &ForwardMode::Eval).unwrap().loss;
            params.get_mut(name).unwrap().data_mut()[i] = original - step;
            let down = batch_eval(&params, &config, &batch, &ForwardMode::Eval).unwrap().loss;
            params.get_mut(name).unwrap().data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * step);
            let analytic_v = analytic.get(name).unwrap().data()[i];
            let err = (analytic_v - numeric).abs()
                / f64::max(1.0, f64::max(analytic_v.abs(), numeric.abs()));
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-4, "transformer worst rel err {worst:e}");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60));
    pass(
        5,
        elapsed,
        &format!("all ops < 1e-6; full transformer worst {worst:.2e} < 1e-4"),
    );
}

// --- criterion 6: dsp suite ---------------------------------------------------

#[test]
fn criterion_06_dsp_suite() {
    let start = Instant::now();

    // cyclic padding: exact length and periodicity
    let short = AudioClip::new((0..48_000).map(|i| ((i % 97) as f64) / 97.0).collect(), 16_000, "c");
    let padded = cyclic_pad(&short, 8.0).unwrap();
    assert_eq!(padded.samples.len(), 128_000);
    for i in 0..128_000 - 48_000 {
        assert_eq!(padded.samples[i], padded.samples[i + 48_000]);
    }

    // fft against the direct transform
    use auscult::dsp::Complex;
    let naive = |input: &[Complex<f64>]| -> Vec<Complex<f64>> {
        let n = input.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::new(0.0, 0.0);
                for (t, x) in input.iter().enumerate() {
                    let angle = -std::f64::consts::TAU * (k * t) as f64 / n as f64;
                    acc += x * Complex::new(angle.cos(), angle.sin());
                }
                acc
            })
            .collect()
    };
    use rand::Rng;
    let mut rng = seeds::rng(seeds::derive(6, "acceptance"));
    let input: Vec<Complex<f64>> = (0..512)
        .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let expected = naive(&input);
    let mut got = input.clone();
    fft_in_place(&mut got);
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).norm() < 1e-9);
    }

    // the mel reference point
    assert!((hz_to_mel(700.0) - 2595.0 * 2.0f64.log10()).abs() < 1e-12);

    // default 8 s pipeline shape and silent-input floor
    let silent = AudioClip::new(vec![0.0; 128_000], 16_000, "s");
    let spec = log_mel(&silent, &MelConfig::default()).unwrap();
    assert_eq!((spec.bins, spec.frames), (128, 800));
    let floor = (1e-10f64).ln();
    assert!(spec.values.data().iter().all(|&v| v == floor));

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30));
    pass(6, elapsed, "padding exact; fft <= 1e-9 of DFT; mel(700) exact; 128x800; ln(1e-10) floor");
}

// --- criterion 7: sampler balance ---------------------------------------------

#[test]
fn criterion_07_sampler_balance() {
    let start = Instant::now();
    let counts = [100usize, 50, 25, 25];
    let mut records = Vec::new();
    for (class, &count) in counts.iter().enumerate() {
        for k in 0..count {
            records.push(auscult::data::CycleRecord {
                clip: AudioClip::new(vec![0.0; 4], 16_000, format!("{class}_{k}")),
                label: auscult::data::Label::from_index(class).unwrap(),
                subject_id: format!("{class}_{k}"),
                recording_id: format!("{class}_{k}"),
                split: Split::Train,
            });
        }
    }
    let weights = make_weights(&records).unwrap();
    let mut rng = seeds::rng(seeds::derive(2024, "sampler-mc"));
    let draws = weighted_sample(&weights, 1_000_000, &mut rng);
    let mut class_counts = [0u64; 4];
    for &i in &draws {
        class_counts[records[i].label.index()] += 1;
    }
    for (class, &n) in class_counts.iter().enumerate() {
        let freq = n as f64 / 1e6;
        assert!((freq - 0.25).abs() <= 0.005, "class {class}: {freq:.5}");
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30));
    pass(
        7,
        elapsed,
        &format!(
            "frequencies {:?} within 0.25 +- 0.005",
            class_counts.map(|n| n as f64 / 1e6)
        ),
    );
}

// --- criteria 8 & 10: end-to-end benchmark and determinism --------------------

/// The toy benchmark configuration: 2 s pad, 16 mel bins, 16 ms hop,
/// 16x128 spectrograms (16 patches), a 32-dim 2-block encoder, and AdamW
/// at 1e-3 under the sharpness-aware wrapper.
fn benchmark_config(root: &Path, data_dir: &Path) -> RunConfig {
    let mut config = RunConfig::default();
    config.seed = 7;
    config.epochs = 20;
    config.batch_size = 4;
    config.out_dir = root.to_path_buf();
    config.sampler = SamplerKind::Weighted;
    config.data.kind = auscult_cli::DataKind::Synthetic;
    config.data.path = data_dir.to_path_buf();
    config.data.pad_seconds = 2.0;
    config.split.mode = auscult_cli::SplitModeKind::Official;
    config.split.file = Some(data_dir.join("splits.tsv"));
    config.mel = MelConfig {
        hop: 256,
        mel_bins: 16,
        ..MelConfig::default()
    };
    config.model = ModelConfig {
        patch_size: 16,
        embed_dim: 32,
        depth: 2,
        heads: 4,
        mlp_ratio: 2,
        num_classes: 4,
        input_bins: 16,
        input_frames: 128,
        dropout: 0.0,
    };
    config.optimizer = OptimizerConfig {
        base: BaseKind::AdamW,
        learning_rate: 1e-3,
        weight_decay: 1e-4,
        sam: true,
        rho: 0.05,
        ..OptimizerConfig::default()
    };
    config.tsne = TsneConfig {
        perplexity: 15.0,
        learning_rate: 50.0,
        iterations: 1000,
        ..TsneConfig::default()
    };
    config
}

struct PipelineRun {
    root: PathBuf,
    train_accuracy: f64,
    score: f64,
    ablation: Vec<(String, MetricValue, MetricValue, MetricValue)>, // name, se, sp, score
    tsne_coords: Vec<(usize, f64, f64)>,
}

fn run_pipeline(root: &Path) -> PipelineRun {
    // balanced benchmark: 100 records per class, 75/25 train/test
    let balanced = root.join("data-balanced");
    cmd_synth(&SynthSpec {
        out_dir: balanced.clone(),
        counts: [100, 100, 100, 100],
        min_duration: 1.0,
        max_duration: 2.0,
        train_fraction: 0.75,
        seed: 7,
    })
    .unwrap();
    let main_out = root.join("main");
    let config = benchmark_config(&main_out, &balanced);
    let summary = cmd_preprocess(&config).unwrap();
    assert_eq!(summary.processed, 400);
    let train = cmd_train(&config).unwrap();
    let eval = cmd_evaluate(&config, &train.checkpoint_path).unwrap();
    let embed = cmd_embed(&config, &train.checkpoint_path, Split::Test).unwrap();

    // imbalanced variant: train counts 200/50/25/25 after the 0.75 split
    let imbalanced = root.join("data-imbalanced");
    cmd_synth(&SynthSpec {
        out_dir: imbalanced.clone(),
        counts: [267, 67, 33, 33],
        min_duration: 1.0,
        max_duration: 2.0,
        train_fraction: 0.75,
        seed: 7,
    })
    .unwrap();
    let ablation_out = root.join("ablation");
    let mut ablation_config = benchmark_config(&ablation_out, &imbalanced);
    ablation_config.split.file = Some(imbalanced.join("splits.tsv"));
    cmd_preprocess(&ablation_config).unwrap();
    let ablation = cmd_ablation(&ablation_config).unwrap();

    PipelineRun {
        root: root.to_path_buf(),
        train_accuracy: train.final_train_accuracy,
        score: eval.report.score.expect_defined("score"),
        ablation: ablation
            .rows
            .iter()
            .map(|(name, r)| (name.clone(), r.sensitivity, r.specificity, r.score))
            .collect(),
        tsne_coords: embed
            .coords
            .iter()
            .map(|(_, label, x, y)| (*label, *x, *y))
            .collect(),
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    first: PipelineRun,
    second: PipelineRun,
    elapsed: Duration,
}

static PIPELINE: Lazy<Fixture> = Lazy::new(|| {
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let first = run_pipeline(&dir.path().join("run1"));
    let second = run_pipeline(&dir.path().join("run2"));
    Fixture {
        _dir: dir,
        first,
        second,
        elapsed: start.elapsed(),
    }
});

fn binary_silhouette(coords: &[(usize, f64, f64)]) -> f64 {
    let n = coords.len();
    let mut total = 0.0;
    for i in 0..n {
        let (li, xi, yi) = coords[i];
        let mine = li != 0;
        let (mut same, mut ns, mut other, mut no) = (0.0, 0u32, 0.0, 0u32);
        for (j, &(lj, xj, yj)) in coords.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            if (lj != 0) == mine {
                same += d;
                ns += 1;
            } else {
                other += d;
                no += 1;
            }
        }
        let a = same / ns as f64;
        let b = other / no as f64;
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn criterion_08_end_to_end_learnability() {
    let fixture = &*PIPELINE;
    let run = &fixture.first;

    assert!(
        run.train_accuracy >= 0.90,
        "final train accuracy {}",
        run.train_accuracy
    );
    assert!(run.score >= 0.75, "test score {}", run.score);

    // ablation: exactly three rows, class-balanced sampling does not lose
    // sensitivity relative to the uniform baseline
    assert_eq!(run.ablation.len(), 3);
    assert_eq!(run.ablation[0].0, "baseline");
    assert_eq!(run.ablation[1].0, "weighted");
    assert_eq!(run.ablation[2].0, "weighted_sam");
    let base_se = run.ablation[0].1.expect_defined("baseline se");
    let weighted_se = run.ablation[1].1.expect_defined("weighted se");
    assert!(
        weighted_se >= base_se,
        "weighted se {weighted_se} < baseline se {base_se}"
    );

    // the learned embedding separates normal from abnormal in 2-D
    let silhouette = binary_silhouette(&run.tsne_coords);
    assert!(silhouette > 0.3, "binary silhouette {silhouette:.4}");

    assert!(fixture.elapsed < Duration::from_secs(900), "{:?}", fixture.elapsed);
    pass(
        8,
        fixture.elapsed,
        &format!(
            "train acc {:.4}; score {:.4}; ablation se {:.4} -> {:.4}; silhouette {:.3} (both runs)",
            run.train_accuracy, run.score, base_se, weighted_se, silhouette
        ),
    );
}

// --- criterion 9: t-SNE suite --------------------------------------------------

#[test]
fn criterion_09_tsne_suite() {
    let start = Instant::now();
    use rand::Rng;
    use rand_distr::Distribution;

    // per-row conditional entropy matches log2(perplexity) to 1e-5
    let n = 50;
    let mut rng = seeds::rng(seeds::derive(9, "acceptance"));
    let points = Value::matrix(
        n,
        8,
        (0..n * 8).map(|_| rng.random_range(-3.0..3.0)).collect(),
    );
    let affinities =
        calibrate_perplexity(&pairwise_sq_distances(&points), n, 12.0).unwrap();
    let target = 12.0f64.log2();
    for i in 0..n {
        let row = &affinities.conditional[i * n..(i + 1) * n];
        let entropy: f64 = row
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum();
        assert!((entropy - target).abs() <= 1e-5, "row {i}: {entropy}");
    }

    // KL gradient against finite differences at n = 5
    let n5 = 5;
    let pts5 = Value::matrix(
        n5,
        4,
        (0..n5 * 4).map(|_| rng.random_range(-3.0..3.0)).collect(),
    );
    let p = calibrate_perplexity(&pairwise_sq_distances(&pts5), n5, 1.3)
        .unwrap()
        .joint;
    let y: Vec<f64> = (0..n5 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let kl_of = |y: &[f64]| -> f64 {
        let mut kernel = vec![0.0; n5 * n5];
        let mut total = 0.0;
        for i in 0..n5 {
            for j in 0..n5 {
                if i != j {
                    let dx = y[2 * i] - y[2 * j];
                    let dy = y[2 * i + 1] - y[2 * j + 1];
                    kernel[i * n5 + j] = 1.0 / (1.0 + dx * dx + dy * dy);
                    total += kernel[i * n5 + j];
                }
            }
        }
        (0..n5 * n5)
            .filter(|&i| p[i] > 0.0)
            .map(|i| p[i] * (p[i] / (kernel[i] / total)).ln())
            .sum()
    };
    let probe_config = TsneConfig {
        learning_rate: 1.0,
        momentum_early: 0.0,
        momentum_late: 0.0,
        exaggeration: 1.0,
        exaggeration_until: 0,
        ..TsneConfig::default()
    };
    let mut state = auscult::embed::TsneState::new(y.clone());
    auscult::embed::tsne_step(&p, &mut state, &probe_config, 0);
    for k in 0..n5 * 2 {
        let grad = y[k] - state.coords[k];
        let h = 1e-6;
        let mut up = y.clone();
        up[k] += h;
        let mut down = y.clone();
        down[k] -= h;
        let numeric = (kl_of(&up) - kl_of(&down)) / (2.0 * h);
        let denom = f64::max(1.0, f64::max(grad.abs(), numeric.abs()));
        assert!(((grad - numeric) / denom).abs() < 1e-5, "coord {k}");
    }

    // two-blob benchmark: silhouette > 0.8 and decreasing KL
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(50 * 16);
    let mut labels = Vec::new();
    for i in 0..50 {
        labels.push(i / 25);
        let offset = if i < 25 { 0.0 } else { 20.0 };
        for k in 0..16 {
            data.push(if k == 0 { offset } else { 0.0 } + normal.sample(&mut rng));
        }
    }
    let blobs = Value::matrix(50, 16, data);
    let result = tsne_run(
        &blobs,
        &TsneConfig {
            perplexity: 10.0,
            iterations: 1000,
            learning_rate: 50.0,
            seed: 7,
            ..TsneConfig::default()
        },
    )
    .unwrap();
    let coords: Vec<(usize, f64, f64)> = result
        .coords
        .iter()
        .zip(&labels)
        .map(|(&(x, y), &l)| (l, x, y))
        .collect();
    let silhouette = binary_silhouette(&coords);
    assert!(silhouette > 0.8, "blob silhouette {silhouette:.4}");
    assert!(result.kl_trace.last().unwrap() < &result.kl_trace[0]);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60));
    pass(
        9,
        elapsed,
        &format!("entropy to 1e-5; KL gradient to 1e-5; blob silhouette {silhouette:.3}"),
    );
}

// --- criterion 10: determinism --------------------------------------------------

fn collect_files(root: &Path, out: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, out);
        } else {
            out.push(path);
        }
    }
}

#[test]
fn criterion_10_end_to_end_determinism() {
    let fixture = &*PIPELINE;
    let start = Instant::now();

    let mut first_files = Vec::new();
    collect_files(&fixture.first.root, &mut first_files);
    first_files.sort();
    assert!(
        first_files.len() > 50,
        "expected a full artifact tree, found {} files",
        first_files.len()
    );

    let mut checked = 0usize;
    for path in &first_files {
        let relative = path.strip_prefix(&fixture.first.root).unwrap();
        let twin = fixture.second.root.join(relative);
        assert!(twin.exists(), "{} missing from the second run", relative.display());
        let a = std::fs::read(path).unwrap();
        let b = std::fs::read(&twin).unwrap();
        assert_eq!(
            a,
            b,
            "{} differs between identically seeded runs",
            relative.display()
        );
        checked += 1;
    }

    let mut second_files = Vec::new();
    collect_files(&fixture.second.root, &mut second_files);
    assert_eq!(first_files.len(), second_files.len());

    let elapsed = start.elapsed();
    pass(
        10,
        elapsed,
        &format!("{checked} artifacts byte-identical across reruns (wavs, caches, logs, checkpoints, reports, projections)"),
    );
}
