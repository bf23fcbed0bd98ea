//! One adapter per subcommand: parse files, call the library, write outputs.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use ovr_core::augment::{
    augment_utterance, intervals_to_track, pick_table, read_intervals, RtfAccumulator, RtfTable, SmoothingConfig,
};
use ovr_core::complexity::{bench_realtime_factor, cost_report, MacConvention};
use ovr_core::io::{read_jsonl, read_wav, write_json, write_wav, WavFormat};
use ovr_core::metrics::{evaluate_item, EvalItem, EvalReport, ModelEnhancer, PassThrough, Enhancer};
use ovr_core::mixer::{mix_at_snr, MixManifestRow};
use ovr_core::model::{streaming_infer, FtJnf, ModelConfig, Variant, WeightSet};
use ovr_core::synth::{toy_dataset, SyntheticTalker, ToyDataConfig};
use ovr_core::train::{self, TrainConfig, FINE_TUNE_LR, TRAIN_LR};
use ovr_core::{Stft, StftConfig};

use crate::data::{load_examples, load_irs, load_noise, load_pair, resolve, AugmentRow, EvalRowSpec, RecordingRow, RATE};
use crate::record::RunRecord;
use crate::{Command, ModelArgs, TrainArgs, UsageError};

fn stft() -> Stft {
    Stft::new(StftConfig::default())
}

fn model_config(args: &ModelArgs) -> Result<ModelConfig> {
    let k = StftConfig::default().num_bins();
    let cfg = match (args.preset, &args.hidden) {
        (Some(v), _) => ModelConfig::from_variant(v, args.mics, k),
        (None, Some(h)) if h.len() == 2 => ModelConfig::new(h[0], h[1], args.mics, k),
        (None, Some(_)) => bail!(UsageError("--hidden takes two values, H_F,H_T".into())),
        (None, None) => bail!(UsageError("one of --preset or --hidden is required".into())),
    };
    cfg.map_err(|e| UsageError(e.to_string()).into())
}

fn load_model(path: &Path) -> Result<FtJnf> {
    let weights = WeightSet::load(path).with_context(|| format!("loading weights {}", path.display()))?;
    let cfg = weights.infer_config(StftConfig::default().num_bins())?;
    Ok(FtJnf::new(cfg, weights)?)
}

pub fn run(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::EstimateRtf {
            manifest,
            talker,
            out,
            min_frames,
        } => estimate_rtf(&manifest, &talker, &out, min_frames, argv),
        Command::Augment {
            manifest,
            tables,
            out_dir,
            seed,
            alpha,
        } => augment(&manifest, &tables, &out_dir, seed, alpha, argv),
        Command::Mix { manifest, irs, out_dir } => mix(&manifest, &irs, &out_dir, argv),
        Command::Infer {
            weights,
            input,
            out,
            streaming,
        } => infer(&weights, &input, &out, streaming, argv),
        Command::Train { model, train } => {
            let cfg = model_config(&model)?;
            let model = FtJnf::new(cfg, WeightSet::init(&cfg, train.seed))?;
            fit("train", model, &train, TRAIN_LR, argv)
        }
        Command::Finetune { weights, train } => fit("finetune", load_model(&weights)?, &train, FINE_TUNE_LR, argv),
        Command::Count { model, convention, out } => count(&model, convention.into(), out.as_deref(), argv),
        Command::Bench {
            presets,
            seconds,
            reps,
            mics,
            out,
        } => bench(&presets, seconds, reps, mics, out.as_deref(), argv),
        Command::Eval {
            weights,
            passthrough,
            manifest,
            irs,
            snrs,
            out_dir,
        } => eval(weights.as_deref(), passthrough, &manifest, &irs, &snrs, &out_dir, argv),
    }
}

fn estimate_rtf(manifest: &Path, talker: &str, out: &Path, min_frames: usize, argv: &[String]) -> Result<()> {
    let rows: Vec<RecordingRow> = read_jsonl(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let stft = stft();
    let mut acc = RtfAccumulator::new(stft.config().num_bins());
    for row in &rows {
        let (outer, inear) = load_pair(&resolve(manifest, &row.outer), &resolve(manifest, &row.inear))?;
        let intervals = read_intervals(&resolve(manifest, &row.intervals))?;
        ovr_core::augment::validate_intervals(&intervals, Some(outer.duration_secs()))?;
        let so = stft.analyze(&outer)?;
        let si = stft.analyze(&inear)?;
        let track = intervals_to_track(&intervals, so.num_frames(), stft.config());
        acc.add(&so, &si, &track)?;
    }
    let table = acc.finish(talker, min_frames)?;
    table.save(out)?;
    let mut record = RunRecord::new("estimate-rtf", argv, None).with_config(&json!({
        "talker": talker,
        "min_frames": min_frames,
        "recordings": rows.len(),
        "phonemes": table.phonemes().collect::<Vec<_>>(),
    }));
    record.output(out);
    record.write_beside(out)?;
    Ok(())
}

fn augment(manifest: &Path, tables: &[std::path::PathBuf], out_dir: &Path, seed: u64, alpha: f64, argv: &[String]) -> Result<()> {
    let smoothing = SmoothingConfig::new(alpha).map_err(|e| UsageError(e.to_string()))?;
    let rows: Vec<AugmentRow> = read_jsonl(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let tables = tables
        .iter()
        .map(|p| RtfTable::load(p).with_context(|| format!("loading RTF table {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    // table choices are drawn up front so output does not depend on --jobs
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rows
        .iter()
        .map(|row| pick_table(&tables, row.talker.as_deref(), &mut rng))
        .collect::<ovr_core::Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir)?;
    let stft = stft();
    let results: Vec<Result<Vec<std::path::PathBuf>>> = rows
        .par_iter()
        .zip(chosen.par_iter())
        .map(|(row, table)| {
            let speech = ovr_core::io::read_mono(&resolve(manifest, &row.speech), RATE)?;
            let intervals = read_intervals(&resolve(manifest, &row.intervals))?;
            let (outer, inear) = augment_utterance(&speech, &intervals, table, smoothing, &stft)
                .with_context(|| format!("augmenting {}", row.id))?;
            let po = out_dir.join(format!("{}_outer.wav", row.id));
            let pi = out_dir.join(format!("{}_inear.wav", row.id));
            write_wav(&po, &[&outer], WavFormat::Float32)?;
            write_wav(&pi, &[&inear], WavFormat::Float32)?;
            Ok(vec![po, pi])
        })
        .collect();
    let mut record = RunRecord::new("augment", argv, Some(seed)).with_config(&json!({
        "alpha": alpha,
        "tables": chosen.iter().map(|t| t.talker_id.clone()).collect::<Vec<_>>(),
    }));
    let mut first_err = None;
    for (row, r) in rows.iter().zip(results) {
        match r {
            Ok(paths) => paths.iter().for_each(|p| record.output(p)),
            Err(e) => {
                record.failures.push(format!("{}: {e:#}", row.id));
                first_err.get_or_insert(e);
            }
        }
    }
    record.write_in(out_dir)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn mix(manifest: &Path, irs: &crate::IrArgs, out_dir: &Path, argv: &[String]) -> Result<()> {
    let rows: Vec<MixManifestRow> = read_jsonl(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let irs = load_irs(irs)?;
    fs::create_dir_all(out_dir)?;
    let results: Vec<Result<(std::path::PathBuf, f64)>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let (outer, inear) = load_pair(&resolve(manifest, Path::new(&row.speech[0])), &resolve(manifest, Path::new(&row.speech[1])))?;
            let noise = load_noise(&resolve(manifest, Path::new(&row.noise)), row.spec.mode, &irs)?;
            let m = mix_at_snr(&outer, &inear, &noise, &row.spec)?;
            let path = out_dir.join(format!("mix_{i:04}.wav"));
            write_wav(&path, &[&m.outer, &m.inear], WavFormat::Float32)?;
            Ok((path, m.gain))
        })
        .collect();
    let mut record = RunRecord::new("mix", argv, None).with_config(&json!({ "rows": rows.len() }));
    let mut gains = Vec::new();
    let mut first_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((p, g)) => {
                record.output(&p);
                gains.push(Some(g));
            }
            Err(e) => {
                record.failures.push(format!("row {i}: {e:#}"));
                gains.push(None);
                first_err.get_or_insert(e);
            }
        }
    }
    record.config["noise_gains"] = json!(gains);
    record.write_in(out_dir)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn infer(weights: &Path, input: &Path, out: &Path, streaming: bool, argv: &[String]) -> Result<()> {
    let model = load_model(weights)?;
    let channels = read_wav(input, RATE).with_context(|| format!("reading {}", input.display()))?;
    let stft = stft();
    let enhanced = if streaming {
        let inputs = match (model.config().num_mics, channels.len()) {
            (m, n) if m == n => channels.iter().collect::<Vec<_>>(),
            (1, 2) => vec![&channels[1]],
            (m, n) => bail!("model takes {m} channels, {} has {n}", input.display()),
        };
        streaming_infer(&model, &stft, &inputs)?
    } else {
        train::enhance(&model, &stft, &channels)?
    };
    write_wav(out, &[&enhanced], WavFormat::Float32)?;
    let mut record = RunRecord::new("infer", argv, None).with_config(&json!({
        "model": model.config(),
        "streaming": streaming,
    }));
    record.output(out);
    record.write_beside(out)?;
    Ok(())
}

fn fit(name: &str, model: FtJnf, args: &TrainArgs, default_lr: f64, argv: &[String]) -> Result<()> {
    let stft = stft();
    let (train_set, val_set) = match (args.toy_examples, &args.train) {
        (Some(n), _) => {
            let talkers = [SyntheticTalker::random("talker_a", args.seed), SyntheticTalker::random("talker_b", args.seed + 1)];
            let cfg = ToyDataConfig {
                num_train: n,
                num_val: (n / 4).max(1),
                seed: args.seed,
                ..ToyDataConfig::default()
            };
            toy_dataset(&talkers, &stft, &cfg)?
        }
        (None, Some(path)) => {
            let val = match &args.val {
                Some(v) => load_examples(v)?,
                None => Vec::new(),
            };
            (load_examples(path)?, val)
        }
        (None, None) => bail!(UsageError("one of --train or --toy-examples is required".into())),
    };
    let config = TrainConfig {
        lr: args.lr.unwrap_or(default_lr),
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        max_steps: args.max_steps,
        ..TrainConfig::training(args.seed)
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    fs::create_dir_all(&args.out_dir)?;
    let ckpt_dir = args.out_dir.join("checkpoints");
    let model_cfg = *model.config();
    let (model, history) = train::train(model, &stft, &train_set, &val_set, config, Some(&ckpt_dir))?;
    let final_path = args.out_dir.join("final.ovrw");
    model.weights().save(&final_path)?;
    let history_path = args.out_dir.join("history.json");
    write_json(&history_path, &history)?;
    let mut record = RunRecord::new(name, argv, Some(args.seed)).with_config(&json!({
        "model": model_cfg,
        "train": config,
        "train_examples": train_set.len(),
        "val_examples": val_set.len(),
    }));
    record.output(&final_path);
    record.output(&history_path);
    record.output(&ckpt_dir);
    record.write_in(&args.out_dir)?;
    Ok(())
}

fn count(model: &ModelArgs, convention: MacConvention, out: Option<&Path>, argv: &[String]) -> Result<()> {
    let cfg = model_config(model)?;
    let report = cost_report(&cfg, &StftConfig::default(), convention);
    let value = json!({
        "preset": model.preset.map(|v| v.name()),
        "h_f": cfg.h_f,
        "h_t": cfg.h_t,
        "num_mics": cfg.num_mics,
        "convention": convention,
        "params": report.params,
        "macs_per_second": report.macs_per_second,
        "realtime_factor": report.realtime_factor,
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    if let Some(out) = out {
        write_json(out, &value)?;
        let mut record = RunRecord::new("count", argv, None).with_config(&cfg);
        record.output(out);
        record.write_beside(out)?;
    }
    Ok(())
}

fn bench(presets: &[Variant], seconds: f64, reps: usize, mics: usize, out: Option<&Path>, argv: &[String]) -> Result<()> {
    if reps < 3 {
        bail!(UsageError("--reps must be at least 3".into()));
    }
    let presets = if presets.is_empty() { Variant::ALL.to_vec() } else { presets.to_vec() };
    let stft = stft();
    let mut rows = Vec::new();
    for v in presets {
        let cfg = ModelConfig::from_variant(v, mics, stft.config().num_bins())?;
        let model = FtJnf::new(cfg, WeightSet::init(&cfg, 0))?;
        let mut report = cost_report(&cfg, stft.config(), MacConvention::default());
        report.realtime_factor = Some(bench_realtime_factor(&model, &stft, seconds, reps)?);
        log::info!("{v}: RF {:.3}", report.realtime_factor.unwrap_or_default());
        rows.push(json!({
            "preset": v.name(),
            "params": report.params,
            "macs_per_second": report.macs_per_second,
            "realtime_factor": report.realtime_factor,
        }));
    }
    let value = json!({ "audio_seconds": seconds, "repetitions": reps, "results": rows });
    println!("{}", serde_json::to_string_pretty(&value)?);
    if let Some(out) = out {
        write_json(out, &value)?;
        let mut record = RunRecord::new("bench", argv, None);
        record.output(out);
        record.write_beside(out)?;
    }
    Ok(())
}

fn eval(
    weights: Option<&Path>,
    passthrough: bool,
    manifest: &Path,
    irs: &crate::IrArgs,
    snrs: &[f64],
    out_dir: &Path,
    argv: &[String],
) -> Result<()> {
    let rows: Vec<EvalRowSpec> = read_jsonl(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let irs = load_irs(irs)?;
    let stft = stft();
    let model = match (weights, passthrough) {
        (Some(w), false) => Some(load_model(w)?),
        (None, true) => None,
        _ => bail!(UsageError("give exactly one of --weights or --passthrough".into())),
    };
    let model_enhancer = model.as_ref().map(|m| ModelEnhancer { model: m, stft: &stft });
    let enhancer: &(dyn Enhancer + Sync) = match &model_enhancer {
        Some(m) => m,
        None => &PassThrough,
    };
    let per_item: Vec<_> = rows
        .par_iter()
        .map(|row| {
            let item = load_pair(&resolve(manifest, &row.speech[0]), &resolve(manifest, &row.speech[1])).and_then(|(o, i)| {
                Ok(EvalItem {
                    id: row.id.clone(),
                    own_outer: o,
                    own_inear: i,
                    noise: load_noise(&resolve(manifest, &row.noise), row.mode, &irs)?,
                    mode: row.mode,
                    seed: row.seed,
                })
            });
            let item = item.map_err(|e| ovr_core::OvrError::Format(format!("{e:#}")));
            evaluate_item(enhancer, &row.id, &item, snrs, &stft)
        })
        .collect();
    let report = EvalReport::from_rows(per_item.into_iter().flatten().collect());
    fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join("report.json");
    let csv_path = out_dir.join("report.csv");
    report.write_json(&json_path)?;
    report.write_csv(&csv_path)?;
    let mut record = RunRecord::new("eval", argv, None).with_config(&json!({
        "snrs": snrs,
        "passthrough": passthrough,
        "utterances": rows.len(),
    }));
    record.failures = report
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{} @ {} dB: {e}", r.utterance_id, r.snr_db)))
        .collect();
    record.output(&json_path);
    record.output(&csv_path);
    record.write_in(out_dir)?;
    println!("{}", serde_json::to_string_pretty(&json!({
        "mean_lsd_db": report.mean_lsd_db,
        "mean_lsd_by_snr": report.mean_lsd_by_snr,
        "failed_rows": report.failed_rows,
    }))?);
    Ok(())
}
