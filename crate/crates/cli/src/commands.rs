use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chordkit::annotate::{alignment_lag, load_annotation, load_beats, save_annotation, FrameGrid};
use chordkit::decode::{count_transitions, incorrect_regions, viterbi_smooth, DecodeMethod, DecoderConfig};
use chordkit::features::{
    beat_pool, load_features, pitch_shift_cqt, save_features, BeatDivision, BeatIntervals, RenderParams,
};
use chordkit::metrics::{
    class_wise_scores, confusion_matrix, song_tallies, wcsr_with, ConfusionAxis, MetricSpec, TimeTally, TimedPath,
};
use chordkit::model::{argmax_rows, softmax_rows, train_with, Architecture, ChordModel, TrainConfig, TrainingSong};
use chordkit::synthgen::{apply_calibration, generate_dataset, write_dataset, CalibrationTable, ProgressionConfig};
use chordkit::{Annotation, ChordId, Execution, Vocabulary};
use serde_json::json;

use crate::io::{self, csv_row, write_manifest, write_text};
use crate::{AugmentArgs, CheckAlignArgs, EvalArgs, PredictArgs, ReportArgs, SmoothArgs, SynthArgs, TrainArgs};

fn division(text: &Option<String>) -> Result<Option<BeatDivision>> {
    text.as_deref()
        .map(|t| t.parse().map_err(|e: String| anyhow!(e)))
        .transpose()
}

fn intervals_for(
    division: BeatDivision,
    beats: Option<&Path>,
    labels: Option<&Annotation>,
    duration: f64,
) -> Result<BeatIntervals> {
    if division == BeatDivision::Perfect {
        let ann = labels.context("perfect beat intervals need labels")?;
        return Ok(BeatIntervals::perfect(ann)?);
    }
    let path = beats.context("beat-synchronous features need a beat file")?;
    let times = load_beats(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(BeatIntervals::from_beats(&times, division, duration)?)
}

fn training_songs(dir: &Path, vocab: &Vocabulary, division: Option<BeatDivision>) -> Result<Vec<TrainingSong>> {
    io::load_dataset(dir)?
        .into_iter()
        .map(|song| match division {
            None => Ok(TrainingSong::from_annotation(song.features, &song.annotation, vocab)),
            Some(d) => {
                let duration = song.features.n_frames() as f64 * song.features.hop();
                let beats = intervals_for(d, song.beats.as_deref(), Some(&song.annotation), duration)
                    .with_context(|| format!("song {}", song.name))?;
                Ok(TrainingSong::from_beats(
                    &song.features,
                    &song.annotation,
                    &beats,
                    vocab,
                )?)
            }
        })
        .collect()
}

pub fn train(exec: Execution, args: &TrainArgs) -> Result<()> {
    let vocab = io::vocabulary(args.vocab)?;
    let div = division(&args.beat_division)?;
    let train_set = training_songs(&args.data, &vocab, div)?;
    let val_set = match &args.val {
        Some(dir) => training_songs(dir, &vocab, div)?,
        None => Vec::new(),
    };
    let arch = match args.arch.as_str() {
        "hidden" => Architecture::Hidden {
            units: args.hidden_units,
            context: args.context,
        },
        _ => Architecture::Logistic,
    };
    let cfg = TrainConfig {
        arch,
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        patch_seconds: args.patch_seconds,
        shift_probability: args.shift_prob,
        weight_alpha: args.alpha,
        structured_gamma: args.gamma,
        seed: args.seed,
        ..TrainConfig::default()
    };
    log::info!("training on {} songs, validating on {}", train_set.len(), val_set.len());
    let outcome = train_with(exec, &train_set, &val_set, &cfg, &vocab)?;

    fs::create_dir_all(&args.out)?;
    outcome.model.save(args.out.join("model.ckpt"))?;
    write_text(&args.out.join("history.jsonl"), &outcome.history_jsonl())?;
    let weights = json!({
        "best_epoch": outcome.best_epoch,
        "class_weights": vocab.ids().zip(&outcome.class_weights).map(|(id, w)| json!({"label": vocab.name(id), "weight": w})).collect::<Vec<_>>(),
    });
    write_text(
        &args.out.join("training.json"),
        &(serde_json::to_string_pretty(&weights)? + "\n"),
    )?;
    let mut inputs = vec![args.data.as_path()];
    inputs.extend(args.val.as_deref());
    let outputs = ["model.ckpt", "history.jsonl", "training.json"].map(String::from);
    write_manifest(&args.out, "train", Some(args.seed), args, &inputs, &outputs)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = ChordModel::load(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let vocab = Vocabulary::with_size(model.n_classes)?;
    model.check_vocab(&vocab)?;
    let feat = load_features(&args.features).with_context(|| format!("reading {}", args.features.display()))?;
    let duration = feat.n_frames() as f64 * feat.hop();

    let beats = match division(&args.beat_division)? {
        Some(d) => {
            let labels = args.labels.as_deref().map(load_annotation).transpose()?;
            Some(intervals_for(d, args.beat_file.as_deref(), labels.as_ref(), duration)?)
        }
        None => None,
    };
    let (input, intervals) = match &beats {
        Some(b) => {
            let (pooled, b) = beat_pool(&feat, b)?;
            (pooled, b.intervals().to_vec())
        }
        None => {
            let grid = feat.grid();
            let iv = (0..grid.n_frames)
                .map(|i| (i as f64 * grid.hop, ((i + 1) as f64 * grid.hop).min(duration)))
                .collect();
            (feat, iv)
        }
    };
    let out = model.forward(&input)?;
    let probs = match &args.calibration {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table: CalibrationTable = serde_json::from_str(&text).context("parsing calibration table")?;
            softmax_rows(&apply_calibration(&out.logits, &table, &vocab)?)
        }
        None => out.chord.into_inner(),
    };
    let ids = match args.beta {
        Some(beta) => viterbi_smooth(probs.view(), &DecoderConfig::new(beta, vocab.size())?)?,
        None => argmax_rows(&probs),
    };
    let path = TimedPath::new(intervals.iter().zip(&ids).map(|(&(s, e), &id)| (s, e, id)).collect());

    fs::create_dir_all(&args.out)?;
    let name = io::stem(&args.features);
    let lab = format!("{name}.lab");
    let csv = format!("{name}.posteriors.csv");
    save_annotation(&path.to_annotation(&vocab), args.out.join(&lab))?;
    io::write_posteriors(&args.out.join(&csv), &intervals, &probs, &vocab)?;
    let mut inputs = vec![args.model.as_path(), args.features.as_path()];
    inputs.extend(args.beat_file.as_deref());
    inputs.extend(args.labels.as_deref());
    inputs.extend(args.calibration.as_deref());
    write_manifest(&args.out, "predict", None, args, &inputs, &[lab, csv])
}

pub fn smooth(args: &SmoothArgs) -> Result<()> {
    let post = io::read_posteriors(&args.posteriors)?;
    let method = if args.marginal {
        DecodeMethod::MaxMarginal
    } else {
        DecodeMethod::Viterbi
    };
    let cfg = DecoderConfig::new(args.beta, post.vocab.size())?.with_method(method);
    let ids = viterbi_smooth(post.probs.view(), &cfg)?;
    let path = TimedPath::new(
        post.intervals
            .iter()
            .zip(&ids)
            .map(|(&(s, e), &id)| (s, e, id))
            .collect(),
    );
    fs::create_dir_all(&args.out)?;
    let name = io::stem(&args.posteriors);
    let lab = format!("{}.lab", name.trim_end_matches(".posteriors"));
    save_annotation(&path.to_annotation(&post.vocab), args.out.join(&lab))?;
    write_manifest(&args.out, "smooth", None, args, &[args.posteriors.as_path()], &[lab])
}

fn timed_pairs(reference: &Path, estimate: &Path, vocab: &Vocabulary) -> Result<Vec<(String, TimedPath, TimedPath)>> {
    Ok(io::annotation_pairs(reference, estimate)?
        .into_iter()
        .map(|(name, r, e)| {
            (
                name,
                TimedPath::from_annotation(&r, vocab),
                TimedPath::from_annotation(&e, vocab),
            )
        })
        .collect())
}

pub fn eval(exec: Execution, args: &EvalArgs) -> Result<()> {
    let vocab = io::vocabulary(args.vocab)?;
    let spec: MetricSpec = args.metric.parse()?;
    let songs: Vec<(TimedPath, TimedPath)> = timed_pairs(&args.reference, &args.est, &vocab)?
        .into_iter()
        .map(|(_, r, e)| (r, e))
        .collect();
    let score = wcsr_with(exec, spec, &songs, &vocab)?;
    println!("{score:?}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        let record = json!({"metric": spec.name(), "songs": songs.len(), "wcsr": score});
        write_text(&out.join("eval.json"), &(serde_json::to_string_pretty(&record)? + "\n"))?;
        let inputs = [args.reference.as_path(), args.est.as_path()];
        write_manifest(out, "eval", None, args, &inputs, &["eval.json".to_string()])?;
    }
    Ok(())
}

fn fmt_score(t: Option<f64>) -> String {
    t.map_or_else(String::new, |v| format!("{v}"))
}

pub fn report(exec: Execution, args: &ReportArgs) -> Result<()> {
    let vocab = io::vocabulary(args.vocab)?;
    if args.hop.is_nan() || args.hop <= 0.0 {
        bail!("hop must be positive");
    }
    let named = timed_pairs(&args.reference, &args.est, &vocab)?;
    let songs: Vec<(TimedPath, TimedPath)> = named.iter().map(|(_, r, e)| (r.clone(), e.clone())).collect();
    fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        write_text(&args.out.join(name), &text)?;
        outputs.push(name.to_string());
        Ok(())
    };

    let mut summary = serde_json::Map::new();
    let mut per_song =
        csv_row(std::iter::once("song".to_string()).chain(MetricSpec::ALL.iter().map(|m| m.name().to_string())));
    for (name, r, e) in &named {
        let cells = MetricSpec::ALL.iter().map(|&m| {
            let mut total = TimeTally::default();
            for t in song_tallies(m, r, e, &vocab) {
                total.defined += t.defined;
                total.correct += t.correct;
            }
            fmt_score(total.score())
        });
        per_song.push_str(&csv_row(std::iter::once(name.clone()).chain(cells)));
    }
    for m in MetricSpec::ALL {
        summary.insert(m.name().to_string(), json!(wcsr_with(exec, m, &songs, &vocab).ok()));
    }
    emit("per_song.csv", per_song)?;

    let classes = class_wise_scores(MetricSpec::Acc, &songs, &vocab)?;
    let mut table = csv_row(["label", "defined_time", "correct_time", "score"].map(String::from));
    for c in &classes.classes {
        table.push_str(&csv_row([
            c.label.clone(),
            c.defined_time.to_string(),
            c.correct_time.to_string(),
            c.score.to_string(),
        ]));
    }
    summary.insert("class_wise_mean".into(), json!(classes.mean));
    summary.insert("class_wise_median".into(), json!(classes.median));
    emit("class_scores.csv", table)?;

    let frames: Vec<(Vec<ChordId>, Vec<ChordId>)> = songs
        .iter()
        .map(|(r, e)| {
            let grid = FrameGrid::covering(r.duration(), args.hop);
            (io::sample_path(r, &grid, &vocab), io::sample_path(e, &grid, &vocab))
        })
        .collect();
    for (axis, file) in [
        (ConfusionAxis::Quality, "confusion_quality.csv"),
        (ConfusionAxis::Root, "confusion_root.csv"),
    ] {
        let cm = confusion_matrix(axis, &frames, &vocab, true)?;
        let mut text = csv_row(std::iter::once("reference".to_string()).chain(cm.labels.iter().cloned()));
        for (label, row) in cm.labels.iter().zip(&cm.values) {
            text.push_str(&csv_row(
                std::iter::once(label.clone()).chain(row.iter().map(|v| v.to_string())),
            ));
        }
        emit(file, text)?;
    }

    let mut transitions = csv_row(["song", "reference", "estimate"].map(String::from));
    let mut histogram: std::collections::BTreeMap<usize, usize> = Default::default();
    for ((name, _, _), (r, e)) in named.iter().zip(&frames) {
        transitions.push_str(&csv_row([
            name.clone(),
            count_transitions(r)?.to_string(),
            count_transitions(e)?.to_string(),
        ]));
        for region in incorrect_regions(e, r)? {
            *histogram.entry(region.length).or_default() += 1;
        }
    }
    emit("transitions.csv", transitions)?;
    let mut hist = csv_row(["length_frames", "count"].map(String::from));
    for (len, count) in &histogram {
        hist.push_str(&csv_row([len.to_string(), count.to_string()]));
    }
    emit("incorrect_regions.csv", hist)?;
    emit("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;

    let inputs = [args.reference.as_path(), args.est.as_path()];
    write_manifest(&args.out, "report", None, args, &inputs, &outputs)
}

pub fn synth(exec: Execution, args: &SynthArgs) -> Result<()> {
    if args.hop.is_nan() || args.hop <= 0.0 {
        bail!("hop must be positive");
    }
    let cfg = ProgressionConfig {
        seed: args.seed,
        duration: args.duration,
        ..ProgressionConfig::default()
    };
    let songs = generate_dataset(exec, &cfg, args.n)?;
    let render = RenderParams {
        noise_sigma: args.noise,
        ..RenderParams::default()
    };
    let manifest = write_dataset(exec, &args.out, &songs, &cfg, &render, args.hop)?;
    let mut outputs = vec!["manifest.json".to_string()];
    for s in &manifest.songs {
        outputs.push(format!("{}.lab", s.name));
        outputs.push(format!("{}.cqtf", s.name));
    }
    write_manifest(&args.out, "synth", Some(args.seed), args, &[], &outputs)
}

pub fn augment(args: &AugmentArgs) -> Result<()> {
    let feat = load_features(&args.features).with_context(|| format!("reading {}", args.features.display()))?;
    let ann = load_annotation(&args.labels).with_context(|| format!("reading {}", args.labels.display()))?;
    fs::create_dir_all(&args.out)?;
    let name = io::stem(&args.features);
    let mut outputs = Vec::new();
    for &k in &args.shift {
        let shifted = pitch_shift_cqt(&feat, k)?;
        let base = format!("{name}_shift{k:+}");
        save_features(&shifted, args.out.join(format!("{base}.cqtf")))?;
        save_annotation(&ann.transpose(k), args.out.join(format!("{base}.lab")))?;
        outputs.push(format!("{base}.cqtf"));
        outputs.push(format!("{base}.lab"));
    }
    write_manifest(
        &args.out,
        "augment",
        None,
        args,
        &[args.features.as_path(), args.labels.as_path()],
        &outputs,
    )
}

pub fn check_align(args: &CheckAlignArgs) -> Result<()> {
    if args.window == 0 {
        bail!("window must be positive");
    }
    let feat = load_features(&args.features).with_context(|| format!("reading {}", args.features.display()))?;
    let ann = load_annotation(&args.labels).with_context(|| format!("reading {}", args.labels.display()))?;
    let lag = alignment_lag(&feat, &ann, args.window)?;
    let feature_duration = feat.n_frames() as f64 * feat.hop();
    let record = json!({
        "lag_frames": lag,
        "lag_seconds": lag as f64 * feat.hop(),
        "feature_duration": feature_duration,
        "label_duration": ann.duration(),
        "duration_ok": (feature_duration - ann.duration()).abs() <= args.tolerance,
        "aligned": lag == 0,
    });
    println!("{record}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        write_text(
            &out.join("alignment.json"),
            &(serde_json::to_string_pretty(&record)? + "\n"),
        )?;
        write_manifest(
            out,
            "check-align",
            None,
            args,
            &[args.features.as_path(), args.labels.as_path()],
            &["alignment.json".to_string()],
        )?;
    }
    Ok(())
}
