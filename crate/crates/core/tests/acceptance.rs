//! Acceptance suite. Every test prints one `PASS`/`FAIL` line.

use std::time::{Duration, Instant};

use chordkit::annotate::{FrameGrid, DEFAULT_HOP};
use chordkit::decode::{argmax, count_transitions, path_score, viterbi_smooth, DecoderConfig};
use chordkit::features::{
    beat_pool, max_overlap_labels, render_synthetic_cqt, BeatDivision, BeatIntervals, RenderParams,
};
use chordkit::harte::{format_chord, parse_chord, transpose_label, ChordLabel, Quality};
use chordkit::metrics::{class_wise_scores, compare_labels, frame_accuracy, wcsr, MetricSpec, Outcome, TimedPath};
use chordkit::model::{
    class_counts, class_weights, total_loss, train_with, Architecture, ChordModel, Standardizer, TrainConfig,
    TrainingSong,
};
use chordkit::synthgen::{
    apply_calibration, calibration_ratios, generate_dataset, CalibrationTable, ProgressionConfig, SyntheticSong,
};
use chordkit::{Annotation, ChordId, Execution, FeatureMatrix, Vocabulary};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, title: &str, ok: bool, detail: String) {
    println!(
        "criterion {criterion:>2} {:<4} {title}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

// 1 ---------------------------------------------------------------------------

#[test]
fn criterion_01_notation_and_vocabulary() {
    let start = Instant::now();
    let full = Vocabulary::full();
    let small = Vocabulary::majmin();
    let mut failures = Vec::new();

    for id in full.ids() {
        let label = full.label(id).unwrap();
        let text = format_chord(&label);
        let back = parse_chord(&text).unwrap();
        if back != label || full.map_label(&back) != id {
            failures.push(format!("round trip {text}"));
        }
    }

    let mut probes: Vec<ChordLabel> = full.ids().map(|id| full.label(id).unwrap()).collect();
    for text in [
        "C:maj6(9)",
        "A:hdim7/5",
        "D:min7/b7",
        "E:9",
        "F:maj(*3)",
        "G:13",
        "Bb:sus4(b7)",
        "C#:min11",
        "Ab:5",
        "B:1",
        "Eb:aug/3",
        "F#:dim7",
    ] {
        probes.push(parse_chord(text).unwrap());
    }
    let mut checked = 0;
    for label in &probes {
        for k in 0..12 {
            for vocab in [&full, &small] {
                let lhs = vocab.map_label(&transpose_label(label, k));
                let rhs = vocab.transpose_id(vocab.map_label(label), k).unwrap();
                checked += 1;
                if lhs != rhs {
                    failures.push(format!("equivariance {} +{k}", format_chord(label)));
                }
            }
        }
    }

    let example = |vocab: &Vocabulary, text: &str| vocab.name(vocab.map_label(&parse_chord(text).unwrap()));
    let examples = [
        (example(&small, "C:maj7"), "C:maj"),
        (example(&small, "A:hdim7/5"), "X"),
        (example(&full, "C:maj6(9)"), "C:maj"),
    ];
    for (got, want) in &examples {
        if got != want {
            failures.push(format!("example {got} != {want}"));
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && within(elapsed, 1.0);
    report(
        1,
        "notation/vocabulary oracle",
        ok,
        format!("{} equivariance checks, {:?}, failures {failures:?}", checked, elapsed),
    );
    assert!(ok);
}

// 2 ---------------------------------------------------------------------------

/// Root-relative intervals of the 14 vocabulary qualities, written out
/// independently of the library tables.
fn interval_table(name: &str) -> &'static [u8] {
    match name {
        "maj" => &[0, 4, 7],
        "min" => &[0, 3, 7],
        "dim" => &[0, 3, 6],
        "aug" => &[0, 4, 8],
        "min6" => &[0, 3, 7, 9],
        "maj6" => &[0, 4, 7, 9],
        "min7" => &[0, 3, 7, 10],
        "minmaj7" => &[0, 3, 7, 11],
        "maj7" => &[0, 4, 7, 11],
        "7" => &[0, 4, 7, 10],
        "dim7" => &[0, 3, 6, 9],
        "hdim7" => &[0, 3, 6, 10],
        "sus2" => &[0, 2, 7],
        "sus4" => &[0, 5, 7],
        other => panic!("unexpected quality {other}"),
    }
}

/// Pitch classes of a vocabulary entry via its printed name.
fn oracle_pitches(name: &str) -> Option<[bool; 12]> {
    let (root, quality) = name.split_once(':')?;
    let base = match root.as_bytes()[0] {
        b'C' => 0,
        b'D' => 2,
        b'E' => 4,
        b'F' => 5,
        b'G' => 7,
        b'A' => 9,
        b'B' => 11,
        _ => unreachable!(),
    } as i32;
    let shift = root[1..].chars().map(|c| if c == '#' { 1 } else { -1 }).sum::<i32>();
    let mut set = [false; 12];
    for &i in interval_table(quality) {
        set[(base + shift + i as i32).rem_euclid(12) as usize] = true;
    }
    Some(set)
}

#[test]
fn criterion_02_mirex_comparator() {
    let start = Instant::now();
    let vocab = Vocabulary::full();
    let names: Vec<String> = vocab.ids().map(|id| vocab.name(id)).collect();
    let mut mismatches = 0;
    for r in vocab.ids() {
        for e in vocab.ids() {
            let expected = match (names[r.index()].as_str(), names[e.index()].as_str()) {
                ("X", _) => Outcome::Undefined,
                ("N", est) => {
                    if est == "N" {
                        Outcome::Correct
                    } else {
                        Outcome::Incorrect
                    }
                }
                (_, "N" | "X") => Outcome::Incorrect,
                (rn, en) => {
                    let (a, b) = (oracle_pitches(rn).unwrap(), oracle_pitches(en).unwrap());
                    let shared = (0..12).filter(|&k| a[k] && b[k]).count();
                    if shared >= 3 {
                        Outcome::Correct
                    } else {
                        Outcome::Incorrect
                    }
                }
            };
            if compare_labels(MetricSpec::Mirex, r, e, &vocab) != expected {
                mismatches += 1;
            }
        }
    }
    let g6 = chordkit::harte::pitch_class_set(&parse_chord("G:maj6").unwrap()).unwrap();
    let e7 = chordkit::harte::pitch_class_set(&parse_chord("E:min7").unwrap()).unwrap();
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && g6 == e7 && within(elapsed, 5.0);
    report(
        2,
        "mirex comparator oracle",
        ok,
        format!(
            "170x170 pairs, {mismatches} mismatches, G:maj6 == E:min7: {}, {elapsed:?}",
            g6 == e7
        ),
    );
    assert!(ok);
}

// 3 ---------------------------------------------------------------------------

fn random_posteriorgram(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((t, c), |_| rng.random_range(0.01..1.0f64));
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

#[test]
fn criterion_03_viterbi_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    for _ in 0..200 {
        let c = rng.random_range(2..=5);
        let t = rng.random_range(1..=8);
        let post = random_posteriorgram(&mut rng, t, c);
        let cfg = DecoderConfig::new(rng.random_range(0.05..0.95), c).unwrap();
        let path: Vec<usize> = viterbi_smooth(post.view(), &cfg)
            .unwrap()
            .iter()
            .map(|id| id.index())
            .collect();
        let got = path_score(post.view(), &path, &cfg);
        let mut best = f64::NEG_INFINITY;
        let mut candidate = vec![0usize; t];
        for code in 0..c.pow(t as u32) {
            let mut x = code;
            for slot in candidate.iter_mut() {
                *slot = x % c;
                x /= c;
            }
            best = best.max(path_score(post.view(), &candidate, &cfg));
        }
        if got != best {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = failures == 0 && within(elapsed, 10.0);
    report(
        3,
        "viterbi exactness",
        ok,
        format!("200 instances, {failures} non-optimal, {elapsed:?}"),
    );
    assert!(ok);
}

// 4 ---------------------------------------------------------------------------

fn synthetic_songs(seed: u64, n: usize) -> Vec<SyntheticSong> {
    let cfg = ProgressionConfig {
        seed,
        ..Default::default()
    };
    generate_dataset(Execution::default(), &cfg, n).unwrap()
}

#[test]
fn criterion_04_smoothing_trend() {
    let vocab = Vocabulary::full();
    let c = vocab.size();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let songs = synthetic_songs(40, 20);
    let mut posts = Vec::new();
    let mut truths = Vec::new();
    for song in &songs {
        let grid = FrameGrid::covering(song.annotation.duration(), DEFAULT_HOP);
        let truth = chordkit::annotate::frame_labels(&song.annotation, &grid, &vocab);
        let mut logits = Array2::from_shape_fn((truth.len(), c), |_| rng.random_range(0.0..3.0f64));
        for (f, id) in truth.iter().enumerate() {
            logits[[f, id.index()]] += 2.0;
        }
        posts.push(chordkit::model::softmax_rows(&logits));
        truths.push(truth);
    }
    let betas: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
    let mean_transitions: Vec<f64> = betas
        .iter()
        .map(|&beta| {
            let cfg = DecoderConfig::new(beta, c).unwrap();
            let total: usize = posts
                .iter()
                .map(|p| count_transitions(&viterbi_smooth(p.view(), &cfg).unwrap()).unwrap())
                .sum();
            total as f64 / posts.len() as f64
        })
        .collect();
    let monotone = mean_transitions.windows(2).all(|w| w[1] <= w[0]);

    let neutral = DecoderConfig::new(1.0 / c as f64, c).unwrap();
    let mut acc_argmax = 0.0;
    let mut acc_smoothed = 0.0;
    for (p, truth) in posts.iter().zip(&truths) {
        let raw: Vec<ChordId> = p
            .rows()
            .into_iter()
            .map(|r| ChordId(argmax(r.iter().copied()) as u16))
            .collect();
        acc_argmax += frame_accuracy(truth, &raw);
        acc_smoothed += frame_accuracy(truth, &viterbi_smooth(p.view(), &neutral).unwrap());
    }
    let ok = monotone && acc_argmax == acc_smoothed;
    report(
        4,
        "smoothing trend",
        ok,
        format!(
            "transitions/song {:.1} -> {:.1} (non-increasing: {monotone}); beta=1/C accuracy {:.4} vs argmax {:.4}",
            mean_transitions[0],
            mean_transitions[18],
            acc_smoothed / 20.0,
            acc_argmax / 20.0
        ),
    );
    assert!(ok);
}

// 5 ---------------------------------------------------------------------------

fn gradient_error(arch: Architecture, gamma: f64, alpha: f64, seed: u64, coords: usize) -> f64 {
    let vocab = Vocabulary::full();
    let n_bins = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ChordModel::new(arch, n_bins, &vocab, gamma < 1.0, Standardizer::identity(n_bins), seed);
    let data = Array2::from_shape_fn((8, n_bins), |_| rng.random_range(-2.0f32..2.0));
    let feat = FeatureMatrix::new(data, 12, 0.1, -80.0).unwrap();
    let targets: Vec<ChordId> = (0..8)
        .map(|_| ChordId(rng.random_range(0..vocab.size() as u16)))
        .collect();
    let counts: Vec<f64> = (0..vocab.size()).map(|_| rng.random_range(0.0..100.0)).collect();
    let weights = class_weights(&counts, alpha).unwrap();

    let x = model.prepare_input(&feat).unwrap();
    let (parts, grad) = model
        .loss_and_gradient(x, &targets, None, &weights, gamma, &vocab)
        .unwrap();
    let analytic: Vec<f64> = grad.slices().concat().iter().map(|g| g / parts.frames as f64).collect();
    let n = analytic.len();
    let loss =
        |m: &ChordModel| total_loss(&m.forward(&feat).unwrap(), &targets, None, &weights, gamma, &vocab).unwrap();
    let nudge = |m: &mut ChordModel, k: usize, delta: f64| {
        let mut idx = k;
        for s in m.layers.slices_mut() {
            if idx < s.len() {
                s[idx] += delta;
                return;
            }
            idx -= s.len();
        }
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let k = rng.random_range(0..n);
        nudge(&mut model, k, h);
        let up = loss(&model);
        nudge(&mut model, k, -2.0 * h);
        let down = loss(&model);
        nudge(&mut model, k, h);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[k];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

#[test]
fn criterion_05_gradient_check() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (ai, arch) in [Architecture::Logistic, Architecture::Hidden { units: 8, context: 1 }]
        .into_iter()
        .enumerate()
    {
        for gamma in [0.0, 0.7, 1.0] {
            for alpha in [0.0, 0.3] {
                let err = gradient_error(arch, gamma, alpha, 50 + ai as u64, 100);
                ok &= err < 1e-4;
                lines.push(format!(
                    "{}/g{gamma}/a{alpha}: {err:.1e}",
                    if ai == 0 { "logistic" } else { "hidden" }
                ));
            }
        }
    }
    report(
        5,
        "gradient check",
        ok,
        format!("100 coordinates each, max relative error {}", lines.join(", ")),
    );
    assert!(ok);
}

// 6 ---------------------------------------------------------------------------

#[test]
fn criterion_06_weight_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = rng.random_range(2..200);
        let counts: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0..5000) as f64
                }
            })
            .collect();
        if counts.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let alpha = rng.random_range(0.0..1.0);
        let w = class_weights(&counts, alpha).unwrap();
        let mean = counts.iter().zip(&w).map(|(c, w)| c * w).sum::<f64>() / counts.iter().sum::<f64>();
        worst = worst.max((mean - 1.0).abs());
    }
    // exact values: w_a = 22/31, w_b = 121/31
    let w = class_weights(&[100.0, 10.0], 1.0).unwrap();
    let exact = (w[0] - 22.0 / 31.0).abs() < 1e-12 && (w[1] - 121.0 / 31.0).abs() < 1e-12;
    let quoted = (w[0] - 0.7097).abs() < 1e-4 && (w[1] - 3.9033).abs() < 1e-4;
    let ok = worst < 1e-9 && exact && quoted;
    report(
        6,
        "weight normalization",
        ok,
        format!(
            "max |mean-1| = {worst:.1e}; worked example w* = [{:.5}, {:.5}]",
            w[0], w[1]
        ),
    );
    assert!(ok);
}

// 7 ---------------------------------------------------------------------------

fn random_path(rng: &mut ChaCha8Rng, vocab: &Vocabulary, duration: f64, classes: &[ChordId]) -> TimedPath {
    let mut t = 0.0;
    let mut intervals = Vec::new();
    while t < duration {
        let end = (t + rng.random_range(0.3..4.0)).min(duration);
        let id = if rng.random_bool(0.05) {
            vocab.no_chord()
        } else {
            classes[rng.random_range(0..classes.len())]
        };
        intervals.push((t, end, id));
        t = end;
    }
    TimedPath::new(intervals)
}

#[test]
fn criterion_07_continuous_wcsr() {
    let vocab = Vocabulary::full();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let classes: Vec<ChordId> = (0..12).map(|k| ChordId(k * 7 % 60)).chain([vocab.unknown()]).collect();
    let songs: Vec<(TimedPath, TimedPath)> = (0..40)
        .map(|_| {
            let d = rng.random_range(60.0..200.0);
            (
                random_path(&mut rng, &vocab, d, &classes),
                random_path(&mut rng, &vocab, d, &classes),
            )
        })
        .collect();
    let hop = 1024.0 / 44100.0;
    let mut worst_gap = 0.0f64;
    let mut decomposition_gap = 0.0f64;
    for spec in [MetricSpec::Acc, MetricSpec::Root, MetricSpec::Mirex] {
        let exact = wcsr(spec, &songs, &vocab).unwrap();
        let (mut defined, mut correct) = (0usize, 0usize);
        for (r, e) in &songs {
            let grid = FrameGrid::covering(r.duration(), hop);
            let sample = |p: &TimedPath, t: f64| {
                p.intervals()
                    .iter()
                    .find(|iv| iv.0 <= t && t < iv.1)
                    .map_or(vocab.no_chord(), |iv| iv.2)
            };
            for i in 0..grid.n_frames {
                let t = grid.center(i);
                if t >= r.duration() {
                    continue;
                }
                match compare_labels(spec, sample(r, t), sample(e, t), &vocab) {
                    Outcome::Correct => {
                        defined += 1;
                        correct += 1;
                    }
                    Outcome::Incorrect => defined += 1,
                    Outcome::Undefined => {}
                }
            }
        }
        let sampled = 100.0 * correct as f64 / defined as f64;
        worst_gap = worst_gap.max((sampled - exact).abs());
        if spec == MetricSpec::Acc {
            let cw = class_wise_scores(spec, &songs, &vocab).unwrap();
            let total: f64 = cw.classes.iter().map(|c| c.defined_time).sum();
            let recombined: f64 = cw.classes.iter().map(|c| c.defined_time / total * c.score).sum();
            decomposition_gap = (recombined - exact).abs();
        }
    }
    let ok = worst_gap <= 0.2 && decomposition_gap <= 1e-9;
    report(
        7,
        "continuous WCSR",
        ok,
        format!("max frame-sampled gap {worst_gap:.4} pp; class decomposition gap {decomposition_gap:.1e}"),
    );
    assert!(ok);
}

// 8 ---------------------------------------------------------------------------

fn training_set(songs: &[SyntheticSong], vocab: &Vocabulary, render: &RenderParams) -> Vec<TrainingSong> {
    songs
        .iter()
        .map(|s| {
            let grid = FrameGrid::covering(s.annotation.duration(), DEFAULT_HOP);
            let params = RenderParams {
                seed: s.seed,
                ..render.clone()
            };
            TrainingSong::from_annotation(
                render_synthetic_cqt(&s.annotation, &grid, &params),
                &s.annotation,
                vocab,
            )
        })
        .collect()
}

/// Frame accuracy and root WCSR of a model on annotated songs.
fn held_out_scores(model: &ChordModel, songs: &[TrainingSong], anns: &[&Annotation], vocab: &Vocabulary) -> (f64, f64) {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut pairs = Vec::new();
    for (song, ann) in songs.iter().zip(anns) {
        let pred = model.forward(&song.features).unwrap().chord.argmax_ids();
        correct += pred.iter().zip(&song.targets).filter(|(a, b)| a == b).count();
        total += pred.len();
        let est = TimedPath::from_frames(&pred, &song.features.grid(), ann.duration());
        pairs.push((TimedPath::from_annotation(ann, vocab), est));
    }
    (
        correct as f64 / total as f64,
        wcsr(MetricSpec::Root, &pairs, vocab).unwrap(),
    )
}

#[test]
fn criterion_08_end_to_end_synthetic() {
    let start = Instant::now();
    let vocab = Vocabulary::full();
    let songs = synthetic_songs(8, 300);
    let data = training_set(&songs, &vocab, &RenderParams::default());
    let (train, rest) = data.split_at(180);
    let (val, test) = rest.split_at(60);
    let cfg = TrainConfig {
        weight_alpha: 0.3,
        structured_gamma: 0.7,
        shift_probability: 0.0,
        seed: 8,
        ..Default::default()
    };
    let outcome = train_with(Execution::Sequential, train, val, &cfg, &vocab).unwrap();
    let anns: Vec<&Annotation> = songs[240..].iter().map(|s| &s.annotation).collect();
    let (acc, root) = held_out_scores(&outcome.model, test, &anns, &vocab);
    let elapsed = start.elapsed();
    let ok = acc >= 0.90 && root >= 95.0 && within(elapsed, 600.0);
    report(
        8,
        "end-to-end synthetic experiment",
        ok,
        format!(
            "held-out frame accuracy {:.2}%, root WCSR {root:.2}, best epoch {}, {elapsed:.1?} on one thread",
            100.0 * acc,
            outcome.best_epoch
        ),
    );
    assert!(ok);
}

// 9 ---------------------------------------------------------------------------

fn transpose_song(s: &SyntheticSong, k: i32) -> SyntheticSong {
    let mut out = s.clone();
    out.annotation = s.annotation.transpose(k);
    out.seed = s.seed.wrapping_add((k + 12) as u64 * 1000);
    out
}

#[test]
fn criterion_09_augmentation_trend() {
    let vocab = Vocabulary::full();
    let render = RenderParams {
        noise_sigma: 6.0,
        ..Default::default()
    };
    // training material in C only
    let train_songs: Vec<SyntheticSong> = synthetic_songs(90, 60)
        .iter()
        .map(|s| transpose_song(s, -i32::from(s.progression.tonic)))
        .collect();
    // every validation progression in all twelve keys
    let val_songs: Vec<SyntheticSong> = synthetic_songs(91, 6)
        .iter()
        .flat_map(|s| (0..12).map(move |k| transpose_song(s, k - i32::from(s.progression.tonic))))
        .collect();
    let train = training_set(&train_songs, &vocab, &render);
    let val = training_set(&val_songs, &vocab, &render);
    let anns: Vec<&Annotation> = val_songs.iter().map(|s| &s.annotation).collect();

    let base = TrainConfig {
        epochs: 60,
        seed: 9,
        ..Default::default()
    };
    let mut scores = Vec::new();
    for p in [0.0, 0.9] {
        let cfg = TrainConfig {
            shift_probability: p,
            ..base.clone()
        };
        let outcome = train_with(Execution::default(), &train, &[], &cfg, &vocab).unwrap();
        scores.push(held_out_scores(&outcome.model, &val, &anns, &vocab).1);
    }
    let ok = scores[1] > scores[0];
    report(
        9,
        "augmentation trend",
        ok,
        format!("root WCSR p=0: {:.2}, p=0.9: {:.2}", scores[0], scores[1]),
    );
    assert!(ok);
}

// 10 --------------------------------------------------------------------------

#[test]
fn criterion_10_beat_synchronisation() {
    let vocab = Vocabulary::full();
    let songs = synthetic_songs(10, 40);
    let mut matched = 0usize;
    let mut total = 0usize;
    for s in &songs {
        let beats = BeatIntervals::perfect(&s.annotation).unwrap();
        let labels = max_overlap_labels(&s.annotation, &beats, &vocab);
        for (seg, id) in s.annotation.segments().iter().zip(&labels) {
            total += 1;
            matched += usize::from(vocab.map_label(&seg.label) == *id);
        }
    }
    let perfect_ok = matched == total && total > 0;

    let render = RenderParams::default();
    let mut lines = Vec::new();
    let mut pipeline_ok = true;
    for division in BeatDivision::ALL {
        let pooled: Vec<(TrainingSong, BeatIntervals)> = songs
            .iter()
            .map(|s| {
                let grid = FrameGrid::covering(s.annotation.duration(), DEFAULT_HOP);
                let feat = render_synthetic_cqt(
                    &s.annotation,
                    &grid,
                    &RenderParams {
                        seed: s.seed,
                        ..render.clone()
                    },
                );
                let beats = if division == BeatDivision::Perfect {
                    BeatIntervals::perfect(&s.annotation).unwrap()
                } else {
                    let period = 60.0 / s.bpm;
                    let times: Vec<f64> = (0..)
                        .map(|k| k as f64 * period)
                        .take_while(|&t| t < s.annotation.duration())
                        .collect();
                    BeatIntervals::from_beats(&times, division, s.annotation.duration()).unwrap()
                };
                let (_, intervals) = beat_pool(&feat, &beats).unwrap();
                (
                    TrainingSong::from_beats(&feat, &s.annotation, &beats, &vocab).unwrap(),
                    intervals,
                )
            })
            .collect();
        let (train, test) = pooled.split_at(30);
        let train: Vec<TrainingSong> = train.iter().map(|(t, _)| t.clone()).collect();
        let cfg = TrainConfig {
            epochs: 40,
            seed: 10,
            ..Default::default()
        };
        let outcome = train_with(Execution::default(), &train, &[], &cfg, &vocab).unwrap();
        let pairs: Vec<(TimedPath, TimedPath)> = test
            .iter()
            .zip(&songs[30..])
            .map(|((song, intervals), s)| {
                let pred = outcome.model.forward(&song.features).unwrap().chord.argmax_ids();
                (
                    TimedPath::from_annotation(&s.annotation, &vocab),
                    TimedPath::from_intervals(&pred, intervals),
                )
            })
            .collect();
        let score = wcsr(MetricSpec::Mirex, &pairs, &vocab).unwrap();
        pipeline_ok &= score.is_finite();
        lines.push(format!("{division}: mirex {score:.1}"));
    }
    let ok = perfect_ok && pipeline_ok;
    report(
        10,
        "beat synchronisation",
        ok,
        format!(
            "perfect-interval assignment {matched}/{total}; pipeline {}",
            lines.join(", ")
        ),
    );
    assert!(ok);
}

// 11 --------------------------------------------------------------------------

fn skewed_config(seed: u64, plain_share: f64) -> ProgressionConfig {
    let mut cfg = ProgressionConfig {
        seed,
        ..Default::default()
    };
    for table in cfg.major_qualities.iter_mut() {
        *table = vec![(Quality::Maj, plain_share), (Quality::Maj7, 1.0 - plain_share)];
    }
    for table in cfg.minor_qualities.iter_mut() {
        *table = vec![(Quality::Min, plain_share), (Quality::Min7, 1.0 - plain_share)];
    }
    cfg
}

#[test]
fn criterion_11_calibration() {
    let vocab = Vocabulary::full();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let logits = Array2::from_shape_fn((500, vocab.size()), |_| rng.random_range(-10.0..10.0f64));
    let argmax_rows = |m: &Array2<f64>, cols: usize| -> Vec<usize> {
        m.rows()
            .into_iter()
            .map(|r| argmax(r.iter().take(cols).copied()))
            .collect()
    };
    let unit = apply_calibration(&logits, &CalibrationTable::uniform(&vocab, 1.0), &vocab).unwrap();
    let scaled = apply_calibration(&logits, &CalibrationTable::uniform(&vocab, 4.2), &vocab).unwrap();
    let uniform_ok = argmax_rows(&unit, vocab.size()) == argmax_rows(&logits, vocab.size())
        && argmax_rows(&scaled, 168) == argmax_rows(&logits, 168);

    // train mostly on plain triads, evaluate where sevenths dominate
    let render = RenderParams {
        noise_sigma: 9.0,
        ..Default::default()
    };
    let source = generate_dataset(Execution::default(), &skewed_config(110, 0.85), 60).unwrap();
    let target = generate_dataset(Execution::default(), &skewed_config(111, 0.15), 30).unwrap();
    let train = training_set(&source, &vocab, &render);
    let test = training_set(&target, &vocab, &render);
    let cfg = TrainConfig {
        epochs: 60,
        seed: 11,
        ..Default::default()
    };
    let model = train_with(Execution::default(), &train, &[], &cfg, &vocab)
        .unwrap()
        .model;

    let normalize = |c: Vec<f64>| {
        let s: f64 = c.iter().sum();
        c.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let p_train = normalize(class_counts(train.iter().flat_map(|s| &s.targets), vocab.size()));
    let p_target = normalize(class_counts(test.iter().flat_map(|s| &s.targets), vocab.size()));
    let table = calibration_ratios(&p_train, &p_target, &vocab).unwrap();

    let (mut before, mut after, mut total) = (0usize, 0usize, 0usize);
    for song in &test {
        let out = model.forward(&song.features).unwrap();
        let plain = chordkit::model::argmax_rows(&out.logits);
        let fixed = chordkit::model::argmax_rows(&apply_calibration(&out.logits, &table, &vocab).unwrap());
        before += plain.iter().zip(&song.targets).filter(|(a, b)| a == b).count();
        after += fixed.iter().zip(&song.targets).filter(|(a, b)| a == b).count();
        total += song.targets.len();
    }
    let (before, after) = (before as f64 / total as f64, after as f64 / total as f64);
    let ok = uniform_ok && after > before;
    report(
        11,
        "calibration",
        ok,
        format!(
            "uniform ratios keep argmax: {uniform_ok}; target accuracy {:.2}% -> {:.2}% (r_maj7 {:.2}, r_maj {:.2})",
            100.0 * before,
            100.0 * after,
            table.get(Quality::Maj7).unwrap(),
            table.get(Quality::Maj).unwrap()
        ),
    );
    assert!(ok);
}

// 12 --------------------------------------------------------------------------

#[test]
fn criterion_12_frame_count() {
    let n = FrameGrid::from_samples(180.0, 44100, 4096).n_frames;
    let ok = n == 1938;
    report(12, "frame count", ok, format!("F(180 s, hop 4096, sr 44100) = {n}"));
    assert!(ok);
}
