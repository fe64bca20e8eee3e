//! Functional-harmony progression generator and quality-level calibration.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Annotation, FrameGrid, Segment};
use crate::features::{render_synthetic_cqt, FeatureError, RenderParams};
use crate::harte::{format_chord, ChordLabel, Quality};
use crate::par::{self, Execution};
use crate::pitch::PitchClass;
use crate::vocab::{IdInfo, Vocabulary};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("calibration table has no ratio for quality {0}")]
    MissingQuality(String),
    #[error("distribution has {found} entries, vocabulary has {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("empty chord list")]
    EmptyProgression,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaleDegree {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
}

impl ScaleDegree {
    pub const ALL: [ScaleDegree; 7] = [
        ScaleDegree::I,
        ScaleDegree::II,
        ScaleDegree::III,
        ScaleDegree::IV,
        ScaleDegree::V,
        ScaleDegree::VI,
        ScaleDegree::VII,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Weighted successors in the progression graph.
    pub fn successors(self) -> &'static [(ScaleDegree, f64)] {
        use ScaleDegree::*;
        match self {
            I => &[(II, 0.3), (IV, 0.3), (VI, 0.3), (III, 0.1)],
            II | IV => &[(V, 1.0)],
            V => &[(I, 0.7), (VI, 0.3)],
            VI => &[(II, 0.5), (III, 0.5)],
            III => &[(VI, 1.0)],
            VII => &[(II, 1.0)],
        }
    }

    pub fn is_edge(from: ScaleDegree, to: ScaleDegree) -> bool {
        from.successors().iter().any(|&(d, _)| d == to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    /// Semitone offset of each scale degree above the tonic.
    pub fn offsets(self) -> [i32; 7] {
        match self {
            Mode::Major => [0, 2, 4, 5, 7, 9, 11],
            Mode::Minor => [0, 2, 3, 5, 7, 8, 10],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
        })
    }
}

pub type QualityTable = Vec<(Quality, f64)>;

fn default_tables(mode: Mode) -> [QualityTable; 7] {
    use Quality::*;
    let dominant = vec![(Dom7, 0.5), (Maj, 0.2), (Sus4, 0.15), (Aug, 0.1), (Dim7, 0.05)];
    match mode {
        Mode::Major => [
            vec![(Maj, 0.5), (Maj7, 0.3), (Maj6, 0.2)],
            vec![(Min7, 0.5), (Min, 0.3), (Sus2, 0.2)],
            vec![(Min, 0.6), (Min7, 0.4)],
            vec![(Maj7, 0.5), (Maj, 0.3), (Maj6, 0.1), (Sus2, 0.1)],
            dominant,
            vec![(Min7, 0.5), (Min, 0.4), (MinMaj7, 0.1)],
            vec![(HalfDim7, 0.6), (Dim, 0.4)],
        ],
        Mode::Minor => [
            vec![(Min, 0.5), (Min7, 0.3), (Min6, 0.2)],
            vec![(HalfDim7, 0.5), (Dim, 0.3), (Min7, 0.2)],
            vec![(Maj, 0.6), (Maj7, 0.3), (Aug, 0.1)],
            vec![(Min7, 0.5), (Min, 0.3), (Min6, 0.2)],
            dominant,
            vec![(Maj7, 0.5), (Maj, 0.4), (Maj6, 0.1)],
            vec![(Maj, 0.5), (Dom7, 0.5)],
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionConfig {
    pub seed: u64,
    pub min_length: usize,
    pub max_length: usize,
    pub major_probability: f64,
    pub major_qualities: [QualityTable; 7],
    pub minor_qualities: [QualityTable; 7],
    pub bars_per_chord: usize,
    pub beats_per_bar: usize,
    pub bpm_mean: f64,
    pub bpm_sd: f64,
    pub bpm_min: f64,
    pub bpm_max: f64,
    /// Length of each realized song in seconds.
    pub duration: f64,
}

impl Default for ProgressionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            min_length: 4,
            max_length: 10,
            major_probability: 0.5,
            major_qualities: default_tables(Mode::Major),
            minor_qualities: default_tables(Mode::Minor),
            bars_per_chord: 1,
            beats_per_bar: 4,
            bpm_mean: 117.0,
            bpm_sd: 27.0,
            bpm_min: 60.0,
            bpm_max: 220.0,
            duration: 30.0,
        }
    }
}

impl ProgressionConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.min_length == 0 || self.min_length > self.max_length {
            return bad("length range is empty");
        }
        if !(0.0..=1.0).contains(&self.major_probability) {
            return bad("mode prior outside [0, 1]");
        }
        for table in self.major_qualities.iter().chain(&self.minor_qualities) {
            let sum: f64 = table.iter().map(|(_, p)| p).sum();
            if table.is_empty() || table.iter().any(|(_, p)| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return bad("quality distribution is not normalized");
            }
            if table
                .iter()
                .any(|(q, _)| Vocabulary::full().quality_index(*q).is_none())
            {
                return bad("quality outside the vocabulary");
            }
        }
        if self.bars_per_chord == 0 || self.beats_per_bar == 0 {
            return bad("bar structure must be positive");
        }
        if !(self.bpm_min > 0.0 && self.bpm_min <= self.bpm_max && self.bpm_sd >= 0.0) {
            return bad("bpm range");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        Ok(())
    }

    fn qualities(&self, mode: Mode) -> &[QualityTable; 7] {
        match mode {
            Mode::Major => &self.major_qualities,
            Mode::Minor => &self.minor_qualities,
        }
    }

    pub fn bar_seconds(&self, bpm: f64) -> f64 {
        self.beats_per_bar as f64 * 60.0 / bpm
    }

    pub fn clip_bpm(&self, bpm: f64) -> f64 {
        bpm.clamp(self.bpm_min, self.bpm_max)
    }

    pub fn sample_bpm(&self, rng: &mut impl Rng) -> f64 {
        let normal = Normal::new(self.bpm_mean, self.bpm_sd).expect("validated sd");
        self.clip_bpm(normal.sample(rng))
    }
}

fn pick<T: Copy>(table: &[(T, f64)], rng: &mut impl Rng) -> T {
    let total: f64 = table.iter().map(|(_, p)| p).sum();
    let mut u = rng.random::<f64>() * total;
    for &(item, p) in table {
        if u < p {
            return item;
        }
        u -= p;
    }
    table.last().expect("non-empty table").0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progression {
    pub mode: Mode,
    pub tonic: u8,
    pub degrees: Vec<ScaleDegree>,
    #[serde(skip)]
    pub chords: Vec<ChordLabel>,
}

impl Progression {
    pub fn description(&self) -> String {
        format!(
            "{} {}, {} chords",
            PitchClass::new(i32::from(self.tonic)).name(),
            self.mode,
            self.chords.len()
        )
    }
}

/// Draws mode, tonic, one quality per degree, a length, and a walk through
/// the degree graph starting on the tonic.
pub fn sample_progression(cfg: &ProgressionConfig, rng: &mut impl Rng) -> Progression {
    let mode = if rng.random::<f64>() < cfg.major_probability {
        Mode::Major
    } else {
        Mode::Minor
    };
    let tonic = rng.random_range(0..12u8);
    let tables = cfg.qualities(mode);
    let offsets = mode.offsets();
    let palette: Vec<ChordLabel> = ScaleDegree::ALL
        .iter()
        .map(|d| {
            let root = PitchClass::new(i32::from(tonic) + offsets[d.index()]);
            ChordLabel::chord(root, pick(&tables[d.index()], rng))
        })
        .collect();
    let length = rng.random_range(cfg.min_length..=cfg.max_length);
    let mut degrees = vec![ScaleDegree::I];
    while degrees.len() < length {
        let last = *degrees.last().expect("non-empty");
        degrees.push(pick(last.successors(), rng));
    }
    let chords = degrees.iter().map(|d| palette[d.index()].clone()).collect();
    Progression {
        mode,
        tonic,
        degrees,
        chords,
    }
}

/// Lays chords out one after another, `bars_per_chord` bars each, looping
/// until `cfg.duration`; the final chord is cut at the end.
pub fn realize_timing_at(chords: &[ChordLabel], bpm: f64, cfg: &ProgressionConfig) -> Result<Annotation, SynthError> {
    if chords.is_empty() {
        return Err(SynthError::EmptyProgression);
    }
    let span = cfg.bar_seconds(bpm) * cfg.bars_per_chord as f64;
    let mut segments = Vec::new();
    let mut i = 0usize;
    loop {
        let start = i as f64 * span;
        if start >= cfg.duration - 1e-9 {
            break;
        }
        let end = ((i + 1) as f64 * span).min(cfg.duration);
        segments.push(Segment {
            start,
            end,
            label: chords[i % chords.len()].clone(),
        });
        i += 1;
    }
    Annotation::new(segments, cfg.duration).map_err(|e| SynthError::InvalidConfig(e.to_string()))
}

/// Samples a tempo and realizes the chords at it.
pub fn realize_timing(
    chords: &[ChordLabel],
    cfg: &ProgressionConfig,
    rng: &mut impl Rng,
) -> Result<(Annotation, f64), SynthError> {
    let bpm = cfg.sample_bpm(rng);
    Ok((realize_timing_at(chords, bpm, cfg)?, bpm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSong {
    pub index: usize,
    pub seed: u64,
    pub bpm: f64,
    pub progression: Progression,
    pub annotation: Annotation,
}

/// Per-song seed derived from the dataset seed.
pub fn song_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9).wrapping_add(1)
}

pub fn generate_song(cfg: &ProgressionConfig, index: usize) -> Result<SyntheticSong, SynthError> {
    let seed = song_seed(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let progression = sample_progression(cfg, &mut rng);
    let (annotation, bpm) = realize_timing(&progression.chords, cfg, &mut rng)?;
    Ok(SyntheticSong {
        index,
        seed,
        bpm,
        progression,
        annotation,
    })
}

pub fn generate_dataset(exec: Execution, cfg: &ProgressionConfig, n: usize) -> Result<Vec<SyntheticSong>, SynthError> {
    cfg.validate()?;
    par::map_range(exec, n, |i| generate_song(cfg, i)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub seed: u64,
    pub bpm: f64,
    pub mode: Mode,
    pub tonic: String,
    pub progression: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub hop: f64,
    pub render: RenderParams,
    pub songs: Vec<DatasetEntry>,
}

/// Writes `<name>.lab`, `<name>.cqtf` per song and `manifest.json`.
/// Each song's renderer noise is seeded from its own seed.
pub fn write_dataset(
    exec: Execution,
    dir: &Path,
    songs: &[SyntheticSong],
    cfg: &ProgressionConfig,
    render: &RenderParams,
    hop: f64,
) -> Result<DatasetManifest, SynthError> {
    fs::create_dir_all(dir)?;
    let written = par::map(exec, songs, |song| -> Result<DatasetEntry, SynthError> {
        let name = format!("song_{:04}", song.index);
        let grid = FrameGrid::covering(song.annotation.duration(), hop);
        let params = RenderParams {
            seed: song.seed,
            ..render.clone()
        };
        let feat = render_synthetic_cqt(&song.annotation, &grid, &params);
        fs::write(dir.join(format!("{name}.lab")), song.annotation.to_tsv())?;
        let mut bytes = Vec::new();
        feat.write_to(&mut bytes)?;
        fs::write(dir.join(format!("{name}.cqtf")), bytes)?;
        Ok(DatasetEntry {
            name,
            seed: song.seed,
            bpm: song.bpm,
            mode: song.progression.mode,
            tonic: PitchClass::new(i32::from(song.progression.tonic)).name().to_string(),
            progression: song.progression.chords.iter().map(format_chord).collect(),
            description: format!("{}, {:.0} bpm", song.progression.description(), song.bpm),
        })
    });
    let manifest = DatasetManifest {
        seed: cfg.seed,
        hop,
        render: render.clone(),
        songs: written.into_iter().collect::<Result<_, _>>()?,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

/// Per-quality multiplicative correction, in vocabulary quality order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub ratios: Vec<(Quality, f64)>,
}

impl CalibrationTable {
    pub fn uniform(vocab: &Vocabulary, value: f64) -> Self {
        Self {
            ratios: vocab.qualities().iter().map(|&q| (q, value)).collect(),
        }
    }

    pub fn get(&self, quality: Quality) -> Option<f64> {
        self.ratios.iter().find(|(q, _)| *q == quality).map(|&(_, r)| r)
    }
}

pub const CALIBRATION_FLOOR: f64 = 1e-6;

/// `r(y) = (P_target(y) + ε) / (P_train(y) + ε)` averaged over the 12 roots
/// of each quality. Both inputs are normalized to sum to one first.
pub fn calibration_ratios(train: &[f64], target: &[f64], vocab: &Vocabulary) -> Result<CalibrationTable, SynthError> {
    for d in [train, target] {
        if d.len() != vocab.size() {
            return Err(SynthError::SizeMismatch {
                expected: vocab.size(),
                found: d.len(),
            });
        }
        if d.iter().any(|p| !(*p >= 0.0)) || !(d.iter().sum::<f64>() > 0.0) {
            return Err(SynthError::InvalidConfig(
                "distribution must be non-negative with positive mass".into(),
            ));
        }
    }
    let (st, sp): (f64, f64) = (train.iter().sum(), target.iter().sum());
    let ratios = vocab
        .qualities()
        .iter()
        .map(|&q| {
            let mean = (0..12)
                .map(|r| {
                    let id = vocab
                        .chord_id(PitchClass::new(r), q)
                        .expect("vocabulary quality")
                        .index();
                    (target[id] / sp + CALIBRATION_FLOOR) / (train[id] / st + CALIBRATION_FLOOR)
                })
                .sum::<f64>()
                / 12.0;
            (q, mean)
        })
        .collect();
    Ok(CalibrationTable { ratios })
}

/// Adds `ln r_q` to every logit whose class has quality `q`.
pub fn apply_calibration(
    logits: &Array2<f64>,
    table: &CalibrationTable,
    vocab: &Vocabulary,
) -> Result<Array2<f64>, SynthError> {
    if logits.ncols() != vocab.size() {
        return Err(SynthError::SizeMismatch {
            expected: vocab.size(),
            found: logits.ncols(),
        });
    }
    let mut offsets = vec![0.0; vocab.size()];
    for id in vocab.ids() {
        if let Ok(IdInfo::Chord { quality, .. }) = vocab.id_info(id) {
            let r = table
                .get(quality)
                .ok_or_else(|| SynthError::MissingQuality(quality.name().to_string()))?;
            if !(r > 0.0) {
                return Err(SynthError::InvalidConfig(format!(
                    "ratio for {} must be positive",
                    quality.name()
                )));
            }
            offsets[id.index()] = r.ln();
        }
    }
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        for (v, o) in row.iter_mut().zip(&offsets) {
            *v += o;
        }
    }
    Ok(out)
}
