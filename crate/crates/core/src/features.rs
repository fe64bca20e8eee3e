//! Log-frequency feature matrices.
//!
//! Holds the CQT-like matrix type and its binary file format, a synthetic
//! renderer that turns annotations into CQT frames, semitone shifting in the
//! bin domain and beat-synchronous pooling.
//!
//! File layout (`CQTF`, little-endian):
//!
//! | field           | type |
//! |-----------------|------|
//! | magic `CQTF`    | 4 B  |
//! | version = 1     | u32  |
//! | n_bins          | u32  |
//! | n_frames        | u64  |
//! | hop_seconds     | f64  |
//! | bins_per_octave | u32  |
//! | floor_db        | f32  |
//! | payload         | n_frames·n_bins f32, frame-major |

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Annotation, FrameGrid};
use crate::harte;
use crate::vocab::{ChordId, Vocabulary};

pub const MAGIC: &[u8; 4] = b"CQTF";
pub const VERSION: u32 = 1;
pub const DEFAULT_BINS_PER_OCTAVE: usize = 36;
pub const DEFAULT_N_BINS: usize = 216;
pub const DEFAULT_FLOOR_DB: f32 = -80.0;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 4 + 4;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    VersionMismatch(u32),
    #[error("payload truncated: expected {expected} values, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("bins per octave {0} is not a multiple of 12")]
    BadBinConfig(usize),
    #[error("shift of {0} semitones outside -11..=11")]
    ShiftOutOfRange(i32),
    #[error("no beat intervals")]
    EmptyBeatList,
    #[error("invalid header: {0}")]
    BadHeader(String),
}

/// Frames × bins matrix of dB values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f32>,
    bins_per_octave: usize,
    hop: f64,
    floor_db: f32,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f32>, bins_per_octave: usize, hop: f64, floor_db: f32) -> Result<Self, FeatureError> {
        if bins_per_octave == 0 || !data.ncols().is_multiple_of(bins_per_octave) {
            return Err(FeatureError::BadHeader(format!(
                "{} bins not divisible by {} bins per octave",
                data.ncols(),
                bins_per_octave
            )));
        }
        if !(hop > 0.0 && hop.is_finite()) {
            return Err(FeatureError::BadHeader(format!("hop {hop}")));
        }
        let mut data = data;
        data.mapv_inplace(|v| v.max(floor_db));
        Ok(Self {
            data,
            bins_per_octave,
            hop,
            floor_db,
        })
    }

    pub fn filled(n_frames: usize, n_bins: usize, bins_per_octave: usize, hop: f64, floor_db: f32, value: f32) -> Self {
        Self::new(
            Array2::from_elem((n_frames, n_bins), value),
            bins_per_octave,
            hop,
            floor_db,
        )
        .expect("valid shape")
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f32> {
        &mut self.data
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn bins_per_octave(&self) -> usize {
        self.bins_per_octave
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn floor_db(&self) -> f32 {
        self.floor_db
    }

    pub fn grid(&self) -> FrameGrid {
        FrameGrid::new(self.hop, self.n_frames())
    }

    /// Rows `start..end` as a new matrix with the same metadata.
    pub fn slice_frames(&self, start: usize, end: usize) -> Self {
        Self {
            data: self.data.slice(ndarray::s![start..end, ..]).to_owned(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            data: Array2::zeros((0, self.n_bins())),
            bins_per_octave: self.bins_per_octave,
            hop: self.hop,
            floor_db: self.floor_db,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&(self.n_bins() as u32).to_le_bytes());
        header.extend_from_slice(&(self.n_frames() as u64).to_le_bytes());
        header.extend_from_slice(&self.hop.to_le_bytes());
        header.extend_from_slice(&(self.bins_per_octave as u32).to_le_bytes());
        header.extend_from_slice(&self.floor_db.to_le_bytes());
        w.write_all(&header)?;
        let mut payload = Vec::with_capacity(self.data.len() * 4);
        for v in self.data.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, FeatureError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => FeatureError::BadMagic,
            _ => FeatureError::Io(e),
        })?;
        if &header[0..4] != MAGIC {
            return Err(FeatureError::BadMagic);
        }
        let u32_at = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(FeatureError::VersionMismatch(version));
        }
        let n_bins = u32_at(8) as usize;
        let n_frames = u64::from_le_bytes(header[12..20].try_into().unwrap());
        let hop = f64::from_le_bytes(header[20..28].try_into().unwrap());
        let bins_per_octave = u32_at(28) as usize;
        let floor_db = f32::from_le_bytes(header[32..36].try_into().unwrap());

        let expected = n_frames
            .checked_mul(n_bins as u64)
            .ok_or_else(|| FeatureError::BadHeader("size overflow".into()))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let found = (payload.len() / 4) as u64;
        if found < expected {
            return Err(FeatureError::TruncatedPayload { expected, found });
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .take(expected as usize)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data = Array2::from_shape_vec((n_frames as usize, n_bins), values)
            .map_err(|e| FeatureError::BadHeader(e.to_string()))?;
        if data.iter().any(|&v| v < floor_db || v.is_nan()) {
            return Err(FeatureError::BadHeader("value below floor".into()));
        }
        Ok(Self {
            data,
            bins_per_octave,
            hop,
            floor_db,
        })
    }
}

pub fn save_features(feat: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let mut buf = Vec::new();
    feat.write_to(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix, FeatureError> {
    FeatureMatrix::read_from(io::Cursor::new(fs::read(path)?))
}

/// Settings for [`render_synthetic_cqt`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub bins_per_octave: usize,
    pub n_bins: usize,
    pub floor_db: f32,
    /// Level of the root's center bins.
    pub peak_db: f32,
    /// Attenuation of non-root chord tones relative to the root.
    pub tone_drop_db: f32,
    /// Attenuation of the off-center bins of a semitone.
    pub side_drop_db: f32,
    /// Standard deviation of additive Gaussian noise in dB; 0 disables it.
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            bins_per_octave: DEFAULT_BINS_PER_OCTAVE,
            n_bins: DEFAULT_N_BINS,
            floor_db: DEFAULT_FLOOR_DB,
            peak_db: 0.0,
            tone_drop_db: 20.0,
            side_drop_db: 3.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Semitone above C1 nearest to `bin`, and whether the bin is that semitone's center.
fn bin_semitone(bin: usize, bins_per_octave: usize) -> (usize, bool) {
    let num = bin * 12;
    let semitone = (num + bins_per_octave / 2) / bins_per_octave;
    (semitone, num.is_multiple_of(bins_per_octave))
}

/// Renders an annotation into a CQT-like matrix.
///
/// Bin 0 is C1. Every bin whose nearest semitone belongs to the active
/// chord's pitch classes is lit in all octaves: root bins at `peak_db`, other
/// chord tones `tone_drop_db` lower, off-center bins a further `side_drop_db`
/// lower. Everything else sits at the floor. Frames with `N`, `X` or an
/// unresolvable label stay at the floor.
pub fn render_synthetic_cqt(ann: &Annotation, grid: &FrameGrid, params: &RenderParams) -> FeatureMatrix {
    let bpo = params.bins_per_octave;
    let mut data = Array2::from_elem((grid.n_frames, params.n_bins), params.floor_db);

    let rows: Vec<Option<Array1<f32>>> = ann
        .segments()
        .iter()
        .map(|seg| {
            let harte::ChordLabel::Chord(chord) = &seg.label else {
                return None;
            };
            let set = harte::pitch_class_set(&seg.label).ok()?;
            let root = chord.root.value();
            Some(Array1::from_shape_fn(params.n_bins, |b| {
                let (semitone, center) = bin_semitone(b, bpo);
                let pc = (semitone % 12) as u8;
                if !set.contains(pc) {
                    return params.floor_db;
                }
                let mut level = params.peak_db;
                if pc != root {
                    level -= params.tone_drop_db;
                }
                if !center {
                    level -= params.side_drop_db;
                }
                level.max(params.floor_db)
            }))
        })
        .collect();

    for i in 0..grid.n_frames {
        if let Some(Some(row)) = ann.segment_index_at(grid.center(i)).map(|s| &rows[s]) {
            data.row_mut(i).assign(row);
        }
    }

    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let normal = Normal::new(0.0f32, params.noise_sigma).expect("finite sigma");
        data.mapv_inplace(|v| (v + normal.sample(&mut rng)).max(params.floor_db));
    }

    FeatureMatrix::new(data, bpo, grid.hop, params.floor_db).expect("render params consistent")
}

/// Moves every bin up by `semitones` (down if negative); vacated bins are set
/// to the floor.
pub fn pitch_shift_cqt(feat: &FeatureMatrix, semitones: i32) -> Result<FeatureMatrix, FeatureError> {
    let bpo = feat.bins_per_octave;
    if !bpo.is_multiple_of(12) {
        return Err(FeatureError::BadBinConfig(bpo));
    }
    if semitones.abs() > 11 {
        return Err(FeatureError::ShiftOutOfRange(semitones));
    }
    let shift = semitones as isize * (bpo / 12) as isize;
    let n = feat.n_bins() as isize;
    let mut out = Array2::from_elem(feat.data.raw_dim(), feat.floor_db);
    for (src, mut dst) in feat.data.outer_iter().zip(out.outer_iter_mut()) {
        for b in 0..n {
            let from = b - shift;
            if (0..n).contains(&from) {
                dst[b as usize] = src[from as usize];
            }
        }
    }
    Ok(FeatureMatrix {
        data: out,
        ..feat.clone_meta()
    })
}

/// How beat intervals are subdivided or grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeatDivision {
    Quarter,
    Half,
    Whole,
    Double,
    /// Intervals taken from the reference annotation's segments.
    Perfect,
}

impl BeatDivision {
    pub const ALL: [BeatDivision; 5] = [
        BeatDivision::Quarter,
        BeatDivision::Half,
        BeatDivision::Whole,
        BeatDivision::Double,
        BeatDivision::Perfect,
    ];
}

impl FromStr for BeatDivision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0.25" | "1/4" => Ok(Self::Quarter),
            "0.5" | "1/2" => Ok(Self::Half),
            "1" => Ok(Self::Whole),
            "2" => Ok(Self::Double),
            "perfect" => Ok(Self::Perfect),
            other => Err(format!("unknown beat division `{other}`")),
        }
    }
}

impl fmt::Display for BeatDivision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quarter => "0.25",
            Self::Half => "0.5",
            Self::Whole => "1",
            Self::Double => "2",
            Self::Perfect => "perfect",
        })
    }
}

/// Contiguous `[start, end)` intervals in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatIntervals {
    intervals: Vec<(f64, f64)>,
    division: BeatDivision,
}

impl BeatIntervals {
    /// Intervals between consecutive beats, with `[0, first_beat)` prepended
    /// and `[last_beat, duration)` appended when non-empty, then subdivided
    /// or paired according to `division`.
    pub fn from_beats(beats: &[f64], division: BeatDivision, duration: f64) -> Result<Self, FeatureError> {
        if division == BeatDivision::Perfect {
            return Err(FeatureError::BadHeader(
                "perfect intervals come from an annotation".into(),
            ));
        }
        let mut edges: Vec<f64> = Vec::with_capacity(beats.len() + 2);
        if beats.first().is_some_and(|&b| b > 1e-9) {
            edges.push(0.0);
        }
        edges.extend(
            beats
                .iter()
                .copied()
                .filter(|&b| b < duration - 1e-9 || duration <= 0.0),
        );
        if edges.last().is_some_and(|&b| duration > b + 1e-9) {
            edges.push(duration);
        }
        let base: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
        if base.is_empty() {
            return Err(FeatureError::EmptyBeatList);
        }
        let intervals = match division {
            BeatDivision::Quarter => subdivide(&base, 4),
            BeatDivision::Half => subdivide(&base, 2),
            BeatDivision::Whole => base,
            BeatDivision::Double => base.chunks(2).map(|c| (c[0].0, c[c.len() - 1].1)).collect(),
            BeatDivision::Perfect => unreachable!(),
        };
        Ok(Self { intervals, division })
    }

    /// One interval per annotation segment.
    pub fn perfect(ann: &Annotation) -> Result<Self, FeatureError> {
        let intervals: Vec<(f64, f64)> = ann.segments().iter().map(|s| (s.start, s.end)).collect();
        if intervals.is_empty() {
            return Err(FeatureError::EmptyBeatList);
        }
        Ok(Self {
            intervals,
            division: BeatDivision::Perfect,
        })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn division(&self) -> BeatDivision {
        self.division
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn mean_length(&self) -> f64 {
        let total: f64 = self.intervals.iter().map(|(s, e)| e - s).sum();
        total / self.intervals.len().max(1) as f64
    }
}

fn subdivide(base: &[(f64, f64)], parts: usize) -> Vec<(f64, f64)> {
    base.iter()
        .flat_map(|&(s, e)| {
            let step = (e - s) / parts as f64;
            (0..parts).map(move |k| {
                let end = if k + 1 == parts { e } else { s + step * (k + 1) as f64 };
                (s + step * k as f64, end)
            })
        })
        .collect()
}

/// Averages the frames whose centers fall in each interval. An interval with
/// no frames copies the previous pooled row (or the next one, at the start).
/// The returned matrix's hop is the mean interval length.
pub fn beat_pool(feat: &FeatureMatrix, beats: &BeatIntervals) -> Result<(FeatureMatrix, BeatIntervals), FeatureError> {
    if beats.is_empty() {
        return Err(FeatureError::EmptyBeatList);
    }
    let grid = feat.grid();
    let n_bins = feat.n_bins();
    let mut rows: Vec<Option<Array1<f32>>> = Vec::with_capacity(beats.len());
    let mut frame = 0usize;
    for &(start, end) in beats.intervals() {
        while frame < grid.n_frames && grid.center(frame) < start {
            frame += 1;
        }
        let first = frame;
        while frame < grid.n_frames && grid.center(frame) < end {
            frame += 1;
        }
        rows.push((frame > first).then(|| {
            feat.data
                .slice(ndarray::s![first..frame, ..])
                .mean_axis(Axis(0))
                .expect("non-empty slice")
        }));
    }

    let mut data = Array2::from_elem((beats.len(), n_bins), feat.floor_db);
    let mut last: Option<&Array1<f32>> = rows.iter().flatten().next();
    for (i, row) in rows.iter().enumerate() {
        if let Some(r) = row {
            last = Some(r);
        }
        if let Some(r) = last {
            data.row_mut(i).assign(r);
        }
    }
    let pooled = FeatureMatrix::new(data, feat.bins_per_octave, beats.mean_length().max(1e-9), feat.floor_db)?;
    Ok((pooled, beats.clone()))
}

/// Class with the largest total overlap in each interval; ties go to the
/// class that appears first.
pub fn max_overlap_labels(ann: &Annotation, beats: &BeatIntervals, vocab: &Vocabulary) -> Vec<ChordId> {
    let seg_ids: Vec<ChordId> = ann.segments().iter().map(|s| vocab.map_label(&s.label)).collect();
    beats
        .intervals()
        .iter()
        .map(|&(start, end)| {
            let mut totals: Vec<(ChordId, f64)> = Vec::new();
            for (seg, &id) in ann.segments().iter().zip(&seg_ids) {
                let overlap = seg.end.min(end) - seg.start.max(start);
                if overlap > 0.0 {
                    match totals.iter_mut().find(|(c, _)| *c == id) {
                        Some((_, t)) => *t += overlap,
                        None => totals.push((id, overlap)),
                    }
                }
            }
            totals
                .iter()
                .fold(None::<(ChordId, f64)>, |best, &(id, t)| match best {
                    Some((_, bt)) if bt >= t => best,
                    _ => Some((id, t)),
                })
                .map_or(vocab.no_chord(), |(id, _)| id)
        })
        .collect()
}
