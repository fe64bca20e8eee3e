//! Chord annotations, frame grids and data-integrity checks.
//!
//! Annotation files are UTF-8 TSV, one segment per line:
//! `start<TAB>end<TAB>harte_label`, times in seconds, sorted by start.
//! Beat files hold one time in seconds per line, strictly increasing.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::harte::{self, ChordLabel};
use crate::vocab::{ChordId, Vocabulary};

/// Default half-width of the lag search, in frames.
pub const DEFAULT_LAG_WINDOW: usize = 50;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("non-monotone times at line {line_no}")]
    NonMonotoneTimes { line_no: usize },
    #[error("signal has zero variance")]
    DegenerateSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: ChordLabel,
}

/// Time-sorted, gap-free list of labelled segments for one song.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    segments: Vec<Segment>,
    duration: f64,
}

impl Annotation {
    /// Builds an annotation from sorted, non-overlapping segments; gaps
    /// (including a leading gap and a trailing gap up to `duration`) are
    /// filled with `N`.
    pub fn new(segments: Vec<Segment>, duration: f64) -> Result<Self, AnnotationError> {
        let mut filled: Vec<Segment> = Vec::with_capacity(segments.len());
        let mut cursor = 0.0f64;
        for (i, seg) in segments.into_iter().enumerate() {
            let bad = || AnnotationError::NonMonotoneTimes { line_no: i + 1 };
            if !(seg.start.is_finite() && seg.end.is_finite()) || seg.start < 0.0 {
                return Err(bad());
            }
            if seg.end <= seg.start || seg.start < cursor - TIME_EPS {
                return Err(bad());
            }
            if seg.start > cursor + TIME_EPS {
                filled.push(Segment {
                    start: cursor,
                    end: seg.start,
                    label: ChordLabel::NoChord,
                });
            }
            cursor = seg.end;
            filled.push(seg);
        }
        let duration = duration.max(cursor);
        if duration > cursor + TIME_EPS {
            filled.push(Segment {
                start: cursor,
                end: duration,
                label: ChordLabel::NoChord,
            });
        }
        Ok(Self {
            segments: filled,
            duration,
        })
    }

    pub fn empty(duration: f64) -> Self {
        Self::new(Vec::new(), duration).expect("empty annotation is valid")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Times where one segment ends and the next begins.
    pub fn boundaries(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().skip(1).map(|s| s.start)
    }

    /// Index of the segment containing `t` under half-open `[start, end)`.
    pub fn segment_index_at(&self, t: f64) -> Option<usize> {
        if t < 0.0 {
            return None;
        }
        let i = self.segments.partition_point(|s| s.start <= t);
        (i > 0 && t < self.segments[i - 1].end).then(|| i - 1)
    }

    pub fn label_at(&self, t: f64) -> Option<&ChordLabel> {
        self.segment_index_at(t).map(|i| &self.segments[i].label)
    }

    pub fn map_labels(&self, f: impl Fn(&ChordLabel) -> ChordLabel) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    label: f(&s.label),
                    ..s.clone()
                })
                .collect(),
            duration: self.duration,
        }
    }

    pub fn transpose(&self, semitones: i32) -> Self {
        self.map_labels(|l| harte::transpose_label(l, semitones))
    }

    pub fn to_tsv(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{:.6}\t{:.6}\t{}\n", s.start, s.end, s.label))
            .collect()
    }
}

/// Parses annotation TSV text. Labels outside the supported Harte grammar
/// become `X`.
pub fn parse_annotation(text: &str) -> Result<Annotation, AnnotationError> {
    let mut segments = Vec::new();
    let mut last_end = 0.0f64;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let malformed = |reason: &str| AnnotationError::MalformedLine {
            line_no,
            reason: reason.to_string(),
        };
        if fields.len() != 3 {
            return Err(malformed("expected 3 tab-separated fields"));
        }
        let start: f64 = fields[0].parse().map_err(|_| malformed("bad start time"))?;
        let end: f64 = fields[1].parse().map_err(|_| malformed("bad end time"))?;
        if !start.is_finite() || !end.is_finite() {
            return Err(malformed("non-finite time"));
        }
        if end < start || start < last_end - TIME_EPS || start < 0.0 {
            return Err(AnnotationError::NonMonotoneTimes { line_no });
        }
        if end == start {
            continue;
        }
        last_end = end;
        let label = harte::parse_chord(fields[2]).unwrap_or_else(|e| {
            log::warn!("line {line_no}: {e}; treating as X");
            ChordLabel::Unknown
        });
        segments.push(Segment { start, end, label });
    }
    let end = segments.last().map_or(0.0, |s| s.end);
    Annotation::new(segments, end)
}

pub fn load_annotation(path: impl AsRef<Path>) -> Result<Annotation, AnnotationError> {
    parse_annotation(&fs::read_to_string(path)?)
}

pub fn save_annotation(ann: &Annotation, path: impl AsRef<Path>) -> io::Result<()> {
    fs::write(path, ann.to_tsv())
}

pub fn parse_beats(text: &str) -> Result<Vec<f64>, AnnotationError> {
    let mut beats: Vec<f64> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: f64 = line.parse().map_err(|_| AnnotationError::MalformedLine {
            line_no: i + 1,
            reason: "bad beat time".into(),
        })?;
        if !t.is_finite() || t < 0.0 || beats.last().is_some_and(|&p| t <= p) {
            return Err(AnnotationError::NonMonotoneTimes { line_no: i + 1 });
        }
        beats.push(t);
    }
    Ok(beats)
}

pub fn load_beats(path: impl AsRef<Path>) -> Result<Vec<f64>, AnnotationError> {
    parse_beats(&fs::read_to_string(path)?)
}

/// Uniform frame grid starting at t = 0. Frame `i` covers `[i·hop, (i+1)·hop)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    pub hop: f64,
    pub n_frames: usize,
}

impl FrameGrid {
    pub fn new(hop: f64, n_frames: usize) -> Self {
        assert!(hop > 0.0, "hop must be positive");
        Self { hop, n_frames }
    }

    /// `ceil(duration / hop)` frames.
    pub fn covering(duration: f64, hop: f64) -> Self {
        let n = (duration / hop - 1e-9).ceil().max(0.0) as usize;
        Self::new(hop, n)
    }

    /// Grid for audio at `sample_rate` with `hop_samples` per frame:
    /// `F = ceil(sample_rate / hop_samples · duration)`.
    pub fn from_samples(duration: f64, sample_rate: u32, hop_samples: u32) -> Self {
        let n = (f64::from(sample_rate) * duration / f64::from(hop_samples) - 1e-9)
            .ceil()
            .max(0.0) as usize;
        Self::new(f64::from(hop_samples) / f64::from(sample_rate), n)
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hop
    }

    /// Frame containing time `t`.
    pub fn frame_of(&self, t: f64) -> usize {
        (t / self.hop + 1e-9).floor().max(0.0) as usize
    }

    pub fn frame_times(&self) -> Vec<(f64, f64)> {
        (0..self.n_frames)
            .map(|i| (i as f64 * self.hop, (i + 1) as f64 * self.hop))
            .collect()
    }
}

/// Hop of the default feature pipeline: 4096 samples at 44.1 kHz.
pub const DEFAULT_HOP: f64 = 4096.0 / 44100.0;

/// Label of the segment containing each frame's center; `N` past the end.
pub fn frame_labels(ann: &Annotation, grid: &FrameGrid, vocab: &Vocabulary) -> Vec<ChordId> {
    let ids: Vec<ChordId> = ann.segments.iter().map(|s| vocab.map_label(&s.label)).collect();
    (0..grid.n_frames)
        .map(|i| {
            ann.segment_index_at(grid.center(i))
                .map_or_else(|| vocab.no_chord(), |s| ids[s])
        })
        .collect()
}

/// Frames that contain a segment boundary (half-open: a boundary on a frame
/// edge belongs to the later frame).
pub fn transition_mask(ann: &Annotation, grid: &FrameGrid) -> Vec<bool> {
    let mut mask = vec![false; grid.n_frames];
    for t in ann.boundaries().filter(|&t| t > 0.0) {
        let i = grid.frame_of(t);
        if i < grid.n_frames {
            mask[i] = true;
        }
    }
    mask
}

/// Per-frame change magnitude: sum over bins of `|x[i] - x[i-1]|`, 0 for the first frame.
pub fn feature_derivative(feat: &FeatureMatrix) -> Vec<f64> {
    let data = feat.data();
    let mut out = vec![0.0; feat.n_frames()];
    for (i, o) in out.iter_mut().enumerate().skip(1) {
        *o = data
            .row(i)
            .iter()
            .zip(data.row(i - 1))
            .map(|(a, b)| f64::from((a - b).abs()))
            .sum();
    }
    out
}

/// 1 where the segment sounding at a frame center differs from the
/// previous frame's.
pub fn chord_change_vector(ann: &Annotation, grid: &FrameGrid) -> Vec<f64> {
    let seg: Vec<Option<usize>> = (0..grid.n_frames)
        .map(|i| ann.segment_index_at(grid.center(i)))
        .collect();
    (0..grid.n_frames)
        .map(|i| if i > 0 && seg[i] != seg[i - 1] { 1.0 } else { 0.0 })
        .collect()
}

fn standardize(x: &[f64]) -> Result<Vec<f64>, AnnotationError> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 1e-12) {
        return Err(AnnotationError::DegenerateSignal);
    }
    let sd = var.sqrt();
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Normalized cross-correlation between the feature derivative and the
/// chord-change vector for each lag in `[-window, window]`.
pub fn lag_correlations(
    feat: &FeatureMatrix,
    ann: &Annotation,
    window_frames: usize,
) -> Result<Vec<(i64, f64)>, AnnotationError> {
    let grid = FrameGrid::new(feat.hop(), feat.n_frames());
    let d = standardize(&feature_derivative(feat))?;
    let c = standardize(&chord_change_vector(ann, &grid))?;
    let n = d.len() as i64;
    let w = window_frames as i64;
    Ok((-w..=w)
        .map(|lag| {
            let lo = 0.max(-lag);
            let hi = n.min(n - lag);
            let len = hi - lo;
            let r = if len > 0 {
                (lo..hi).map(|i| d[(i + lag) as usize] * c[i as usize]).sum::<f64>() / len as f64
            } else {
                f64::NEG_INFINITY
            };
            (lag, r)
        })
        .collect())
}

/// Lag (in frames) maximizing the correlation; positive means the features
/// change after the annotated boundaries. Ties go to the smallest |lag|.
pub fn alignment_lag(feat: &FeatureMatrix, ann: &Annotation, window_frames: usize) -> Result<i64, AnnotationError> {
    assert!(window_frames > 0, "window must be positive");
    let corr = lag_correlations(feat, ann, window_frames)?;
    let mut best = (0i64, f64::NEG_INFINITY);
    for (lag, r) in corr {
        if r > best.1 + 1e-12 || ((r - best.1).abs() <= 1e-12 && lag.abs() < best.0.abs()) {
            best = (lag, r);
        }
    }
    Ok(best.0)
}
