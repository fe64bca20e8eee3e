//! Weighted chord symbol recall (WCSR) and related scores.
//!
//! WCSR is measured over continuous time by intersecting reference and
//! estimated intervals. Comparators can declare a reference undefined (`X`,
//! or qualities a comparator does not cover); undefined time is dropped from
//! the denominator.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Annotation, FrameGrid};
use crate::features::BeatIntervals;
use crate::harte::Quality;
use crate::par::{self, Execution};
use crate::pitch::PitchSet;
use crate::vocab::{ChordId, IdInfo, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no time with a defined comparison")]
    ZeroDefinedTime,
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSpec {
    Acc,
    Root,
    Third,
    Seventh,
    Mirex,
    Majmin,
}

impl MetricSpec {
    pub const ALL: [MetricSpec; 6] = [
        MetricSpec::Acc,
        MetricSpec::Root,
        MetricSpec::Third,
        MetricSpec::Seventh,
        MetricSpec::Mirex,
        MetricSpec::Majmin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricSpec::Acc => "acc",
            MetricSpec::Root => "root",
            MetricSpec::Third => "third",
            MetricSpec::Seventh => "seventh",
            MetricSpec::Mirex => "mirex",
            MetricSpec::Majmin => "majmin",
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricSpec {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricSpec::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MetricError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    Incorrect,
    Undefined,
}

impl Outcome {
    fn from_bool(b: bool) -> Self {
        if b {
            Outcome::Correct
        } else {
            Outcome::Incorrect
        }
    }
}

/// Semitone of the chord's third slot: 3/4 preferred, then 2 (sus2) or 5 (sus4).
fn third_slot(template: PitchSet) -> Option<u8> {
    [3u8, 4, 2, 5].into_iter().find(|&s| template.contains(s))
}

fn seventh_slot(template: PitchSet) -> Option<u8> {
    [10u8, 11].into_iter().find(|&s| template.contains(s))
}

const SEVENTH_SUPPORTED: [Quality; 5] = [Quality::Maj, Quality::Min, Quality::Maj7, Quality::Min7, Quality::Dom7];

pub fn compare_labels(spec: MetricSpec, reference: ChordId, estimate: ChordId, vocab: &Vocabulary) -> Outcome {
    let (Ok(r), Ok(e)) = (vocab.id_info(reference), vocab.id_info(estimate)) else {
        return Outcome::Undefined;
    };
    if r == IdInfo::Unknown {
        return Outcome::Undefined;
    }
    if spec == MetricSpec::Majmin {
        let (r, e) = (vocab.reduce_majmin(reference), vocab.reduce_majmin(estimate));
        return match r {
            IdInfo::Unknown => Outcome::Undefined,
            _ => Outcome::from_bool(r == e),
        };
    }
    let (rc, ec) = match (r, e) {
        (IdInfo::NoChord, e) => return Outcome::from_bool(e == IdInfo::NoChord),
        (_, IdInfo::NoChord | IdInfo::Unknown) => {
            if spec == MetricSpec::Seventh
                && !matches!(r, IdInfo::Chord { quality, .. } if SEVENTH_SUPPORTED.contains(&quality))
            {
                return Outcome::Undefined;
            }
            return Outcome::Incorrect;
        }
        (IdInfo::Chord { root: rr, quality: rq }, IdInfo::Chord { root: er, quality: eq }) => ((rr, rq), (er, eq)),
        _ => unreachable!(),
    };
    let ((rr, rq), (er, eq)) = (rc, ec);
    let (rt, et) = (rq.template(), eq.template());
    match spec {
        MetricSpec::Acc => Outcome::from_bool(reference == estimate),
        MetricSpec::Root => Outcome::from_bool(rr == er),
        MetricSpec::Third => Outcome::from_bool(rr == er && third_slot(rt) == third_slot(et)),
        MetricSpec::Seventh => {
            if !SEVENTH_SUPPORTED.contains(&rq) {
                return Outcome::Undefined;
            }
            Outcome::from_bool(rr == er && third_slot(rt) == third_slot(et) && seventh_slot(rt) == seventh_slot(et))
        }
        MetricSpec::Mirex => {
            let rs = rt.transpose(rr.value() as i32);
            let es = et.transpose(er.value() as i32);
            Outcome::from_bool(rs.intersection(es).len() >= 3)
        }
        MetricSpec::Majmin => unreachable!(),
    }
}

/// Piecewise-constant class sequence over `[0, duration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedPath {
    intervals: Vec<(f64, f64, ChordId)>,
}

impl TimedPath {
    /// Accepts contiguous intervals; empty ones are dropped and equal
    /// neighbours merged.
    pub fn new(intervals: Vec<(f64, f64, ChordId)>) -> Self {
        let mut merged: Vec<(f64, f64, ChordId)> = Vec::with_capacity(intervals.len());
        for (s, e, id) in intervals {
            if e <= s {
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.2 == id && (last.1 - s).abs() < 1e-12 => last.1 = e,
                _ => merged.push((s, e, id)),
            }
        }
        Self { intervals: merged }
    }

    pub fn from_annotation(ann: &Annotation, vocab: &Vocabulary) -> Self {
        Self::new(
            ann.segments()
                .iter()
                .map(|s| (s.start, s.end, vocab.map_label(&s.label)))
                .collect(),
        )
    }

    /// Frame `i` covers `[i·hop, (i+1)·hop)`, clipped to `duration`.
    pub fn from_frames(ids: &[ChordId], grid: &FrameGrid, duration: f64) -> Self {
        Self::new(
            ids.iter()
                .enumerate()
                .map(|(i, &id)| {
                    let s = i as f64 * grid.hop;
                    let e = ((i + 1) as f64 * grid.hop).min(duration);
                    (s.min(duration), e, id)
                })
                .collect(),
        )
    }

    pub fn from_intervals(ids: &[ChordId], beats: &BeatIntervals) -> Self {
        Self::new(
            beats
                .intervals()
                .iter()
                .zip(ids)
                .map(|(&(s, e), &id)| (s, e, id))
                .collect(),
        )
    }

    pub fn intervals(&self) -> &[(f64, f64, ChordId)] {
        &self.intervals
    }

    pub fn duration(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.1)
    }

    pub fn to_annotation(&self, vocab: &Vocabulary) -> Annotation {
        let segments = self
            .intervals
            .iter()
            .map(|&(s, e, id)| crate::annotate::Segment {
                start: s,
                end: e,
                label: vocab.label(id).unwrap_or(crate::harte::ChordLabel::Unknown),
            })
            .collect();
        Annotation::new(segments, self.duration()).expect("timed path is contiguous")
    }
}

/// Per-class accumulated time for one metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeTally {
    pub defined: f64,
    pub correct: f64,
}

impl TimeTally {
    fn add(&mut self, other: &TimeTally) {
        self.defined += other.defined;
        self.correct += other.correct;
    }

    pub fn score(&self) -> Option<f64> {
        (self.defined > 0.0).then(|| 100.0 * self.correct / self.defined)
    }
}

/// Walks the common refinement of both paths. Time the estimate does not
/// cover counts as `N`.
fn for_each_overlap(
    reference: &TimedPath,
    estimate: &TimedPath,
    vocab: &Vocabulary,
    mut f: impl FnMut(ChordId, ChordId, f64),
) {
    let est = estimate.intervals();
    let mut j = 0usize;
    for &(rs, re, rid) in reference.intervals() {
        let mut t = rs;
        while t < re {
            while j < est.len() && est[j].1 <= t {
                j += 1;
            }
            let (eid, next) = match est.get(j) {
                Some(&(es, ee, eid)) if es <= t => (eid, ee.min(re)),
                Some(&(es, _, _)) => (vocab.no_chord(), es.min(re)),
                None => (vocab.no_chord(), re),
            };
            if next > t {
                f(rid, eid, next - t);
            }
            t = next;
        }
    }
}

/// Defined and correct time per reference class for one song.
pub fn song_tallies(
    spec: MetricSpec,
    reference: &TimedPath,
    estimate: &TimedPath,
    vocab: &Vocabulary,
) -> Vec<TimeTally> {
    let mut tallies = vec![TimeTally::default(); vocab.size()];
    for_each_overlap(reference, estimate, vocab, |r, e, dt| {
        let tally = &mut tallies[r.index()];
        match compare_labels(spec, r, e, vocab) {
            Outcome::Correct => {
                tally.defined += dt;
                tally.correct += dt;
            }
            Outcome::Incorrect => tally.defined += dt,
            Outcome::Undefined => {}
        }
    });
    tallies
}

fn total_tallies(
    exec: Execution,
    spec: MetricSpec,
    songs: &[(TimedPath, TimedPath)],
    vocab: &Vocabulary,
) -> Vec<TimeTally> {
    let per_song = par::map(exec, songs, |(r, e)| song_tallies(spec, r, e, vocab));
    let mut total = vec![TimeTally::default(); vocab.size()];
    for song in &per_song {
        for (t, s) in total.iter_mut().zip(song) {
            t.add(s);
        }
    }
    total
}

/// Percentage of defined time where the estimate is correct, pooled over songs.
pub fn wcsr(spec: MetricSpec, songs: &[(TimedPath, TimedPath)], vocab: &Vocabulary) -> Result<f64, MetricError> {
    wcsr_with(Execution::default(), spec, songs, vocab)
}

pub fn wcsr_with(
    exec: Execution,
    spec: MetricSpec,
    songs: &[(TimedPath, TimedPath)],
    vocab: &Vocabulary,
) -> Result<f64, MetricError> {
    let mut sum = TimeTally::default();
    for t in total_tallies(exec, spec, songs, vocab) {
        sum.add(&t);
    }
    sum.score().ok_or(MetricError::ZeroDefinedTime)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub id: ChordId,
    pub label: String,
    pub defined_time: f64,
    pub correct_time: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWiseScores {
    pub mean: f64,
    pub median: f64,
    pub classes: Vec<ClassScore>,
}

/// WCSR restricted to each reference class; mean and median over classes
/// with defined time.
pub fn class_wise_scores(
    spec: MetricSpec,
    songs: &[(TimedPath, TimedPath)],
    vocab: &Vocabulary,
) -> Result<ClassWiseScores, MetricError> {
    let classes: Vec<ClassScore> = total_tallies(Execution::default(), spec, songs, vocab)
        .into_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let id = ChordId(i as u16);
            t.score().map(|score| ClassScore {
                id,
                label: vocab.name(id),
                defined_time: t.defined,
                correct_time: t.correct,
                score,
            })
        })
        .collect();
    if classes.is_empty() {
        return Err(MetricError::ZeroDefinedTime);
    }
    let mut scores: Vec<f64> = classes.iter().map(|c| c.score).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    scores.sort_by(f64::total_cmp);
    let n = scores.len();
    let median = if n % 2 == 1 {
        scores[n / 2]
    } else {
        (scores[n / 2 - 1] + scores[n / 2]) / 2.0
    };
    Ok(ClassWiseScores { mean, median, classes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfusionAxis {
    Quality,
    Root,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub axis: ConfusionAxis,
    pub labels: Vec<String>,
    /// Rows are reference classes, columns predictions.
    pub values: Vec<Vec<f64>>,
}

fn axis_index(axis: ConfusionAxis, id: ChordId, vocab: &Vocabulary) -> usize {
    let n = match axis {
        ConfusionAxis::Quality => vocab.qualities().len(),
        ConfusionAxis::Root => 12,
    };
    match vocab.id_info(id) {
        Ok(IdInfo::Chord { root, quality }) => match axis {
            ConfusionAxis::Quality => vocab.quality_index(quality).expect("vocabulary quality"),
            ConfusionAxis::Root => root.value() as usize,
        },
        Ok(IdInfo::NoChord) => n,
        _ => n + 1,
    }
}

/// Frame-level confusion along the quality or root axis, with N and X as
/// the last two rows/columns.
pub fn confusion_matrix(
    axis: ConfusionAxis,
    songs: &[(Vec<ChordId>, Vec<ChordId>)],
    vocab: &Vocabulary,
    row_normalize: bool,
) -> Result<ConfusionMatrix, MetricError> {
    let mut labels: Vec<String> = match axis {
        ConfusionAxis::Quality => vocab.qualities().iter().map(|q| q.name().to_string()).collect(),
        ConfusionAxis::Root => (0..12)
            .map(|p| crate::pitch::PitchClass::new(p).name().to_string())
            .collect(),
    };
    labels.push("N".into());
    labels.push("X".into());
    let n = labels.len();
    let mut m = Array2::<f64>::zeros((n, n));
    for (r, e) in songs {
        if r.len() != e.len() {
            return Err(MetricError::LengthMismatch(r.len(), e.len()));
        }
        for (&a, &b) in r.iter().zip(e) {
            m[[axis_index(axis, a, vocab), axis_index(axis, b, vocab)]] += 1.0;
        }
    }
    if row_normalize {
        for mut row in m.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
    }
    Ok(ConfusionMatrix {
        axis,
        labels,
        values: m.rows().into_iter().map(|r| r.to_vec()).collect(),
    })
}

/// Fraction of frames where the ids match exactly.
pub fn frame_accuracy(reference: &[ChordId], estimate: &[ChordId]) -> f64 {
    let n = reference.len().min(estimate.len());
    if n == 0 {
        return 0.0;
    }
    reference.iter().zip(estimate).filter(|(a, b)| a == b).count() as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::parse_annotation;
    use crate::harte::parse_chord;

    fn id(v: &Vocabulary, s: &str) -> ChordId {
        v.map_label(&parse_chord(s).unwrap())
    }

    fn path(v: &Vocabulary, segs: &[(f64, f64, &str)]) -> TimedPath {
        TimedPath::new(segs.iter().map(|&(s, e, l)| (s, e, id(v, l))).collect())
    }

    #[test]
    fn comparator_examples() {
        let v = Vocabulary::full();
        let c = |spec, a: &str, b: &str| compare_labels(spec, id(&v, a), id(&v, b), &v);
        assert_eq!(c(MetricSpec::Mirex, "C:7", "C:maj"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Mirex, "G:maj", "E:min7"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Mirex, "C:maj", "C:min"), Outcome::Incorrect);
        assert_eq!(c(MetricSpec::Root, "C:maj7", "C:min"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Acc, "C:maj", "C:min"), Outcome::Incorrect);
        assert_eq!(c(MetricSpec::Acc, "X", "C:min"), Outcome::Undefined);
        assert_eq!(c(MetricSpec::Root, "N", "N"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Root, "N", "C:maj"), Outcome::Incorrect);
        assert_eq!(c(MetricSpec::Mirex, "C:maj", "N"), Outcome::Incorrect);
        assert_eq!(c(MetricSpec::Acc, "C:maj", "X"), Outcome::Incorrect);
    }

    #[test]
    fn third_and_seventh() {
        let v = Vocabulary::full();
        let c = |spec, a: &str, b: &str| compare_labels(spec, id(&v, a), id(&v, b), &v);
        assert_eq!(c(MetricSpec::Third, "C:maj7", "C:maj"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Third, "C:min7", "C:maj"), Outcome::Incorrect);
        assert_eq!(c(MetricSpec::Third, "C:sus2", "C:sus4"), Outcome::Incorrect);
        assert_eq!(c(MetricSpec::Third, "C:hdim7", "C:min"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Seventh, "C:maj7", "C:maj"), Outcome::Incorrect);
        assert_eq!(c(MetricSpec::Seventh, "C:7", "C:7"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Seventh, "C:maj", "C:maj6"), Outcome::Correct);
        assert_eq!(c(MetricSpec::Seventh, "C:dim", "C:dim"), Outcome::Undefined);
        assert_eq!(c(MetricSpec::Seventh, "C:sus4", "N"), Outcome::Undefined);
        assert_eq!(c(MetricSpec::Seventh, "N", "N"), Outcome::Correct);
    }

    #[test]
    fn majmin_reduction() {
        let v = Vocabulary::full();
        let c = |a: &str, b: &str| compare_labels(MetricSpec::Majmin, id(&v, a), id(&v, b), &v);
        assert_eq!(c("C:maj7", "C:maj"), Outcome::Correct);
        assert_eq!(c("A:min7", "A:min6"), Outcome::Correct);
        assert_eq!(c("A:hdim7", "A:min"), Outcome::Undefined);
        assert_eq!(c("C:maj", "C:sus4"), Outcome::Incorrect);
    }

    #[test]
    fn wcsr_examples() {
        let v = Vocabulary::full();
        let r = path(&v, &[(0.0, 10.0, "C:maj")]);
        let e = path(&v, &[(0.0, 5.0, "C:maj"), (5.0, 10.0, "C:min")]);
        assert_eq!(wcsr(MetricSpec::Acc, &[(r.clone(), e)], &v).unwrap(), 50.0);
        assert_eq!(wcsr(MetricSpec::Acc, &[(r.clone(), r.clone())], &v).unwrap(), 100.0);

        let r = path(&v, &[(0.0, 2.0, "X"), (2.0, 10.0, "G:maj")]);
        let e = path(&v, &[(0.0, 6.0, "G:maj"), (6.0, 10.0, "G:min")]);
        assert_eq!(wcsr(MetricSpec::Acc, &[(r, e)], &v).unwrap(), 50.0);

        let only_x = path(&v, &[(0.0, 3.0, "X")]);
        assert_eq!(
            wcsr(MetricSpec::Acc, &[(only_x.clone(), only_x)], &v),
            Err(MetricError::ZeroDefinedTime)
        );
    }

    #[test]
    fn wcsr_pools_time_across_songs() {
        let v = Vocabulary::full();
        let a = path(&v, &[(0.0, 1.0, "C:maj")]);
        let b = path(&v, &[(0.0, 3.0, "D:maj")]);
        let wrong = path(&v, &[(0.0, 3.0, "D:min")]);
        assert_eq!(wcsr(MetricSpec::Acc, &[(a.clone(), a), (b, wrong)], &v).unwrap(), 25.0);
    }

    #[test]
    fn uncovered_estimate_time_is_no_chord() {
        let v = Vocabulary::full();
        let r = path(&v, &[(0.0, 2.0, "C:maj"), (2.0, 4.0, "N")]);
        let e = path(&v, &[(0.0, 2.0, "C:maj")]);
        assert_eq!(wcsr(MetricSpec::Acc, &[(r, e)], &v).unwrap(), 100.0);
    }

    #[test]
    fn class_wise_examples() {
        let v = Vocabulary::full();
        let r = path(&v, &[(0.0, 1.0, "C:maj"), (1.0, 3.0, "D:min"), (3.0, 4.0, "E:7")]);
        let s = class_wise_scores(MetricSpec::Acc, &[(r.clone(), r.clone())], &v).unwrap();
        assert_eq!((s.mean, s.median, s.classes.len()), (100.0, 100.0, 3));

        let r2 = path(&v, &[(0.0, 1.0, "C:maj"), (1.0, 2.0, "D:min")]);
        let e2 = path(&v, &[(0.0, 1.0, "C:maj"), (1.0, 2.0, "D:maj")]);
        let s = class_wise_scores(MetricSpec::Acc, &[(r2, e2)], &v).unwrap();
        assert_eq!((s.mean, s.median), (50.0, 50.0));

        let e = path(&v, &[(0.0, 3.0, "C:maj"), (3.0, 4.0, "E:7")]);
        let s = class_wise_scores(MetricSpec::Acc, &[(r, e)], &v).unwrap();
        assert!((s.mean - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.median, 100.0);
    }

    #[test]
    fn subdividing_intervals_is_invisible() {
        let v = Vocabulary::full();
        let r = path(&v, &[(0.0, 4.0, "C:maj")]);
        let e = path(&v, &[(0.0, 1.5, "C:maj"), (1.5, 4.0, "A:min")]);
        let split = TimedPath {
            intervals: vec![
                (0.0, 0.7, id(&v, "C:maj")),
                (0.7, 1.5, id(&v, "C:maj")),
                (1.5, 4.0, id(&v, "A:min")),
            ],
        };
        assert_eq!(
            wcsr(MetricSpec::Acc, &[(r.clone(), e)], &v).unwrap(),
            wcsr(MetricSpec::Acc, &[(r, split)], &v).unwrap()
        );
    }

    #[test]
    fn path_from_annotation_and_frames() {
        let v = Vocabulary::full();
        let ann = parse_annotation("0\t1\tC:maj\n1\t2\tC:maj\n2\t2.5\tG:7").unwrap();
        let p = TimedPath::from_annotation(&ann, &v);
        assert_eq!(p.intervals().len(), 2);
        let grid = FrameGrid::new(0.3, 9);
        let ids = vec![id(&v, "C:maj"); 9];
        let fp = TimedPath::from_frames(&ids, &grid, 2.5);
        assert_eq!(fp.intervals(), &[(0.0, 2.5, id(&v, "C:maj"))]);
    }

    #[test]
    fn confusion() {
        let v = Vocabulary::full();
        let cmaj = id(&v, "C:maj");
        let cmin = id(&v, "C:min");
        let perfect = confusion_matrix(
            ConfusionAxis::Quality,
            &[(vec![cmaj, cmin], vec![cmaj, cmin])],
            &v,
            true,
        )
        .unwrap();
        assert_eq!(perfect.labels.len(), 16);
        for (i, row) in perfect.values.iter().enumerate() {
            let s: f64 = row.iter().sum();
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
            if s > 0.0 {
                assert_eq!(row[i], 1.0);
            }
        }
        let swapped = confusion_matrix(ConfusionAxis::Quality, &[(vec![cmaj; 4], vec![cmin; 4])], &v, true).unwrap();
        assert_eq!(swapped.values[0][1], 1.0);
        assert_eq!(swapped.values.iter().flatten().filter(|&&x| x != 0.0).count(), 1);

        let roots = confusion_matrix(
            ConfusionAxis::Root,
            &[(vec![cmaj, v.no_chord()], vec![id(&v, "D:maj"), v.unknown()])],
            &v,
            false,
        )
        .unwrap();
        assert_eq!(roots.labels.len(), 14);
        assert_eq!(roots.values[0][2], 1.0);
        assert_eq!(roots.values[12][13], 1.0);
        assert!(confusion_matrix(ConfusionAxis::Root, &[(vec![cmaj], vec![])], &v, false).is_err());
    }
}
