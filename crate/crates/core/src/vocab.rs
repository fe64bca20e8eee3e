//! Closed chord vocabularies and the label → class mapping.
//!
//! Chord classes are numbered `quality_index * 12 + root`; the last two ids
//! are `N` and `X`. The full vocabulary has 14 qualities (C = 170); the
//! major/minor vocabulary has two (C = 26) and is reached by first mapping
//! into the full vocabulary and then reducing.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::harte::{self, ChordLabel, Quality};
use crate::pitch::{PitchClass, PitchSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("chord id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("unsupported vocabulary size {0} (expected 170 or 26)")]
    UnsupportedSize(usize),
    #[error("malformed vocabulary manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

/// Index of a class in a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChordId(pub u16);

impl ChordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ChordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Decoded form of a [`ChordId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdInfo {
    Chord { root: PitchClass, quality: Quality },
    NoChord,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VocabKind {
    /// 14 qualities, C = 170.
    Full,
    /// maj/min only, C = 26.
    MajMin,
}

const FULL_QUALITIES: [Quality; 14] = [
    Quality::Maj,
    Quality::Min,
    Quality::Dim,
    Quality::Aug,
    Quality::Min6,
    Quality::Maj6,
    Quality::Min7,
    Quality::MinMaj7,
    Quality::Maj7,
    Quality::Dom7,
    Quality::Dim7,
    Quality::HalfDim7,
    Quality::Sus2,
    Quality::Sus4,
];

const MAJMIN_QUALITIES: [Quality; 2] = [Quality::Maj, Quality::Min];

const MANIFEST_HEADER: &str = "chordkit-vocab 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    kind: VocabKind,
    qualities: Vec<Quality>,
}

impl Vocabulary {
    pub fn full() -> Self {
        Self {
            kind: VocabKind::Full,
            qualities: FULL_QUALITIES.to_vec(),
        }
    }

    pub fn majmin() -> Self {
        Self {
            kind: VocabKind::MajMin,
            qualities: MAJMIN_QUALITIES.to_vec(),
        }
    }

    pub fn with_size(size: usize) -> Result<Self, VocabError> {
        match size {
            170 => Ok(Self::full()),
            26 => Ok(Self::majmin()),
            other => Err(VocabError::UnsupportedSize(other)),
        }
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    /// Number of classes, C.
    pub fn size(&self) -> usize {
        self.qualities.len() * 12 + 2
    }

    pub fn qualities(&self) -> &[Quality] {
        &self.qualities
    }

    pub fn quality_index(&self, quality: Quality) -> Option<usize> {
        self.qualities.iter().position(|&q| q == quality)
    }

    pub fn no_chord(&self) -> ChordId {
        ChordId((self.size() - 2) as u16)
    }

    pub fn unknown(&self) -> ChordId {
        ChordId((self.size() - 1) as u16)
    }

    pub fn chord_id(&self, root: PitchClass, quality: Quality) -> Option<ChordId> {
        self.quality_index(quality)
            .map(|q| ChordId((q * 12 + root.value() as usize) as u16))
    }

    pub fn ids(&self) -> impl Iterator<Item = ChordId> {
        (0..self.size() as u16).map(ChordId)
    }

    pub fn check(&self, id: ChordId) -> Result<(), VocabError> {
        if id.index() < self.size() {
            Ok(())
        } else {
            Err(VocabError::IdOutOfRange {
                id: id.index(),
                size: self.size(),
            })
        }
    }

    pub fn id_info(&self, id: ChordId) -> Result<IdInfo, VocabError> {
        self.check(id)?;
        let i = id.index();
        let chords = self.qualities.len() * 12;
        Ok(if i < chords {
            IdInfo::Chord {
                root: PitchClass::new((i % 12) as i32),
                quality: self.qualities[i / 12],
            }
        } else if i == chords {
            IdInfo::NoChord
        } else {
            IdInfo::Unknown
        })
    }

    /// Harte label of a class.
    pub fn label(&self, id: ChordId) -> Result<ChordLabel, VocabError> {
        Ok(match self.id_info(id)? {
            IdInfo::Chord { root, quality } => ChordLabel::chord(root, quality),
            IdInfo::NoChord => ChordLabel::NoChord,
            IdInfo::Unknown => ChordLabel::Unknown,
        })
    }

    pub fn name(&self, id: ChordId) -> String {
        self.label(id)
            .map(|l| harte::format_chord(&l))
            .unwrap_or_else(|_| format!("#{}", id.0))
    }

    /// Absolute pitch classes of a chord class; `None` for N, X and out-of-range ids.
    pub fn pitch_set(&self, id: ChordId) -> Option<PitchSet> {
        match self.id_info(id).ok()? {
            IdInfo::Chord { root, quality } => Some(quality.template().transpose(root.value() as i32)),
            _ => None,
        }
    }

    /// Maps any label into this vocabulary. Total: unmappable chords become `X`.
    pub fn map_label(&self, label: &ChordLabel) -> ChordId {
        let chord = match label {
            ChordLabel::NoChord => return self.no_chord(),
            ChordLabel::Unknown => return self.unknown(),
            ChordLabel::Chord(c) => c,
        };
        let Ok(relative) = chord.relative_pitch_set() else {
            return self.unknown();
        };
        let Some(quality) = match_full_quality(relative) else {
            return self.unknown();
        };
        let quality = match self.kind {
            VocabKind::Full => Some(quality),
            VocabKind::MajMin => reduce_quality(quality),
        };
        quality
            .and_then(|q| self.chord_id(chord.root, q))
            .unwrap_or_else(|| self.unknown())
    }

    /// Rotates the root of a chord class; N and X are fixed points.
    pub fn transpose_id(&self, id: ChordId, semitones: i32) -> Result<ChordId, VocabError> {
        Ok(match self.id_info(id)? {
            IdInfo::Chord { root, quality } => self
                .chord_id(root.transpose(semitones), quality)
                .expect("quality belongs to vocabulary"),
            _ => id,
        })
    }

    /// Root class used by the auxiliary root head: 0..12 for chords, 12 for N, 13 for X.
    pub fn root_class(&self, id: ChordId) -> usize {
        match self.id_info(id) {
            Ok(IdInfo::Chord { root, .. }) => root.value() as usize,
            Ok(IdInfo::NoChord) => 12,
            _ => 13,
        }
    }

    /// Reduces a class to the maj/min vocabulary: maj-family → maj, min-family → min,
    /// anything else → X.
    pub fn reduce_majmin(&self, id: ChordId) -> IdInfo {
        match self.id_info(id) {
            Ok(IdInfo::Chord { root, quality }) => match reduce_quality(quality) {
                Some(q) => IdInfo::Chord { root, quality: q },
                None => IdInfo::Unknown,
            },
            Ok(info) => info,
            Err(_) => IdInfo::Unknown,
        }
    }

    /// Versioned text manifest: quality order and templates.
    pub fn manifest(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\nsize {}\n", self.size());
        for q in &self.qualities {
            let pcs: Vec<String> = q.template().iter().map(|p| p.to_string()).collect();
            out.push_str(&format!("quality {} {}\n", q.name(), pcs.join(",")));
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self, VocabError> {
        let err = |line: usize, reason: &str| VocabError::Manifest {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, MANIFEST_HEADER)) => {}
            Some((n, _)) => return Err(err(n, "bad header")),
            None => return Err(err(1, "empty manifest")),
        }
        let (n, size_line) = lines.next().ok_or_else(|| err(2, "missing size"))?;
        let size: usize = size_line
            .strip_prefix("size ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(n, "bad size line"))?;
        let mut qualities = Vec::new();
        for (n, line) in lines.filter(|(_, l)| !l.is_empty()) {
            let mut parts = line.split_whitespace();
            if parts.next() != Some("quality") {
                return Err(err(n, "expected `quality`"));
            }
            let name = parts.next().ok_or_else(|| err(n, "missing quality name"))?;
            let q = Quality::from_name(name).ok_or_else(|| err(n, "unknown quality"))?;
            let pcs: Option<Vec<u8>> = parts
                .next()
                .ok_or_else(|| err(n, "missing template"))?
                .split(',')
                .map(|p| p.parse().ok())
                .collect();
            let template = PitchSet::from_classes(&pcs.ok_or_else(|| err(n, "bad template"))?);
            if template != q.template() {
                return Err(err(n, "template does not match quality"));
            }
            qualities.push(q);
        }
        let vocab = Vocabulary::with_size(size)?;
        if vocab.qualities != qualities {
            return Err(err(0, "quality order does not match a known vocabulary"));
        }
        Ok(vocab)
    }

    /// SHA-256 of the manifest, hex encoded.
    pub fn manifest_hash(&self) -> String {
        let digest = Sha256::digest(self.manifest().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn match_full_quality(relative: PitchSet) -> Option<Quality> {
    if let Some(&q) = FULL_QUALITIES.iter().find(|q| q.template() == relative) {
        return Some(q);
    }
    // Triad fallback, in priority order.
    [Quality::Maj, Quality::Min, Quality::Dim, Quality::Aug]
        .into_iter()
        .find(|q| q.template().is_subset(relative))
}

fn reduce_quality(q: Quality) -> Option<Quality> {
    let t = q.template();
    if Quality::Maj.template().is_subset(t) {
        Some(Quality::Maj)
    } else if Quality::Min.template().is_subset(t) {
        Some(Quality::Min)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harte::{parse_chord, transpose_label};

    fn id_of(v: &Vocabulary, s: &str) -> ChordId {
        v.map_label(&parse_chord(s).unwrap())
    }

    #[test]
    fn sizes_and_sentinels() {
        let full = Vocabulary::full();
        assert_eq!(full.size(), 170);
        assert_eq!(full.no_chord(), ChordId(168));
        assert_eq!(full.unknown(), ChordId(169));
        let small = Vocabulary::majmin();
        assert_eq!(small.size(), 26);
        assert!(Vocabulary::with_size(25).is_err());
    }

    #[test]
    fn documented_mapping_examples() {
        let full = Vocabulary::full();
        let small = Vocabulary::majmin();
        assert_eq!(small.name(id_of(&small, "C:maj7")), "C:maj");
        assert_eq!(id_of(&small, "A:hdim7/5"), small.unknown());
        assert_eq!(full.name(id_of(&full, "C:maj6(9)")), "C:maj");
        assert_eq!(full.name(id_of(&full, "A:hdim7/5")), "A:hdim7");
    }

    #[test]
    fn sentinels_and_unmappable() {
        let full = Vocabulary::full();
        assert_eq!(id_of(&full, "N"), full.no_chord());
        assert_eq!(id_of(&full, "X"), full.unknown());
        assert_eq!(id_of(&full, "C:5"), full.unknown());
        assert_eq!(id_of(&full, "C:maj(*3)"), full.unknown());
        assert_eq!(id_of(&full, "C:maj(8)"), full.unknown());
        // 9th chords fall back to their triad
        assert_eq!(full.name(id_of(&full, "D:min9")), "D:min");
    }

    #[test]
    fn id_info_scheme() {
        let full = Vocabulary::full();
        assert_eq!(
            full.id_info(ChordId(0)).unwrap(),
            IdInfo::Chord {
                root: PitchClass::C,
                quality: Quality::Maj
            }
        );
        assert_eq!(full.id_info(ChordId(168)).unwrap(), IdInfo::NoChord);
        let h = full.quality_index(Quality::HalfDim7).unwrap();
        assert_eq!(
            full.id_info(ChordId((9 + 12 * h) as u16)).unwrap(),
            IdInfo::Chord {
                root: PitchClass::new(9),
                quality: Quality::HalfDim7
            }
        );
        assert!(matches!(
            full.id_info(ChordId(170)),
            Err(VocabError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn transpose_ids() {
        let full = Vocabulary::full();
        let cmaj = id_of(&full, "C:maj");
        assert_eq!(full.transpose_id(cmaj, 0).unwrap(), cmaj);
        assert_eq!(full.transpose_id(full.no_chord(), 5).unwrap(), full.no_chord());
        assert_eq!(
            full.transpose_id(id_of(&full, "A:min"), 3).unwrap(),
            id_of(&full, "C:min")
        );
        assert!(full.transpose_id(ChordId(500), 1).is_err());
    }

    #[test]
    fn every_class_maps_to_itself() {
        for v in [Vocabulary::full(), Vocabulary::majmin()] {
            for id in v.ids() {
                assert_eq!(v.map_label(&v.label(id).unwrap()), id);
            }
        }
    }

    #[test]
    fn templates_distinct() {
        let mut seen: Vec<PitchSet> = FULL_QUALITIES.iter().map(|q| q.template()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 14);
        assert!(FULL_QUALITIES.iter().all(|q| q.template().contains(0)));
    }

    #[test]
    fn root_equivariance_over_harte_qualities() {
        for v in [Vocabulary::full(), Vocabulary::majmin()] {
            for &q in Quality::ALL {
                for root in 0..12 {
                    let label = ChordLabel::chord(PitchClass::new(root), q);
                    for k in 0..12 {
                        assert_eq!(
                            v.map_label(&transpose_label(&label, k)),
                            v.transpose_id(v.map_label(&label), k).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        for v in [Vocabulary::full(), Vocabulary::majmin()] {
            assert_eq!(Vocabulary::from_manifest(&v.manifest()).unwrap(), v);
        }
        assert_ne!(Vocabulary::full().manifest_hash(), Vocabulary::majmin().manifest_hash());
        let tampered = Vocabulary::full().manifest().replace("maj 0,4,7", "maj 0,4,8");
        assert!(Vocabulary::from_manifest(&tampered).is_err());
    }

    #[test]
    fn root_classes() {
        let full = Vocabulary::full();
        assert_eq!(full.root_class(id_of(&full, "A:min")), 9);
        assert_eq!(full.root_class(full.no_chord()), 12);
        assert_eq!(full.root_class(full.unknown()), 13);
    }
}
