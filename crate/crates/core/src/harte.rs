//! Harte chord notation.
//!
//! Parses labels such as `C:maj7`, `A:hdim7/5` or `Bb:min(9,*5)` into a
//! structured [`ChordLabel`], prints them back in canonical form, transposes
//! them and resolves them to pitch-class sets.
//!
//! Supported grammar:
//!
//! ```text
//! label    := "N" | "X" | note [ ":" quality ] [ "(" degrees ")" ] [ "/" degree ]
//! note     := "A".."G" { "b" | "#" }
//! degrees  := item { "," item }
//! item     := [ "*" ] degree
//! degree   := { "b" | "#" } 1..13
//! ```
//!
//! A bare note (`C`, `C/3`) means a major chord. Interval-list-only chords
//! such as `C:(1,3,5)` are rejected.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::pitch::{PitchClass, PitchSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarteError {
    #[error("malformed chord `{text}`: {reason}")]
    MalformedChord { text: String, reason: String },
    #[error("degree `{0}` has no semitone mapping")]
    UnknownDegree(Degree),
}

fn malformed(text: &str, reason: impl Into<String>) -> HarteError {
    HarteError::MalformedChord {
        text: text.to_string(),
        reason: reason.into(),
    }
}

/// A scale degree with an accidental offset, e.g. `b7` or `#11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Degree {
    /// Net accidental: negative for flats, positive for sharps.
    pub accidental: i8,
    /// Interval number, 1 through 13.
    pub number: u8,
}

impl Degree {
    pub const fn new(accidental: i8, number: u8) -> Self {
        Self { accidental, number }
    }

    /// Semitones above the root, modulo 12.
    pub fn semitones(self) -> Result<u8, HarteError> {
        let natural: i32 = match self.number {
            1 => 0,
            2 | 9 => 2,
            3 => 4,
            4 | 11 => 5,
            5 => 7,
            6 | 13 => 9,
            7 => 11,
            _ => return Err(HarteError::UnknownDegree(self)),
        };
        Ok((natural + i32::from(self.accidental)).rem_euclid(12) as u8)
    }

    fn parse(token: &str) -> Option<Self> {
        let digits_at = token.find(|c: char| c.is_ascii_digit())?;
        let (mods, digits) = token.split_at(digits_at);
        let mut accidental: i8 = 0;
        for c in mods.chars() {
            accidental = match c {
                'b' => accidental.checked_sub(1)?,
                '#' => accidental.checked_add(1)?,
                _ => return None,
            };
        }
        if !digits.chars().all(|c| c.is_ascii_digit()) || digits.starts_with('0') {
            return None;
        }
        let number: u8 = digits.parse().ok()?;
        (1..=13).contains(&number).then_some(Self { accidental, number })
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sym = if self.accidental < 0 { "b" } else { "#" };
        for _ in 0..self.accidental.unsigned_abs() {
            f.write_str(sym)?;
        }
        write!(f, "{}", self.number)
    }
}

impl FromStr for Degree {
    type Err = HarteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Degree::parse(s).ok_or_else(|| malformed(s, "invalid degree"))
    }
}

macro_rules! qualities {
    ($( $variant:ident => $name:literal, [$($pc:literal),*]; )*) => {
        /// Shorthand chord qualities.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Quality {
            $( $variant, )*
        }

        impl Quality {
            pub const ALL: &'static [Quality] = &[$( Quality::$variant, )*];

            pub fn name(self) -> &'static str {
                match self {
                    $( Quality::$variant => $name, )*
                }
            }

            /// Root-relative pitch classes of the shorthand.
            pub fn template(self) -> PitchSet {
                match self {
                    $( Quality::$variant => PitchSet::from_classes(&[$($pc),*]), )*
                }
            }

            pub fn from_name(name: &str) -> Option<Quality> {
                match name {
                    $( $name => Some(Quality::$variant), )*
                    _ => None,
                }
            }
        }
    };
}

qualities! {
    Maj => "maj", [0, 4, 7];
    Min => "min", [0, 3, 7];
    Dim => "dim", [0, 3, 6];
    Aug => "aug", [0, 4, 8];
    Min6 => "min6", [0, 3, 7, 9];
    Maj6 => "maj6", [0, 4, 7, 9];
    Min7 => "min7", [0, 3, 7, 10];
    MinMaj7 => "minmaj7", [0, 3, 7, 11];
    Maj7 => "maj7", [0, 4, 7, 11];
    Dom7 => "7", [0, 4, 7, 10];
    Dim7 => "dim7", [0, 3, 6, 9];
    HalfDim7 => "hdim7", [0, 3, 6, 10];
    Sus2 => "sus2", [0, 2, 7];
    Sus4 => "sus4", [0, 5, 7];
    Maj9 => "maj9", [0, 2, 4, 7, 11];
    Min9 => "min9", [0, 2, 3, 7, 10];
    Dom9 => "9", [0, 2, 4, 7, 10];
    Min11 => "min11", [0, 2, 3, 5, 7, 10];
    Dom11 => "11", [0, 2, 4, 5, 7, 10];
    Maj13 => "maj13", [0, 2, 4, 7, 9, 11];
    Min13 => "min13", [0, 2, 3, 7, 9, 10];
    Dom13 => "13", [0, 2, 4, 7, 9, 10];
    Power => "5", [0, 7];
    Single => "1", [0];
}

impl serde::Serialize for Quality {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for Quality {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Quality::from_name(&name).ok_or_else(|| serde::de::Error::custom(format!("unknown quality {name}")))
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete chord: root, quality and degree modifications.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chord {
    pub root: PitchClass,
    pub quality: Quality,
    pub additions: Vec<Degree>,
    pub omissions: Vec<Degree>,
    pub bass: Option<Degree>,
}

impl Chord {
    pub fn new(root: PitchClass, quality: Quality) -> Self {
        Self {
            root,
            quality,
            additions: Vec::new(),
            omissions: Vec::new(),
            bass: None,
        }
    }

    pub fn with_bass(mut self, bass: Degree) -> Self {
        self.bass = Some(bass);
        self
    }

    /// Template plus additions minus omissions, relative to the root.
    pub fn relative_pitch_set(&self) -> Result<PitchSet, HarteError> {
        let mut set = self.quality.template();
        for d in &self.additions {
            set.insert(d.semitones()?);
        }
        for d in &self.omissions {
            set.remove(d.semitones()?);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChordKind {
    Chord,
    NoChord,
    Unknown,
}

/// A parsed Harte label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChordLabel {
    /// `N`: silence or no harmonic content.
    NoChord,
    /// `X`: harmony that cannot be named.
    Unknown,
    Chord(Chord),
}

impl ChordLabel {
    pub fn chord(root: PitchClass, quality: Quality) -> Self {
        ChordLabel::Chord(Chord::new(root, quality))
    }

    pub fn kind(&self) -> ChordKind {
        match self {
            ChordLabel::NoChord => ChordKind::NoChord,
            ChordLabel::Unknown => ChordKind::Unknown,
            ChordLabel::Chord(_) => ChordKind::Chord,
        }
    }

    pub fn root(&self) -> Option<PitchClass> {
        match self {
            ChordLabel::Chord(c) => Some(c.root),
            _ => None,
        }
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_chord(self))
    }
}

impl FromStr for ChordLabel {
    type Err = HarteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_chord(s)
    }
}

fn parse_note(text: &str, s: &str) -> Result<(PitchClass, usize), HarteError> {
    let mut chars = s.char_indices();
    let natural: i32 = match chars.next() {
        Some((_, 'C')) => 0,
        Some((_, 'D')) => 2,
        Some((_, 'E')) => 4,
        Some((_, 'F')) => 5,
        Some((_, 'G')) => 7,
        Some((_, 'A')) => 9,
        Some((_, 'B')) => 11,
        _ => return Err(malformed(text, "expected a note name A-G")),
    };
    let mut offset = 0i32;
    let mut end = 1;
    for (i, c) in chars {
        match c {
            'b' => offset -= 1,
            '#' => offset += 1,
            _ => break,
        }
        end = i + 1;
    }
    Ok((PitchClass::new(natural + offset), end))
}

fn parse_degree_list(text: &str, list: &str) -> Result<(Vec<Degree>, Vec<Degree>), HarteError> {
    let mut additions = Vec::new();
    let mut omissions = Vec::new();
    if list.trim().is_empty() {
        return Err(malformed(text, "empty degree list"));
    }
    for item in list.split(',') {
        let item = item.trim();
        let (omit, token) = match item.strip_prefix('*') {
            Some(rest) => (true, rest),
            None => (false, item),
        };
        let degree = Degree::parse(token).ok_or_else(|| malformed(text, format!("invalid degree `{item}`")))?;
        if omit {
            omissions.push(degree);
        } else {
            additions.push(degree);
        }
    }
    Ok((additions, omissions))
}

/// Parses a Harte chord label.
pub fn parse_chord(text: &str) -> Result<ChordLabel, HarteError> {
    match text {
        "" => return Err(malformed(text, "empty label")),
        "N" => return Ok(ChordLabel::NoChord),
        "X" => return Ok(ChordLabel::Unknown),
        _ => {}
    }
    if text.trim() != text {
        return Err(malformed(text, "surrounding whitespace"));
    }

    let (root, note_len) = parse_note(text, text)?;
    let mut rest = &text[note_len..];

    let (body, bass) = match rest.rfind('/') {
        Some(i) => {
            let token = &rest[i + 1..];
            let bass = Degree::parse(token).ok_or_else(|| malformed(text, format!("invalid bass degree `{token}`")))?;
            (&rest[..i], Some(bass))
        }
        None => (rest, None),
    };
    rest = body;

    let quality = if let Some(after) = rest.strip_prefix(':') {
        let q_end = after.find('(').unwrap_or(after.len());
        let name = &after[..q_end];
        rest = &after[q_end..];
        if name.is_empty() {
            return Err(malformed(text, "interval-list chords are not supported"));
        }
        Quality::from_name(name).ok_or_else(|| malformed(text, format!("unknown quality `{name}`")))?
    } else {
        Quality::Maj
    };

    let (additions, omissions) = if rest.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let inner = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| malformed(text, format!("unexpected `{rest}`")))?;
        parse_degree_list(text, inner)?
    };

    Ok(ChordLabel::Chord(Chord {
        root,
        quality,
        additions,
        omissions,
        bass,
    }))
}

/// Canonical Harte text for a label.
pub fn format_chord(label: &ChordLabel) -> String {
    let chord = match label {
        ChordLabel::NoChord => return "N".to_string(),
        ChordLabel::Unknown => return "X".to_string(),
        ChordLabel::Chord(c) => c,
    };
    let mut out = format!("{}:{}", chord.root.name(), chord.quality.name());
    if !chord.additions.is_empty() || !chord.omissions.is_empty() {
        let items: Vec<String> = chord
            .additions
            .iter()
            .map(Degree::to_string)
            .chain(chord.omissions.iter().map(|d| format!("*{d}")))
            .collect();
        out.push('(');
        out.push_str(&items.join(","));
        out.push(')');
    }
    if let Some(bass) = chord.bass {
        out.push('/');
        out.push_str(&bass.to_string());
    }
    out
}

/// Absolute pitch classes sounded by a chord (bass degree excluded).
pub fn pitch_class_set(label: &ChordLabel) -> Result<PitchSet, HarteError> {
    match label {
        ChordLabel::Chord(c) => Ok(c.relative_pitch_set()?.transpose(c.root.value() as i32)),
        other => Err(malformed(&format_chord(other), "no pitch content")),
    }
}

/// Shifts the root by `semitones`; `N` and `X` are unchanged.
pub fn transpose_label(label: &ChordLabel, semitones: i32) -> ChordLabel {
    match label {
        ChordLabel::Chord(c) => ChordLabel::Chord(Chord {
            root: c.root.transpose(semitones),
            ..c.clone()
        }),
        other => other.clone(),
    }
}
