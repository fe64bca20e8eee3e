//! Pitch classes and pitch-class sets.

use std::fmt;

const NAMES: [&str; 12] = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"];

/// A pitch class in 0..12, C = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct PitchClass(u8);

impl PitchClass {
    pub const C: PitchClass = PitchClass(0);

    pub fn new(value: i32) -> Self {
        PitchClass(value.rem_euclid(12) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn transpose(self, semitones: i32) -> Self {
        PitchClass::new(i32::from(self.0) + semitones)
    }

    pub fn name(self) -> &'static str {
        NAMES[self.0 as usize]
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of pitch classes stored as a 12-bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct PitchSet(u16);

impl PitchSet {
    pub const EMPTY: PitchSet = PitchSet(0);

    pub fn from_classes(classes: &[u8]) -> Self {
        let mut set = PitchSet::EMPTY;
        for &c in classes {
            set.insert(c);
        }
        set
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, class: u8) {
        self.0 |= 1 << (class % 12);
    }

    pub fn remove(&mut self, class: u8) {
        self.0 &= !(1 << (class % 12));
    }

    pub fn contains(self, class: u8) -> bool {
        self.0 & (1 << (class % 12)) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PitchSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersection(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 & other.0)
    }

    /// Rotates every member up by `semitones` (mod 12).
    pub fn transpose(self, semitones: i32) -> PitchSet {
        let k = semitones.rem_euclid(12) as u32;
        let m = u32::from(self.0);
        PitchSet((((m << k) | (m >> (12 - k))) & 0xfff) as u16)
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..12u8).filter(move |&c| self.contains(c))
    }
}

impl fmt::Debug for PitchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rotate_wraps() {
        let s = PitchSet::from_classes(&[0, 4, 11]);
        assert_eq!(s.transpose(1), PitchSet::from_classes(&[1, 5, 0]));
        assert_eq!(s.transpose(-1), PitchSet::from_classes(&[11, 3, 10]));
        assert_eq!(s.transpose(12), s);
    }

    proptest! {
        #[test]
        fn transpose_matches_elementwise(bits in 0u16..4096, k in -24i32..24) {
            let s = PitchSet(bits);
            let expected: PitchSet = {
                let v: Vec<u8> = s.iter().map(|p| (i32::from(p) + k).rem_euclid(12) as u8).collect();
                PitchSet::from_classes(&v)
            };
            prop_assert_eq!(s.transpose(k), expected);
            prop_assert_eq!(s.transpose(k).transpose(-k), s);
        }
    }
}
