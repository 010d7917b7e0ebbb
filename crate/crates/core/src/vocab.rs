use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: u32 = 0;
pub const PAD: u32 = 1;

/// Character vocabulary. Ids 0 and 1 are UNK and PAD; the rest follow
/// code-point order so the mapping does not depend on input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl CharVocab {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        Self::from(set.into_iter().collect::<Vec<_>>())
    }

    /// Number of ids including the two reserved ones.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn id(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn ids(&self, s: &[char]) -> Vec<u32> {
        s.iter().map(|&c| self.id(c)).collect()
    }

    /// `None` for the reserved ids and anything out of range.
    pub fn char(&self, id: u32) -> Option<char> {
        (id as usize).checked_sub(2).and_then(|i| self.chars.get(i)).copied()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

impl From<Vec<char>> for CharVocab {
    fn from(chars: Vec<char>) -> Self {
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32 + 2))
            .collect();
        Self { chars, index }
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(v: CharVocab) -> Self {
        v.chars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_and_order() {
        let v = CharVocab::from_chars("加参参".chars());
        assert_eq!(v.len(), 4);
        assert_eq!(v.id('加'), 2);
        assert_eq!(v.id('参'), 3);
        assert_eq!(v.id('x'), UNK);
        assert_eq!(v.char(UNK), None);
        assert_eq!(v.char(PAD), None);
        assert_eq!(v.char(2), Some('加'));
        assert_eq!(v.char(9), None);
    }
}
