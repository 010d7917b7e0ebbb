//! Dynamic error scaling: turns a sentence into a per-character lattice of
//! word candidates.
//!
//! Exact trie matches attach correct words to the characters they cover.
//! Characters that no exact match of length two or more covers are marked
//! suspect, and every two-character window touching a suspect is looked up
//! phonetically in both directions. Phonetic candidates attach to both
//! characters of the window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicon;
use crate::pinyin::PinyinTable;

pub const DEFAULT_M_MAX: usize = 5;

/// Reserved ids in the model's word vocabulary; lexicon word `k` maps to
/// `k + WORD_ID_OFFSET`.
pub const WORD_UNK: u32 = 0;
pub const WORD_PAD: u32 = 1;
pub const WORD_ID_OFFSET: u32 = 2;

/// Ranked best-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Exact,
    PinyinExact,
    PinyinFuzzy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    None,
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub word_id: u32,
    /// Inclusive character span.
    pub span: (usize, usize),
    pub provenance: Provenance,
    pub direction: Direction,
}

/// Which candidate sources feed the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeMode {
    /// No word candidates at all.
    None,
    /// Exact trie matches only.
    TtmOnly,
    /// Exact matches plus bidirectional pinyin 2-gram matches.
    #[default]
    Desm,
}

impl std::str::FromStr for LatticeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "ttm" | "ttm-only" => Ok(Self::TtmOnly),
            "desm" => Ok(Self::Desm),
            _ => Err(format!("unknown lattice mode {s:?} (expected none, ttm-only or desm)")),
        }
    }
}

impl std::fmt::Display for LatticeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::TtmOnly => "ttm-only",
            Self::Desm => "desm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharWordLattice {
    pub sentence: Vec<char>,
    pub per_char: Vec<Vec<MatchCandidate>>,
    pub suspect: Vec<bool>,
}

/// Fixed-width candidate ids for the model, row-major `[n × m_max]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeFeatures {
    pub n: usize,
    pub m_max: usize,
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl LatticeFeatures {
    /// All padding; what the model sees without a lexicon.
    pub fn empty(n: usize, m_max: usize) -> Self {
        Self {
            n,
            m_max,
            ids: vec![WORD_PAD; n * m_max],
            mask: vec![false; n * m_max],
        }
    }

    pub fn row(&self, i: usize) -> (&[u32], &[bool]) {
        let r = i * self.m_max..(i + 1) * self.m_max;
        (&self.ids[r.clone()], &self.mask[r])
    }
}

/// Position `i` is suspect iff no exact match spanning two or more
/// characters covers it.
pub fn mark_suspects(lex: &Lexicon, sentence: &[char]) -> Vec<bool> {
    let mut suspect = vec![true; sentence.len()];
    for m in lex.match_all(sentence) {
        if m.end > m.start {
            suspect[m.start..=m.end].iter_mut().for_each(|s| *s = false);
        }
    }
    suspect
}

pub fn build_lattice(
    lex: &Lexicon,
    ptable: &PinyinTable,
    sentence: &[char],
    m_max: usize,
) -> CharWordLattice {
    build_lattice_with_mode(lex, ptable, sentence, m_max, LatticeMode::Desm)
}

pub fn build_lattice_with_mode(
    lex: &Lexicon,
    ptable: &PinyinTable,
    sentence: &[char],
    m_max: usize,
    mode: LatticeMode,
) -> CharWordLattice {
    let n = sentence.len();
    let suspect = mark_suspects(lex, sentence);
    // position -> word_id -> best candidate so far
    let mut slots: Vec<BTreeMap<u32, MatchCandidate>> = vec![BTreeMap::new(); n];
    let mut offer = |pos: usize, cand: MatchCandidate| {
        slots[pos]
            .entry(cand.word_id)
            .and_modify(|cur| {
                if (cand.provenance, cand.span.0) < (cur.provenance, cur.span.0) {
                    *cur = cand;
                }
            })
            .or_insert(cand);
    };

    if mode != LatticeMode::None {
        for m in lex.match_all(sentence) {
            let cand = MatchCandidate {
                word_id: m.word_id,
                span: (m.start, m.end),
                provenance: Provenance::Exact,
                direction: Direction::None,
            };
            for pos in m.start..=m.end {
                offer(pos, cand);
            }
        }
    }

    if mode == LatticeMode::Desm {
        for i in 0..n.saturating_sub(1) {
            if !(suspect[i] || suspect[i + 1]) {
                continue;
            }
            let direction = if suspect[i] {
                Direction::Forward
            } else {
                Direction::Backward
            };
            let (ra, rb) = (ptable.readings(sentence[i]), ptable.readings(sentence[i + 1]));
            let mut found: Vec<u32> = Vec::new();
            for a in ra {
                for b in rb {
                    for &id in lex.pinyin_2gram_lookup(a, b) {
                        if !found.contains(&id) {
                            found.push(id);
                        }
                    }
                }
            }
            for id in found {
                let entry = lex.entry(id);
                let exact_sound = ra.iter().any(|a| entry.readings[0].iter().any(|w| w.same_segments(a)))
                    && rb.iter().any(|b| entry.readings[1].iter().any(|w| w.same_segments(b)));
                let cand = MatchCandidate {
                    word_id: id,
                    span: (i, i + 1),
                    provenance: if exact_sound {
                        Provenance::PinyinExact
                    } else {
                        Provenance::PinyinFuzzy
                    },
                    direction,
                };
                offer(i, cand);
                offer(i + 1, cand);
            }
        }
    }

    let per_char = slots
        .into_iter()
        .map(|slot| {
            let mut list: Vec<MatchCandidate> = slot.into_values().collect();
            list.sort_by_key(|c| {
                (
                    c.provenance,
                    std::cmp::Reverse(lex.entry(c.word_id).frequency),
                    c.word_id,
                )
            });
            list.truncate(m_max);
            list
        })
        .collect();
    CharWordLattice {
        sentence: sentence.to_vec(),
        per_char,
        suspect,
    }
}

/// Pads each position's candidate list to `m_max` model word ids.
pub fn lattice_to_feature_ids(lat: &CharWordLattice, m_max: usize) -> LatticeFeatures {
    let mut f = LatticeFeatures::empty(lat.sentence.len(), m_max);
    for (i, cands) in lat.per_char.iter().enumerate() {
        for (j, c) in cands.iter().take(m_max).enumerate() {
            f.ids[i * m_max + j] = c.word_id + WORD_ID_OFFSET;
            f.mask[i * m_max + j] = true;
        }
    }
    f
}

#[derive(Debug, Serialize)]
struct CandidateRecord<'a> {
    word: &'a str,
    span: [usize; 2],
    provenance: Provenance,
    direction: Direction,
}

#[derive(Debug, Serialize)]
struct PositionRecord<'a> {
    sentence: usize,
    position: usize,
    #[serde(rename = "char")]
    ch: String,
    suspect: bool,
    candidates: Vec<CandidateRecord<'a>>,
}

impl CharWordLattice {
    pub fn len(&self) -> usize {
        self.sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence.is_empty()
    }

    /// One JSON object per position.
    pub fn to_json_lines(&self, lex: &Lexicon, sentence_index: usize) -> Vec<String> {
        (0..self.len())
            .map(|i| {
                let rec = PositionRecord {
                    sentence: sentence_index,
                    position: i,
                    ch: self.sentence[i].to_string(),
                    suspect: self.suspect[i],
                    candidates: self.per_char[i]
                        .iter()
                        .map(|c| CandidateRecord {
                            word: &lex.entry(c.word_id).surface,
                            span: [c.span.0, c.span.1],
                            provenance: c.provenance,
                            direction: c.direction,
                        })
                        .collect(),
                };
                serde_json::to_string(&rec).expect("record serializes")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinyin::FuzzyClassTable;

    fn setup(words: &str) -> (Lexicon, PinyinTable) {
        let t = PinyinTable::parse(
            "参\tcan1\n加\tjia1\n禅\tchan2\n家\tjia1\n会\thui4\n议\tyi4\n我\two3\n",
        )
        .unwrap();
        let lex = Lexicon::from_word_text(words, &t, &FuzzyClassTable::default()).unwrap();
        (lex, t)
    }

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn words(lat: &CharWordLattice, lex: &Lexicon, i: usize) -> Vec<String> {
        lat.per_char[i]
            .iter()
            .map(|c| lex.entry(c.word_id).surface.clone())
            .collect()
    }

    #[test]
    fn suspects_follow_coverage() {
        let (lex, _) = setup("参加\n会议\n");
        assert_eq!(
            mark_suspects(&lex, &chars("我参家会议")),
            vec![true, true, true, false, false]
        );
        assert_eq!(mark_suspects(&lex, &chars("参加会议")), vec![false; 4]);
        assert_eq!(mark_suspects(&lex, &chars("参")), vec![true]);
    }

    #[test]
    fn running_example() {
        let (lex, t) = setup("参加\n禅家\n");
        let lat = build_lattice(&lex, &t, &chars("参家"), DEFAULT_M_MAX);
        assert_eq!(words(&lat, &lex, 0), ["参加", "禅家"]);
        assert_eq!(words(&lat, &lex, 1), ["参加", "禅家"]);
        let c = lat.per_char[1][0];
        assert_eq!(c.provenance, Provenance::PinyinExact);
        assert_eq!(c.direction, Direction::Forward);
        assert_eq!(lat.per_char[1][1].provenance, Provenance::PinyinFuzzy);
    }

    #[test]
    fn correct_sentence_has_only_exact_candidates() {
        let (lex, t) = setup("参加\n禅家\n会议\n");
        let lat = build_lattice(&lex, &t, &chars("参加会议"), DEFAULT_M_MAX);
        assert!(lat.per_char.iter().flatten().all(|c| c.provenance == Provenance::Exact));
        assert_eq!(words(&lat, &lex, 1), ["参加"]);
    }

    #[test]
    fn unreadable_character_contributes_nothing() {
        let (lex, t) = setup("参加\n禅家\n");
        let lat = build_lattice(&lex, &t, &chars("参x"), DEFAULT_M_MAX);
        assert!(lat.per_char.iter().all(Vec::is_empty));
    }

    #[test]
    fn window_directions() {
        let (lex, t) = setup("参加\n会议\n议加\n");
        let lat = build_lattice(&lex, &t, &chars("会议参家"), DEFAULT_M_MAX);
        assert_eq!(lat.suspect, [false, false, true, true]);
        let c = lat.per_char[2].iter().find(|c| lex.entry(c.word_id).surface == "参加").unwrap();
        assert_eq!((c.span, c.direction), ((2, 3), Direction::Forward));

        // The suspect sits right of a covered character: looked up backward.
        let lat = build_lattice(&lex, &t, &chars("会议家"), DEFAULT_M_MAX);
        let c = lat.per_char[2][0];
        assert_eq!(lex.entry(c.word_id).surface, "议加");
        assert_eq!((c.span, c.direction, c.provenance), ((1, 2), Direction::Backward, Provenance::PinyinExact));
        assert_eq!(words(&lat, &lex, 1), ["会议", "议加"]);
    }

    #[test]
    fn modes_filter_sources() {
        let (lex, t) = setup("参加\n禅家\n会议\n");
        let s = chars("参家会议");
        let none = build_lattice_with_mode(&lex, &t, &s, 5, LatticeMode::None);
        assert!(none.per_char.iter().all(Vec::is_empty));
        let ttm = build_lattice_with_mode(&lex, &t, &s, 5, LatticeMode::TtmOnly);
        assert!(ttm.per_char[0].is_empty() && ttm.per_char[1].is_empty());
        assert_eq!(words(&ttm, &lex, 2), ["会议"]);
    }

    #[test]
    fn feature_padding() {
        let (lex, t) = setup("参加\n禅家\n");
        let lat = build_lattice(&lex, &t, &chars("参家我"), 5);
        let f = lattice_to_feature_ids(&lat, 5);
        let (ids, mask) = f.row(0);
        assert_eq!(ids, [2, 3, WORD_PAD, WORD_PAD, WORD_PAD]);
        assert_eq!(mask, [true, true, false, false, false]);
        let (ids, mask) = f.row(2);
        assert_eq!(ids, [WORD_PAD; 5]);
        assert_eq!(mask, [false; 5]);
    }

    #[test]
    fn truncation_keeps_ranking_order() {
        // Seven homophone words of (ji, jia); frequencies chosen so ranking differs from ids.
        let mut ptable = String::new();
        let firsts = ['机', '鸡', '基', '激', '积', '迹', '击'];
        for c in firsts {
            ptable.push_str(&format!("{c}\tji1\n"));
        }
        ptable.push_str("加\tjia1\n家\tjia1\n几\tji3\n");
        let t = PinyinTable::parse(&ptable).unwrap();
        let freqs = [3u64, 7, 1, 7, 5, 2, 9];
        let words: Vec<(String, u64)> = firsts
            .iter()
            .zip(freqs)
            .map(|(c, f)| (format!("{c}加"), f))
            .collect();
        let lex = Lexicon::build(words.iter().map(|(s, f)| (s.as_str(), *f)), &t, &FuzzyClassTable::default())
            .unwrap();
        let lat = build_lattice(&lex, &t, &chars("几家"), 5);
        // Reference ordering computed independently: frequency desc, then id.
        let mut order: Vec<usize> = (0..7).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(freqs[i]), i));
        let expect: Vec<u32> = order[..5].iter().map(|&i| i as u32).collect();
        let got: Vec<u32> = lat.per_char[0].iter().map(|c| c.word_id).collect();
        assert_eq!(got, expect);
        assert_eq!(expect, [6, 1, 3, 4, 0]);
        let f = lattice_to_feature_ids(&lat, 5);
        assert_eq!(f.row(1).0, [8, 3, 5, 6, 2]);
    }

    #[test]
    fn json_lines_shape() {
        let (lex, t) = setup("参加\n禅家\n");
        let lat = build_lattice(&lex, &t, &chars("参家"), 5);
        let lines = lat.to_json_lines(&lex, 0);
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        assert_eq!(v["char"], "家");
        assert_eq!(v["candidates"][1]["word"], "禅家");
        assert_eq!(v["candidates"][1]["provenance"], "PINYIN_FUZZY");
        assert_eq!(v["candidates"][0]["span"], serde_json::json!([0, 1]));
    }
}
