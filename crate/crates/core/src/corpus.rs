//! Parallel correction data: the two-column TSV format, a homophone-noising
//! generator, and a seeded synthetic phonology for desk-scale experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use log::debug;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::pinyin::{all_syllables, FuzzyClassTable, PinyinSyllable, PinyinTable};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {0}: source and target differ in length")]
    LengthMismatch(usize),
    #[error("line {0}: expected `source<TAB>target`")]
    MalformedLine(usize),
    #[error("cannot generate from an empty lexicon")]
    EmptyLexicon,
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// A source sentence and its equal-length correction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub source: Vec<char>,
    pub target: Vec<char>,
}

impl ParallelPair {
    pub fn new(source: &str, target: &str) -> Result<Self, CorpusError> {
        let pair = Self {
            source: source.chars().collect(),
            target: target.chars().collect(),
        };
        if pair.source.len() != pair.target.len() {
            return Err(CorpusError::LengthMismatch(0));
        }
        Ok(pair)
    }

    pub fn error_positions(&self) -> Vec<usize> {
        (0..self.source.len())
            .filter(|&i| self.source[i] != self.target[i])
            .collect()
    }

    pub fn source_string(&self) -> String {
        self.source.iter().collect()
    }

    pub fn target_string(&self) -> String {
        self.target.iter().collect()
    }
}

/// Sentence and differing-character counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub errors: usize,
}

pub fn corpus_stats(pairs: &[ParallelPair]) -> CorpusStats {
    CorpusStats {
        sentences: pairs.len(),
        errors: pairs.iter().map(|p| p.error_positions().len()).sum(),
    }
}

pub fn parse_parallel_tsv(text: &str) -> Result<Vec<ParallelPair>, CorpusError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim_end_matches('\r');
        if l.is_empty() {
            continue;
        }
        let mut f = l.split('\t');
        let (Some(src), Some(tgt), None) = (f.next(), f.next(), f.next()) else {
            return Err(CorpusError::MalformedLine(line));
        };
        let pair = ParallelPair::new(src, tgt).map_err(|_| CorpusError::LengthMismatch(line))?;
        out.push(pair);
    }
    Ok(out)
}

/// Loads `source\ttarget` lines and logs the corpus shape.
pub fn load_parallel_tsv(path: &Path) -> Result<Vec<ParallelPair>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let pairs = parse_parallel_tsv(&text)?;
    let stats = corpus_stats(&pairs);
    log::info!(
        "{}: {} sentences, {} error characters",
        path.display(),
        stats.sentences,
        stats.errors
    );
    Ok(pairs)
}

pub fn to_parallel_tsv(pairs: &[ParallelPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.source_string());
        out.push('\t');
        out.push_str(&p.target_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-character substitution probability.
    pub error_rate: f64,
    /// Share of substitutions drawn from fuzzy rather than exact homophones.
    pub fuzzy_confusion_prob: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        for (name, p) in [("error_rate", self.error_rate), ("fuzzy_confusion_prob", self.fuzzy_confusion_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::InvalidNoise(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// For every character, the characters sharing a toneless reading and those
/// sharing only a fuzzy-equivalent one.
#[derive(Debug, Clone, Default)]
pub struct HomophoneTable {
    exact: BTreeMap<char, Vec<char>>,
    fuzzy: BTreeMap<char, Vec<char>>,
}

impl HomophoneTable {
    pub fn new(ptable: &PinyinTable, fuzzy: &FuzzyClassTable) -> Self {
        let mut by_sound: BTreeMap<String, BTreeSet<char>> = BTreeMap::new();
        let mut by_key: BTreeMap<String, BTreeSet<char>> = BTreeMap::new();
        for c in ptable.chars() {
            for r in ptable.readings(c) {
                by_sound.entry(r.toneless()).or_default().insert(c);
                by_key.entry(fuzzy.key(r).to_string()).or_default().insert(c);
            }
        }
        let mut exact = BTreeMap::new();
        let mut fuzzy_map = BTreeMap::new();
        for c in ptable.chars() {
            let mut ex = BTreeSet::new();
            let mut fz = BTreeSet::new();
            for r in ptable.readings(c) {
                ex.extend(by_sound[&r.toneless()].iter().copied());
                fz.extend(by_key[&fuzzy.key(r).to_string()].iter().copied());
            }
            ex.remove(&c);
            fz.remove(&c);
            let fz: Vec<char> = fz.difference(&ex).copied().collect();
            exact.insert(c, ex.into_iter().collect());
            fuzzy_map.insert(c, fz);
        }
        Self {
            exact,
            fuzzy: fuzzy_map,
        }
    }

    pub fn exact(&self, c: char) -> &[char] {
        self.exact.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn fuzzy(&self, c: char) -> &[char] {
        self.fuzzy.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Generated pairs plus where the noise went.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub pairs: Vec<ParallelPair>,
    /// Injected error positions per pair.
    pub injected: Vec<Vec<usize>>,
    /// Characters chosen for corruption that had no homophone.
    pub unsubstitutable: usize,
}

/// Targets are concatenations of lexicon words drawn in proportion to
/// their frequencies; each target
/// character is swapped for a homophone with probability `error_rate`.
pub fn generate_synthetic(
    lex: &Lexicon,
    ptable: &PinyinTable,
    n_sentences: usize,
    len_range: RangeInclusive<usize>,
    noise: &NoiseSpec,
) -> Result<SyntheticCorpus, CorpusError> {
    noise.validate()?;
    if lex.is_empty() {
        return Err(CorpusError::EmptyLexicon);
    }
    let homophones = HomophoneTable::new(ptable, lex.fuzzy_table());
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let (min_len, max_len) = (*len_range.start(), (*len_range.end()).max(*len_range.start()));
    let words: Vec<Vec<char>> = lex.entries().iter().map(|e| e.chars()).collect();
    let weights = WeightedIndex::new(lex.entries().iter().map(|e| e.frequency.max(1)))
        .expect("positive word weights");
    let mut pairs = Vec::with_capacity(n_sentences);
    let mut injected = Vec::with_capacity(n_sentences);
    let mut unsubstitutable = 0;
    for _ in 0..n_sentences {
        let goal = rng.gen_range(min_len..=max_len);
        let mut target: Vec<char> = Vec::new();
        let mut attempts = 0;
        while target.len() < goal && attempts < 64 {
            let w = &words[weights.sample(&mut rng)];
            if target.len() + w.len() <= max_len {
                target.extend(w);
            }
            attempts += 1;
        }
        let mut source = target.clone();
        let mut positions = Vec::new();
        for (i, &c) in target.iter().enumerate() {
            if !rng.gen_bool(noise.error_rate) {
                continue;
            }
            let use_fuzzy = rng.gen_bool(noise.fuzzy_confusion_prob);
            let (first, second) = if use_fuzzy {
                (homophones.fuzzy(c), homophones.exact(c))
            } else {
                (homophones.exact(c), homophones.fuzzy(c))
            };
            let pool = if first.is_empty() { second } else { first };
            match pool.choose(&mut rng) {
                Some(&sub) => {
                    source[i] = sub;
                    positions.push(i);
                }
                None => {
                    debug!("no homophone for {c:?}; left unchanged");
                    unsubstitutable += 1;
                }
            }
        }
        pairs.push(ParallelPair { source, target });
        injected.push(positions);
    }
    Ok(SyntheticCorpus {
        pairs,
        injected,
        unsubstitutable,
    })
}

/// Shape of a generated toy phonology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhonologySpec {
    /// Distinct syllables before fuzzy partners are added.
    pub base_syllables: usize,
    /// Probability of also including each fuzzy partner of a base syllable.
    pub partner_prob: f64,
    pub chars_per_syllable: usize,
    /// Two-character words to draw.
    pub words: usize,
    /// Word `r` (0-based) gets frequency `round(1e4 / (r + 1)^zipf_exponent)`,
    /// at least 1. Zero gives every word the same frequency.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for PhonologySpec {
    fn default() -> Self {
        Self {
            base_syllables: 90,
            partner_prob: 0.6,
            chars_per_syllable: 3,
            words: 500,
            zipf_exponent: 1.0,
            seed: 0,
        }
    }
}

/// A generated word list and its pinyin table.
#[derive(Debug, Clone, PartialEq)]
pub struct Phonology {
    pub words: Vec<(String, u64)>,
    pub pinyin: PinyinTable,
}

impl Phonology {
    pub fn word_file(&self) -> String {
        self.words.iter().map(|(w, f)| format!("{w}\t{f}\n")).collect()
    }
}

/// Assigns real pinyin syllables to CJK code points and draws random
/// two-character words over them. Readings are invented; only their
/// homophone structure matters.
pub fn synthetic_phonology(spec: &PhonologySpec, fuzzy: &FuzzyClassTable) -> Phonology {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut all: Vec<PinyinSyllable> = all_syllables().map(|s| PinyinSyllable::parse(s).unwrap()).collect();
    all.shuffle(&mut rng);
    let mut chosen: Vec<PinyinSyllable> = Vec::new();
    let mut seen = BTreeSet::new();
    for s in all.iter().take(spec.base_syllables) {
        if seen.insert(s.toneless()) {
            chosen.push(s.clone());
        }
        for p in all.iter().filter(|p| fuzzy.equivalent(p, s) && !p.same_segments(s)) {
            if rng.gen_bool(spec.partner_prob) && seen.insert(p.toneless()) {
                chosen.push(p.clone());
            }
        }
    }
    let n_chars = chosen.len() * spec.chars_per_syllable;
    let mut codepoints: Vec<u32> = (0x4E00..0x4E00 + (n_chars as u32) * 8).collect();
    codepoints.shuffle(&mut rng);
    let mut pinyin = PinyinTable::new();
    let mut chars = Vec::with_capacity(n_chars);
    for (k, cp) in codepoints.into_iter().take(n_chars).enumerate() {
        let c = char::from_u32(cp).expect("CJK block code point");
        let mut r = chosen[k / spec.chars_per_syllable].clone();
        r.tone = rng.gen_range(1..=4);
        pinyin.insert(c, r);
        chars.push(c);
    }
    let mut surfaces = BTreeSet::new();
    let mut words = Vec::with_capacity(spec.words);
    let max_pairs = chars.len() * chars.len().saturating_sub(1);
    while words.len() < spec.words.min(max_pairs) {
        let a = chars[rng.gen_range(0..chars.len())];
        let b = chars[rng.gen_range(0..chars.len())];
        if a == b {
            continue;
        }
        let w: String = [a, b].iter().collect();
        if surfaces.insert(w.clone()) {
            let f = (1e4 / (words.len() as f64 + 1.0).powf(spec.zipf_exponent)).round().max(1.0);
            words.push((w, f as u64));
        }
    }
    Phonology { words, pinyin }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_parsing() {
        let pairs = parse_parallel_tsv("我参家会议\t我参加会议\n参加\t参加\n").unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].error_positions(), [2]);
        assert!(pairs[1].error_positions().is_empty());
        assert_eq!(corpus_stats(&pairs), CorpusStats { sentences: 2, errors: 1 });
        assert!(matches!(parse_parallel_tsv("参加\t参加\n参\t参加\n"), Err(CorpusError::LengthMismatch(2))));
        assert!(matches!(parse_parallel_tsv("参加\n"), Err(CorpusError::MalformedLine(1))));
        assert_eq!(parse_parallel_tsv(&to_parallel_tsv(&pairs)).unwrap(), pairs);
    }

    #[test]
    fn homophone_table_splits_exact_and_fuzzy() {
        let t = PinyinTable::parse("参\tcan1\n餐\tcan1\n禅\tchan2\n家\tjia1\n").unwrap();
        let h = HomophoneTable::new(&t, &FuzzyClassTable::default());
        assert_eq!(h.exact('参'), ['餐']);
        assert_eq!(h.fuzzy('参'), ['禅']);
        assert!(h.exact('家').is_empty() && h.fuzzy('家').is_empty());
    }

    #[test]
    fn noise_validation() {
        let bad = NoiseSpec { error_rate: 1.5, fuzzy_confusion_prob: 0.0, seed: 0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn phonology_is_seeded_and_homophone_rich() {
        let fuzzy = FuzzyClassTable::default();
        let spec = PhonologySpec { words: 100, ..Default::default() };
        let a = synthetic_phonology(&spec, &fuzzy);
        assert_eq!(a, synthetic_phonology(&spec, &fuzzy));
        assert_eq!(a.words.len(), 100);
        let h = HomophoneTable::new(&a.pinyin, &fuzzy);
        assert!(a.pinyin.chars().all(|c| !h.exact(c).is_empty()));
        assert!(a.pinyin.chars().any(|c| !h.fuzzy(c).is_empty()));
    }
}
