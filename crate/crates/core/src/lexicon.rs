//! Dictionary with a character trie for exact span matching and an inverted
//! index from fuzzy pinyin 2-grams to two-character words.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pinyin::{FuzzyClassTable, FuzzyKey, PinyinSyllable, PinyinTable};

pub const MAX_WORD_LEN: usize = 4;
const MAGIC: &str = "desm-lexicon";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: character {ch:?} has no pinyin reading")]
    MissingPinyin { ch: char, line: usize },
    #[error("line {0}: malformed word entry")]
    MalformedLine(usize),
    #[error("word {0:?} is longer than {MAX_WORD_LEN} characters")]
    WordTooLong(String),
    #[error("line {line}: duplicate word {surface:?}")]
    DuplicateWord { surface: String, line: usize },
    #[error("not a serialized lexicon (bad magic)")]
    BadMagic,
    #[error("unsupported lexicon format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt lexicon file: {0}")]
    Corrupt(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl ToString) -> LexiconError {
    LexiconError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordEntry {
    pub word_id: u32,
    pub surface: String,
    /// Readings per character; every inner list is nonempty.
    pub readings: Vec<Vec<PinyinSyllable>>,
    pub frequency: u64,
}

impl WordEntry {
    pub fn chars(&self) -> Vec<char> {
        self.surface.chars().collect()
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    /// Primary reading of each character.
    pub fn pinyin(&self) -> Vec<&PinyinSyllable> {
        self.readings.iter().map(|r| &r[0]).collect()
    }
}

/// An exact match of `sentence[start..=end]` against a lexicon word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WordMatch {
    pub start: usize,
    pub end: usize,
    pub word_id: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct TrieNode {
    children: Vec<(char, u32)>,
    word: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Trie {
    nodes: Vec<TrieNode>,
}

impl Trie {
    fn new() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
        }
    }

    fn child(&self, node: u32, c: char) -> Option<u32> {
        let children = &self.nodes[node as usize].children;
        children
            .binary_search_by_key(&c, |&(k, _)| k)
            .ok()
            .map(|i| children[i].1)
    }

    fn insert(&mut self, word: &[char], id: u32) -> Option<u32> {
        let mut node = 0u32;
        for &c in word {
            node = match self.child(node, c) {
                Some(n) => n,
                None => {
                    let n = self.nodes.len() as u32;
                    self.nodes.push(TrieNode::default());
                    let children = &mut self.nodes[node as usize].children;
                    let pos = children.partition_point(|&(k, _)| k < c);
                    children.insert(pos, (c, n));
                    n
                }
            };
        }
        self.nodes[node as usize].word.replace(id)
    }
}

type BigramKey = (FuzzyKey, FuzzyKey);

/// Read-only after construction; share freely across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<WordEntry>,
    trie: Trie,
    pinyin_index: BTreeMap<BigramKey, Vec<u32>>,
    fuzzy: FuzzyClassTable,
}

/// Parses `surface\tfrequency` lines (frequency optional, default 1).
pub fn parse_word_file(text: &str) -> Result<Vec<(String, u64, usize)>, LexiconError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let mut fields = l.split('\t');
        let surface = fields.next().unwrap_or("").trim();
        let freq = match fields.next() {
            None => 1,
            Some(f) => f
                .trim()
                .parse::<u64>()
                .map_err(|_| LexiconError::MalformedLine(line))?,
        };
        if fields.next().is_some() || surface.is_empty() || surface.chars().any(char::is_whitespace)
        {
            return Err(LexiconError::MalformedLine(line));
        }
        out.push((surface.to_string(), freq, line));
    }
    Ok(out)
}

impl Lexicon {
    /// Builds from a word file on disk. Word ids follow file order.
    pub fn from_word_file(
        path: &Path,
        ptable: &PinyinTable,
        fuzzy: &FuzzyClassTable,
    ) -> Result<Self, LexiconError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_word_text(&text, ptable, fuzzy)
    }

    pub fn from_word_text(
        text: &str,
        ptable: &PinyinTable,
        fuzzy: &FuzzyClassTable,
    ) -> Result<Self, LexiconError> {
        Self::build_lines(parse_word_file(text)?, ptable, fuzzy)
    }

    /// Builds from `(surface, frequency)` pairs in id order.
    pub fn build<S: AsRef<str>>(
        words: impl IntoIterator<Item = (S, u64)>,
        ptable: &PinyinTable,
        fuzzy: &FuzzyClassTable,
    ) -> Result<Self, LexiconError> {
        let lines = words
            .into_iter()
            .enumerate()
            .map(|(i, (s, f))| (s.as_ref().to_string(), f, i + 1))
            .collect();
        Self::build_lines(lines, ptable, fuzzy)
    }

    fn build_lines(
        lines: Vec<(String, u64, usize)>,
        ptable: &PinyinTable,
        fuzzy: &FuzzyClassTable,
    ) -> Result<Self, LexiconError> {
        let mut entries = Vec::with_capacity(lines.len());
        let mut trie = Trie::new();
        for (surface, frequency, line) in lines {
            let chars: Vec<char> = surface.chars().collect();
            if chars.len() > MAX_WORD_LEN {
                return Err(LexiconError::WordTooLong(surface));
            }
            let readings = chars
                .iter()
                .map(|&ch| {
                    let r = ptable.readings(ch);
                    if r.is_empty() {
                        Err(LexiconError::MissingPinyin { ch, line })
                    } else {
                        Ok(r.to_vec())
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let word_id = entries.len() as u32;
            if trie.insert(&chars, word_id).is_some() {
                return Err(LexiconError::DuplicateWord { surface, line });
            }
            entries.push(WordEntry {
                word_id,
                surface,
                readings,
                frequency,
            });
        }
        Ok(Self::assemble(entries, trie, fuzzy.clone()))
    }

    fn assemble(entries: Vec<WordEntry>, trie: Trie, fuzzy: FuzzyClassTable) -> Self {
        let mut pinyin_index: BTreeMap<BigramKey, Vec<u32>> = BTreeMap::new();
        for e in entries.iter().filter(|e| e.len() == 2) {
            for a in &e.readings[0] {
                for b in &e.readings[1] {
                    let bucket = pinyin_index.entry((fuzzy.key(a), fuzzy.key(b))).or_default();
                    if !bucket.contains(&e.word_id) {
                        bucket.push(e.word_id);
                    }
                }
            }
        }
        for bucket in pinyin_index.values_mut() {
            bucket.sort_by_key(|&id| (std::cmp::Reverse(entries[id as usize].frequency), id));
        }
        Self {
            entries,
            trie,
            pinyin_index,
            fuzzy,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[WordEntry] {
        &self.entries
    }

    pub fn entry(&self, word_id: u32) -> &WordEntry {
        &self.entries[word_id as usize]
    }

    pub fn fuzzy_table(&self) -> &FuzzyClassTable {
        &self.fuzzy
    }

    /// Exact word id for a surface form.
    pub fn lookup(&self, surface: &str) -> Option<u32> {
        let mut node = 0;
        for c in surface.chars() {
            node = self.trie.child(node, c)?;
        }
        self.trie.nodes[node as usize].word
    }

    /// Every span of `sentence` equal to a lexicon word, sorted by
    /// `(start, end)`. Spans may overlap.
    pub fn match_all(&self, sentence: &[char]) -> Vec<WordMatch> {
        let mut out = Vec::new();
        for start in 0..sentence.len() {
            let mut node = 0;
            for (end, &c) in sentence.iter().enumerate().skip(start).take(MAX_WORD_LEN) {
                match self.trie.child(node, c) {
                    Some(n) => node = n,
                    None => break,
                }
                if let Some(word_id) = self.trie.nodes[node as usize].word {
                    out.push(WordMatch {
                        start,
                        end,
                        word_id,
                    });
                }
            }
        }
        out
    }

    /// Two-character words whose fuzzy pinyin pair equals that of `(a, b)`,
    /// by descending frequency then word id.
    pub fn pinyin_2gram_lookup(&self, a: &PinyinSyllable, b: &PinyinSyllable) -> &[u32] {
        self.pinyin_index
            .get(&(self.fuzzy.key(a), self.fuzzy.key(b)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn to_json(&self) -> String {
        let file = LexiconFile {
            magic: MAGIC.to_string(),
            version: FORMAT_VERSION,
            fuzzy: self.fuzzy.clone(),
            entries: self.entries.clone(),
            trie: self.trie.nodes.clone(),
            pinyin_index: self
                .pinyin_index
                .iter()
                .map(|((a, b), ids)| IndexRecord {
                    key: [a.clone(), b.clone()],
                    words: ids.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("lexicon serializes")
    }

    /// Parses a serialized lexicon, checking its header and that the stored
    /// indexes agree with the entry list.
    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        #[derive(Deserialize)]
        struct Header {
            magic: String,
            version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| LexiconError::Corrupt(e.to_string()))?;
        if header.magic != MAGIC {
            return Err(LexiconError::BadMagic);
        }
        if header.version != FORMAT_VERSION {
            return Err(LexiconError::UnsupportedVersion(header.version));
        }
        let file: LexiconFile =
            serde_json::from_str(text).map_err(|e| LexiconError::Corrupt(e.to_string()))?;
        let fuzzy = file.fuzzy.reindexed();
        let mut trie = Trie::new();
        for (i, e) in file.entries.iter().enumerate() {
            let n = e.surface.chars().count();
            if e.word_id as usize != i || n == 0 || n > MAX_WORD_LEN || e.readings.len() != n {
                return Err(LexiconError::Corrupt(format!("bad entry {i}")));
            }
            if e.readings.iter().any(Vec::is_empty) {
                return Err(LexiconError::Corrupt(format!("entry {i} lacks a reading")));
            }
            let chars: Vec<char> = e.surface.chars().collect();
            if trie.insert(&chars, e.word_id).is_some() {
                return Err(LexiconError::Corrupt(format!("duplicate entry {i}")));
            }
        }
        let lex = Self::assemble(file.entries, trie, fuzzy);
        if lex.trie.nodes != file.trie {
            return Err(LexiconError::Corrupt("trie does not match entries".into()));
        }
        let stored: BTreeMap<BigramKey, Vec<u32>> = file
            .pinyin_index
            .into_iter()
            .map(|r| {
                let [a, b] = r.key;
                ((a, b), r.words)
            })
            .collect();
        if stored != lex.pinyin_index {
            return Err(LexiconError::Corrupt("pinyin index does not match entries".into()));
        }
        Ok(lex)
    }

    pub fn save(&self, path: &Path) -> Result<(), LexiconError> {
        fs::write(path, self.to_json()).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text)
    }

    /// Order-sensitive fingerprint of the surfaces, used to pair checkpoints
    /// with the lexicon they were trained against.
    pub fn fingerprint(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for e in &self.entries {
            h.update(e.surface.as_bytes());
            h.update(b"\n");
        }
        h.finalize()
    }
}

#[derive(Serialize, Deserialize)]
struct IndexRecord {
    key: [FuzzyKey; 2],
    words: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct LexiconFile {
    magic: String,
    version: u32,
    fuzzy: FuzzyClassTable,
    entries: Vec<WordEntry>,
    trie: Vec<TrieNode>,
    pinyin_index: Vec<IndexRecord>,
}

/// Free-function form of [`Lexicon::match_all`].
pub fn trie_match_all(lex: &Lexicon, sentence: &[char]) -> Vec<WordMatch> {
    lex.match_all(sentence)
}

pub fn pinyin_2gram_lookup(lex: &Lexicon, a: &PinyinSyllable, b: &PinyinSyllable) -> Vec<u32> {
    lex.pinyin_2gram_lookup(a, b).to_vec()
}
