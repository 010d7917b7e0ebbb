//! Ties a trained model to its vocabulary and lexicon for end-to-end use.

use serde::Serialize;

use crate::corpus::ParallelPair;
use crate::desm::{build_lattice_with_mode, lattice_to_feature_ids, LatticeFeatures, LatticeMode};
use crate::lexicon::Lexicon;
use crate::model::{argmax, Example, GateMode, Model, ModelError};
use crate::pinyin::PinyinTable;
use crate::train::TrainConfig;
use crate::vocab::CharVocab;

/// Vocabulary over every character of the corpora and the lexicon.
pub fn build_vocab<'a>(pairs: impl IntoIterator<Item = &'a ParallelPair>, lex: &Lexicon) -> CharVocab {
    let mut chars: Vec<char> = Vec::new();
    for p in pairs {
        chars.extend(&p.source);
        chars.extend(&p.target);
    }
    for e in lex.entries() {
        chars.extend(e.chars());
    }
    CharVocab::from_chars(chars)
}

/// Per-position output of [`Corrector::correct`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionResult {
    pub output: String,
    pub omega: Vec<f64>,
    /// Top-k `(char, probability)` per position; reserved ids show as `None`.
    pub top_k: Vec<Vec<(Option<char>, f64)>>,
}

pub struct Corrector {
    pub model: Model,
    pub vocab: CharVocab,
    pub lexicon: Lexicon,
    pub pinyin: PinyinTable,
}

impl Corrector {
    pub fn new(model: Model, vocab: CharVocab, lexicon: Lexicon, pinyin: PinyinTable) -> Self {
        Self {
            model,
            vocab,
            lexicon,
            pinyin,
        }
    }

    /// Fresh untrained model sized for `vocab` and `lexicon`.
    pub fn untrained(
        config: &TrainConfig,
        vocab: CharVocab,
        lexicon: Lexicon,
        pinyin: PinyinTable,
    ) -> Result<Self, ModelError> {
        let mcfg = config.model_config(vocab.len(), lexicon.len() + 2);
        Ok(Self::new(Model::new(mcfg)?, vocab, lexicon, pinyin))
    }

    pub fn lattice_mode(&self) -> LatticeMode {
        self.model.config.lattice_mode
    }

    pub fn features(&self, sentence: &[char]) -> LatticeFeatures {
        let m = self.model.config.m_max;
        let lat = build_lattice_with_mode(&self.lexicon, &self.pinyin, sentence, m, self.lattice_mode());
        lattice_to_feature_ids(&lat, m)
    }

    pub fn example(&self, pair: &ParallelPair) -> Example {
        Example {
            char_ids: self.vocab.ids(&pair.source),
            features: self.features(&pair.source),
            gold: self.vocab.ids(&pair.target),
        }
    }

    /// Examples for training; sentences longer than the model's maximum
    /// length are split into chunks.
    pub fn examples(&self, pairs: &[ParallelPair]) -> Vec<Example> {
        let cap = self.model.config.max_len.max(1);
        let mut out = Vec::new();
        for p in pairs {
            for (s, t) in p.source.chunks(cap).zip(p.target.chunks(cap)) {
                out.push(self.example(&ParallelPair {
                    source: s.to_vec(),
                    target: t.to_vec(),
                }));
            }
        }
        out
    }

    pub fn correct(&self, sentence: &str) -> Result<CorrectionResult, ModelError> {
        self.correct_top_k(sentence, 1)
    }

    /// Greedy per-position decoding. A prediction of a reserved id keeps
    /// the input character.
    pub fn correct_top_k(&self, sentence: &str, k: usize) -> Result<CorrectionResult, ModelError> {
        let chars: Vec<char> = sentence.chars().collect();
        let mut result = CorrectionResult {
            output: String::with_capacity(sentence.len()),
            omega: Vec::with_capacity(chars.len()),
            top_k: Vec::with_capacity(chars.len()),
        };
        for chunk in chars.chunks(self.model.config.max_len.max(1)) {
            let ids = self.vocab.ids(chunk);
            let out = self.model.forward(&ids, &self.features(chunk), GateMode::Learned)?;
            for (i, &c) in chunk.iter().enumerate() {
                let row = out.probs.row(i);
                result.output.push(self.vocab.char(argmax(row) as u32).unwrap_or(c));
                result.omega.push(out.omega[i]);
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                result.top_k.push(
                    order
                        .into_iter()
                        .take(k)
                        .map(|j| (self.vocab.char(j as u32), row[j]))
                        .collect(),
                );
            }
        }
        Ok(result)
    }
}
