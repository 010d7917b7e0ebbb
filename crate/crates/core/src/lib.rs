//! Phonetic error correction for Chinese text.
//!
//! A sentence is matched against a dictionary (exact trie matches plus
//! bidirectional fuzzy-pinyin 2-gram matches), the resulting char-word
//! lattice is fused into a small transformer encoder through bilinear
//! char-word attention, and each position is decoded in parallel from a
//! mixture of a generative distribution and a copy distribution.

pub mod desm;
pub mod lexicon;
pub mod pinyin;
pub mod model;
pub mod vocab;
pub mod train;
pub mod corpus;
pub mod pipeline;
pub mod checkpoint;
pub mod eval;
pub mod cli;
