use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::ModelError;
use crate::desm::{LatticeMode, DEFAULT_M_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    #[default]
    Gelu,
    Tanh,
}

/// Model dimensions and switches. Both vocabularies reserve id 0 for UNK
/// and id 1 for PAD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub char_vocab_size: usize,
    pub word_vocab_size: usize,
    pub d_c: usize,
    pub d_w: usize,
    pub layers: usize,
    pub heads: usize,
    /// Encoder feed-forward width.
    pub d_ff: usize,
    /// Copy-gate hidden width.
    pub d_g: usize,
    pub m_max: usize,
    pub max_len: usize,
    pub seed: u64,
    /// With the copy head off, the output is the generative distribution alone.
    pub copy: bool,
    pub gate_activation: GateActivation,
    /// Initial copy-gate bias; positive starts training copy-dominant.
    pub copy_bias_init: f64,
    pub lattice_mode: LatticeMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            char_vocab_size: 2,
            word_vocab_size: 2,
            d_c: 64,
            d_w: 32,
            layers: 2,
            heads: 2,
            d_ff: 256,
            d_g: 64,
            m_max: DEFAULT_M_MAX,
            max_len: 512,
            seed: 0,
            copy: true,
            gate_activation: GateActivation::Gelu,
            copy_bias_init: 2.0,
            lattice_mode: LatticeMode::Desm,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("char_vocab_size", self.char_vocab_size),
            ("word_vocab_size", self.word_vocab_size),
            ("d_c", self.d_c),
            ("d_w", self.d_w),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
            ("d_g", self.d_g),
            ("m_max", self.m_max),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.char_vocab_size < 2 || self.word_vocab_size < 2 {
            return Err(ModelError::InvalidConfig(
                "vocabularies must include the UNK and PAD ids".into(),
            ));
        }
        if self.d_c % self.heads != 0 {
            return Err(ModelError::InvalidConfig("d_c must be divisible by heads".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every trainable tensor. Gradients and optimizer moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `[v × d_c]`
    pub char_emb: Tensor,
    /// `[max_len × d_c]`
    pub pos_emb: Tensor,
    pub blocks: Vec<BlockParams>,
    pub final_ln_g: Tensor,
    pub final_ln_b: Tensor,
    /// `[word_vocab × d_w]`
    pub word_emb: Tensor,
    /// Bilinear attention matrix, `[d_c × d_c]`.
    pub w_attn: Tensor,
    /// Word projection `[d_c × d_w]` and bias `[d_c]`.
    pub w_word: Tensor,
    pub b_word: Tensor,
    /// Generative head `[v × d_c]`, `[v]`.
    pub w_gen: Tensor,
    pub b_gen: Tensor,
    /// Copy gate: `[d_g × d_c]`, `[d_g]`, layer norm over `d_g`, `[d_g]`, `[1]`.
    pub gate_w1: Tensor,
    pub gate_b1: Tensor,
    pub gate_ln_g: Tensor,
    pub gate_ln_b: Tensor,
    pub gate_w2: Tensor,
    pub gate_b2: Tensor,
}

fn vector(n: usize) -> Tensor {
    Tensor::zeros(1, n)
}

impl BlockParams {
    fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.d_c;
        let s = 1.0 / (d as f64).sqrt();
        Self {
            ln1_g: Tensor::filled(1, d, 1.0),
            ln1_b: vector(d),
            wq: Tensor::randn(d, d, s, rng),
            bq: vector(d),
            wk: Tensor::randn(d, d, s, rng),
            bk: vector(d),
            wv: Tensor::randn(d, d, s, rng),
            bv: vector(d),
            wo: Tensor::randn(d, d, s / (2.0 * cfg.layers.max(1) as f64).sqrt(), rng),
            bo: vector(d),
            ln2_g: Tensor::filled(1, d, 1.0),
            ln2_b: vector(d),
            w1: Tensor::randn(cfg.d_ff, d, s, rng),
            b1: vector(cfg.d_ff),
            w2: Tensor::randn(
                d,
                cfg.d_ff,
                1.0 / ((cfg.d_ff * 2 * cfg.layers.max(1)) as f64).sqrt(),
                rng,
            ),
            b2: vector(d),
        }
    }

    fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        let fields: [(&str, &Tensor); 16] = [
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ];
        out.extend(fields.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
    }

    fn all_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_g,
            &mut self.ln2_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

impl ModelParams {
    /// Seeded initialization.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.d_c;
        let s = 1.0 / (d as f64).sqrt();
        let char_emb = Tensor::randn(cfg.char_vocab_size, d, 0.5, &mut rng);
        let pos_emb = Tensor::randn(cfg.max_len, d, 0.1, &mut rng);
        let blocks = (0..cfg.layers)
            .map(|_| BlockParams::init(cfg, &mut rng))
            .collect();
        let word_emb = Tensor::randn(cfg.word_vocab_size, cfg.d_w, 0.5, &mut rng);
        let w_attn = Tensor::randn(d, d, s, &mut rng);
        let w_word = Tensor::randn(d, cfg.d_w, 1.0 / (cfg.d_w as f64).sqrt(), &mut rng);
        let w_gen = Tensor::randn(cfg.char_vocab_size, d, s, &mut rng);
        let gate_w1 = Tensor::randn(cfg.d_g, d, s, &mut rng);
        let gate_w2 = Tensor::randn(1, cfg.d_g, 0.1 / (cfg.d_g as f64).sqrt(), &mut rng);
        Self {
            char_emb,
            pos_emb,
            blocks,
            final_ln_g: Tensor::filled(1, d, 1.0),
            final_ln_b: vector(d),
            word_emb,
            w_attn,
            w_word,
            b_word: vector(d),
            w_gen,
            b_gen: vector(cfg.char_vocab_size),
            gate_w1,
            gate_b1: vector(cfg.d_g),
            gate_ln_g: Tensor::filled(1, cfg.d_g, 1.0),
            gate_ln_b: vector(cfg.d_g),
            gate_w2,
            gate_b2: Tensor::filled(1, 1, cfg.copy_bias_init),
        }
    }

    /// Tensors in their declared (checkpoint) order, with dotted names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("char_emb".into(), &self.char_emb),
            ("pos_emb".into(), &self.pos_emb),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            b.named(&format!("block{i}"), &mut out);
        }
        let tail: [(&str, &Tensor); 14] = [
            ("final_ln_g", &self.final_ln_g),
            ("final_ln_b", &self.final_ln_b),
            ("word_emb", &self.word_emb),
            ("w_attn", &self.w_attn),
            ("w_word", &self.w_word),
            ("b_word", &self.b_word),
            ("w_gen", &self.w_gen),
            ("b_gen", &self.b_gen),
            ("gate_w1", &self.gate_w1),
            ("gate_b1", &self.gate_b1),
            ("gate_ln_g", &self.gate_ln_g),
            ("gate_ln_b", &self.gate_ln_b),
            ("gate_w2", &self.gate_w2),
            ("gate_b2", &self.gate_b2),
        ];
        out.extend(tail.into_iter().map(|(n, t)| (n.to_string(), t)));
        out
    }

    /// Same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.char_emb, &mut self.pos_emb];
        for b in &mut self.blocks {
            out.extend(b.all_mut());
        }
        out.extend([
            &mut self.final_ln_g,
            &mut self.final_ln_b,
            &mut self.word_emb,
            &mut self.w_attn,
            &mut self.w_word,
            &mut self.b_word,
            &mut self.w_gen,
            &mut self.b_gen,
            &mut self.gate_w1,
            &mut self.gate_b1,
            &mut self.gate_ln_g,
            &mut self.gate_ln_b,
            &mut self.gate_w2,
            &mut self.gate_b2,
        ]);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    pub fn add_assign(&mut self, other: &Self) {
        let others: Vec<&Tensor> = other.named_tensors().into_iter().map(|(_, t)| t).collect();
        for (a, b) in self.tensors_mut().into_iter().zip(others) {
            a.add_assign(b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    pub fn num_scalars(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}
