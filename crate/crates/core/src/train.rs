//! Adam training loop with seeded shuffling and global-norm clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::desm::{LatticeMode, DEFAULT_M_MAX};
use crate::model::{Example, GateActivation, Model, ModelConfig, ModelError, ModelParams};

/// Model dimensions plus optimizer settings, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub d_c: usize,
    pub d_w: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub d_g: usize,
    pub m_max: usize,
    pub max_len: usize,
    pub copy: bool,
    pub lattice_mode: LatticeMode,
    pub gate_activation: GateActivation,
    pub copy_bias_init: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps regardless of epochs.
    pub max_steps: Option<usize>,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_c: 64,
            d_w: 32,
            layers: 2,
            heads: 2,
            d_ff: 256,
            d_g: 64,
            m_max: DEFAULT_M_MAX,
            max_len: 512,
            copy: true,
            lattice_mode: LatticeMode::Desm,
            gate_activation: GateActivation::Gelu,
            copy_bias_init: 2.0,
            lr: 5e-5,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            max_steps: None,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, char_vocab_size: usize, word_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            char_vocab_size,
            word_vocab_size,
            d_c: self.d_c,
            d_w: self.d_w,
            layers: self.layers,
            heads: self.heads,
            d_ff: self.d_ff,
            d_g: self.d_g,
            m_max: self.m_max,
            max_len: self.max_len,
            seed: self.seed,
            copy: self.copy,
            gate_activation: self.gate_activation,
            copy_bias_init: self.copy_bias_init,
            lattice_mode: self.lattice_mode,
        }
    }

    /// Reads TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }
}

pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ModelParams,
    v: ModelParams,
    t: u64,
}

impl Adam {
    pub fn new(like: &ModelParams) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let gs = grads.named_tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m.data[k] / c1;
                let vh = v.data[k] / c2;
                p.data[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

fn global_norm(g: &ModelParams) -> f64 {
    g.named_tensors()
        .iter()
        .flat_map(|(_, t)| t.data.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Single-writer trainer; deterministic for a fixed seed and data order.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    opt: Adam,
    rng: ChaCha8Rng,
    steps: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        let opt = Adam::new(&model.params);
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
        Self {
            model,
            config,
            opt,
            rng,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn budget_left(&self) -> bool {
        self.config.max_steps.is_none_or(|m| self.steps < m)
    }

    /// One optimizer update on `batch`; returns the pre-update loss.
    pub fn step(&mut self, batch: &[Example]) -> Result<f64, ModelError> {
        let (loss, mut grads) = self.model.loss_and_gradients(batch)?;
        if let Some(clip) = self.config.clip_norm {
            let norm = global_norm(&grads);
            if norm > clip {
                let s = clip / norm;
                for t in grads.tensors_mut() {
                    t.data.iter_mut().for_each(|x| *x *= s);
                }
            }
        }
        self.opt.step(&mut self.model.params, &grads, self.config.lr);
        self.steps += 1;
        if !self.model.params.all_finite() {
            return Err(ModelError::NonFinite("parameters after update".into()));
        }
        Ok(loss)
    }

    /// Runs one shuffled pass; returns the mean batch loss, or `None` when
    /// the step budget was already spent.
    pub fn epoch(&mut self, data: &[Example]) -> Result<Option<f64>, ModelError> {
        if data.is_empty() || !self.budget_left() {
            return Ok(None);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let bs = self.config.batch_size.max(1);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(bs) {
            if !self.budget_left() {
                break;
            }
            let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
            total += self.step(&batch)?;
            batches += 1;
        }
        Ok(Some(total / batches.max(1) as f64))
    }

    /// Trains for the configured number of epochs, calling `on_epoch` with
    /// `(epoch, mean loss)` after each.
    pub fn fit(
        &mut self,
        data: &[Example],
        mut on_epoch: impl FnMut(usize, f64),
    ) -> Result<Vec<f64>, ModelError> {
        let mut losses = Vec::new();
        for e in 0..self.config.epochs {
            match self.epoch(data)? {
                Some(l) => {
                    on_epoch(e + 1, l);
                    losses.push(l);
                }
                None => break,
            }
        }
        Ok(losses)
    }

    pub fn into_model(self) -> Model {
        self.model
    }
}
