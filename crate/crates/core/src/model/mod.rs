//! The trainable corrector.
//!
//! Characters go through a small pre-norm transformer encoder. Each
//! position then attends bilinearly over the embeddings of its lattice
//! candidates and adds the weighted word summary to its character vector.
//! The fused vector feeds a softmax generator and a layer-normalized copy
//! gate; the output is `ω·copy + (1-ω)·gen`, where `copy` is one-hot on the
//! input character.
//!
//! Forward and backward passes are written out by hand in f64.

mod params;
pub mod tensor;

pub use params::{BlockParams, GateActivation, ModelConfig, ModelParams};

use thiserror::Error;

use crate::desm::LatticeFeatures;
use tensor::{
    axpy, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward,
    sigmoid, softmax_in_place, LayerNormCache, Tensor,
};

/// Floor applied to the gold probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sequence of length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },
    #[error("id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// One training or evaluation sentence in id form.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub char_ids: Vec<u32>,
    pub features: LatticeFeatures,
    pub gold: Vec<u32>,
}

/// How the copy weight is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// From the copy-gate network (or 0 when the config disables copying).
    Learned,
    /// Clamped to a constant in `[0, 1]`.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Encoder output `h^c`, `[n × d_c]`.
    pub h_c: Tensor,
    /// Fused vectors `h̃`, `[n × d_c]`.
    pub h_tilde: Tensor,
    /// Attention weights over each position's real candidates, in slot order.
    pub attention: Vec<Vec<f64>>,
    pub p_gen: Tensor,
    /// Final mixture `P`, `[n × v]`.
    pub probs: Tensor,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

struct BlockCache {
    ln1: LayerNormCache,
    a: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Vec<Tensor>,
    o: Tensor,
    ln2: LayerNormCache,
    c: Tensor,
    f1: Tensor,
    g: Tensor,
}

struct EncoderCache {
    ids: Vec<u32>,
    blocks: Vec<BlockCache>,
    lnf: LayerNormCache,
}

struct SlotCache {
    word_id: u32,
    u: Vec<f64>,
}

struct PositionFusion {
    slots: Vec<SlotCache>,
    hw: Vec<f64>,
    a: Vec<f64>,
}

struct GateCache {
    g1: Tensor,
    g2: Tensor,
    ln: LayerNormCache,
    g3: Tensor,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Ok(Self { config, params })
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        if ids.len() > self.config.max_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max_len: self.config.max_len,
            });
        }
        let size = self.config.char_vocab_size;
        match ids.iter().find(|&&id| id as usize >= size) {
            Some(&id) => Err(ModelError::IdOutOfRange { id, size }),
            None => Ok(()),
        }
    }

    fn check_features(&self, n: usize, f: &LatticeFeatures) -> Result<(), ModelError> {
        if f.n != n || f.ids.len() != n * f.m_max || f.mask.len() != f.ids.len() {
            return Err(ModelError::Shape(format!(
                "lattice features for {} positions, sentence has {n}",
                f.n
            )));
        }
        let size = self.config.word_vocab_size;
        for (id, &m) in f.ids.iter().zip(&f.mask) {
            if m && *id as usize >= size {
                return Err(ModelError::IdOutOfRange { id: *id, size });
            }
        }
        Ok(())
    }

    /// Character encoder, `[n] -> [n × d_c]`.
    pub fn encode(&self, char_ids: &[u32]) -> Result<Tensor, ModelError> {
        self.check_ids(char_ids)?;
        Ok(self.encode_cached(char_ids).0)
    }

    fn encode_cached(&self, ids: &[u32]) -> (Tensor, EncoderCache) {
        let p = &self.params;
        let d = self.config.d_c;
        let n = ids.len();
        let mut x = Tensor::zeros(n, d);
        for (i, &id) in ids.iter().enumerate() {
            let r = x.row_mut(i);
            r.copy_from_slice(p.char_emb.row(id as usize));
            axpy(1.0, p.pos_emb.row(i), r);
        }
        let mut caches = Vec::with_capacity(p.blocks.len());
        for b in &p.blocks {
            let (out, cache) = self.block_forward(b, x);
            caches.push(cache);
            x = out;
        }
        let (h, lnf) = layer_norm(&x, &p.final_ln_g, &p.final_ln_b);
        (
            h,
            EncoderCache {
                ids: ids.to_vec(),
                blocks: caches,
                lnf,
            },
        )
    }

    fn block_forward(&self, b: &BlockParams, x: Tensor) -> (Tensor, BlockCache) {
        let n = x.rows;
        let d = self.config.d_c;
        let heads = self.config.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (a, ln1) = layer_norm(&x, &b.ln1_g, &b.ln1_b);
        let q = linear(&a, &b.wq, Some(&b.bq));
        let k = linear(&a, &b.wk, Some(&b.bk));
        let v = linear(&a, &b.wv, Some(&b.bv));
        let mut o = Tensor::zeros(n, d);
        let mut attn = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let mut s = Tensor::zeros(n, n);
            for i in 0..n {
                let qi = &q.row(i)[cols.clone()];
                let row = s.row_mut(i);
                for j in 0..n {
                    row[j] = dot(qi, &k.row(j)[cols.clone()]) * scale;
                }
                softmax_in_place(row);
            }
            for i in 0..n {
                for j in 0..n {
                    let w = s.data[i * n + j];
                    let vj = &v.row(j)[cols.clone()];
                    axpy(w, vj, &mut o.row_mut(i)[cols.clone()]);
                }
            }
            attn.push(s);
        }
        let mut x1 = linear(&o, &b.wo, Some(&b.bo));
        x1.add_assign(&x);
        let (c, ln2) = layer_norm(&x1, &b.ln2_g, &b.ln2_b);
        let f1 = linear(&c, &b.w1, Some(&b.b1));
        let mut g = f1.clone();
        g.data.iter_mut().for_each(|z| *z = gelu(*z));
        let mut out = linear(&g, &b.w2, Some(&b.b2));
        out.add_assign(&x1);
        (
            out,
            BlockCache {
                ln1,
                a,
                q,
                k,
                v,
                attn,
                o,
                ln2,
                c,
                f1,
                g,
            },
        )
    }

    /// Bilinear char-word attention and residual injection of the word summary.
    ///
    /// Returns `h̃` and the attention weights over each position's unmasked
    /// slots. Positions without candidates are passed through unchanged.
    pub fn char_word_attention(
        &self,
        h_c: &Tensor,
        features: &LatticeFeatures,
    ) -> Result<(Tensor, Vec<Vec<f64>>), ModelError> {
        self.check_features(h_c.rows, features)?;
        let (h, fusion) = self.fusion_forward(h_c, features);
        Ok((h, fusion.into_iter().map(|f| f.a).collect()))
    }

    fn fusion_forward(&self, h_c: &Tensor, f: &LatticeFeatures) -> (Tensor, Vec<PositionFusion>) {
        let p = &self.params;
        let d = self.config.d_c;
        let mut h = h_c.clone();
        let mut caches = Vec::with_capacity(h_c.rows);
        for i in 0..h_c.rows {
            let (ids, mask) = f.row(i);
            let slots: Vec<SlotCache> = ids
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&wid, _)| {
                    let e = p.word_emb.row(wid as usize);
                    let u = (0..d)
                        .map(|r| (dot(p.w_word.row(r), e) + p.b_word.data[r]).tanh())
                        .collect();
                    SlotCache { word_id: wid, u }
                })
                .collect();
            if slots.is_empty() {
                caches.push(PositionFusion {
                    slots,
                    hw: Vec::new(),
                    a: Vec::new(),
                });
                continue;
            }
            // hw = W_attnᵀ h_i, so score_j = hw · u_j = h_iᵀ W_attn u_j.
            let hi = h_c.row(i);
            let mut hw = vec![0.0; d];
            for (r, &hr) in hi.iter().enumerate() {
                axpy(hr, p.w_attn.row(r), &mut hw);
            }
            let mut a: Vec<f64> = slots.iter().map(|s| dot(&hw, &s.u)).collect();
            softmax_in_place(&mut a);
            let out = h.row_mut(i);
            for (w, s) in a.iter().zip(&slots) {
                axpy(*w, &s.u, out);
            }
            caches.push(PositionFusion { slots, hw, a });
        }
        (h, caches)
    }

    /// Generator, copy gate and their mixture.
    pub fn output_distribution(
        &self,
        h_tilde: &Tensor,
        char_ids: &[u32],
        gate: GateMode,
    ) -> Result<(Tensor, Vec<f64>), ModelError> {
        self.check_ids(char_ids)?;
        if h_tilde.rows != char_ids.len() {
            return Err(ModelError::Shape("h_tilde rows != sentence length".into()));
        }
        let (p_gen, omega, _) = self.head_forward(h_tilde, gate);
        Ok((mix(&p_gen, &omega, char_ids), omega))
    }

    fn head_forward(&self, h: &Tensor, gate: GateMode) -> (Tensor, Vec<f64>, Option<GateCache>) {
        let p = &self.params;
        let mut p_gen = linear(h, &p.w_gen, Some(&p.b_gen));
        for i in 0..p_gen.rows {
            softmax_in_place(p_gen.row_mut(i));
        }
        let n = h.rows;
        match gate {
            GateMode::Fixed(w) => (p_gen, vec![w.clamp(0.0, 1.0); n], None),
            GateMode::Learned if !self.config.copy => (p_gen, vec![0.0; n], None),
            GateMode::Learned => {
                let g1 = linear(h, &p.gate_w1, Some(&p.gate_b1));
                let mut g2 = g1.clone();
                match self.config.gate_activation {
                    GateActivation::Gelu => g2.data.iter_mut().for_each(|z| *z = gelu(*z)),
                    GateActivation::Tanh => g2.data.iter_mut().for_each(|z| *z = z.tanh()),
                }
                let (g3, ln) = layer_norm(&g2, &p.gate_ln_g, &p.gate_ln_b);
                let omega = (0..n)
                    .map(|i| sigmoid(dot(g3.row(i), &p.gate_w2.data) + p.gate_b2.data[0]))
                    .collect();
                (p_gen, omega, Some(GateCache { g1, g2, ln, g3 }))
            }
        }
    }

    /// Full inference pass.
    pub fn forward(
        &self,
        char_ids: &[u32],
        features: &LatticeFeatures,
        gate: GateMode,
    ) -> Result<ForwardOutput, ModelError> {
        self.check_ids(char_ids)?;
        self.check_features(char_ids.len(), features)?;
        let (h_c, _) = self.encode_cached(char_ids);
        let (h_tilde, fusion) = self.fusion_forward(&h_c, features);
        let (p_gen, omega, _) = self.head_forward(&h_tilde, gate);
        let probs = mix(&p_gen, &omega, char_ids);
        Ok(ForwardOutput {
            h_c,
            h_tilde,
            attention: fusion.into_iter().map(|f| f.a).collect(),
            p_gen,
            probs,
            omega,
        })
    }

    /// Mean floored negative log-likelihood over all positions of the batch
    /// and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &[Example]) -> Result<(f64, ModelParams), ModelError> {
        let mut grads = self.params.zeros_like();
        let total: usize = batch.iter().map(|e| e.char_ids.len()).sum();
        if total == 0 {
            return Ok((0.0, grads));
        }
        let scale = 1.0 / total as f64;
        let mut loss_sum = 0.0;
        for ex in batch {
            self.check_ids(&ex.char_ids)?;
            self.check_ids(&ex.gold)?;
            self.check_features(ex.char_ids.len(), &ex.features)?;
            if ex.gold.len() != ex.char_ids.len() {
                return Err(ModelError::Shape("gold length differs from input".into()));
            }
            loss_sum += self.accumulate_example(ex, scale, &mut grads);
        }
        let loss = loss_sum * scale;
        if !loss.is_finite() {
            return Err(ModelError::NonFinite("loss".into()));
        }
        Ok((loss, grads))
    }

    /// Loss only; used by finite-difference checks and evaluation.
    pub fn batch_loss(&self, batch: &[Example]) -> Result<f64, ModelError> {
        let mut sum = 0.0;
        let mut count = 0;
        for ex in batch {
            let out = self.forward(&ex.char_ids, &ex.features, GateMode::Learned)?;
            for (i, &g) in ex.gold.iter().enumerate() {
                sum -= out.probs.row(i)[g as usize].max(PROB_FLOOR).ln();
            }
            count += ex.gold.len();
        }
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    }

    fn accumulate_example(&self, ex: &Example, scale: f64, grads: &mut ModelParams) -> f64 {
        let p = &self.params;
        let n = ex.char_ids.len();
        if n == 0 {
            return 0.0;
        }
        let (h_c, enc) = self.encode_cached(&ex.char_ids);
        let (h_tilde, fusion) = self.fusion_forward(&h_c, &ex.features);
        let (p_gen, omega, gate_cache) = self.head_forward(&h_tilde, GateMode::Learned);

        let v = self.config.char_vocab_size;
        let mut loss = 0.0;
        let mut d_logits = Tensor::zeros(n, v);
        let mut d_gate_pre = vec![0.0; n];
        for i in 0..n {
            let gold = ex.gold[i] as usize;
            let copy = if ex.char_ids[i] as usize == gold { 1.0 } else { 0.0 };
            let pg = p_gen.row(i)[gold];
            let w = omega[i];
            let prob = w * copy + (1.0 - w) * pg;
            if prob < PROB_FLOOR {
                loss -= PROB_FLOOR.ln();
                continue;
            }
            loss -= prob.ln();
            let d_prob = -scale / prob;
            let d_pg = d_prob * (1.0 - w);
            let row = d_logits.row_mut(i);
            for (k, pk) in p_gen.row(i).iter().enumerate() {
                row[k] = -d_pg * pg * pk;
            }
            row[gold] += d_pg * pg;
            d_gate_pre[i] = d_prob * (copy - pg) * w * (1.0 - w);
        }

        let mut dh = linear_backward(&h_tilde, &d_logits, &p.w_gen, &mut grads.w_gen, Some(&mut grads.b_gen));
        if let Some(gc) = gate_cache {
            let dg = self.gate_backward(&h_tilde, &gc, &d_gate_pre, grads);
            dh.add_assign(&dg);
        }
        let dh_c = self.fusion_backward(&h_c, &fusion, &dh, grads);
        self.encoder_backward(&enc, dh_c, grads);
        loss
    }

    fn gate_backward(&self, h: &Tensor, gc: &GateCache, d_pre: &[f64], grads: &mut ModelParams) -> Tensor {
        let p = &self.params;
        let n = h.rows;
        let mut dg3 = Tensor::zeros(n, self.config.d_g);
        for i in 0..n {
            let ds = d_pre[i];
            axpy(ds, gc.g3.row(i), &mut grads.gate_w2.data);
            grads.gate_b2.data[0] += ds;
            axpy(ds, &p.gate_w2.data, dg3.row_mut(i));
        }
        let mut dg2 = layer_norm_backward(&dg3, &gc.ln, &p.gate_ln_g, &mut grads.gate_ln_g, &mut grads.gate_ln_b);
        for (k, d) in dg2.data.iter_mut().enumerate() {
            *d *= match self.config.gate_activation {
                GateActivation::Gelu => gelu_grad(gc.g1.data[k]),
                GateActivation::Tanh => 1.0 - gc.g2.data[k] * gc.g2.data[k],
            };
        }
        linear_backward(h, &dg2, &p.gate_w1, &mut grads.gate_w1, Some(&mut grads.gate_b1))
    }

    fn fusion_backward(
        &self,
        h_c: &Tensor,
        fusion: &[PositionFusion],
        dh_tilde: &Tensor,
        grads: &mut ModelParams,
    ) -> Tensor {
        let p = &self.params;
        let d = self.config.d_c;
        let mut dh_c = dh_tilde.clone();
        for (i, pf) in fusion.iter().enumerate() {
            if pf.slots.is_empty() {
                continue;
            }
            let dz = dh_tilde.row(i);
            let da: Vec<f64> = pf.slots.iter().map(|s| dot(&s.u, dz)).collect();
            let mean: f64 = pf.a.iter().zip(&da).map(|(a, g)| a * g).sum();
            let mut dhw = vec![0.0; d];
            for (j, s) in pf.slots.iter().enumerate() {
                let ds = pf.a[j] * (da[j] - mean);
                axpy(ds, &s.u, &mut dhw);
                // du = a_j dz + ds hw, then through tanh.
                let dr: Vec<f64> = (0..d)
                    .map(|r| (pf.a[j] * dz[r] + ds * pf.hw[r]) * (1.0 - s.u[r] * s.u[r]))
                    .collect();
                let e = p.word_emb.row(s.word_id as usize);
                let de = grads.word_emb.row_mut(s.word_id as usize);
                for (r, &g) in dr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    axpy(g, e, grads.w_word.row_mut(r));
                    grads.b_word.data[r] += g;
                    axpy(g, p.w_word.row(r), de);
                }
            }
            // hw = W_attnᵀ h  =>  dh += W_attn dhw, dW_attn += h ⊗ dhw.
            let hi = h_c.row(i);
            let dhi = dh_c.row_mut(i);
            for r in 0..d {
                dhi[r] += dot(p.w_attn.row(r), &dhw);
                axpy(hi[r], &dhw, grads.w_attn.row_mut(r));
            }
        }
        dh_c
    }

    fn encoder_backward(&self, enc: &EncoderCache, dh: Tensor, grads: &mut ModelParams) {
        let p = &self.params;
        let mut dx = layer_norm_backward(&dh, &enc.lnf, &p.final_ln_g, &mut grads.final_ln_g, &mut grads.final_ln_b);
        for (l, cache) in enc.blocks.iter().enumerate().rev() {
            dx = self.block_backward(&p.blocks[l], cache, dx, &mut grads.blocks[l]);
        }
        for (i, &id) in enc.ids.iter().enumerate() {
            axpy(1.0, dx.row(i), grads.char_emb.row_mut(id as usize));
            axpy(1.0, dx.row(i), grads.pos_emb.row_mut(i));
        }
    }

    fn block_backward(&self, b: &BlockParams, c: &BlockCache, dout: Tensor, g: &mut BlockParams) -> Tensor {
        let n = dout.rows;
        let d = self.config.d_c;
        let heads = self.config.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        // out = x1 + W2 gelu(W1 LN2(x1))
        let mut dgl = linear_backward(&c.g, &dout, &b.w2, &mut g.w2, Some(&mut g.b2));
        for (k, v) in dgl.data.iter_mut().enumerate() {
            *v *= gelu_grad(c.f1.data[k]);
        }
        let dc = linear_backward(&c.c, &dgl, &b.w1, &mut g.w1, Some(&mut g.b1));
        let mut dx1 = layer_norm_backward(&dc, &c.ln2, &b.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        dx1.add_assign(&dout);

        // x1 = x + Wo attn(LN1(x))
        let d_o = linear_backward(&c.o, &dx1, &b.wo, &mut g.wo, Some(&mut g.bo));
        let mut dq = Tensor::zeros(n, d);
        let mut dk = Tensor::zeros(n, d);
        let mut dv = Tensor::zeros(n, d);
        let mut d_a = vec![0.0; n];
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let attn = &c.attn[h];
            for i in 0..n {
                let doi = &d_o.row(i)[cols.clone()];
                for j in 0..n {
                    d_a[j] = dot(doi, &c.v.row(j)[cols.clone()]);
                    axpy(attn.data[i * n + j], doi, &mut dv.row_mut(j)[cols.clone()]);
                }
                let arow = attn.row(i);
                let mean: f64 = arow.iter().zip(&d_a).map(|(a, g)| a * g).sum();
                for j in 0..n {
                    let ds = arow[j] * (d_a[j] - mean) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    axpy(ds, &c.k.row(j)[cols.clone()], &mut dq.row_mut(i)[cols.clone()]);
                    axpy(ds, &c.q.row(i)[cols.clone()], &mut dk.row_mut(j)[cols.clone()]);
                }
            }
        }
        let mut da = linear_backward(&c.a, &dq, &b.wq, &mut g.wq, Some(&mut g.bq));
        da.add_assign(&linear_backward(&c.a, &dk, &b.wk, &mut g.wk, Some(&mut g.bk)));
        da.add_assign(&linear_backward(&c.a, &dv, &b.wv, &mut g.wv, Some(&mut g.bv)));
        let mut dx = layer_norm_backward(&da, &c.ln1, &b.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        dx.add_assign(&dx1);
        dx
    }
}

/// `P_i = ω_i·onehot(x_i) + (1-ω_i)·P_gen,i`.
fn mix(p_gen: &Tensor, omega: &[f64], char_ids: &[u32]) -> Tensor {
    let mut probs = p_gen.clone();
    for (i, (&w, &id)) in omega.iter().zip(char_ids).enumerate() {
        let row = probs.row_mut(i);
        row.iter_mut().for_each(|x| *x *= 1.0 - w);
        row[id as usize] += w;
    }
    probs
}

/// Mean of `-ln max(P_i[gold_i], 1e-12)` over positions.
pub fn loss(probs: &Tensor, gold: &[u32]) -> Result<f64, ModelError> {
    if probs.rows != gold.len() {
        return Err(ModelError::Shape("probability rows != gold length".into()));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (i, &g) in gold.iter().enumerate() {
        let p = *probs
            .row(i)
            .get(g as usize)
            .ok_or(ModelError::IdOutOfRange { id: g, size: probs.cols })?;
        if !p.is_finite() {
            return Err(ModelError::NonFinite("probabilities".into()));
        }
        sum -= p.max(PROB_FLOOR).ln();
    }
    Ok(sum / gold.len() as f64)
}

/// Index of the largest entry; the first on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = k;
        }
    }
    best
}
