#![allow(dead_code)]

use desm::desm::LatticeFeatures;
use desm::model::{Example, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The small configuration used for finite-difference checks.
pub fn gradcheck_model(seed: u64) -> Model {
    Model::new(ModelConfig {
        char_vocab_size: 20,
        word_vocab_size: 12,
        d_c: 8,
        d_w: 8,
        layers: 1,
        heads: 2,
        d_ff: 16,
        d_g: 8,
        m_max: 3,
        max_len: 8,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Random examples with some gold characters differing from the input and
/// a mix of full, partial and empty candidate rows.
pub fn random_examples(model: &Model, count: usize, n: usize, seed: u64) -> Vec<Example> {
    let cfg = &model.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let char_ids: Vec<u32> = (0..n)
                .map(|_| rng.gen_range(2..cfg.char_vocab_size as u32))
                .collect();
            let gold = char_ids
                .iter()
                .map(|&c| {
                    if rng.gen_bool(0.4) {
                        rng.gen_range(2..cfg.char_vocab_size as u32)
                    } else {
                        c
                    }
                })
                .collect();
            let mut features = LatticeFeatures::empty(n, cfg.m_max);
            for i in 0..n {
                let k = rng.gen_range(0..=cfg.m_max);
                for j in 0..k {
                    features.ids[i * cfg.m_max + j] = rng.gen_range(2..cfg.word_vocab_size as u32);
                    features.mask[i * cfg.m_max + j] = true;
                }
            }
            Example {
                char_ids,
                features,
                gold,
            }
        })
        .collect()
}

pub struct GradCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn rel_err(&self) -> f64 {
        (self.analytic - self.numeric).abs()
            / self.analytic.abs().max(self.numeric.abs()).max(1e-8)
    }
}

/// Central differences on sampled scalars. `forced` tensors get
/// `per_forced` samples each on top of `random` samples drawn from all
/// tensors in proportion to their size.
pub fn finite_difference_check(
    model: &Model,
    batch: &[Example],
    forced: &[&str],
    per_forced: usize,
    random: usize,
    h: f64,
    seed: u64,
) -> Vec<GradCheck> {
    let (_, grads) = model.loss_and_gradients(batch).unwrap();
    let grad_tensors: Vec<(String, Vec<f64>)> = grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data.clone()))
        .collect();
    let names: Vec<String> = grad_tensors.iter().map(|(n, _)| n.clone()).collect();
    let sizes: Vec<usize> = grad_tensors.iter().map(|(_, d)| d.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for f in forced {
        let t = names.iter().position(|n| n == f).expect("tensor name");
        // Prefer entries with a live gradient so rows of untouched embeddings are not all we see.
        let live: Vec<usize> = (0..sizes[t]).filter(|&i| grad_tensors[t].1[i] != 0.0).collect();
        for _ in 0..per_forced {
            let i = if live.is_empty() { rng.gen_range(0..sizes[t]) } else { live[rng.gen_range(0..live.len())] };
            picks.push((t, i));
        }
    }
    let total: usize = sizes.iter().sum();
    for _ in 0..random {
        let mut k = rng.gen_range(0..total);
        let mut t = 0;
        while k >= sizes[t] {
            k -= sizes[t];
            t += 1;
        }
        picks.push((t, k));
    }
    let mut out = Vec::new();
    for (t, i) in picks {
        let mut m = model.clone();
        let orig = m.params.tensors_mut()[t].data[i];
        m.params.tensors_mut()[t].data[i] = orig + h;
        let plus = m.batch_loss(batch).unwrap();
        m.params.tensors_mut()[t].data[i] = orig - h;
        let minus = m.batch_loss(batch).unwrap();
        out.push(GradCheck {
            name: names[t].clone(),
            index: i,
            analytic: grad_tensors[t].1[i],
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    out
}

use std::collections::BTreeMap;

use desm::desm::{Direction, Provenance};
use desm::lexicon::Lexicon;
use desm::pinyin::{FuzzyClassTable, PinyinSyllable, PinyinTable};

/// Every `(start, end, word_id)` span equal to a word, by direct string
/// comparison against the word list.
pub fn brute_match_all(words: &[String], sentence: &[char]) -> Vec<(usize, usize, u32)> {
    let mut out = Vec::new();
    for s in 0..sentence.len() {
        for e in s..sentence.len() {
            let span: String = sentence[s..=e].iter().collect();
            for (id, w) in words.iter().enumerate() {
                if *w == span {
                    out.push((s, e, id as u32));
                }
            }
        }
    }
    out
}

fn same_class(classes: &[Vec<String>], a: &str, b: &str) -> bool {
    a == b || classes.iter().any(|c| c.iter().any(|m| m == a) && c.iter().any(|m| m == b))
}

/// Fuzzy equivalence read straight off the class lists.
pub fn brute_equivalent(t: &FuzzyClassTable, a: &PinyinSyllable, b: &PinyinSyllable) -> bool {
    same_class(t.initial_classes(), &a.initial, &b.initial) && same_class(t.final_classes(), &a.final_, &b.final_)
}

pub type BruteCandidate = (u32, (usize, usize), Provenance, Direction);

/// Lattice by exhaustive scan: exact spans everywhere, then every
/// two-character word against every window touching a suspect position.
pub fn brute_lattice(
    words: &[(String, u64)],
    ptable: &PinyinTable,
    fuzzy: &FuzzyClassTable,
    sentence: &[char],
    m_max: usize,
) -> (Vec<bool>, Vec<Vec<BruteCandidate>>) {
    let n = sentence.len();
    let surfaces: Vec<String> = words.iter().map(|(w, _)| w.clone()).collect();
    let exact = brute_match_all(&surfaces, sentence);
    let mut suspect = vec![true; n];
    for &(s, e, _) in &exact {
        if e > s {
            for p in s..=e {
                suspect[p] = false;
            }
        }
    }
    let mut all: Vec<Vec<BruteCandidate>> = vec![Vec::new(); n];
    for &(s, e, id) in &exact {
        for p in s..=e {
            all[p].push((id, (s, e), Provenance::Exact, Direction::None));
        }
    }
    for i in 0..n.saturating_sub(1) {
        if !suspect[i] && !suspect[i + 1] {
            continue;
        }
        let dir = if suspect[i] { Direction::Forward } else { Direction::Backward };
        for (id, (w, _)) in words.iter().enumerate() {
            let wc: Vec<char> = w.chars().collect();
            if wc.len() != 2 {
                continue;
            }
            let mut fuzzy_hit = true;
            let mut exact_hit = true;
            for k in 0..2 {
                let mine = ptable.readings(sentence[i + k]);
                let theirs = ptable.readings(wc[k]);
                fuzzy_hit &= mine.iter().any(|a| theirs.iter().any(|b| brute_equivalent(fuzzy, a, b)));
                exact_hit &= mine.iter().any(|a| theirs.iter().any(|b| a.toneless() == b.toneless()));
            }
            if fuzzy_hit {
                let prov = if exact_hit { Provenance::PinyinExact } else { Provenance::PinyinFuzzy };
                all[i].push((id as u32, (i, i + 1), prov, dir));
                all[i + 1].push((id as u32, (i, i + 1), prov, dir));
            }
        }
    }
    let per_char = all
        .into_iter()
        .map(|cands| {
            let mut best: BTreeMap<u32, BruteCandidate> = BTreeMap::new();
            for c in cands {
                let keep = match best.get(&c.0) {
                    Some(cur) => (c.2, c.1 .0) < (cur.2, cur.1 .0),
                    None => true,
                };
                if keep {
                    best.insert(c.0, c);
                }
            }
            let mut v: Vec<BruteCandidate> = best.into_values().collect();
            v.sort_by_key(|c| (c.2, std::cmp::Reverse(words[c.0 as usize].1), c.0));
            v.truncate(m_max);
            v
        })
        .collect();
    (suspect, per_char)
}

/// A random small phonology: `n_chars` characters over a syllable pool
/// rich in fuzzy partners, some with two readings.
pub fn random_pinyin_table(rng: &mut ChaCha8Rng, n_chars: usize) -> (Vec<char>, PinyinTable) {
    const POOL: [&str; 16] = [
        "zan", "zhan", "zang", "zhang", "can", "chan", "san", "shan", "lan", "nan", "fen", "hen", "feng", "jia", "xin",
        "xing",
    ];
    let chars: Vec<char> = (0..n_chars as u32).map(|k| char::from_u32(0x4E00 + 7 * k).unwrap()).collect();
    let mut t = PinyinTable::new();
    for &c in &chars {
        let k = if rng.gen_bool(0.25) { 2 } else { 1 };
        for _ in 0..k {
            let s = POOL[rng.gen_range(0..POOL.len())];
            let tone = rng.gen_range(1..=4);
            t.insert(c, PinyinSyllable::parse(&format!("{s}{tone}")).unwrap());
        }
    }
    (chars, t)
}

/// Up to `max_words` distinct words of length 1..=4 over `chars`, with
/// random frequencies.
pub fn random_words(rng: &mut ChaCha8Rng, chars: &[char], max_words: usize) -> Vec<(String, u64)> {
    let target = rng.gen_range(1..=max_words);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..target * 3 {
        if out.len() == target {
            break;
        }
        let len = [1, 2, 2, 2, 3, 4][rng.gen_range(0..6)];
        let w: String = (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect();
        if seen.insert(w.clone()) {
            out.push((w, rng.gen_range(1..5)));
        }
    }
    out
}

/// A sentence of at most `max_len` characters, partly spliced from words.
pub fn random_sentence(rng: &mut ChaCha8Rng, chars: &[char], words: &[(String, u64)], max_len: usize) -> Vec<char> {
    let len = rng.gen_range(0..=max_len);
    let mut s = Vec::with_capacity(len);
    while s.len() < len {
        if rng.gen_bool(0.5) {
            s.extend(words[rng.gen_range(0..words.len())].0.chars());
        } else {
            s.push(chars[rng.gen_range(0..chars.len())]);
        }
    }
    s.truncate(len);
    s
}

/// Lexicon over `words` with the default fuzzy classes.
pub fn random_lexicon(words: &[(String, u64)], ptable: &PinyinTable) -> Lexicon {
    Lexicon::build(words.iter().map(|(w, f)| (w.as_str(), *f)), ptable, &FuzzyClassTable::default()).unwrap()
}

/// The lattice produced by the library, flattened for comparison.
pub fn library_lattice(
    lex: &Lexicon,
    ptable: &PinyinTable,
    sentence: &[char],
    m_max: usize,
) -> (Vec<bool>, Vec<Vec<BruteCandidate>>) {
    let lat = desm::desm::build_lattice(lex, ptable, sentence, m_max);
    let per_char = lat
        .per_char
        .iter()
        .map(|cs| cs.iter().map(|c| (c.word_id, c.span, c.provenance, c.direction)).collect())
        .collect();
    (lat.suspect, per_char)
}

use desm::model::{argmax, GateActivation, GateMode};

/// A random small model; `scale` stretches every parameter so the softmax
/// and gate are pushed away from their initial regime.
pub fn random_model(rng: &mut ChaCha8Rng) -> Model {
    let heads = rng.gen_range(1..=2);
    let mut m = Model::new(ModelConfig {
        char_vocab_size: rng.gen_range(3..24),
        word_vocab_size: rng.gen_range(3..16),
        d_c: heads * rng.gen_range(2..=4),
        d_w: rng.gen_range(2..=6),
        layers: rng.gen_range(1..=2),
        heads,
        d_ff: rng.gen_range(2..=8),
        d_g: rng.gen_range(2..=6),
        m_max: rng.gen_range(1..=4),
        max_len: 10,
        seed: rng.gen(),
        copy: rng.gen_bool(0.8),
        gate_activation: if rng.gen_bool(0.5) { GateActivation::Gelu } else { GateActivation::Tanh },
        copy_bias_init: rng.gen_range(-4.0..4.0),
        ..Default::default()
    })
    .unwrap();
    let scale = [1.0, 3.0, 10.0][rng.gen_range(0..3)];
    for t in m.params.tensors_mut() {
        t.data.iter_mut().for_each(|x| *x *= scale);
    }
    m
}

/// Checks the fusion and output laws on one forward pass.
pub fn check_forward_laws(model: &Model, ex: &Example) -> Result<(), String> {
    let out = model.forward(&ex.char_ids, &ex.features, GateMode::Learned).map_err(|e| e.to_string())?;
    let n = ex.char_ids.len();
    for i in 0..n {
        let live = ex.features.row(i).1.iter().filter(|&&m| m).count();
        let a = &out.attention[i];
        if live == 0 {
            if !a.is_empty() || out.h_tilde.row(i) != out.h_c.row(i) {
                return Err(format!("position {i}: no candidates but h̃ != h"));
            }
        } else {
            let s: f64 = a.iter().sum();
            if a.len() != live || (s - 1.0).abs() > 1e-6 || a.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(format!("position {i}: attention {a:?}"));
            }
        }
        let row = out.probs.row(i);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&x| x < 0.0) {
            return Err(format!("position {i}: output row sums to {s}"));
        }
        let w = out.omega[i];
        if !(0.0..=1.0).contains(&w) {
            return Err(format!("position {i}: omega {w}"));
        }
        if !model.config.copy && w != 0.0 {
            return Err(format!("position {i}: copy disabled but omega {w}"));
        }
    }
    let pinned = model.forward(&ex.char_ids, &ex.features, GateMode::Fixed(1.0)).map_err(|e| e.to_string())?;
    for i in 0..n {
        if argmax(pinned.probs.row(i)) as u32 != ex.char_ids[i] {
            return Err(format!("position {i}: ω=1 does not copy"));
        }
    }
    Ok(())
}
