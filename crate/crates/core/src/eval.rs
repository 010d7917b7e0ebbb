//! Character-level detection and correction metrics, and the ablation
//! harness that trains model variants side by side.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{generate_synthetic, synthetic_phonology, NoiseSpec, ParallelPair, PhonologySpec};
use crate::desm::LatticeMode;
use crate::lexicon::Lexicon;
use crate::pinyin::{FuzzyClassTable, PinyinTable};
use crate::pipeline::{build_vocab, Corrector};
use crate::train::{TrainConfig, Trainer};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("triple {0}: source, gold and prediction differ in length")]
    LengthMismatch(usize),
}

/// Precision, recall and F1 with flags for zero denominators.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

impl Prf {
    pub fn from_counts(hit: usize, predicted: usize, actual: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(hit, predicted);
        let recall = ratio(hit, actual);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            precision_undefined: predicted == 0,
            recall_undefined: actual == 0,
        }
    }

    pub fn any_undefined(&self) -> bool {
        self.precision_undefined || self.recall_undefined
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    /// Positions the prediction changed.
    pub predicted_positive: usize,
    /// Positions where the gold differs from the source.
    pub actual_positive: usize,
    /// Changed positions that are gold errors.
    pub true_positive: usize,
    /// True positives whose emitted character equals the gold one.
    pub corrected: usize,
    pub characters: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tag: Option<String>,
    pub detection: Prf,
    pub correction: Prf,
    pub counts: Counts,
}

impl EvalReport {
    pub fn from_counts(counts: Counts) -> Self {
        Self {
            tag: None,
            detection: Prf::from_counts(counts.true_positive, counts.predicted_positive, counts.actual_positive),
            correction: Prf::from_counts(counts.corrected, counts.true_positive, counts.actual_positive),
            counts,
        }
    }

    pub fn any_undefined(&self) -> bool {
        self.detection.any_undefined() || self.correction.any_undefined()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let flag = |u: bool| if u { " (undefined)" } else { "" };
        let _ = writeln!(s, "{:<12}{:>10}{:>10}{:>10}", "level", "P", "R", "F1");
        for (name, m) in [("detection", &self.detection), ("correction", &self.correction)] {
            let _ = writeln!(
                s,
                "{:<12}{:>10.4}{:>10.4}{:>10.4}{}",
                name,
                m.precision,
                m.recall,
                m.f1,
                flag(m.any_undefined())
            );
        }
        let c = &self.counts;
        let _ = writeln!(
            s,
            "chars={} changed={} gold_errors={} true_detections={} corrected={}",
            c.characters, c.predicted_positive, c.actual_positive, c.true_positive, c.corrected
        );
        s
    }
}

/// Micro-averaged scores over `(source, gold, prediction)` triples.
pub fn score<S: AsRef<str>>(triples: &[(S, S, S)]) -> Result<EvalReport, EvalError> {
    let mut c = Counts::default();
    for (k, (x, y, p)) in triples.iter().enumerate() {
        let x: Vec<char> = x.as_ref().chars().collect();
        let y: Vec<char> = y.as_ref().chars().collect();
        let p: Vec<char> = p.as_ref().chars().collect();
        if x.len() != y.len() || x.len() != p.len() {
            return Err(EvalError::LengthMismatch(k));
        }
        c.characters += x.len();
        for i in 0..x.len() {
            let changed = p[i] != x[i];
            let wrong = y[i] != x[i];
            c.predicted_positive += changed as usize;
            c.actual_positive += wrong as usize;
            if changed && wrong {
                c.true_positive += 1;
                c.corrected += (p[i] == y[i]) as usize;
            }
        }
    }
    Ok(EvalReport::from_counts(c))
}

/// One model variant of an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub copy: bool,
    pub lattice_mode: LatticeMode,
}

impl Variant {
    pub const PLAIN: Self = Self { copy: false, lattice_mode: LatticeMode::None };
    pub const COPY: Self = Self { copy: true, lattice_mode: LatticeMode::None };
    pub const TTM_COPY: Self = Self { copy: true, lattice_mode: LatticeMode::TtmOnly };
    pub const DESM_COPY: Self = Self { copy: true, lattice_mode: LatticeMode::Desm };

    /// The four standard rows, weakest first.
    pub fn standard() -> Vec<Self> {
        vec![Self::PLAIN, Self::COPY, Self::TTM_COPY, Self::DESM_COPY]
    }

    pub fn name(&self) -> String {
        let lattice = match self.lattice_mode {
            LatticeMode::None => None,
            LatticeMode::TtmOnly => Some("ttm"),
            LatticeMode::Desm => Some("desm"),
        };
        match (lattice, self.copy) {
            (None, false) => "plain".into(),
            (None, true) => "copy".into(),
            (Some(l), false) => l.into(),
            (Some(l), true) => format!("{l}+copy"),
        }
    }
}

/// Shared data and hyperparameters for every variant.
pub struct AblationSetup<'a> {
    pub train: &'a [ParallelPair],
    pub test: &'a [ParallelPair],
    pub lexicon: &'a Lexicon,
    pub pinyin: &'a PinyinTable,
    /// Base config; each run overrides `copy`, `lattice_mode` and `seed`.
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantResult {
    pub variant: String,
    pub per_seed: Vec<(u64, EvalReport)>,
    pub mean_detection_f1: f64,
    pub mean_correction_f1: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<VariantResult>,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&VariantResult> {
        self.rows.iter().find(|r| r.variant == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12}{:>8}{:>10}{:>10}  per-seed det-F / cor-F", "variant", "seeds", "det-F", "cor-F");
        for r in &self.rows {
            if let Some(e) = &r.error {
                let _ = writeln!(s, "{:<12}  failed: {e}", r.variant);
                continue;
            }
            let seeds: Vec<String> = r
                .per_seed
                .iter()
                .map(|(_, e)| format!("{:.4}/{:.4}", e.detection.f1, e.correction.f1))
                .collect();
            let _ = writeln!(
                s,
                "{:<12}{:>8}{:>10.4}{:>10.4}  {}",
                r.variant,
                r.per_seed.len(),
                r.mean_detection_f1,
                r.mean_correction_f1,
                seeds.join(" ")
            );
        }
        s
    }
}

/// Trains `variant` on the setup's training pairs and scores it on the
/// test pairs.
pub fn train_and_score(setup: &AblationSetup, variant: Variant, seed: u64) -> anyhow::Result<EvalReport> {
    let mut config = setup.config.clone();
    config.copy = variant.copy;
    config.lattice_mode = variant.lattice_mode;
    config.seed = seed;
    let vocab = build_vocab(setup.train, setup.lexicon);
    let corrector = Corrector::untrained(&config, vocab, setup.lexicon.clone(), setup.pinyin.clone())?;
    let data = corrector.examples(setup.train);
    let mut trainer = Trainer::new(corrector.model, config);
    trainer.fit(&data, |e, l| log::info!("{} seed {seed} epoch {e}: loss {l:.5}", variant.name()))?;
    let corrector = Corrector { model: trainer.into_model(), ..corrector };
    let mut triples = Vec::with_capacity(setup.test.len());
    for p in setup.test {
        let out = corrector.correct(&p.source_string())?.output;
        triples.push((p.source_string(), p.target_string(), out));
    }
    let mut report = score(&triples)?;
    report.tag = Some(variant.name());
    Ok(report)
}

/// Runs every variant under every seed. A variant that fails is reported
/// with its error and does not stop the others.
pub fn run_ablation(setup: &AblationSetup, variants: &[Variant], seeds: &[u64]) -> AblationTable {
    assert!(!seeds.is_empty(), "ablation needs at least one seed");
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let mut per_seed = Vec::new();
        let mut error = None;
        for &seed in seeds {
            match train_and_score(setup, v, seed) {
                Ok(r) => per_seed.push((seed, r)),
                Err(e) => {
                    log::error!("variant {} seed {seed}: {e:#}", v.name());
                    error = Some(format!("{e:#}"));
                    break;
                }
            }
        }
        let mean = |f: fn(&EvalReport) -> f64| {
            if per_seed.is_empty() {
                0.0
            } else {
                per_seed.iter().map(|(_, r)| f(r)).sum::<f64>() / per_seed.len() as f64
            }
        };
        rows.push(VariantResult {
            variant: v.name(),
            mean_detection_f1: mean(|r| r.detection.f1),
            mean_correction_f1: mean(|r| r.correction.f1),
            per_seed: if error.is_some() { Vec::new() } else { per_seed.clone() },
            error,
        });
    }
    AblationTable { rows }
}

/// A generated phonology, its lexicon, and train/test corpora drawn from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub phonology: PhonologySpec,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub error_rate: f64,
    pub fuzzy_confusion_prob: f64,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            phonology: PhonologySpec { words: 500, ..Default::default() },
            train_pairs: 5000,
            test_pairs: 500,
            min_len: 6,
            max_len: 12,
            error_rate: 0.15,
            fuzzy_confusion_prob: 0.3,
            seed: 7,
        }
    }
}

pub struct Benchmark {
    pub lexicon: Lexicon,
    pub pinyin: PinyinTable,
    pub train: Vec<ParallelPair>,
    pub test: Vec<ParallelPair>,
}

impl BenchmarkSpec {
    pub fn build(&self) -> anyhow::Result<Benchmark> {
        let fuzzy = FuzzyClassTable::default();
        let phon = synthetic_phonology(&PhonologySpec { seed: self.seed, ..self.phonology }, &fuzzy);
        let lexicon = Lexicon::build(phon.words.iter().map(|(w, f)| (w.as_str(), *f)), &phon.pinyin, &fuzzy)?;
        let noise = |k: u64| NoiseSpec {
            error_rate: self.error_rate,
            fuzzy_confusion_prob: self.fuzzy_confusion_prob,
            seed: self.seed.wrapping_mul(31).wrapping_add(k),
        };
        let lens = self.min_len..=self.max_len;
        let train = generate_synthetic(&lexicon, &phon.pinyin, self.train_pairs, lens.clone(), &noise(1))?.pairs;
        let test = generate_synthetic(&lexicon, &phon.pinyin, self.test_pairs, lens, &noise(2))?.pairs;
        Ok(Benchmark { lexicon, pinyin: phon.pinyin, train, test })
    }
}

impl Benchmark {
    pub fn setup(&self, config: TrainConfig) -> AblationSetup<'_> {
        AblationSetup {
            train: &self.train,
            test: &self.test,
            lexicon: &self.lexicon,
            pinyin: &self.pinyin,
            config,
        }
    }
}

/// Small model and optimizer settings sized for single-core ablations.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        d_c: 32,
        d_w: 32,
        layers: 1,
        heads: 2,
        d_ff: 64,
        d_g: 16,
        max_len: 32,
        lr: 3e-3,
        batch_size: 32,
        epochs: 30,
        ..Default::default()
    }
}
