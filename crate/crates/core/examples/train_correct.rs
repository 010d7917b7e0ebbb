//! Training a small corrector, saving it, and correcting new sentences.

use desm::checkpoint::Checkpoint;
use desm::corpus::{generate_synthetic, synthetic_phonology, NoiseSpec, PhonologySpec};
use desm::eval::score;
use desm::lexicon::Lexicon;
use desm::pinyin::FuzzyClassTable;
use desm::pipeline::{build_vocab, Corrector};
use desm::train::{TrainConfig, Trainer};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DESM_LOG", "info")).init();
    let fuzzy = FuzzyClassTable::default();
    let phon = synthetic_phonology(&PhonologySpec { words: 150, seed: 2, ..Default::default() }, &fuzzy);
    let lex = Lexicon::build(phon.words.iter().map(|(w, f)| (w.as_str(), *f)), &phon.pinyin, &fuzzy)?;
    let noise = |seed| NoiseSpec { error_rate: 0.15, fuzzy_confusion_prob: 0.3, seed };
    let train = generate_synthetic(&lex, &phon.pinyin, 1500, 6..=10, &noise(1))?.pairs;
    let test = generate_synthetic(&lex, &phon.pinyin, 100, 6..=10, &noise(2))?.pairs;

    let config = TrainConfig {
        d_c: 32,
        d_w: 16,
        layers: 1,
        d_ff: 64,
        d_g: 16,
        max_len: 32,
        lr: 3e-3,
        epochs: 15,
        ..Default::default()
    };
    let vocab = build_vocab(&train, &lex);
    let corrector = Corrector::untrained(&config, vocab, lex, phon.pinyin)?;
    let data = corrector.examples(&train);
    let mut trainer = Trainer::new(corrector.model, config);
    trainer.fit(&data, |e, l| log::info!("epoch {e}: loss {l:.4}"))?;
    let corrector = Corrector { model: trainer.into_model(), ..corrector };

    let ckpt = Checkpoint {
        lexicon_fingerprint: corrector.lexicon.fingerprint(),
        lexicon_size: corrector.lexicon.len(),
        model: corrector.model.clone(),
        vocab: corrector.vocab.clone(),
    };
    let path = std::env::temp_dir().join("desm-example.ckpt");
    ckpt.save(&path)?;
    let restored = Checkpoint::load(&path)?;
    println!("checkpoint {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    let corrector = Corrector { model: restored.model, vocab: restored.vocab, ..corrector };

    let mut triples = Vec::new();
    for p in &test {
        let out = corrector.correct(&p.source_string())?;
        triples.push((p.source_string(), p.target_string(), out.output));
    }
    for (x, y, p) in triples.iter().filter(|(x, y, _)| x != y).take(5) {
        println!("in {x}  gold {y}  out {p}");
    }
    print!("{}", score(&triples)?.to_table());
    Ok(())
}
