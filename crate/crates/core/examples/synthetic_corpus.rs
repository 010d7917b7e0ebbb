//! Generating a toy phonology and a homophone-noised parallel corpus.

use desm::corpus::{corpus_stats, generate_synthetic, synthetic_phonology, NoiseSpec, PhonologySpec};
use desm::lexicon::Lexicon;
use desm::pinyin::FuzzyClassTable;

fn main() -> anyhow::Result<()> {
    let fuzzy = FuzzyClassTable::default();
    let phon = synthetic_phonology(&PhonologySpec { words: 300, seed: 11, ..Default::default() }, &fuzzy);
    let lex = Lexicon::build(phon.words.iter().map(|(w, f)| (w.as_str(), *f)), &phon.pinyin, &fuzzy)?;
    println!("{} words over {} characters", lex.len(), phon.pinyin.len());

    let noise = NoiseSpec { error_rate: 0.15, fuzzy_confusion_prob: 0.3, seed: 5 };
    let corpus = generate_synthetic(&lex, &phon.pinyin, 2000, 6..=12, &noise)?;
    let stats = corpus_stats(&corpus.pairs);
    let chars: usize = corpus.pairs.iter().map(|p| p.source.len()).sum();
    println!(
        "{} sentences, {} errors in {} characters ({:.1}%), {} picks without a homophone",
        stats.sentences,
        stats.errors,
        chars,
        100.0 * stats.errors as f64 / chars as f64,
        corpus.unsubstitutable
    );
    for (p, at) in corpus.pairs.iter().zip(&corpus.injected).take(5) {
        let swaps: Vec<String> = at
            .iter()
            .map(|&i| {
                let r = |c| phon.pinyin.readings(c)[0].to_string();
                format!("{}({})->{}({})", p.target[i], r(p.target[i]), p.source[i], r(p.source[i]))
            })
            .collect();
        println!("{}  {}", p.source_string(), swaps.join(" "));
    }
    Ok(())
}
