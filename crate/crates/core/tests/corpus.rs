mod common;

use common::brute_equivalent;
use desm::corpus::{generate_synthetic, parse_parallel_tsv, synthetic_phonology, NoiseSpec, PhonologySpec};
use desm::lexicon::Lexicon;
use desm::pinyin::{FuzzyClassTable, PinyinTable};

fn setup() -> (Lexicon, PinyinTable) {
    let fuzzy = FuzzyClassTable::default();
    let phon = synthetic_phonology(&PhonologySpec { words: 200, seed: 4, ..Default::default() }, &fuzzy);
    let lex = Lexicon::build(phon.words.iter().map(|(w, f)| (w.as_str(), *f)), &phon.pinyin, &fuzzy).unwrap();
    (lex, phon.pinyin)
}

fn noise(error_rate: f64, fuzzy_confusion_prob: f64, seed: u64) -> NoiseSpec {
    NoiseSpec { error_rate, fuzzy_confusion_prob, seed }
}

#[test]
fn zero_rate_leaves_text_clean() {
    let (lex, pt) = setup();
    let c = generate_synthetic(&lex, &pt, 300, 4..=10, &noise(0.0, 0.5, 1)).unwrap();
    assert!(c.pairs.iter().all(|p| p.source == p.target));
    assert!(c.pairs.iter().all(|p| (4..=10).contains(&p.target.len())));
}

#[test]
fn every_swap_is_pinyin_equivalent() {
    let (lex, pt) = setup();
    let fuzzy = lex.fuzzy_table();
    for fp in [0.0, 0.5, 1.0] {
        let c = generate_synthetic(&lex, &pt, 300, 4..=10, &noise(1.0, fp, 2)).unwrap();
        let mut swaps = 0;
        for (p, at) in c.pairs.iter().zip(&c.injected) {
            assert_eq!(*at, p.error_positions());
            for &i in at {
                let ok = pt.readings(p.source[i]).iter().any(|a| {
                    pt.readings(p.target[i]).iter().any(|b| brute_equivalent(fuzzy, a, b))
                });
                assert!(ok, "{} -> {}", p.target[i], p.source[i]);
                swaps += 1;
            }
        }
        let chars: usize = c.pairs.iter().map(|p| p.target.len()).sum();
        assert_eq!(swaps + c.unsubstitutable, chars);
    }
}

#[test]
fn seeded_generation_repeats() {
    let (lex, pt) = setup();
    let a = generate_synthetic(&lex, &pt, 200, 4..=10, &noise(0.2, 0.3, 5)).unwrap();
    let b = generate_synthetic(&lex, &pt, 200, 4..=10, &noise(0.2, 0.3, 5)).unwrap();
    let c = generate_synthetic(&lex, &pt, 200, 4..=10, &noise(0.2, 0.3, 6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.pairs, c.pairs);
}

#[test]
fn corruption_rate_is_close_to_spec() {
    let (lex, pt) = setup();
    for rate in [0.05, 0.15, 0.4] {
        let c = generate_synthetic(&lex, &pt, 2000, 6..=12, &noise(rate, 0.3, 8)).unwrap();
        let chars: usize = c.pairs.iter().map(|p| p.target.len()).sum();
        let errors: usize = c.pairs.iter().map(|p| p.error_positions().len()).sum();
        assert!(chars >= 10_000);
        let observed = errors as f64 / chars as f64;
        assert!((observed - rate).abs() <= 0.02, "rate {rate}: observed {observed}");
    }
}

#[test]
fn sighan_shaped_file_counts() {
    let text = "今天天汽很好\t今天天气很好\n我们参家会议\t我们参加会议\n学习英语\t学习英语\n";
    let pairs = parse_parallel_tsv(text).unwrap();
    let errors: Vec<usize> = pairs.iter().map(|p| p.error_positions().len()).collect();
    assert_eq!(errors, [1, 1, 0]);
}
