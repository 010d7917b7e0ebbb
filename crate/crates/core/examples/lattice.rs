//! The char-word lattice for a misrecognized sentence, under each matching mode.

use desm::desm::{build_lattice_with_mode, lattice_to_feature_ids, LatticeMode, DEFAULT_M_MAX};
use desm::lexicon::Lexicon;
use desm::pinyin::{FuzzyClassTable, PinyinTable};

fn main() -> anyhow::Result<()> {
    let ptable = PinyinTable::parse(include_str!("../data/demo_pinyin.tsv"))?;
    let lex = Lexicon::from_word_text(include_str!("../data/demo_words.tsv"), &ptable, &FuzzyClassTable::default())?;
    // 参加 misheard as 参家
    let sentence: Vec<char> = "我们参家会议".chars().collect();

    for mode in [LatticeMode::TtmOnly, LatticeMode::Desm] {
        println!("== {mode}");
        let lat = build_lattice_with_mode(&lex, &ptable, &sentence, DEFAULT_M_MAX, mode);
        for (i, cands) in lat.per_char.iter().enumerate() {
            let words: Vec<String> = cands
                .iter()
                .map(|c| format!("{}:{:?}", lex.entry(c.word_id).surface, c.provenance))
                .collect();
            let flag = if lat.suspect[i] { "?" } else { " " };
            println!("{flag} {} {}", sentence[i], words.join(" "));
        }
    }

    let lat = build_lattice_with_mode(&lex, &ptable, &sentence, 3, LatticeMode::Desm);
    let feats = lattice_to_feature_ids(&lat, 3);
    println!("model input ids for position 2: {:?}", feats.row(2));
    println!("{}", lat.to_json_lines(&lex, 0)[2]);
    Ok(())
}
