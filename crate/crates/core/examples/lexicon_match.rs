//! Building a lexicon, exact trie matching, and the fuzzy 2-gram index.

use desm::lexicon::Lexicon;
use desm::pinyin::{FuzzyClassTable, PinyinSyllable, PinyinTable};

fn main() -> anyhow::Result<()> {
    let ptable = PinyinTable::parse(include_str!("../data/demo_pinyin.tsv"))?;
    let fuzzy = FuzzyClassTable::default();
    let lex = Lexicon::from_word_text(include_str!("../data/demo_words.tsv"), &ptable, &fuzzy)?;
    println!("{} entries, fingerprint {:08x}", lex.len(), lex.fingerprint());

    let sentence: Vec<char> = "我们明天去参加会议".chars().collect();
    for m in lex.match_all(&sentence) {
        let e = lex.entry(m.word_id);
        println!("  [{}..={}] {} (freq {})", m.start, m.end, e.surface, e.frequency);
    }

    let (a, b) = (PinyinSyllable::parse("chan")?, PinyinSyllable::parse("jia")?);
    let hits: Vec<&str> = lex
        .pinyin_2gram_lookup(&a, &b)
        .iter()
        .map(|&id| lex.entry(id).surface.as_str())
        .collect();
    println!("words sounding like chan-jia: {hits:?}");

    let json = lex.to_json();
    let back = Lexicon::from_json(&json)?;
    println!("serialized {} bytes, round trip equal: {}", json.len(), back.to_json() == json);
    Ok(())
}
