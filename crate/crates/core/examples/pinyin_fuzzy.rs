//! Syllable parsing and fuzzy-pinyin equivalence.

use desm::pinyin::{FuzzyClassTable, PinyinSyllable};

fn main() -> anyhow::Result<()> {
    let table = FuzzyClassTable::default();
    println!("initial classes: {:?}", table.initial_classes());
    println!("final classes:   {:?}", table.final_classes());

    for s in ["zhang1", "chan2", "lv4", "ni3", "jia5"] {
        let p = PinyinSyllable::parse(s)?;
        println!(
            "{s:>7}: initial={:<3} final={:<4} tone={} key={}",
            p.initial,
            p.final_,
            p.tone,
            table.key(&p)
        );
    }

    let pairs = [("can1", "chan2"), ("shi2", "si4"), ("lan2", "nang2"), ("jia1", "qia1")];
    for (a, b) in pairs {
        let (pa, pb) = (PinyinSyllable::parse(a)?, PinyinSyllable::parse(b)?);
        println!("{a} ~ {b}: {}", table.equivalent(&pa, &pb));
    }

    // A narrower table that only merges the retroflex initials.
    let strict = FuzzyClassTable::parse("z zh\nc ch\ns sh\n")?;
    let (a, b) = (PinyinSyllable::parse("lan")?, PinyinSyllable::parse("nan")?);
    println!("lan ~ nan with retroflex-only classes: {}", strict.equivalent(&a, &b));
    Ok(())
}
