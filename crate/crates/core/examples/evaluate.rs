//! Detection and correction metrics on hand-made predictions.

use desm::eval::score;

fn main() -> anyhow::Result<()> {
    let triples = [
        // one error fixed
        ("我们参家会议", "我们参加会议", "我们参加会议"),
        // error left alone, and a correct character rewritten
        ("今天天汽很好", "今天天气很好", "今天天汽狠好"),
        // clean sentence left untouched
        ("学习英语", "学习英语", "学习英语"),
        // error detected but replaced with the wrong character
        ("纠正措误", "纠正错误", "纠正挫误"),
    ];
    let report = score(&triples)?;
    print!("{}", report.to_table());
    println!("{}", report.to_json());
    Ok(())
}
