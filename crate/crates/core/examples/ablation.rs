//! Trains the four standard variants on a generated benchmark and prints
//! the ablation table.
//!
//! cargo run --release --example ablation -- [seeds] [epochs]

use desm::eval::{desk_train_config, run_ablation, BenchmarkSpec, Variant};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DESM_LOG", "info")).init();
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let mut config = desk_train_config();
    if let Some(e) = args.next() {
        config.epochs = e.parse()?;
    }
    let bench = BenchmarkSpec::default().build()?;
    println!(
        "lexicon {} words, {} train / {} test pairs",
        bench.lexicon.len(),
        bench.train.len(),
        bench.test.len()
    );
    let seeds: Vec<u64> = (0..seeds).collect();
    let table = run_ablation(&bench.setup(config), &Variant::standard(), &seeds);
    print!("{}", table.to_table());
    Ok(())
}
