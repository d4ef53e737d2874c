//! Generating the synthetic relation stream and writing it to disk.

use lifelong::bench::{gen_synthetic, SyntheticParams};
use lifelong::experiment::cmd_gen;

fn main() -> lifelong::Result<()> {
    let params = SyntheticParams::default();
    let bench = gen_synthetic(&params)?;
    println!(
        "{} tasks, {} relations, {}-d word vectors for {} tokens",
        bench.stream.len(),
        bench.relations.len(),
        bench.vocab.dim(),
        bench.vocab.len()
    );
    for (k, t) in bench.stream.tasks().iter().enumerate().take(3) {
        let s = &t.train[0];
        println!(
            "task {k}: relations {:?}  train/valid/test {}/{}/{}  first sample gold {} among {:?}",
            t.labels,
            t.train.len(),
            t.valid.len(),
            t.test.len(),
            s.gold,
            s.candidates
        );
    }
    let order: Vec<u32> = bench.stream.permuted(3).tasks().iter().map(|t| t.labels[0]).collect();
    println!("task order for run seed 3 (first relation of each task): {order:?}");

    let dir = std::env::temp_dir().join("lifelong-synthetic");
    for f in cmd_gen(&params, &dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
