//! Choosing which samples of a finished task go into episodic memory.
//!
//! Compares random, k-means and herding selection on one synthetic task by
//! how many of its relations end up represented and how well the selection
//! mean matches the task mean.

use lifelong::bench::{gen_synthetic, SyntheticParams};
use lifelong::memory::{select_icarl, select_kmeans, select_random, Selection};
use lifelong::model::RelModel;
use lifelong::numgrad::sq_dist;

fn main() -> lifelong::Result<()> {
    let bench = gen_synthetic(&SyntheticParams::default())?;
    let task = bench.task(0);
    let model = RelModel::new(bench.vocab.clone(), 64, 0)?;
    let emb: Vec<Vec<f64>> = task
        .train
        .iter()
        .map(|s| model.encode_sentence(&s.tokens, false))
        .collect::<lifelong::Result<_>>()?;
    let mean = |idx: &mut dyn Iterator<Item = usize>| {
        let rows: Vec<&Vec<f64>> = idx.map(|i| &emb[i]).collect();
        let mut m = vec![0.0; emb[0].len()];
        for r in &rows {
            for (a, b) in m.iter_mut().zip(r.iter()) {
                *a += b / rows.len() as f64;
            }
        }
        m
    };
    let task_mean = mean(&mut (0..emb.len()));

    let b = 10;
    println!(
        "task with {} training samples over {} relations, quota {b}",
        task.train.len(),
        task.labels.len()
    );
    let report = |name: &str, sel: Selection| {
        let mut rels: Vec<_> = sel.indices.iter().map(|&i| task.train[i].gold).collect();
        rels.sort_unstable();
        rels.dedup();
        let gap = sq_dist(&mean(&mut sel.indices.iter().copied()), &task_mean).sqrt();
        println!("{name:<8} relations covered {}/{}  |mean gap| {gap:.4}", rels.len(), task.labels.len());
    };
    report("random", select_random(emb.len(), b, 0));
    report("k-means", select_kmeans(&emb, b, 0)?);
    report("herding", select_icarl(&emb, b)?);
    Ok(())
}
