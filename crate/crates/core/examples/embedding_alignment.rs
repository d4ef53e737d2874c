//! How far stored samples' embeddings drift from where they were recorded,
//! with and without the alignment layer.

use lifelong::bench::{gen_synthetic, Benchmark, SyntheticParams};
use lifelong::numgrad::sq_dist;
use lifelong::strategies::{Learner, StrategyConfig, StrategyName};

fn main() -> lifelong::Result<()> {
    let bench: Benchmark = gen_synthetic(&SyntheticParams {
        tasks: 6,
        ..SyntheticParams::default()
    })?
    .into();
    for name in [StrategyName::Emr, StrategyName::EaEmr] {
        let cfg = StrategyConfig {
            lr_model: 0.5,
            ..StrategyConfig::new(name)
        };
        let align = cfg.uses_alignment();
        let mut learner = Learner::new(cfg, &bench)?;
        learner.train_next()?;
        // Embeddings of task-1 exemplars right after task 1.
        let recorded: Vec<(Vec<u32>, Vec<f64>)> = learner
            .memory()
            .entries()
            .map(|e| Ok((e.sample.tokens.clone(), learner.model().encode_sentence(&e.sample.tokens, align)?)))
            .collect::<lifelong::Result<_>>()?;
        print!("{:<7} drift of task-1 exemplars:", name.as_str());
        while !learner.is_done() {
            learner.train_next()?;
            let drift: f64 = recorded
                .iter()
                .map(|(t, z)| Ok(sq_dist(&learner.model().encode_sentence(t, align)?, z).sqrt()))
                .sum::<lifelong::Result<f64>>()?
                / recorded.len() as f64;
            print!(" {drift:.3}");
        }
        println!();
        for d in learner.deltas() {
            println!(
                "  task {}: alignment moved in step 1: {}, encoder moved in step 2: {}",
                d.step + 1,
                d.alignment_moved_in_step1,
                d.encoder_moved_in_step2
            );
        }
    }
    Ok(())
}
