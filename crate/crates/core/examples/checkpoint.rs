//! Saving a trained model and its episodic memory, then restoring both.

use lifelong::bench::{gen_synthetic, Benchmark, SyntheticParams};
use lifelong::memory::EpisodicMemory;
use lifelong::model::{load_checkpoint, save_checkpoint};
use lifelong::strategies::{Learner, StrategyConfig, StrategyName};

fn main() -> lifelong::Result<()> {
    let bench: Benchmark = gen_synthetic(&SyntheticParams {
        tasks: 3,
        ..SyntheticParams::default()
    })?
    .into();
    let cfg = StrategyConfig {
        lr_model: 0.5,
        ..StrategyConfig::new(StrategyName::EaEmr)
    };
    let mut learner = Learner::new(cfg.clone(), &bench)?;
    learner.train_next()?;
    learner.train_next()?;

    let mut model_bytes = Vec::new();
    save_checkpoint(learner.model(), &mut model_bytes)?;
    let mut memory_lines = Vec::new();
    learner.memory().export_jsonl(&mut memory_lines)?;
    println!(
        "checkpoint {} bytes, memory {} entries in {} bytes",
        model_bytes.len(),
        learner.memory().len(),
        memory_lines.len()
    );

    let model = load_checkpoint(model_bytes.as_slice(), bench.vocab.clone())?;
    let memory = EpisodicMemory::import_jsonl(memory_lines.as_slice(), learner.memory().budget(), cfg.quota)?;
    println!("parameters restored exactly: {}", model.params() == learner.model().params());
    println!("memory restored: {} entries", memory.len());

    let test = &bench.stream.tasks()[0].test;
    let agree = test
        .iter()
        .filter(|s| {
            let a = model.predict(&s.tokens, &s.candidates, &bench.relations, true).ok();
            let b = learner.model().predict(&s.tokens, &s.candidates, &bench.relations, true).ok();
            a == b
        })
        .count();
    println!("restored model agrees on {agree}/{} task-1 test predictions", test.len());
    Ok(())
}
