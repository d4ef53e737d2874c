#![allow(dead_code)]

use lifelong::bench::{gen_synthetic, Benchmark, SyntheticParams};
use lifelong::strategies::{StrategyConfig, StrategyName};

/// A stream small enough to train many times per test.
pub fn small_bench(tasks: usize) -> Benchmark {
    let p = SyntheticParams {
        tasks,
        relations_per_task: 4,
        samples_per_relation: 20,
        d_emb: 8,
        ..SyntheticParams::default()
    };
    gen_synthetic(&p).unwrap().into()
}

pub fn small_config(name: StrategyName, seed: u64) -> StrategyConfig {
    StrategyConfig {
        d_hid: 12,
        lr_model: 0.5,
        batch: 16,
        replay_batch: 8,
        quota: 6,
        epochs_align: 3,
        fisher_samples: 20,
        agem_ref_samples: 10,
        ..StrategyConfig::new(name).with_seed(seed)
    }
}
