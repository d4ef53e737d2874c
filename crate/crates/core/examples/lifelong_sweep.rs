//! The six strategies over one task stream, with per-step ACC_avg curves.
//!
//! `cargo run --release --example lifelong_sweep -- [tasks] [seeds]`

use lifelong::bench::{gen_synthetic, Benchmark, SyntheticParams};
use lifelong::experiment::mean_std;
use lifelong::strategies::{run_stream, StrategyConfig, StrategyName};

fn main() -> lifelong::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("a count"));
    let tasks = args.next().unwrap_or(10);
    let seeds = args.next().unwrap_or(1) as u64;
    let base: Benchmark = gen_synthetic(&SyntheticParams {
        tasks,
        ..SyntheticParams::default()
    })?
    .into();

    println!("{:<8} {:>14} {:>8}  ACC_avg after each task (seed 0)", "strategy", "final ACC_avg", "passes");
    for name in StrategyName::BASE {
        let mut finals = Vec::new();
        let mut curve = String::new();
        let mut passes = 0;
        for seed in 0..seeds {
            let cfg = StrategyConfig {
                lr_model: 0.5,
                ..StrategyConfig::new(name).with_seed(seed)
            };
            let r = run_stream(&cfg, &base.permuted(seed))?;
            if let Some(e) = &r.error {
                eprintln!("{name} seed {seed} stopped early: {e}");
            }
            let s = r.summary.as_ref().expect("finished run");
            finals.push(s.final_acc_avg);
            passes += s.total_fb_passes;
            if seed == 0 {
                curve = r.steps.iter().map(|s| format!("{:.2}", s.acc_avg)).collect::<Vec<_>>().join(" ");
            }
        }
        let (m, sd) = mean_std(&finals);
        println!("{:<8} {m:>7.3} ± {sd:.3} {:>8}  {curve}", name.as_str(), passes / seeds);
    }
    Ok(())
}
