//! Driving a strategy x seed grid from a TOML spec, resuming it and
//! summarizing the results, as the `run` and `report` subcommands do.

use lifelong::experiment::{cmd_report, cmd_run, ExperimentSpec, RunOptions};

const SPEC: &str = r#"
out = "results"
seeds = 2
clock = "frozen"
strategies = ["origin", "emr", "ea_emr"]

[benchmark]
kind = "synthetic"
tasks = 4

[defaults]
lr_model = 0.5
d_hid = 64
"#;

fn main() -> lifelong::Result<()> {
    let dir = tempfile::tempdir()?;
    let spec = ExperimentSpec::from_toml(SPEC, dir.path())?;
    let first = cmd_run(&spec, RunOptions { jobs: 0, seed_offset: 0 })?;
    println!("first pass: {} cells run, {} reused", first.ran, first.skipped);
    let second = cmd_run(&spec, RunOptions::default())?;
    println!("second pass: {} cells run, {} reused", second.ran, second.skipped);

    let report = cmd_report(&spec.out)?;
    print!("{}", report.summary_table());
    println!("mean ACC_avg curve of the best strategy:");
    let best = &report.summary[0].strategy;
    for c in report.curves.iter().filter(|c| &c.strategy == best) {
        println!("  step {}: {:.3} ± {:.3}", c.step, c.acc_avg.0, c.acc_avg.1);
    }
    Ok(())
}
