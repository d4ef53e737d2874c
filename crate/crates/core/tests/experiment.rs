use std::fs;
use std::path::Path;

use lifelong::eval::RunRecord;
use lifelong::experiment::{build_report, cmd_gen, cmd_report, cmd_run, ExperimentSpec, RunOptions};
use lifelong::bench::SyntheticParams;

const GRID: &str = r#"
out = "res"
seeds = 5
clock = "frozen"
strategies = ["origin", "ewc", "gem", "agem", "emr", "ea_emr"]
[benchmark]
kind = "synthetic"
tasks = 2
relations_per_task = 3
samples_per_relation = 10
d_emb = 6
[defaults]
lr_model = 0.5
d_hid = 8
quota = 4
replay_batch = 4
epochs_align = 2
"#;

fn records(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn grid_resume_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(GRID, tmp.path()).unwrap();
    let first = cmd_run(&spec, RunOptions { jobs: 2, seed_offset: 0 }).unwrap();
    assert_eq!((first.ran, first.skipped), (30, 0));
    assert!(first.failed.is_empty());
    let files = records(&spec.out);
    assert_eq!(files.len(), 30);
    let csv = fs::read_to_string(spec.out.join("steps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 30 * 2);

    let again = cmd_run(&spec, RunOptions::default()).unwrap();
    assert_eq!((again.ran, again.skipped), (0, 30));
    assert_eq!(records(&spec.out), files);
    assert_eq!(fs::read_to_string(spec.out.join("steps.csv")).unwrap(), csv);

    let report = cmd_report(&spec.out).unwrap();
    assert_eq!(report.summary.len(), 6);
    assert!(report.summary.windows(2).all(|w| w[0].avg.0 >= w[1].avg.0));
    let emr_finals: Vec<f64> = files
        .iter()
        .filter(|(n, _)| n.starts_with("emr-"))
        .map(|(_, b)| serde_json::from_slice::<RunRecord>(b).unwrap().summary.unwrap().final_acc_avg)
        .collect();
    assert_eq!(emr_finals.len(), 5);
    let mean = emr_finals.iter().sum::<f64>() / 5.0;
    let row = report.summary.iter().find(|r| r.strategy == "emr").unwrap();
    assert!((row.avg.0 - mean).abs() < 1e-12);
    assert_eq!(row.runs, 5);
    assert!(spec.out.join("curves.csv").exists());
    assert!(fs::read_to_string(spec.out.join("summary.txt")).unwrap().contains("Whole"));
}

#[test]
fn single_record_has_zero_spread() {
    let tmp = tempfile::tempdir().unwrap();
    let text = GRID.replace("seeds = 5", "seeds = [7]").replace(
        "strategies = [\"origin\", \"ewc\", \"gem\", \"agem\", \"emr\", \"ea_emr\"]",
        "strategies = [\"emr\"]",
    );
    let spec = ExperimentSpec::from_toml(&text, tmp.path()).unwrap();
    cmd_run(&spec, RunOptions { jobs: 1, seed_offset: 3 }).unwrap();
    let names: Vec<String> = records(&spec.out).into_iter().map(|(n, _)| n).collect();
    assert!(names[0].starts_with("emr-seed10-"), "{names:?}");
    let report = build_report(&spec.out).unwrap();
    assert_eq!(report.summary[0].avg.1, 0.0);
    assert!(report.curves.iter().all(|c| c.acc_avg.1 == 0.0 && c.runs == 1));
}

#[test]
fn empty_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(build_report(tmp.path()).is_err());
}

#[test]
fn generated_dataset_runs_through_the_dataset_path() {
    let tmp = tempfile::tempdir().unwrap();
    let params = SyntheticParams {
        tasks: 2,
        relations_per_task: 3,
        samples_per_relation: 10,
        d_emb: 6,
        ..SyntheticParams::default()
    };
    let files = cmd_gen(&params, &tmp.path().join("data")).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    let text = r#"
out = "res"
seeds = 1
strategies = ["emr"]
[benchmark]
kind = "dataset"
samples = "data/samples.jsonl"
embeddings = "data/embeddings.txt"
manifest = "data/manifest.json"
tasks = 2
[defaults]
d_hid = 8
quota = 4
"#;
    let spec = ExperimentSpec::from_toml(text, tmp.path()).unwrap();
    let out = cmd_run(&spec, RunOptions::default()).unwrap();
    assert_eq!(out.ran, 1);
    assert!(out.failed.is_empty());
    assert_eq!(out.records[0].steps.len(), 2);
}
