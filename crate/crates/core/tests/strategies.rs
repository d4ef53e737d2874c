mod common;

use common::{small_bench, small_config};
use lifelong::strategies::{run_stream_with, FrozenClock, Learner, StrategyConfig, StrategyName};

fn params_after_each_task(cfg: StrategyConfig, tasks: usize) -> Vec<Vec<f64>> {
    let bench = small_bench(tasks);
    let mut learner = Learner::new(cfg, &bench).unwrap();
    let mut out = Vec::new();
    while !learner.is_done() {
        learner.train_next().unwrap();
        out.push(learner.model().params().values().to_vec());
    }
    out
}

#[test]
fn base_strategies_agree_after_first_task() {
    let bench = small_bench(3);
    let mut first: Option<Vec<f64>> = None;
    for name in StrategyName::BASE {
        let mut learner = Learner::new(small_config(name, 4), &bench).unwrap();
        learner.train_next().unwrap();
        let p = learner.model().params().values().to_vec();
        match &first {
            None => first = Some(p),
            Some(f) => assert!(f == &p, "{name} differs from origin after task 1"),
        }
    }
}

#[test]
fn emr_without_replay_is_origin() {
    let origin = params_after_each_task(small_config(StrategyName::Origin, 2), 4);
    let emr = params_after_each_task(
        StrategyConfig {
            replay_batch: 0,
            ..small_config(StrategyName::Emr, 2)
        },
        4,
    );
    assert_eq!(origin, emr);
}

#[test]
fn ewc_without_penalty_is_origin() {
    let origin = params_after_each_task(small_config(StrategyName::Origin, 3), 4);
    let ewc = params_after_each_task(
        StrategyConfig {
            ewc_alpha: 0.0,
            ..small_config(StrategyName::Ewc, 3)
        },
        4,
    );
    assert_eq!(origin, ewc);
}

#[test]
fn ewc_penalty_changes_later_tasks() {
    let origin = params_after_each_task(small_config(StrategyName::Origin, 3), 3);
    let ewc = params_after_each_task(small_config(StrategyName::Ewc, 3), 3);
    assert_eq!(origin[0], ewc[0]);
    assert_ne!(origin[1], ewc[1]);
}

#[test]
fn ea_emr_matches_emr_on_first_task() {
    let emr = params_after_each_task(small_config(StrategyName::Emr, 5), 3);
    let ea = params_after_each_task(small_config(StrategyName::EaEmr, 5), 3);
    assert_eq!(emr[0], ea[0]);
    assert_ne!(emr[1], ea[1]);
}

#[test]
fn emr_and_gem_pass_counts() {
    let bench = small_bench(5);
    for name in [StrategyName::Emr, StrategyName::Gem, StrategyName::Agem] {
        let cfg = StrategyConfig {
            replay_batch: 4,
            ..small_config(name, 1)
        };
        let m = cfg.replay_batch;
        let mut learner = Learner::new(cfg, &bench).unwrap();
        learner.enable_audit();
        while !learner.is_done() {
            learner.train_next().unwrap();
        }
        let audit = learner.audit();
        assert!(audit.iter().any(|a| a.memory > 0));
        for a in audit {
            let expected = match (name, a.memory) {
                (_, 0) => a.train,
                (StrategyName::Emr, _) => {
                    assert_eq!(a.replay, m);
                    a.train + m
                }
                (StrategyName::Gem, mem) => a.train + mem,
                (_, _) => a.train + a.replay,
            };
            assert_eq!(a.passes, expected as u64, "{name} at {a:?}");
        }
        let total: u64 = audit.iter().map(|a| a.passes).sum();
        assert_eq!(total, learner.counters().fb_passes);
    }
}

#[test]
fn ea_emr_steps_touch_only_their_parameters() {
    let bench = small_bench(4);
    let mut learner = Learner::new(small_config(StrategyName::EaEmr, 0), &bench).unwrap();
    while !learner.is_done() {
        learner.train_next().unwrap();
    }
    let deltas = learner.deltas();
    assert_eq!(deltas.len(), 4);
    for d in deltas {
        assert!(!d.alignment_moved_in_step1, "{d:?}");
        assert!(!d.encoder_moved_in_step2, "{d:?}");
    }
    assert!(learner.counters().align_passes > 0);
}

#[test]
fn memory_stays_within_budget() {
    let bench = small_bench(5);
    for name in [StrategyName::Emr, StrategyName::EaEmr, StrategyName::EmrIcarl, StrategyName::Gem] {
        let cfg = small_config(name, 0);
        let budget = cfg.quota * bench.stream.len();
        let mut learner = Learner::new(cfg.clone(), &bench).unwrap();
        let mut k = 0;
        while !learner.is_done() {
            learner.train_next().unwrap();
            k += 1;
            assert!(learner.memory().len() <= budget);
            assert_eq!(learner.memory().len(), k * cfg.quota, "{name}");
        }
    }
}

#[test]
fn origin_keeps_no_memory() {
    let bench = small_bench(2);
    let mut learner = Learner::new(small_config(StrategyName::Origin, 0), &bench).unwrap();
    while !learner.is_done() {
        learner.train_next().unwrap();
    }
    assert!(learner.memory().is_empty());
    assert!(learner.train_next().is_err());
}

#[test]
fn reruns_are_byte_identical() {
    let bench = small_bench(3);
    for name in StrategyName::ALL {
        let cfg = small_config(name, 9);
        let a = run_stream_with(&cfg, &bench, &FrozenClock).unwrap().to_json().unwrap();
        let b = run_stream_with(&cfg, &bench, &FrozenClock).unwrap().to_json().unwrap();
        assert!(a == b, "{name}");
    }
}

#[test]
fn records_hold_one_step_per_task() {
    let bench = small_bench(3);
    let r = run_stream_with(&small_config(StrategyName::EaEmr, 1), &bench, &FrozenClock).unwrap();
    assert!(r.is_complete());
    assert_eq!(r.steps.len(), 3);
    for (k, s) in r.steps.iter().enumerate() {
        assert_eq!(s.acc_per_task.len(), k + 1);
        assert!(s.joint_objective.is_some());
        assert!((0.0..=1.0).contains(&s.acc_avg));
    }
    let summary = r.summary.unwrap();
    assert_eq!(summary.final_acc_avg, r.steps[2].acc_avg);
}

#[test]
fn invalid_config_is_rejected() {
    let bench = small_bench(2);
    let cfg = StrategyConfig {
        batch: 0,
        ..small_config(StrategyName::Emr, 0)
    };
    assert!(Learner::new(cfg, &bench).is_err());
}
