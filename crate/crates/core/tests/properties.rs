use lifelong::bench::Sample;
use lifelong::eval::acc_avg;
use lifelong::gproject::{agem_project, gem_project, ConstraintSet, GEM_MAX_ITERS, GEM_TOL};
use lifelong::memory::{select_icarl, select_kmeans, select_random, EpisodicMemory};
use lifelong::numgrad::{cosine, dot, margin_rank_loss, norm, sq_dist};
use lifelong::oracle::gem_oracle;
use proptest::prelude::*;

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

fn nonzero(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec_of(len).prop_filter("nonzero", |v| norm(v) > 1e-3)
}

fn qp_instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (1usize..=8, 1usize..=4).prop_flat_map(|(d, k)| (nonzero(d), prop::collection::vec(nonzero(d), k)))
}

proptest! {
    #[test]
    fn cosine_ignores_positive_scale((u, v) in (1usize..8).prop_flat_map(|d| (nonzero(d), nonzero(d))), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let su: Vec<f64> = u.iter().map(|x| a * x).collect();
        let sv: Vec<f64> = v.iter().map(|x| b * x).collect();
        prop_assert!((cosine(&u, &v) - cosine(&su, &sv)).abs() < 1e-12);
        prop_assert!(cosine(&u, &v).abs() <= 1.0);
    }

    #[test]
    fn hinge_is_nonnegative_and_monotone(pos in -1.0f64..1.0, neg in -1.0f64..1.0, margin in 0.0f64..1.0, d in 0.0f64..0.5) {
        let l = margin_rank_loss(pos, neg, margin);
        prop_assert!(l >= 0.0);
        prop_assert!(margin_rank_loss(pos + d, neg, margin) <= l);
        prop_assert!(margin_rank_loss(pos, neg + d, margin) >= l);
        if pos - neg >= margin {
            prop_assert_eq!(l, 0.0);
        } else {
            prop_assert!((l - (margin - pos + neg)).abs() < 1e-15);
        }
    }

    #[test]
    fn gem_matches_oracle((g, rows) in qp_instance()) {
        let cs = ConstraintSet::new(g.len(), rows.clone()).unwrap();
        let p = gem_project(&g, &cs, GEM_TOL, GEM_MAX_ITERS).unwrap();
        let expected = gem_oracle(&g, &rows).unwrap();
        prop_assert!(p.converged);
        prop_assert!(cs.max_violation(&p.g_tilde) <= 1e-6);
        prop_assert!(sq_dist(&p.g_tilde, &expected).sqrt() <= 1e-4 * norm(&g).max(1.0));
        if cs.max_violation(&g) == 0.0 {
            prop_assert_eq!(&p.g_tilde, &g);
        }
    }

    #[test]
    fn agem_output_satisfies_its_constraint((g, r) in (1usize..10).prop_flat_map(|d| (vec_of(d), nonzero(d)))) {
        let out = agem_project(&g, &r).unwrap();
        prop_assert!(dot(&out, &r) >= -1e-9 * norm(&g).max(1.0) * norm(&r));
        if dot(&g, &r) >= 0.0 {
            prop_assert_eq!(out, g);
        }
    }

    #[test]
    fn acc_avg_ignores_order(mut accs in prop::collection::vec(0.0f64..=1.0, 1..12), seed in any::<u64>()) {
        let before = acc_avg(&accs).unwrap();
        let n = accs.len();
        accs.rotate_left((seed as usize) % n);
        accs.swap(0, (seed as usize / 7) % n);
        prop_assert!((before - acc_avg(&accs).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&before));
    }

    #[test]
    fn selections_are_distinct_and_sized(n in 1usize..40, b in 0usize..50, d in 1usize..4, seed in any::<u64>()) {
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..d).map(|j| ((i * 31 + j * 17 + seed as usize % 97) % 23) as f64 * 0.37).collect())
            .collect();
        for sel in [
            select_random(n, b, seed),
            select_kmeans(&pts, b, seed).unwrap(),
            select_icarl(&pts, b).unwrap(),
        ] {
            let mut idx = sel.indices.clone();
            prop_assert_eq!(idx.len(), b.min(n));
            prop_assert_eq!(sel.clamped, b > n);
            idx.sort_unstable();
            idx.dedup();
            prop_assert_eq!(idx.len(), b.min(n));
            prop_assert!(idx.iter().all(|&i| i < n));
        }
    }

    #[test]
    fn memory_never_exceeds_budget(quota in 1usize..6, tasks in 1usize..6, sizes in prop::collection::vec(0usize..10, 1..8)) {
        let budget = quota * tasks;
        let mut mem = EpisodicMemory::new(budget, quota);
        for (t, &size) in sizes.iter().enumerate() {
            let samples: Vec<Sample> = (0..size).map(|i| Sample::new(vec![i as u32], t as u32, vec![t as u32]).unwrap()).collect();
            let anchors = vec![vec![0.0]; size];
            let before = mem.len();
            let res = mem.store_task(t, samples, anchors);
            if res.is_err() {
                prop_assert_eq!(mem.len(), before);
            }
            prop_assert!(mem.len() <= budget);
            prop_assert!(mem.tasks().all(|(_, e)| e.len() <= quota));
        }
    }
}
