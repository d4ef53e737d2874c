//! Oracle suites run by the `selftest` subcommand and the acceptance target.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::gproject::{agem_project, gem_project, ConstraintSet, GEM_MAX_ITERS, GEM_TOL};
use crate::memory::{kmeans, select_icarl, KMEANS_MAX_ITERS};
use crate::numgrad::{dot, norm, sq_dist};
use crate::oracle;
use crate::rng::{rng_for, Purpose, Rng};

/// Tolerances and instance counts for a self-test run.
#[derive(Debug, Clone)]
pub struct SelfTestConfig {
    pub seed: u64,
    pub grad_cases: usize,
    pub grad_tol: f64,
    pub fd_step: f64,
    pub qp_cases: usize,
    /// Passed to `gem_project`; raising it is the negative control.
    pub qp_tol: f64,
    pub qp_match_tol: f64,
    pub qp_feasibility_tol: f64,
    pub agem_cases: usize,
    pub herding_cases: usize,
    pub kmeans_cases: usize,
}

impl Default for SelfTestConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grad_cases: 100,
            grad_tol: 1e-4,
            fd_step: 1e-6,
            qp_cases: 500,
            qp_tol: GEM_TOL,
            qp_match_tol: 1e-4,
            qp_feasibility_tol: 1e-6,
            agem_cases: 200,
            herding_cases: 100,
            kmeans_cases: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed error, in the suite's own units.
    pub worst: f64,
    pub first_failure: Option<String>,
    pub elapsed_ms: u128,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<10} cases={:<4} failures={:<4} worst={:.3e} ({} ms){}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.elapsed_ms,
            self.first_failure
                .as_ref()
                .map(|f| format!(" first failure: {f}"))
                .unwrap_or_default()
        )
    }
}

struct Tally {
    name: &'static str,
    start: Instant,
    cases: usize,
    failures: usize,
    worst: f64,
    first_failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            start: Instant::now(),
            cases: 0,
            failures: 0,
            worst: 0.0,
            first_failure: None,
        }
    }

    fn record(&mut self, err: f64, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    fn error(&mut self, case: usize, e: crate::Error) {
        self.record(f64::NAN, false, || format!("case {case}: {e}"));
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            name: self.name,
            cases: self.cases,
            failures: self.failures,
            worst: self.worst,
            first_failure: self.first_failure,
            elapsed_ms: self.start.elapsed().as_millis(),
        }
    }
}

fn gaussian(rng: &mut Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn gaussian_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// A random projection problem: `dim` in 1..=10, 1..=5 constraint rows.
/// Rows are biased against `g` so most instances violate something.
pub fn random_qp_instance(seed: u64, case: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = rng_for(seed, Purpose::SelfTest, 1_000_000 + case);
    let dim = rng.random_range(1..=10);
    let k = rng.random_range(1..=5);
    let g = gaussian_vec(&mut rng, dim);
    let rows = (0..k)
        .map(|_| {
            let mut r = gaussian_vec(&mut rng, dim);
            let push = rng.random_range(-1.0..0.5);
            crate::numgrad::axpy(push, &g, &mut r);
            r
        })
        .collect();
    (g, rows)
}

pub fn gradient_suite(cfg: &SelfTestConfig) -> SuiteReport {
    let mut t = Tally::new("gradient");
    for case in 0..cfg.grad_cases {
        let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(case as u64);
        match oracle::gradient_check(seed, cfg.fd_step) {
            Ok(e) => t.record(e, e < cfg.grad_tol, || format!("case {case}: relative error {e:.3e}")),
            Err(e) => t.error(case, e),
        }
    }
    t.finish()
}

pub fn qp_suite(cfg: &SelfTestConfig) -> SuiteReport {
    let mut t = Tally::new("gem-qp");
    for case in 0..cfg.qp_cases {
        let (g, rows) = random_qp_instance(cfg.seed, case as u64);
        let run = || -> Result<(f64, f64)> {
            let expected = oracle::gem_oracle(&g, &rows)?;
            let cs = ConstraintSet::new(g.len(), rows.clone())?;
            let got = gem_project(&g, &cs, cfg.qp_tol, GEM_MAX_ITERS)?;
            let gap = sq_dist(&got.g_tilde, &expected).sqrt();
            Ok((gap, cs.max_violation(&got.g_tilde)))
        };
        match run() {
            Ok((gap, viol)) => t.record(
                gap.max(viol),
                gap <= cfg.qp_match_tol && viol <= cfg.qp_feasibility_tol,
                || format!("case {case}: distance to oracle {gap:.3e}, violation {viol:.3e}"),
            ),
            Err(e) => t.error(case, e),
        }
    }
    t.finish()
}

pub fn agem_suite(cfg: &SelfTestConfig) -> SuiteReport {
    let mut t = Tally::new("agem");
    let mut rng = rng_for(cfg.seed, Purpose::SelfTest, 2);
    for case in 0..cfg.agem_cases {
        let dim = rng.random_range(1..=10);
        let g = gaussian_vec(&mut rng, dim);
        let r = gaussian_vec(&mut rng, dim);
        let got = match agem_project(&g, &r) {
            Ok(v) => v,
            Err(e) => {
                t.error(case, e);
                continue;
            }
        };
        let gr = dot(&g, &r);
        let expected: Vec<f64> = if gr >= 0.0 {
            g.clone()
        } else {
            let c = gr / dot(&r, &r);
            g.iter().zip(&r).map(|(gi, ri)| gi - c * ri).collect()
        };
        let err = sq_dist(&got, &expected).sqrt() / norm(&g).max(1.0);
        let ok = if gr >= 0.0 { got == g } else { err <= 1e-12 };
        t.record(err, ok, || format!("case {case}: error {err:.3e}"));
    }
    t.finish()
}

pub fn herding_suite(cfg: &SelfTestConfig) -> SuiteReport {
    let mut t = Tally::new("herding");
    let mut rng = rng_for(cfg.seed, Purpose::SelfTest, 3);
    for case in 0..cfg.herding_cases {
        let n = rng.random_range(1..=30);
        let dim = rng.random_range(1..=6);
        let b = rng.random_range(0..=n + 2);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, dim)).collect();
        match select_icarl(&pts, b) {
            Ok(sel) => {
                let expected = oracle::herding_reference(&pts, b);
                let ok = sel.indices == expected && sel.clamped == (b > n);
                t.record(if ok { 0.0 } else { 1.0 }, ok, || {
                    format!("case {case}: got {:?}, expected {expected:?}", sel.indices)
                });
            }
            Err(e) => t.error(case, e),
        }
    }
    t.finish()
}

/// Two well-separated blobs: k-means with k = 2 must find the exhaustive
/// optimum exactly.
pub fn kmeans_suite(cfg: &SelfTestConfig) -> SuiteReport {
    let mut t = Tally::new("kmeans");
    let mut rng = rng_for(cfg.seed, Purpose::SelfTest, 4);
    for case in 0..cfg.kmeans_cases {
        let n = rng.random_range(4..=12);
        let dim = rng.random_range(1..=4);
        let offset = gaussian_vec(&mut rng, dim);
        let scale = 8.0 / norm(&offset).max(1e-9);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut p = gaussian_vec(&mut rng, dim);
                if i % 2 == 1 {
                    crate::numgrad::axpy(scale, &offset, &mut p);
                }
                p
            })
            .collect();
        let run = || -> Result<(f64, f64)> {
            let (best, best_inertia) = oracle::best_two_partition(&pts)?;
            let got = kmeans(&pts, 2, cfg.seed + case as u64, KMEANS_MAX_ITERS)?;
            let ari = oracle::adjusted_rand_index(&got.assignment, &best)?;
            Ok((ari, (got.inertia - best_inertia).abs() / best_inertia.max(1e-12)))
        };
        match run() {
            Ok((ari, gap)) => t.record(gap, ari == 1.0 && gap <= 1e-9, || {
                format!("case {case}: adjusted Rand index {ari}, inertia gap {gap:.3e}")
            }),
            Err(e) => t.error(case, e),
        }
    }
    t.finish()
}

pub fn run_suites(cfg: &SelfTestConfig) -> Vec<SuiteReport> {
    vec![
        gradient_suite(cfg),
        qp_suite(cfg),
        agem_suite(cfg),
        herding_suite(cfg),
        kmeans_suite(cfg),
    ]
}
