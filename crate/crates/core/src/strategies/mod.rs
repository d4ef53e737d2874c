//! Lifelong training strategies: Origin, EMR (and its selection variants),
//! EWC, GEM, A-GEM and EA-EMR with its ablations.
//!
//! A [`Learner`] owns one run's state and trains the tasks of a
//! [`Benchmark`] in order; [`run_stream`] wraps it with evaluation after
//! every task and returns the [`RunRecord`].

mod config;
mod fisher;

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bench::{draw_candidates, Benchmark, LabelId, Task};
use crate::error::{Error, Result};
use crate::eval::{evaluate_step, RunRecord, RunSummary, StepMetrics};
use crate::gproject::{agem_project, gem_project, task_gradient, ConstraintSet, LossGradient};
use crate::memory::{select_checked, EpisodicMemory, MemoryEntry};
use crate::model::{RankItem, RelModel};
use crate::numgrad::{cosine, margin_rank_loss, sgd_step, sq_dist, GradVector, SegId, Tape, Var};
use crate::rng::{rng_for, Purpose, Rng};

pub use config::{StrategyConfig, StrategyName};
pub use fisher::FisherDiag;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const RELATION_TOKENIZATION: &str = "relation names split on non-alphanumeric characters, tokens mean-pooled";

/// Millisecond clock for run timing; tests inject a frozen one.
pub trait Clock: Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Always reads 0.
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Forward/backward passes spent on encoder training batches.
    pub fb_passes: u64,
    /// Passes spent fitting the alignment layer.
    pub align_passes: u64,
    pub gem_nonconverged: u64,
    pub cosine_warnings: u64,
}

/// Pass accounting for one training batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchAudit {
    pub step: usize,
    /// |D|
    pub train: usize,
    /// Replay batch size m for EMR variants, reference sample count for A-GEM.
    pub replay: usize,
    /// |M| when the batch started.
    pub memory: usize,
    /// Passes counted while processing the batch.
    pub passes: u64,
}

/// Which parameter groups moved during the two EA-EMR steps of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeltaAudit {
    pub step: usize,
    pub alignment_moved_in_step1: bool,
    pub encoder_moved_in_step2: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub selection_clamped: bool,
    pub joint_objective: Option<f64>,
}

/// Everything carried from one task to the next.
#[derive(Debug, Clone)]
pub struct LifelongState {
    pub model: RelModel,
    pub memory: EpisodicMemory,
    /// Model as it stood after the previous task: f^(k-1) and a^(k-1).
    pub prev: Option<RelModel>,
    pub fisher: Option<FisherDiag>,
    pub task_index: usize,
}

/// Mean ranking gradient over memory entries, with negatives re-drawn from
/// the observed relations.
struct ReplayLoss<'a> {
    model: &'a RelModel,
    bench: &'a Benchmark,
    cfg: &'a StrategyConfig,
    observed: &'a [LabelId],
    freeze: &'a [SegId],
    rng: &'a mut Rng,
    counters: &'a mut Counters,
}

impl LossGradient for ReplayLoss<'_> {
    fn mean_gradient(&mut self, entries: &[&MemoryEntry]) -> Result<GradVector> {
        let negatives: Vec<Vec<LabelId>> = entries
            .iter()
            .map(|e| redraw_negatives(self.rng, e.sample.gold, self.observed, self.cfg.replay_candidates))
            .collect();
        let items: Vec<RankItem<'_>> = entries
            .iter()
            .zip(&negatives)
            .map(|(e, n)| RankItem {
                tokens: &e.sample.tokens,
                gold: e.sample.gold,
                negatives: n,
            })
            .collect();
        ranking_grad(self.model, self.bench, self.cfg, &items, self.freeze, self.counters)
    }
}

fn redraw_negatives(rng: &mut Rng, gold: LabelId, observed: &[LabelId], n: usize) -> Vec<LabelId> {
    let mut c = draw_candidates(rng, gold, observed, n);
    c.retain(|&l| l != gold);
    c
}

fn ranking_grad(
    model: &RelModel,
    bench: &Benchmark,
    cfg: &StrategyConfig,
    items: &[RankItem<'_>],
    freeze: &[SegId],
    counters: &mut Counters,
) -> Result<GradVector> {
    let mut tape = Tape::new(model.params());
    for &s in freeze {
        tape.freeze(s);
    }
    let loss = model.batch_loss(&mut tape, items, cfg.margin, &bench.relations, cfg.uses_alignment())?;
    let g = tape.backward(loss, 1.0)?;
    counters.fb_passes += items.len() as u64;
    counters.cosine_warnings += tape.warnings() as u64;
    Ok(g)
}

fn segs_equal(a: &RelModel, b: &RelModel, segs: &[SegId]) -> bool {
    segs.iter().all(|&s| {
        a.params()
            .seg(s)
            .iter()
            .zip(b.params().seg(s))
            .all(|(x, y)| x.to_bits() == y.to_bits())
    })
}

/// Trains one strategy over the tasks of a benchmark, in stream order.
pub struct Learner<'b> {
    cfg: StrategyConfig,
    bench: &'b Benchmark,
    state: LifelongState,
    counters: Counters,
    audit: Option<Vec<BatchAudit>>,
    deltas: Vec<DeltaAudit>,
}

impl<'b> Learner<'b> {
    pub fn new(cfg: StrategyConfig, bench: &'b Benchmark) -> Result<Self> {
        cfg.validate()?;
        if bench.stream.is_empty() {
            return Err(Error::invalid("task stream is empty"));
        }
        let model = RelModel::new(bench.vocab.clone(), cfg.d_hid, cfg.seed)?;
        let memory = EpisodicMemory::new(cfg.quota * bench.stream.len(), cfg.quota);
        Ok(Self {
            cfg,
            bench,
            state: LifelongState {
                model,
                memory,
                prev: None,
                fisher: None,
                task_index: 0,
            },
            counters: Counters::default(),
            audit: None,
            deltas: Vec::new(),
        })
    }

    /// Starts recording a [`BatchAudit`] per training batch.
    pub fn enable_audit(&mut self) {
        self.audit.get_or_insert_with(Vec::new);
    }

    pub fn audit(&self) -> &[BatchAudit] {
        self.audit.as_deref().unwrap_or(&[])
    }

    pub fn deltas(&self) -> &[DeltaAudit] {
        &self.deltas
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    pub fn state(&self) -> &LifelongState {
        &self.state
    }

    pub fn model(&self) -> &RelModel {
        &self.state.model
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.state.memory
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn is_done(&self) -> bool {
        self.state.task_index >= self.bench.stream.len()
    }

    /// Trains the next task of the stream and refreshes every per-task
    /// snapshot.
    pub fn train_next(&mut self) -> Result<TaskOutcome> {
        let k = self.state.task_index;
        let bench = self.bench;
        let Some(task) = bench.stream.tasks().get(k) else {
            return Err(Error::invalid("every task of the stream is already trained"));
        };
        if task.train.is_empty() {
            return Err(Error::invalid(format!("task {k} has no training samples")));
        }
        let observed = bench.stream.observed_labels(k);
        let align = self.cfg.uses_alignment();

        let before_step1 = self.state.model.clone();
        self.train_encoder(task, &observed)?;
        let mut joint = None;
        if align {
            let segs = self.state.model.segments();
            let alignment_moved_in_step1 = !segs_equal(&before_step1, &self.state.model, &segs.alignment());
            let before_step2 = self.state.model.clone();
            if self.cfg.name == StrategyName::EaEmrNoAlign {
                self.fit_alignment_ranking(task, &observed)?;
            } else {
                self.fit_alignment(task)?;
            }
            let encoder_moved_in_step2 = !segs_equal(&before_step2, &self.state.model, &segs.encoder());
            self.deltas.push(DeltaAudit {
                step: k,
                alignment_moved_in_step1,
                encoder_moved_in_step2,
            });
            joint = Some(self.joint_objective(task)?);
        }

        let selection_clamped = self.store_exemplars(task)?;
        if self.cfg.name == StrategyName::Ewc {
            self.refresh_fisher(task)?;
        }
        self.state.prev = Some(self.state.model.clone());
        self.state.task_index += 1;
        Ok(TaskOutcome {
            selection_clamped,
            joint_objective: joint,
        })
    }

    /// Mini-batch SGD over the task's training data. Alignment parameters are
    /// frozen throughout.
    fn train_encoder(&mut self, task: &Task, observed: &[LabelId]) -> Result<()> {
        let cfg = &self.cfg;
        let bench = self.bench;
        let k = self.state.task_index as u64;
        let mut order_rng = rng_for(cfg.seed, Purpose::TrainOrder, k);
        let mut replay_rng = rng_for(cfg.seed, Purpose::Replay, k);
        let mut cand_rng = rng_for(cfg.seed, Purpose::Candidates, k);
        let freeze: Vec<SegId> = if cfg.uses_alignment() {
            self.state.model.segments().alignment().to_vec()
        } else {
            Vec::new()
        };
        let negatives: Vec<Vec<LabelId>> = task.train.iter().map(|s| s.negatives()).collect();
        let mut order: Vec<usize> = (0..task.train.len()).collect();

        for _ in 0..cfg.epochs_model {
            order.shuffle(&mut order_rng);
            for chunk in order.chunks(cfg.batch) {
                let items: Vec<RankItem<'_>> = chunk
                    .iter()
                    .map(|&i| RankItem {
                        tokens: &task.train[i].tokens,
                        gold: task.train[i].gold,
                        negatives: &negatives[i],
                    })
                    .collect();
                let passes_before = self.counters.fb_passes;
                let memory_len = self.state.memory.len();
                let mut replayed = 0;
                let mut g = ranking_grad(&self.state.model, bench, cfg, &items, &freeze, &mut self.counters)?;

                match cfg.name {
                    StrategyName::Ewc => {
                        if let Some(f) = &self.state.fisher {
                            if cfg.ewc_alpha > 0.0 {
                                f.add_penalty_grad(self.state.model.params(), cfg.ewc_alpha, &mut g)?;
                            }
                        }
                    }
                    StrategyName::Gem if !self.state.memory.is_empty() => {
                        let mut loss = ReplayLoss {
                            model: &self.state.model,
                            bench,
                            cfg,
                            observed,
                            freeze: &freeze,
                            rng: &mut cand_rng,
                            counters: &mut self.counters,
                        };
                        let mut rows = Vec::new();
                        for (_, entries) in self.state.memory.tasks() {
                            let refs: Vec<&MemoryEntry> = entries.iter().collect();
                            rows.push(task_gradient(&mut loss, &refs)?.into_values());
                        }
                        let constraints = ConstraintSet::new(g.len(), rows)?;
                        let p = gem_project(g.values(), &constraints, cfg.gem_tol, cfg.gem_max_iters)?;
                        if !p.converged {
                            self.counters.gem_nonconverged += 1;
                        }
                        g = GradVector::from_values(g.layout().clone(), p.g_tilde)?;
                    }
                    StrategyName::Agem if !self.state.memory.is_empty() => {
                        let refs = self.state.memory.sample_uniform(cfg.agem_ref_samples, &mut replay_rng);
                        replayed = refs.len();
                        let mut loss = ReplayLoss {
                            model: &self.state.model,
                            bench,
                            cfg,
                            observed,
                            freeze: &freeze,
                            rng: &mut cand_rng,
                            counters: &mut self.counters,
                        };
                        let g_ref = loss.mean_gradient(&refs)?;
                        let projected = agem_project(g.values(), g_ref.values())?;
                        g = GradVector::from_values(g.layout().clone(), projected)?;
                    }
                    _ => {}
                }
                sgd_step(self.state.model.params_mut(), &g, cfg.lr_model)?;

                if cfg.name.replays() && cfg.replay_batch > 0 && !self.state.memory.is_empty() {
                    let batch = self
                        .state
                        .memory
                        .sample_replay(cfg.replay_mode, cfg.replay_batch, &mut replay_rng);
                    replayed = batch.len();
                    let mut loss = ReplayLoss {
                        model: &self.state.model,
                        bench,
                        cfg,
                        observed,
                        freeze: &freeze,
                        rng: &mut cand_rng,
                        counters: &mut self.counters,
                    };
                    let g = loss.mean_gradient(&batch)?;
                    sgd_step(self.state.model.params_mut(), &g, cfg.lr_model)?;
                }

                if let Some(audit) = &mut self.audit {
                    audit.push(BatchAudit {
                        step: k as usize,
                        train: chunk.len(),
                        replay: replayed,
                        memory: memory_len,
                        passes: self.counters.fb_passes - passes_before,
                    });
                }
            }
        }
        Ok(())
    }

    /// Raw sentence encodings of the task's training data and of every stored
    /// sample, with regression targets `a^(k-1) f(x)` for the former and
    /// `a^(k-1) f^(k-1)(x)` for the latter.
    fn alignment_targets(&self, task: &Task) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let model = &self.state.model;
        let current = model.alignment();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for s in &task.train {
            let z = model.encode_sentence(&s.tokens, false)?;
            targets.push(current.apply(&z)?);
            inputs.push(z);
        }
        if let Some(prev) = &self.state.prev {
            for e in self.state.memory.entries() {
                inputs.push(model.encode_sentence(&e.sample.tokens, false)?);
                targets.push(prev.encode_sentence(&e.sample.tokens, true)?);
            }
        }
        Ok((inputs, targets))
    }

    /// Second EA-EMR step: with the encoders fixed, regress the aligned
    /// embeddings onto their targets.
    fn fit_alignment(&mut self, task: &Task) -> Result<()> {
        let (inputs, targets) = self.alignment_targets(task)?;
        let cfg = &self.cfg;
        let segs = self.state.model.segments();
        let mut rng = rng_for(cfg.seed, Purpose::Align, self.state.task_index as u64);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        for _ in 0..cfg.epochs_align {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch) {
                let g = {
                    let mut tape = Tape::new(self.state.model.params());
                    let mut terms = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let x = tape.input(inputs[i].clone());
                        let y = tape.affine(x, segs.align_a, Some(segs.align_c))?;
                        terms.push(tape.sq_dist(y, targets[i].clone())?);
                    }
                    let total = tape.sum(&terms)?;
                    let loss = tape.scale(total, 1.0 / chunk.len() as f64);
                    tape.backward(loss, 1.0)?
                };
                self.counters.align_passes += chunk.len() as u64;
                sgd_step(self.state.model.params_mut(), &g, cfg.lr_align)?;
            }
        }
        Ok(())
    }

    /// Ablation of the second step: same schedule and parameters, but the
    /// alignment layer is fitted with the ranking loss instead of the
    /// embedding regression.
    fn fit_alignment_ranking(&mut self, task: &Task, observed: &[LabelId]) -> Result<()> {
        let cfg = &self.cfg;
        let model = &self.state.model;
        let k = self.state.task_index as u64;
        let mut rng = rng_for(cfg.seed, Purpose::Align, k);
        let rel_raw: Vec<Vec<f64>> = (0..self.bench.relations.len() as LabelId)
            .map(|l| model.encode_relation(self.bench.relations.tokens(l), false))
            .collect::<Result<_>>()?;
        let mut items: Vec<(Vec<f64>, LabelId, Vec<LabelId>)> = Vec::new();
        for s in &task.train {
            items.push((model.encode_sentence(&s.tokens, false)?, s.gold, s.negatives()));
        }
        for e in self.state.memory.entries() {
            let negs = redraw_negatives(&mut rng, e.sample.gold, observed, cfg.replay_candidates);
            items.push((model.encode_sentence(&e.sample.tokens, false)?, e.sample.gold, negs));
        }
        let segs = model.segments();
        let mut order: Vec<usize> = (0..items.len()).collect();
        for _ in 0..cfg.epochs_align {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch) {
                let g = {
                    let mut tape = Tape::new(self.state.model.params());
                    let mut rel: HashMap<LabelId, Var> = HashMap::new();
                    let mut aligned_rel = |tape: &mut Tape<'_>, l: LabelId| -> Result<Var> {
                        if let Some(v) = rel.get(&l) {
                            return Ok(*v);
                        }
                        let x = tape.input(rel_raw[l as usize].clone());
                        let v = tape.affine(x, segs.align_a, Some(segs.align_c))?;
                        rel.insert(l, v);
                        Ok(v)
                    };
                    let mut losses = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let (h, gold, negs) = &items[i];
                        let x = tape.input(h.clone());
                        let s = tape.affine(x, segs.align_a, Some(segs.align_c))?;
                        let rg = aligned_rel(&mut tape, *gold)?;
                        let pos = tape.cosine(s, rg)?;
                        let mut terms = Vec::with_capacity(negs.len());
                        for &n in negs {
                            let rn = aligned_rel(&mut tape, n)?;
                            let neg = tape.cosine(s, rn)?;
                            terms.push(tape.hinge(pos, neg, cfg.margin));
                        }
                        losses.push(if terms.is_empty() {
                            tape.scale(pos, 0.0)
                        } else {
                            tape.sum(&terms)?
                        });
                    }
                    let total = tape.sum(&losses)?;
                    let loss = tape.scale(total, 1.0 / chunk.len() as f64);
                    self.counters.cosine_warnings += tape.warnings() as u64;
                    tape.backward(loss, 1.0)?
                };
                self.counters.align_passes += chunk.len() as u64;
                sgd_step(self.state.model.params_mut(), &g, cfg.lr_align)?;
            }
        }
        Ok(())
    }

    /// Ranking loss over the task plus ranking and drift terms over memory,
    /// evaluated with the current model. Logged only.
    fn joint_objective(&self, task: &Task) -> Result<f64> {
        let model = &self.state.model;
        let table = model.relation_table(&self.bench.relations, true)?;
        let margin = self.cfg.margin;
        let rank = |s: &[f64], gold: LabelId, negatives: &[LabelId]| -> f64 {
            let pos = cosine(s, &table[gold as usize]);
            negatives
                .iter()
                .map(|&n| margin_rank_loss(pos, cosine(s, &table[n as usize]), margin))
                .sum::<f64>()
        };
        let mut total = 0.0;
        for s in &task.train {
            let e = model.encode_sentence(&s.tokens, true)?;
            total += rank(&e, s.gold, &s.negatives());
        }
        if let Some(prev) = &self.state.prev {
            for m in self.state.memory.entries() {
                let e = model.encode_sentence(&m.sample.tokens, true)?;
                let t = prev.encode_sentence(&m.sample.tokens, true)?;
                total += rank(&e, m.sample.gold, &m.sample.negatives()) + sq_dist(&e, &t);
            }
        }
        Ok(total)
    }

    /// Stores exemplars of the finished task and re-anchors every stored
    /// sample to the current model.
    fn store_exemplars(&mut self, task: &Task) -> Result<bool> {
        let Some(method) = self.cfg.selection_method() else {
            return Ok(false);
        };
        let align = self.cfg.uses_alignment();
        let k = self.state.task_index;
        let model = &self.state.model;
        let embeddings: Vec<Vec<f64>> = task
            .train
            .iter()
            .map(|s| model.encode_sentence(&s.tokens, align))
            .collect::<Result<_>>()?;
        let seed = rng_for(self.cfg.seed, Purpose::Selection, k as u64).random::<u64>();
        let sel = select_checked(method, task.train.len(), &embeddings, self.cfg.quota, seed)?;
        let samples = sel.indices.iter().map(|&i| task.train[i].clone()).collect();
        let anchors = sel.indices.iter().map(|&i| embeddings[i].clone()).collect();
        self.state.memory.store_task(k, samples, anchors)?;
        for e in self.state.memory.entries_mut() {
            e.anchor = model.encode_sentence(&e.sample.tokens, align)?;
        }
        Ok(sel.clamped)
    }

    /// Replaces the Fisher estimate with squared per-sample gradients over a
    /// random subset of the task's training data.
    fn refresh_fisher(&mut self, task: &Task) -> Result<()> {
        let model = &self.state.model;
        let n = task.train.len();
        let m = self.cfg.fisher_samples.min(n);
        let mut rng = rng_for(self.cfg.seed, Purpose::Fisher, self.state.task_index as u64);
        let mut values = vec![0.0; model.params().len()];
        for i in sample(&mut rng, n, m) {
            let s = &task.train[i];
            let negatives = s.negatives();
            let mut tape = Tape::new(model.params());
            let item = RankItem {
                tokens: &s.tokens,
                gold: s.gold,
                negatives: &negatives,
            };
            let loss = model.training_loss(&mut tape, item, self.cfg.margin, &self.bench.relations, false)?;
            let g = tape.backward(loss, 1.0)?;
            for (f, gi) in values.iter_mut().zip(g.values()) {
                *f += gi * gi;
            }
        }
        for f in &mut values {
            *f /= m as f64;
        }
        self.state.fisher = Some(FisherDiag::new(values, model.params().clone())?);
        Ok(())
    }
}

/// [`run_stream_with`] on the system clock.
pub fn run_stream(config: &StrategyConfig, bench: &Benchmark) -> Result<RunRecord> {
    run_stream_with(config, bench, &SystemClock::new())
}

/// Trains every task in order and evaluates after each. A failure part-way
/// returns the steps completed so far with `error` set.
pub fn run_stream_with(config: &StrategyConfig, bench: &Benchmark, clock: &dyn Clock) -> Result<RunRecord> {
    let mut learner = Learner::new(config.clone(), bench)?;
    let mut record = RunRecord {
        version: VERSION.to_string(),
        config: config.clone(),
        benchmark: bench.descriptor.clone(),
        relation_tokenization: RELATION_TOKENIZATION.to_string(),
        steps: Vec::new(),
        summary: None,
        error: None,
    };
    let align = config.uses_alignment();
    for (k, task) in bench.stream.tasks().iter().enumerate() {
        let start = clock.now_ms();
        let before = learner.counters().clone();
        let outcome = match learner.train_next() {
            Ok(o) => o,
            Err(e) => {
                log::error!("{} seed {}: task {k} failed: {e}", config.name, config.seed);
                record.error = Some(format!("task {k}: {e}"));
                return Ok(record);
            }
        };
        let wall_ms = clock.now_ms().saturating_sub(start);
        let (fixed, full) = match evaluate_step(learner.model(), &bench.relations, align, &bench.stream, k) {
            Ok(m) => m,
            Err(e) => {
                record.error = Some(format!("evaluating task {k}: {e}"));
                return Ok(record);
            }
        };
        let after = learner.counters();
        log::debug!(
            "{} seed {} step {k}: acc_avg {:.4} acc_whole {:.4}",
            config.name,
            config.seed,
            fixed.acc_avg,
            fixed.acc_whole
        );
        record.steps.push(StepMetrics {
            step: k,
            task_id: task.labels.iter().copied().min().unwrap_or(0),
            acc_per_task: fixed.acc_per_task,
            acc_avg: fixed.acc_avg,
            acc_whole: fixed.acc_whole,
            acc_per_task_full: full.acc_per_task,
            acc_avg_full: full.acc_avg,
            acc_whole_full: full.acc_whole,
            wall_ms,
            fb_passes: after.fb_passes - before.fb_passes,
            align_passes: after.align_passes - before.align_passes,
            gem_nonconverged: after.gem_nonconverged - before.gem_nonconverged,
            cosine_warnings: after.cosine_warnings - before.cosine_warnings,
            memory_size: learner.memory().len(),
            selection_clamped: outcome.selection_clamped,
            joint_objective: outcome.joint_objective,
        });
    }
    let last = record.steps.last().expect("stream is non-empty");
    record.summary = Some(RunSummary {
        final_acc_avg: last.acc_avg,
        final_acc_whole: last.acc_whole,
        final_acc_avg_full: last.acc_avg_full,
        final_acc_whole_full: last.acc_whole_full,
        total_wall_ms: record.steps.iter().map(|s| s.wall_ms).sum(),
        total_fb_passes: record.steps.iter().map(|s| s.fb_passes).sum(),
    });
    Ok(record)
}
