//! Ranking relation-detection model: two mean-pooled tanh encoders scored by
//! cosine similarity, with a linear alignment layer stacked on both outputs.

mod checkpoint;
mod vocab;

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng as _;

use crate::bench::{LabelId, RelationVocab};
use crate::error::{Error, Result};
use crate::numgrad::{dot, Layout, Matrix, ParamVector, SegId, Tape, Var};
use crate::rng::{rng_for, Purpose};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use vocab::{tokenize_relation_name, TokenId, VocabEmbedding, UNK, UNK_ID};

pub const DEFAULT_D_HID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Sentence,
    Relation,
}

/// Where each weight lives inside the model's [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSegments {
    pub sent_w: SegId,
    pub sent_b: SegId,
    pub rel_w: SegId,
    pub rel_b: SegId,
    pub align_a: SegId,
    pub align_c: SegId,
}

impl ModelSegments {
    pub fn encoder(&self) -> [SegId; 4] {
        [self.sent_w, self.sent_b, self.rel_w, self.rel_b]
    }

    pub fn alignment(&self) -> [SegId; 2] {
        [self.align_a, self.align_c]
    }

    fn for_side(&self, side: Side) -> (SegId, SegId) {
        match side {
            Side::Sentence => (self.sent_w, self.sent_b),
            Side::Relation => (self.rel_w, self.rel_b),
        }
    }
}

/// Standalone copy of an alignment layer `a(h) = A h + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentLayer {
    pub a: Matrix,
    pub c: Vec<f64>,
}

impl AlignmentLayer {
    pub fn identity(d: usize) -> Self {
        Self {
            a: Matrix::identity(d),
            c: vec![0.0; d],
        }
    }

    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.a.mul_vec(h)?;
        for (o, c) in out.iter_mut().zip(&self.c) {
            *o += c;
        }
        Ok(out)
    }
}

/// One ranking term: a sentence, its gold relation and the negatives it is
/// ranked against.
#[derive(Debug, Clone, Copy)]
pub struct RankItem<'a> {
    pub tokens: &'a [TokenId],
    pub gold: LabelId,
    pub negatives: &'a [LabelId],
}

#[derive(Debug, Clone)]
pub struct RelModel {
    params: ParamVector,
    segs: ModelSegments,
    vocab: Arc<VocabEmbedding>,
    d_hid: usize,
}

impl RelModel {
    /// Random encoders (uniform Glorot scaling, zero biases) and an identity
    /// alignment layer.
    pub fn new(vocab: Arc<VocabEmbedding>, d_hid: usize, seed: u64) -> Result<Self> {
        let d_emb = vocab.dim();
        if d_emb == 0 || d_hid == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        let mut layout = Layout::new();
        let segs = ModelSegments {
            sent_w: layout.push("sentence.w", d_hid, d_emb),
            sent_b: layout.push("sentence.b", d_hid, 1),
            rel_w: layout.push("relation.w", d_hid, d_emb),
            rel_b: layout.push("relation.b", d_hid, 1),
            align_a: layout.push("align.a", d_hid, d_hid),
            align_c: layout.push("align.c", d_hid, 1),
        };
        let mut params = ParamVector::zeros(Arc::new(layout));
        let mut rng = rng_for(seed, Purpose::Init, 0);
        let bound = (6.0 / (d_emb + d_hid) as f64).sqrt();
        for seg in [segs.sent_w, segs.rel_w] {
            for v in params.seg_mut(seg) {
                *v = rng.random_range(-bound..bound);
            }
        }
        let a = params.seg_mut(segs.align_a);
        for i in 0..d_hid {
            a[i * d_hid + i] = 1.0;
        }
        Ok(Self {
            params,
            segs,
            vocab,
            d_hid,
        })
    }

    pub(crate) fn from_parts(
        params: ParamVector,
        vocab: Arc<VocabEmbedding>,
        d_hid: usize,
    ) -> Result<Self> {
        let l = params.layout().clone();
        let find = |n: &str| {
            l.find(n)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks segment {n}")))
        };
        let segs = ModelSegments {
            sent_w: find("sentence.w")?,
            sent_b: find("sentence.b")?,
            rel_w: find("relation.w")?,
            rel_b: find("relation.b")?,
            align_a: find("align.a")?,
            align_c: find("align.c")?,
        };
        let expect = [
            (segs.sent_w, d_hid, vocab.dim()),
            (segs.rel_w, d_hid, vocab.dim()),
            (segs.align_a, d_hid, d_hid),
        ];
        for (seg, r, c) in expect {
            let s = l.segment(seg);
            if s.rows != r || s.cols != c {
                return Err(Error::invalid(format!(
                    "segment {} has shape {}x{}, expected {r}x{c}",
                    s.name, s.rows, s.cols
                )));
            }
        }
        Ok(Self {
            params,
            segs,
            vocab,
            d_hid,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn segments(&self) -> ModelSegments {
        self.segs
    }

    pub fn vocab(&self) -> &Arc<VocabEmbedding> {
        &self.vocab
    }

    pub fn d_hid(&self) -> usize {
        self.d_hid
    }

    pub fn d_emb(&self) -> usize {
        self.vocab.dim()
    }

    pub fn alignment(&self) -> AlignmentLayer {
        let d = self.d_hid;
        AlignmentLayer {
            a: Matrix::new(d, d, self.params.seg(self.segs.align_a).to_vec())
                .expect("alignment segment is d_hid x d_hid"),
            c: self.params.seg(self.segs.align_c).to_vec(),
        }
    }

    pub fn set_alignment(&mut self, layer: &AlignmentLayer) -> Result<()> {
        if layer.a.rows() != self.d_hid || layer.a.cols() != self.d_hid || layer.c.len() != self.d_hid {
            return Err(Error::DimensionMismatch {
                op: "set_alignment",
                expected: self.d_hid,
                got: layer.a.rows(),
            });
        }
        self.params
            .seg_mut(self.segs.align_a)
            .copy_from_slice(layer.a.data());
        self.params.seg_mut(self.segs.align_c).copy_from_slice(&layer.c);
        Ok(())
    }

    /// Records `tanh(W mean(emb(tokens)) + b)` on the tape, followed by the
    /// alignment layer when `align` is set.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape<'_>,
        tokens: &[TokenId],
        side: Side,
        align: bool,
    ) -> Result<Var> {
        let pooled = self.vocab.mean_pool(tokens)?;
        let x = tape.input(pooled);
        let (w, b) = self.segs.for_side(side);
        let h = tape.affine(x, w, Some(b))?;
        let h = tape.tanh(h);
        if align {
            tape.affine(h, self.segs.align_a, Some(self.segs.align_c))
        } else {
            Ok(h)
        }
    }

    fn encode(&self, tokens: &[TokenId], side: Side, align: bool) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let v = self.encode_on_tape(&mut tape, tokens, side, align)?;
        Ok(tape.value(v).to_vec())
    }

    pub fn encode_sentence(&self, tokens: &[TokenId], align: bool) -> Result<Vec<f64>> {
        self.encode(tokens, Side::Sentence, align)
    }

    pub fn encode_relation(&self, tokens: &[TokenId], align: bool) -> Result<Vec<f64>> {
        self.encode(tokens, Side::Relation, align)
    }

    /// Cosine between the sentence and relation embeddings.
    pub fn score(&self, sentence: &[TokenId], relation: &[TokenId], align: bool) -> Result<f64> {
        let s = self.encode_sentence(sentence, align)?;
        let r = self.encode_relation(relation, align)?;
        Ok(crate::numgrad::cosine(&s, &r))
    }

    /// Embeddings of every relation, indexed by label id.
    pub fn relation_table(&self, relations: &RelationVocab, align: bool) -> Result<Vec<Vec<f64>>> {
        (0..relations.len() as LabelId)
            .map(|l| self.encode_relation(relations.tokens(l), align))
            .collect()
    }

    /// Highest-scoring candidate; exact ties go to the smallest label id.
    pub fn predict(
        &self,
        tokens: &[TokenId],
        candidates: &[LabelId],
        relations: &RelationVocab,
        align: bool,
    ) -> Result<LabelId> {
        let s = self.encode_sentence(tokens, align)?;
        let mut scored = Vec::with_capacity(candidates.len());
        for &c in candidates {
            let r = self.encode_relation(relations.tokens(c), align)?;
            scored.push((c, crate::numgrad::cosine(&s, &r)));
        }
        argmax_label(scored).ok_or_else(|| Error::invalid("empty candidate set"))
    }

    /// Sum over negatives of the hinge between the gold and negative scores.
    pub fn training_loss(
        &self,
        tape: &mut Tape<'_>,
        item: RankItem<'_>,
        margin: f64,
        relations: &RelationVocab,
        align: bool,
    ) -> Result<Var> {
        let mut cache = HashMap::new();
        self.item_loss(tape, item, margin, relations, align, &mut cache)
    }

    fn item_loss(
        &self,
        tape: &mut Tape<'_>,
        item: RankItem<'_>,
        margin: f64,
        relations: &RelationVocab,
        align: bool,
        cache: &mut HashMap<LabelId, Var>,
    ) -> Result<Var> {
        if item.negatives.contains(&item.gold) {
            return Err(Error::invalid(format!(
                "gold label {} listed among negatives",
                item.gold
            )));
        }
        let s = self.encode_on_tape(tape, item.tokens, Side::Sentence, align)?;
        let mut rel = |tape: &mut Tape<'_>, l: LabelId| -> Result<Var> {
            if let Some(v) = cache.get(&l) {
                return Ok(*v);
            }
            let v = self.encode_on_tape(tape, relations.tokens(l), Side::Relation, align)?;
            cache.insert(l, v);
            Ok(v)
        };
        let g = rel(tape, item.gold)?;
        let pos = tape.cosine(s, g)?;
        let mut terms = Vec::with_capacity(item.negatives.len());
        for &n in item.negatives {
            let r = rel(tape, n)?;
            let neg = tape.cosine(s, r)?;
            terms.push(tape.hinge(pos, neg, margin));
        }
        if terms.is_empty() {
            // nothing to rank against; a zero that still ends the tape
            return Ok(tape.scale(pos, 0.0));
        }
        tape.sum(&terms)
    }

    /// Mean of per-item ranking losses. Relation encodings are shared across
    /// items, so each relation is encoded once per batch.
    pub fn batch_loss(
        &self,
        tape: &mut Tape<'_>,
        items: &[RankItem<'_>],
        margin: f64,
        relations: &RelationVocab,
        align: bool,
    ) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut cache = HashMap::new();
        let mut losses = Vec::with_capacity(items.len());
        for item in items {
            losses.push(self.item_loss(tape, *item, margin, relations, align, &mut cache)?);
        }
        let total = tape.sum(&losses)?;
        Ok(tape.scale(total, 1.0 / items.len() as f64))
    }
}

/// Argmax with ties to the smallest label.
pub fn argmax_label(scored: impl IntoIterator<Item = (LabelId, f64)>) -> Option<LabelId> {
    let mut best: Option<(LabelId, f64)> = None;
    for (l, s) in scored {
        best = match best {
            None => Some((l, s)),
            Some((bl, bs)) if s > bs || (s == bs && l < bl) => Some((l, s)),
            keep => keep,
        };
    }
    best.map(|(l, _)| l)
}

/// Predicts from precomputed sentence and relation embeddings.
pub fn predict_with_table(sentence: &[f64], candidates: &[LabelId], table: &[Vec<f64>]) -> Option<LabelId> {
    let ns = dot(sentence, sentence).sqrt();
    argmax_label(candidates.iter().map(|&c| {
        let r = &table[c as usize];
        let nr = dot(r, r).sqrt();
        let s = if ns > 0.0 && nr > 0.0 {
            (dot(sentence, r) / (ns * nr)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        (c, s)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::{cosine, margin_rank_loss};

    fn toy_vocab() -> Arc<VocabEmbedding> {
        let rows = (0..6).map(|i| {
            let v = (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4).collect();
            (format!("t{i}"), v)
        });
        Arc::new(VocabEmbedding::from_rows(4, rows).unwrap())
    }

    fn toy_relations(vocab: &VocabEmbedding) -> RelationVocab {
        let names: Vec<String> = vec!["t1 t2".into(), "t3".into(), "t4 t5".into()];
        let tokens = names
            .iter()
            .map(|n| n.split(' ').map(|t| vocab.id(t)).collect())
            .collect();
        RelationVocab::new(names, tokens, vocab).unwrap()
    }

    #[test]
    fn identity_alignment_leaves_embeddings_unchanged() {
        let m = RelModel::new(toy_vocab(), 6, 3).unwrap();
        for toks in [&[1u32][..], &[2, 3, 4]] {
            assert_eq!(m.encode_sentence(toks, false).unwrap(), m.encode_sentence(toks, true).unwrap());
            assert_eq!(m.encode_relation(toks, false).unwrap(), m.encode_relation(toks, true).unwrap());
        }
    }

    #[test]
    fn two_token_sentence_uses_mean_of_rows() {
        let vocab = toy_vocab();
        let m = RelModel::new(vocab.clone(), 5, 11).unwrap();
        let e1 = vocab.row(1);
        let e2 = vocab.row(2);
        let mean: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| (a + b) / 2.0).collect();
        let s = m.segments();
        let w = Matrix::new(5, 4, m.params().seg(s.sent_w).to_vec()).unwrap();
        let expect: Vec<f64> = w
            .mul_vec(&mean)
            .unwrap()
            .iter()
            .zip(m.params().seg(s.sent_b))
            .map(|(v, b)| (v + b).tanh())
            .collect();
        let got = m.encode_sentence(&[1, 2], false).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn doubled_alignment_doubles_relation_embedding() {
        let mut m = RelModel::new(toy_vocab(), 4, 5).unwrap();
        let mut a = vec![0.0; 16];
        for i in 0..4 {
            a[i * 4 + i] = 2.0;
        }
        let layer = AlignmentLayer {
            a: Matrix::new(4, 4, a).unwrap(),
            c: vec![0.0; 4],
        };
        m.set_alignment(&layer).unwrap();
        let raw = m.encode_relation(&[3], false).unwrap();
        let al = m.encode_relation(&[3], true).unwrap();
        for (r, a) in raw.iter().zip(&al) {
            assert_eq!(*a, 2.0 * r);
        }
    }

    #[test]
    fn empty_tokens_rejected() {
        let m = RelModel::new(toy_vocab(), 4, 5).unwrap();
        assert!(m.encode_sentence(&[], false).is_err());
        assert!(m.encode_relation(&[], true).is_err());
    }

    #[test]
    fn score_is_cosine_of_encodings() {
        let m = RelModel::new(toy_vocab(), 7, 9).unwrap();
        let s = m.encode_sentence(&[1, 4], true).unwrap();
        let r = m.encode_relation(&[2], true).unwrap();
        assert!((m.score(&[1, 4], &[2], true).unwrap() - cosine(&s, &r)).abs() < 1e-15);
    }

    #[test]
    fn predict_tie_break_and_single_candidate() {
        let vocab = toy_vocab();
        let rels = toy_relations(&vocab);
        let m = RelModel::new(vocab, 4, 1).unwrap();
        assert_eq!(m.predict(&[1], &[2], &rels, false).unwrap(), 2);
        assert_eq!(argmax_label([(5, 0.3), (2, 0.3), (7, 0.1)]), Some(2));
        assert_eq!(argmax_label([(0, 0.9), (1, 0.1)]), Some(0));
        assert!(m.predict(&[1], &[], &rels, false).is_err());
    }

    #[test]
    fn loss_is_sum_of_hinges() {
        let vocab = toy_vocab();
        let rels = toy_relations(&vocab);
        let m = RelModel::new(vocab, 6, 2).unwrap();
        let toks = [1u32, 5];
        let mut tape = Tape::new(m.params());
        let l = m
            .training_loss(
                &mut tape,
                RankItem { tokens: &toks, gold: 0, negatives: &[1, 2] },
                0.2,
                &rels,
                true,
            )
            .unwrap();
        let pos = m.score(&toks, rels.tokens(0), true).unwrap();
        let expect: f64 = [1, 2]
            .iter()
            .map(|&n| margin_rank_loss(pos, m.score(&toks, rels.tokens(n), true).unwrap(), 0.2))
            .sum();
        assert!((tape.scalar(l) - expect).abs() < 1e-12);
    }

    #[test]
    fn gold_among_negatives_rejected() {
        let vocab = toy_vocab();
        let rels = toy_relations(&vocab);
        let m = RelModel::new(vocab, 4, 2).unwrap();
        let mut tape = Tape::new(m.params());
        let r = m.training_loss(
            &mut tape,
            RankItem { tokens: &[1], gold: 0, negatives: &[0, 1] },
            0.2,
            &rels,
            false,
        );
        assert!(r.is_err());
    }
}
