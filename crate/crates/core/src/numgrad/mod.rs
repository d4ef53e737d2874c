//! Dense numerical core: matrices, flat parameter vectors and a small
//! reverse-mode tape covering the ops the relation model needs.

mod matrix;
mod params;
mod tape;

pub use matrix::{axpy, dot, norm, sq_dist, Matrix};
pub use params::{sgd_step, GradVector, Layout, ParamVector, SegId, Segment};
pub use tape::{cosine, margin_rank_loss, Tape, Var};
