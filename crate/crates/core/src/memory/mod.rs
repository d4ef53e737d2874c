//! Episodic memory over past-task samples and the exemplar selectors that fill it.

mod episodic;
mod kmeans;
mod select;

use serde::{Deserialize, Serialize};

pub use episodic::{EpisodicMemory, MemoryEntry, ReplayMode};
pub use kmeans::{kmeans, ClusterAssignment};
pub use select::{select_checked, select_icarl, select_kmeans, select_random, Selection, KMEANS_MAX_ITERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    #[default]
    Random,
    Kmeans,
    Icarl,
}
