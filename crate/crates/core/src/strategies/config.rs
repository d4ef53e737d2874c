use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gproject::{GEM_MAX_ITERS, GEM_TOL};
use crate::memory::{ReplayMode, SelectionMethod};
use crate::model::DEFAULT_D_HID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[default]
    Origin,
    Emr,
    Ewc,
    Gem,
    Agem,
    EaEmr,
    EaEmrNoSel,
    EaEmrNoAlign,
    EmrKmeans,
    EmrIcarl,
}

impl StrategyName {
    pub const ALL: [StrategyName; 10] = [
        Self::Origin,
        Self::Emr,
        Self::Ewc,
        Self::Gem,
        Self::Agem,
        Self::EaEmr,
        Self::EaEmrNoSel,
        Self::EaEmrNoAlign,
        Self::EmrKmeans,
        Self::EmrIcarl,
    ];

    /// The six base methods compared head to head.
    pub const BASE: [StrategyName; 6] = [
        Self::Origin,
        Self::Emr,
        Self::Ewc,
        Self::Gem,
        Self::Agem,
        Self::EaEmr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Origin => "origin",
            Self::Emr => "emr",
            Self::Ewc => "ewc",
            Self::Gem => "gem",
            Self::Agem => "agem",
            Self::EaEmr => "ea_emr",
            Self::EaEmrNoSel => "ea_emr_no_sel",
            Self::EaEmrNoAlign => "ea_emr_no_align",
            Self::EmrKmeans => "emr_kmeans",
            Self::EmrIcarl => "emr_icarl",
        }
    }

    /// Trains an alignment layer on top of the encoders.
    pub fn uses_alignment(self) -> bool {
        matches!(self, Self::EaEmr | Self::EaEmrNoSel | Self::EaEmrNoAlign)
    }

    pub fn uses_memory(self) -> bool {
        !matches!(self, Self::Origin | Self::Ewc)
    }

    /// Replays memory batches between task batches.
    pub fn replays(self) -> bool {
        matches!(
            self,
            Self::Emr | Self::EmrKmeans | Self::EmrIcarl | Self::EaEmr | Self::EaEmrNoSel | Self::EaEmrNoAlign
        )
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Hyperparameters of one strategy run. Fields a strategy does not use are
/// ignored, so one struct covers every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub name: StrategyName,
    pub seed: u64,
    pub d_hid: usize,
    pub lr_model: f64,
    pub lr_align: f64,
    pub epochs_model: usize,
    pub epochs_align: usize,
    pub batch: usize,
    /// Replay batch size m; 0 disables replay.
    pub replay_batch: usize,
    pub replay_mode: ReplayMode,
    /// Samples stored per task.
    pub quota: usize,
    /// Overrides the selection method implied by `name` for `emr` and `ea_emr`.
    pub selection: Option<SelectionMethod>,
    pub margin: f64,
    pub ewc_alpha: f64,
    pub fisher_samples: usize,
    pub agem_ref_samples: usize,
    pub gem_tol: f64,
    pub gem_max_iters: usize,
    /// Negatives per replayed sample are re-drawn to this many candidates
    /// from the observed relations.
    pub replay_candidates: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            name: StrategyName::Origin,
            seed: 0,
            d_hid: DEFAULT_D_HID,
            lr_model: 0.001,
            lr_align: 1e-4,
            epochs_model: 3,
            epochs_align: 20,
            batch: 50,
            replay_batch: 50,
            replay_mode: ReplayMode::TaskLevel,
            quota: 50,
            selection: None,
            margin: 0.2,
            ewc_alpha: 100.0,
            fisher_samples: 100,
            agem_ref_samples: 100,
            gem_tol: GEM_TOL,
            gem_max_iters: GEM_MAX_ITERS,
            replay_candidates: 10,
        }
    }
}

impl StrategyConfig {
    pub fn new(name: StrategyName) -> Self {
        Self {
            name,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn uses_alignment(&self) -> bool {
        self.name.uses_alignment()
    }

    /// How exemplars are chosen, or `None` for strategies without memory.
    pub fn selection_method(&self) -> Option<SelectionMethod> {
        use StrategyName::*;
        match self.name {
            Origin | Ewc => None,
            Gem | Agem | EaEmrNoSel => Some(SelectionMethod::Random),
            EmrKmeans | EaEmrNoAlign => Some(SelectionMethod::Kmeans),
            EmrIcarl => Some(SelectionMethod::Icarl),
            Emr => Some(self.selection.unwrap_or(SelectionMethod::Random)),
            EaEmr => Some(self.selection.unwrap_or(SelectionMethod::Kmeans)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_model", self.lr_model),
            ("lr_align", self.lr_align),
            ("gem_tol", self.gem_tol),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{field} must be positive, got {v}")));
            }
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be non-negative, got {}", self.margin)));
        }
        if !(self.ewc_alpha >= 0.0 && self.ewc_alpha.is_finite()) {
            return Err(Error::Config(format!(
                "ewc_alpha must be non-negative, got {}",
                self.ewc_alpha
            )));
        }
        let counts = [
            ("d_hid", self.d_hid),
            ("epochs_model", self.epochs_model),
            ("batch", self.batch),
            ("fisher_samples", self.fisher_samples),
            ("agem_ref_samples", self.agem_ref_samples),
            ("gem_max_iters", self.gem_max_iters),
            ("replay_candidates", self.replay_candidates),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{field} must be positive")));
            }
        }
        if self.name.uses_memory() && self.quota == 0 {
            return Err(Error::Config("quota must be positive for memory strategies".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for n in StrategyName::ALL {
            assert_eq!(n.as_str().parse::<StrategyName>().unwrap(), n);
            let json = serde_json::to_string(&n).unwrap();
            assert_eq!(json, format!("\"{}\"", n.as_str()));
        }
        assert!("emr2".parse::<StrategyName>().is_err());
    }

    #[test]
    fn selection_follows_name() {
        let c = StrategyConfig::new(StrategyName::EaEmr);
        assert_eq!(c.selection_method(), Some(SelectionMethod::Kmeans));
        let c = StrategyConfig::new(StrategyName::EaEmrNoSel);
        assert_eq!(c.selection_method(), Some(SelectionMethod::Random));
        let c = StrategyConfig {
            selection: Some(SelectionMethod::Icarl),
            ..StrategyConfig::new(StrategyName::Emr)
        };
        assert_eq!(c.selection_method(), Some(SelectionMethod::Icarl));
        assert_eq!(StrategyConfig::new(StrategyName::Ewc).selection_method(), None);
    }

    #[test]
    fn validation() {
        assert!(StrategyConfig::default().validate().is_ok());
        let bad = StrategyConfig {
            lr_model: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let ok = StrategyConfig {
            ewc_alpha: 0.0,
            replay_batch: 0,
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn toml_defaults_fill_in() {
        let c: StrategyConfig = toml::from_str("name = \"gem\"\nlr_model = 0.05\n").unwrap();
        assert_eq!(c.name, StrategyName::Gem);
        assert_eq!(c.lr_model, 0.05);
        assert_eq!(c.batch, 50);
        assert!(toml::from_str::<StrategyConfig>("nmae = \"gem\"").is_err());
    }
}
