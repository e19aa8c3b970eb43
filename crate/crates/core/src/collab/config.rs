use serde::{Deserialize, Serialize};

use super::defense::DefenseConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Centralized,
    Fedavg,
    Split,
    Hybrid,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Fedavg => "fedavg",
            Mode::Split => "split",
            Mode::Hybrid => "hybrid",
        }
    }

    /// Modes that transmit cut-layer activations.
    pub fn is_split_based(self) -> bool {
        matches!(self, Mode::Split | Mode::Hybrid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub mode: Mode,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr_client: f64,
    pub lr_server: f64,
    pub defense: Option<DefenseConfig>,
    pub personalization: bool,
    /// Fraction of clients sampled per round in FedAvg and hybrid modes.
    pub participation: f64,
    pub seed: u64,
}

impl RoundConfig {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            rounds: 5,
            local_epochs: 1,
            batch_size: 256,
            lr_client: 1e-3,
            lr_server: 1e-3,
            defense: None,
            personalization: false,
            participation: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("rounds, local_epochs and batch_size must be >= 1".into()));
        }
        for (name, lr) in [("lr_client", self.lr_client), ("lr_server", self.lr_server)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {lr}")));
            }
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Validation(format!(
                "participation must be in (0, 1], got {}",
                self.participation
            )));
        }
        if let Some(d) = &self.defense {
            d.validate()?;
            if !self.mode.is_split_based() {
                return Err(Error::Validation(format!(
                    "activation defense requires a split-based mode, got {}",
                    self.mode.as_str()
                )));
            }
        }
        if self.personalization && !self.mode.is_split_based() {
            return Err(Error::Validation(format!(
                "adapters require a split-based mode, got {}",
                self.mode.as_str()
            )));
        }
        Ok(())
    }
}
