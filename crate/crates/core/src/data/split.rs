use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            valid: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.valid, self.test];
        if all.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Validation(format!(
                "split fractions must all be positive, got ({}, {}, {})",
                self.train, self.valid, self.test
            )));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Disjoint train/validation/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits rows so that each outcome class is allocated to train, validation
/// and test in the requested proportions (per-class rounding).
pub fn stratified_split(y: &[u8], fractions: SplitFractions, rng: &mut Rng) -> Result<SplitIndices> {
    fractions.validate()?;
    let mut split = SplitIndices {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < 3 {
            return Err(Error::Stratification(format!(
                "outcome class {class} has {} rows, need at least 3",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let n = idx.len() as f64;
        let n_train = ((n * fractions.train).round() as usize).min(idx.len());
        let n_valid = ((n * fractions.valid).round() as usize).min(idx.len() - n_train);
        split.train.extend_from_slice(&idx[..n_train]);
        split.valid.extend_from_slice(&idx[n_train..n_train + n_valid]);
        split.test.extend_from_slice(&idx[n_train + n_valid..]);
    }
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        if part.is_empty() {
            return Err(Error::Stratification(format!("{name} split is empty")));
        }
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
