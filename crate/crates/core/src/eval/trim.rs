use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How test rows with extreme propensities are removed before uplift
/// evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum TrimRule {
    /// Keep rows with `alpha <= e <= 1 - alpha`.
    Alpha(f64),
    /// Drop the `round(q n)` rows with the smallest `min(e, 1 - e)`.
    Quantile(f64),
}

impl Default for TrimRule {
    fn default() -> Self {
        TrimRule::Alpha(0.05)
    }
}

impl TrimRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TrimRule::Alpha(a) if !(0.0..0.5).contains(&a) => {
                Err(Error::Validation(format!("trim alpha must be in [0, 0.5), got {a}")))
            }
            TrimRule::Quantile(q) if !(0.0..1.0).contains(&q) => {
                Err(Error::Validation(format!("trim quantile must be in [0, 1), got {q}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimResult {
    /// Kept positions, ascending.
    pub keep: Vec<usize>,
    pub n: usize,
    pub trim_rate: f64,
}

impl TrimResult {
    pub fn trimmed(&self) -> usize {
        self.n - self.keep.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &i in &self.keep {
            m[i] = true;
        }
        m
    }
}

fn finish(keep: Vec<usize>, n: usize) -> Result<TrimResult> {
    if keep.is_empty() {
        return Err(Error::EvaluationInfeasible("positivity trimming removed every row".into()));
    }
    let trim_rate = (n - keep.len()) as f64 / n as f64;
    Ok(TrimResult { keep, n, trim_rate })
}

pub fn trim_positivity(e: &[f64], alpha: f64) -> Result<TrimResult> {
    TrimRule::Alpha(alpha).validate()?;
    let keep = (0..e.len()).filter(|&i| alpha <= e[i] && e[i] <= 1.0 - alpha).collect();
    finish(keep, e.len())
}

pub fn trim_quantile(e: &[f64], q: f64) -> Result<TrimResult> {
    TrimRule::Quantile(q).validate()?;
    let n = e.len();
    let drop = ((q * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e[a].min(1.0 - e[a]).total_cmp(&e[b].min(1.0 - e[b])).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[drop..].to_vec();
    keep.sort_unstable();
    finish(keep, n)
}

pub fn apply_trim(e: &[f64], rule: TrimRule) -> Result<TrimResult> {
    match rule {
        TrimRule::Alpha(a) => trim_positivity(e, a),
        TrimRule::Quantile(q) => trim_quantile(e, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_fixture() {
        let r = trim_positivity(&[0.01, 0.5, 0.99], 0.05).unwrap();
        assert_eq!(r.keep, vec![1]);
        assert_eq!(r.trim_rate, 2.0 / 3.0);
        let r = trim_positivity(&[0.5; 10], 0.05).unwrap();
        assert_eq!((r.keep.len(), r.trim_rate), (10, 0.0));
        assert_eq!(trim_positivity(&[0.01, 0.999], 0.0).unwrap().keep, vec![0, 1]);
    }

    #[test]
    fn everything_trimmed_is_infeasible() {
        assert!(matches!(trim_positivity(&[0.01, 0.995], 0.05), Err(Error::EvaluationInfeasible(_))));
    }

    #[test]
    fn quantile_drops_most_extreme() {
        let e = [0.5, 0.02, 0.97, 0.4, 0.6];
        let r = trim_quantile(&e, 0.4).unwrap();
        assert_eq!(r.keep, vec![0, 3, 4]);
        assert_eq!(r.trimmed(), 2);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(trim_positivity(&[0.5], 0.5).is_err());
        assert!(trim_quantile(&[0.5], 1.0).is_err());
    }
}
