use crate::error::{Error, Result};

/// 1-based ranks with tied values sharing their average rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("auroc", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("auroc scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "AUROC undefined with {pos} positives and {neg} negatives"
        )));
    }
    let ranks = mid_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let (pos, neg) = (pos as f64, neg as f64);
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("spearman", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::Empty("spearman needs at least two points".into()));
    }
    let (ra, rb) = (mid_ranks(a), mid_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateLabels("spearman undefined for a constant input".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_fixture() {
        assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_of_monotone_map_is_one() {
        let a = [0.3, -1.0, 2.0, 0.5];
        let b: Vec<f64> = a.iter().map(|v: &f64| v.exp()).collect();
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &c).unwrap() + 1.0).abs() < 1e-12);
    }
}
