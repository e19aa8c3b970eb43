use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Targeting fractions 1%, 2%, ..., 100%.
pub fn default_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftCurve {
    pub grid: Vec<f64>,
    /// `None` where the prefix is missing a treatment arm.
    pub values: Vec<Option<f64>>,
    pub end_uplift: f64,
    pub auuc: f64,
}

impl UpliftCurve {
    pub fn defined(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }
}

/// Normalized trapezoid over the defined points: the integral divided by the
/// covered fraction range. With a single defined point this is its value.
///
/// Computed as deviations from the last defined value so that a flat curve
/// integrates to that value exactly.
pub fn trapezoid_auuc(grid: &[f64], values: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(values)
        .filter_map(|(&q, v)| v.map(|u| (q, u)))
        .collect();
    let &(_, reference) = pts.last()?;
    if pts.len() == 1 {
        return Some(reference);
    }
    let mut area = 0.0;
    let mut width = 0.0;
    for w in pts.windows(2) {
        let dq = w[1].0 - w[0].0;
        area += dq * ((w[0].1 - reference) + (w[1].1 - reference)) / 2.0;
        width += dq;
    }
    Some(reference + area / width)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation("uplift grid is empty".into()));
    }
    if grid.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
        return Err(Error::Validation("uplift grid fractions must lie in (0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("uplift grid must be strictly increasing".into()));
    }
    if *grid.last().unwrap() != 1.0 {
        return Err(Error::Validation("uplift grid must end at 1".into()));
    }
    Ok(())
}

/// Prefix size for fraction `q` of `n` rows: `ceil(q n)`, tolerant of the
/// rounding error in grids like `k / 100`.
fn prefix_len(q: f64, n: usize) -> usize {
    let exact = q * n as f64;
    let rounded = exact.round();
    let m = if (exact - rounded).abs() < 1e-9 { rounded } else { exact.ceil() };
    (m as usize).clamp(1, n)
}

/// Treated-minus-control outcome rate within each targeted prefix of the
/// ranking by `tau` (descending, stable by row order). A prefix that ends
/// inside a run of tied scores is extended to the end of that run, so tied
/// rows are always targeted together.
pub fn uplift_curve(tau: &[f64], t: &[u8], y: &[u8], grid: &[f64]) -> Result<UpliftCurve> {
    let n = tau.len();
    if t.len() != n || y.len() != n {
        return Err(Error::dim("uplift_curve", n, t.len().min(y.len())));
    }
    validate_grid(grid)?;
    if tau.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("uplift scores contain NaN".into()));
    }
    let treated = t.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == n {
        return Err(Error::EvaluationInfeasible(format!(
            "uplift curve needs both arms, got {treated} treated of {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| tau[b].total_cmp(&tau[a]).then(a.cmp(&b)));

    // cumulative (treated, treated positives, control, control positives)
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = [0usize; 4];
    cum.push(acc);
    for &i in &order {
        if t[i] == 1 {
            acc[0] += 1;
            acc[1] += y[i] as usize;
        } else {
            acc[2] += 1;
            acc[3] += y[i] as usize;
        }
        cum.push(acc);
    }
    let gap = |m: usize| -> Option<f64> {
        let [n1, y1, n0, y0] = cum[m];
        (n1 > 0 && n0 > 0).then(|| y1 as f64 / n1 as f64 - y0 as f64 / n0 as f64)
    };

    let values: Vec<Option<f64>> = grid
        .iter()
        .map(|&q| {
            let mut m = prefix_len(q, n);
            while m < n && tau[order[m]] == tau[order[m - 1]] {
                m += 1;
            }
            gap(m)
        })
        .collect();
    let end_uplift = gap(n).expect("both arms present");
    let auuc = trapezoid_auuc(grid, &values).expect("last grid point is defined");
    Ok(UpliftCurve {
        grid: grid.to_vec(),
        values,
        end_uplift,
        auuc,
    })
}

/// Mean and population standard deviation of the AUUC under `reps` random
/// rankings.
pub fn random_ranking_auuc(t: &[u8], y: &[u8], grid: &[f64], reps: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    if reps == 0 {
        return Err(Error::Validation("random ranking needs reps >= 1".into()));
    }
    let mut auucs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let scores: Vec<f64> = rng.permutation(t.len()).into_iter().map(|v| v as f64).collect();
        auucs.push(uplift_curve(&scores, t, y, grid)?.auuc);
    }
    let mean = auucs.iter().sum::<f64>() / reps as f64;
    let var = auucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / reps as f64;
    Ok((mean, var.sqrt()))
}
