use serde::{Deserialize, Serialize};

use super::loss::{bce, sigmoid};
use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub step_size: f64,
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 2000,
            step_size: 0.1,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn logit(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.weights.len() {
            return Err(Error::dim("LogisticModel::predict_proba", self.weights.len(), x.cols()));
        }
        Ok((0..x.rows()).map(|i| sigmoid(self.logit(x.row(i)))).collect())
    }
}

fn objective(x: &Matrix, y: &[u8], w: &[f64], b: f64, l2: f64) -> f64 {
    let n = x.rows() as f64;
    let data: f64 = (0..x.rows())
        .map(|i| bce(y[i], sigmoid(dot(w, x.row(i)) + b)))
        .sum::<f64>()
        / n;
    data + 0.5 * l2 * dot(w, w)
}

fn gradient(x: &Matrix, y: &[u8], w: &[f64], b: f64, l2: f64) -> (Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for i in 0..x.rows() {
        let xi = x.row(i);
        let r = (sigmoid(dot(w, xi) + b) - f64::from(y[i])) / n;
        for (g, &v) in gw.iter_mut().zip(xi) {
            *g += r * v;
        }
        gb += r;
    }
    for (g, &wj) in gw.iter_mut().zip(w) {
        *g += l2 * wj;
    }
    (gw, gb)
}

/// L2-penalized logistic regression by full-batch gradient descent.
///
/// The step size is halved whenever a step would increase the objective.
/// The bias is not penalized.
pub fn train_logistic(x: &Matrix, y: &[u8], config: &LogisticConfig) -> Result<LogisticModel> {
    if y.len() != x.rows() {
        return Err(Error::dim("train_logistic labels", x.rows(), y.len()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels(format!(
            "logistic fit needs both classes, got {positives} positives of {}",
            y.len()
        )));
    }

    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut step = config.step_size;
    let mut loss = objective(x, y, &w, b, config.l2);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let (gw, gb) = gradient(x, y, &w, b, config.l2);
        let gnorm = (dot(&gw, &gw) + gb * gb).sqrt();
        if gnorm < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        loop {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(wj, g)| wj - step * g).collect();
            let b_new = b - step * gb;
            let loss_new = objective(x, y, &w_new, b_new, config.l2);
            if loss_new <= loss {
                w = w_new;
                b = b_new;
                loss = loss_new;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // no descent possible at machine precision
                return Ok(LogisticModel {
                    weights: w,
                    bias: b,
                    converged: true,
                    iterations,
                });
            }
        }
    }
    Ok(LogisticModel {
        weights: w,
        bias: b,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_featureless_data_fits_zero_bias() {
        let x = Matrix::zeros(10, 2);
        let y: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let m = train_logistic(&x, &y, &LogisticConfig::default()).unwrap();
        assert!(m.bias.abs() < 1e-6);
        assert!(m.converged);
    }

    #[test]
    fn prevalence_fit() {
        let x = Matrix::zeros(8, 1);
        let y = vec![1, 0, 0, 0, 1, 0, 0, 0];
        let m = train_logistic(&x, &y, &LogisticConfig::default()).unwrap();
        assert!((sigmoid(m.bias) - 0.25).abs() < 1e-4);
    }

    #[test]
    fn separable_data_is_classified_perfectly() {
        let xs = [-3.0, -2.0, -1.5, -0.5, 0.5, 1.0, 2.5, 3.0];
        let x = Matrix::from_vec(8, 1, xs.to_vec()).unwrap();
        let y: Vec<u8> = xs.iter().map(|&v| (v > 0.0) as u8).collect();
        let m = train_logistic(&x, &y, &LogisticConfig::default()).unwrap();
        assert!(m.weights[0] > 0.0);
        let p = m.predict_proba(&x).unwrap();
        let acc = p.iter().zip(&y).filter(|(&pi, &yi)| (pi > 0.5) == (yi == 1)).count();
        assert_eq!(acc, 8);
        for i in 0..8 {
            let direct = sigmoid(m.weights[0] * xs[i] + m.bias);
            assert!((p[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::zeros(4, 1);
        assert!(matches!(
            train_logistic(&x, &[1, 1, 1, 1], &LogisticConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }
}
