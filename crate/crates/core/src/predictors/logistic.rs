//! Sparse binary logistic regression trained by full-batch gradient descent.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse feature vector: `(bucket, value)` pairs.
pub type SparseVec = Vec<(u32, f64)>;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Weight on positive (error) examples in the loss. 1.0 means no reweighting.
    pub positive_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 300,
            learning_rate: 4.0,
            l2: 1e-4,
            positive_weight: 1.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.l2 >= 0.0 && self.positive_weight > 0.0) {
            return Err(Error::invalid("l2 must be >= 0 and positive weight > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub bias: f64,
    /// Sorted by bucket.
    pub weights: Vec<(u32, f64)>,
    /// Set when training data had a single class.
    pub constant: Option<f64>,
    #[serde(skip)]
    lookup: Option<HashMap<u32, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub examples: usize,
    pub positives: usize,
    pub iterations: usize,
    /// Cross-entropy of the returned model on the training set.
    pub final_loss: f64,
    /// Cross-entropy of predicting the empirical base rate everywhere.
    pub base_rate_loss: f64,
    pub warnings: Vec<String>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn cross_entropy(p: f64, y: f64, pos_weight: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -(pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Cross-entropy of a constant prediction equal to the base rate.
pub fn base_rate_loss(positives: usize, total: usize) -> f64 {
    if total == 0 || positives == 0 || positives == total {
        return 0.0;
    }
    let q = positives as f64 / total as f64;
    -(q * q.ln() + (1.0 - q) * (1.0 - q).ln())
}

impl LogisticModel {
    pub fn constant(p: f64) -> Self {
        LogisticModel {
            bias: 0.0,
            weights: Vec::new(),
            constant: Some(p),
            lookup: None,
        }
    }

    fn weight(&self, bucket: u32) -> f64 {
        match &self.lookup {
            Some(map) => map.get(&bucket).copied().unwrap_or(0.0),
            None => self
                .weights
                .binary_search_by_key(&bucket, |&(b, _)| b)
                .map(|i| self.weights[i].1)
                .unwrap_or(0.0),
        }
    }

    /// Build a hash index for faster scoring (after deserialization, say).
    pub fn index(&mut self) {
        self.lookup = Some(self.weights.iter().copied().collect());
    }

    pub fn predict(&self, x: &[(u32, f64)]) -> f64 {
        if let Some(p) = self.constant {
            return p;
        }
        let z = self.bias + x.iter().map(|&(b, v)| self.weight(b) * v).sum::<f64>();
        sigmoid(z)
    }
}

/// Train on `(features, label)` pairs with labels in {0, 1}.
///
/// The bias starts at the logit of the base rate with all weights zero, so
/// the first iterate is the base-rate predictor; any step that does not lower
/// the regularized objective is rejected and the step size halved.
pub fn train(examples: &[(SparseVec, f64)], config: &TrainConfig) -> Result<(LogisticModel, TrainReport)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("no training examples"));
    }
    let n = examples.len();
    let positives = examples.iter().filter(|(_, y)| *y >= 0.5).count();
    let base_loss = base_rate_loss(positives, n);
    if positives == 0 || positives == n {
        let rate = positives as f64 / n as f64;
        let msg = format!("training data has a single class; using constant predictor p={rate}");
        log::warn!("{msg}");
        let model = LogisticModel::constant(rate);
        return Ok((
            model,
            TrainReport {
                examples: n,
                positives,
                iterations: 0,
                final_loss: 0.0,
                base_rate_loss: base_loss,
                warnings: vec![msg],
            },
        ));
    }

    // compact the observed buckets into dense columns
    let mut columns: BTreeMap<u32, usize> = BTreeMap::new();
    for (x, _) in examples {
        for &(b, _) in x {
            columns.entry(b).or_insert(0);
        }
    }
    for (i, v) in columns.values_mut().enumerate() {
        *v = i;
    }
    let rows: Vec<Vec<(usize, f64)>> = examples
        .iter()
        .map(|(x, _)| x.iter().map(|&(b, v)| (columns[&b], v)).collect())
        .collect();
    let labels: Vec<f64> = examples.iter().map(|(_, y)| *y).collect();
    let k = columns.len();
    let pw = config.positive_weight;

    let objective = |w: &[f64], bias: f64| -> (f64, f64) {
        let mut ce = 0.0;
        for (row, &y) in rows.iter().zip(&labels) {
            let z = bias + row.iter().map(|&(j, v)| w[j] * v).sum::<f64>();
            ce += cross_entropy(sigmoid(z), y, pw);
        }
        ce /= n as f64;
        let reg = 0.5 * config.l2 * w.iter().map(|x| x * x).sum::<f64>();
        (ce + reg, ce)
    };

    let q = positives as f64 / n as f64;
    let mut w = vec![0.0; k];
    let mut bias = (q / (1.0 - q)).ln();
    let (mut obj, mut ce) = objective(&w, bias);
    let mut lr = config.learning_rate;
    let mut grad = vec![0.0; k];
    let mut iterations = 0;
    for _ in 0..config.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &y) in rows.iter().zip(&labels) {
            let z = bias + row.iter().map(|&(j, v)| w[j] * v).sum::<f64>();
            let p = sigmoid(z);
            // d/dz of the weighted cross-entropy
            let r = (pw * y + 1.0 - y) * p - pw * y;
            gb += r;
            for &(j, v) in row {
                grad[j] += r * v;
            }
        }
        let inv = 1.0 / n as f64;
        gb *= inv;
        for (g, wj) in grad.iter_mut().zip(&w) {
            *g = *g * inv + config.l2 * wj;
        }
        loop {
            let cand: Vec<f64> = w.iter().zip(&grad).map(|(wj, g)| wj - lr * g).collect();
            let cand_bias = bias - lr * gb;
            let (cand_obj, cand_ce) = objective(&cand, cand_bias);
            if cand_obj <= obj {
                w = cand;
                bias = cand_bias;
                obj = cand_obj;
                ce = cand_ce;
                break;
            }
            lr *= 0.5;
            if lr < 1e-10 {
                break;
            }
        }
        iterations += 1;
        if lr < 1e-10 {
            break;
        }
    }

    let weights: Vec<(u32, f64)> = columns
        .iter()
        .map(|(&b, &j)| (b, w[j]))
        .filter(|(_, wj)| *wj != 0.0)
        .collect();
    let mut model = LogisticModel {
        bias,
        weights,
        constant: None,
        lookup: None,
    };
    model.index();
    Ok((
        model,
        TrainReport {
            examples: n,
            positives,
            iterations,
            final_loss: ce,
            base_rate_loss: base_loss,
            warnings: Vec::new(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_a_separable_rule() {
        let mut data = Vec::new();
        for i in 0..200u32 {
            let pos = i % 3 == 0;
            let x = vec![(if pos { 7 } else { 8 }, 1.0), (100 + i % 5, 1.0)];
            data.push((x, if pos { 1.0 } else { 0.0 }));
        }
        let (m, r) = train(&data, &TrainConfig::default()).unwrap();
        assert!(r.final_loss < r.base_rate_loss);
        assert!(m.predict(&[(7, 1.0)]) > 0.8);
        assert!(m.predict(&[(8, 1.0)]) < 0.2);
    }

    #[test]
    fn single_class_gives_constant() {
        let data = vec![(vec![(1, 1.0)], 0.0), (vec![(2, 1.0)], 0.0)];
        let (m, r) = train(&data, &TrainConfig::default()).unwrap();
        assert_eq!(m.predict(&[(1, 1.0)]), 0.0);
        assert_eq!(r.warnings.len(), 1);
        let data = vec![(vec![(1, 1.0)], 1.0)];
        let (m, _) = train(&data, &TrainConfig::default()).unwrap();
        assert_eq!(m.predict(&[]), 1.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(train(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let data: Vec<_> = (0..50u32)
            .map(|i| (vec![(i % 7, 1.0), (i % 3 + 10, 0.5)], f64::from(i % 2)))
            .collect();
        let a = train(&data, &TrainConfig::default()).unwrap().0;
        let b = train(&data, &TrainConfig::default()).unwrap().0;
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }
}
