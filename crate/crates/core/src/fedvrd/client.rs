use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::delegation_graph::VoterId;
use crate::error::{Error, Result};

/// Flat model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector(pub Vec<f64>);

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self((0..dim).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &ModelVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// One labelled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: VoterId,
    pub dataset: Vec<Sample>,
    pub local_model: Option<ModelVector>,
    /// Cosine similarity of the latest local model to the broadcast model;
    /// `None` before training or when undefined.
    pub similarity: Option<f64>,
    pub neighbors: Vec<VoterId>,
}

impl ClientState {
    pub fn new(id: VoterId, dataset: Vec<Sample>, neighbors: Vec<VoterId>) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Config(format!("client {id} has an empty dataset")));
        }
        Ok(Self {
            id,
            dataset,
            local_model: None,
            similarity: None,
            neighbors,
        })
    }
}

/// Mean squared error of a linear model over `data`.
pub fn squared_loss(model: &ModelVector, data: &[Sample]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|s| {
            let r = predict(model, &s.x) - s.y;
            r * r
        })
        .sum();
    total / data.len() as f64
}

/// Gradient of [`squared_loss`]: `(2 / m) * sum((w.x - y) x)`.
pub fn squared_loss_gradient(model: &ModelVector, data: &[Sample]) -> Vec<f64> {
    let mut grad = vec![0.0; model.dim()];
    for s in data {
        let r = predict(model, &s.x) - s.y;
        for (g, x) in grad.iter_mut().zip(&s.x) {
            *g += r * x;
        }
    }
    let scale = 2.0 / data.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    grad
}

fn predict(model: &ModelVector, x: &[f64]) -> f64 {
    model.0.iter().zip(x).map(|(w, x)| w * x).sum()
}

/// One full-batch gradient step from the broadcast model.
pub fn local_train(client: &ClientState, global_model: &ModelVector, rate: f64) -> Result<ModelVector> {
    if !(rate > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {rate}")));
    }
    let grad = squared_loss_gradient(global_model, &client.dataset);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient at client {}", client.id)));
    }
    Ok(ModelVector(
        global_model.0.iter().zip(&grad).map(|(w, g)| w - rate * g).collect(),
    ))
}

pub fn cosine_similarity(local: &ModelVector, global_model: &ModelVector) -> Result<f64> {
    let denom = local.norm() * global_model.norm();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((local.dot(global_model) / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(data: Vec<(Vec<f64>, f64)>) -> ClientState {
        let dataset = data.into_iter().map(|(x, y)| Sample { x, y }).collect();
        ClientState::new(0, dataset, vec![]).unwrap()
    }

    #[test]
    fn stationary_point_is_fixed() {
        // y = 2x exactly, model already at 2
        let c = client(vec![(vec![1.0], 2.0), (vec![-3.0], -6.0)]);
        let w = ModelVector(vec![2.0]);
        assert_eq!(local_train(&c, &w, 0.3).unwrap(), w);
    }

    #[test]
    fn one_dimensional_step() {
        let c = client(vec![(vec![1.0], 1.0)]);
        let w = local_train(&c, &ModelVector(vec![0.0]), 0.1).unwrap();
        assert!((w.0[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn similarity_values() {
        let a = ModelVector(vec![1.0, 2.0, 3.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let x = ModelVector(vec![1.0, 0.0]);
        let y = ModelVector(vec![0.0, 4.0]);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        let b = ModelVector(vec![3.0, 2.0, 1.0]);
        assert!((cosine_similarity(&a, &b).unwrap() - 10.0 / 14.0).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&ModelVector::zeros(3), &a),
            Err(Error::UndefinedSimilarity)
        ));
    }

    #[test]
    fn bad_inputs() {
        assert!(ClientState::new(3, vec![], vec![]).is_err());
        let c = client(vec![(vec![1.0], f64::INFINITY)]);
        assert!(matches!(local_train(&c, &ModelVector(vec![0.0]), 0.1), Err(Error::Numerical(_))));
        assert!(local_train(&c, &ModelVector(vec![0.0]), 0.0).is_err());
    }
}
