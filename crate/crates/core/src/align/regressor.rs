//! Parametric regressor generalizing the layout to unseen embeddings.
//!
//! A fully connected net with rectified-linear hidden layers of the embedding
//! width and a linear output added to the input (residual form). The output
//! layer starts at zero, so an untrained model is the identity map.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{EmbeddingSnapshot, EmbeddingVector};

use super::RegressorSpec;

/// Dense layer with row-major `outputs × inputs` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        DenseLayer {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: (0..outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A fitted embedding transformation and its training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformModel {
    pub dim: usize,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<DenseLayer>,
    /// Mean squared error over the training set after the last epoch.
    pub final_loss: Option<f64>,
}

impl TransformModel {
    /// Untrained model: random hidden layers, zero output layer (identity map).
    pub fn identity<R: Rng>(dim: usize, hidden_layers: usize, rng: &mut R) -> Self {
        let mut layers: Vec<DenseLayer> = (0..hidden_layers).map(|_| DenseLayer::uniform(dim, dim, rng)).collect();
        layers.push(DenseLayer::zeros(dim, dim));
        TransformModel {
            dim,
            layers,
            final_loss: None,
        }
    }

    /// Every layer random, output included; used to exercise all gradients.
    pub fn random<R: Rng>(dim: usize, hidden_layers: usize, rng: &mut R) -> Self {
        let layers = (0..=hidden_layers).map(|_| DenseLayer::uniform(dim, dim, rng)).collect();
        TransformModel {
            dim,
            layers,
            final_loss: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Raw network output for `x` (no normalization).
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let mut next = Vec::with_capacity(self.dim);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&h, &mut next);
            if k < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut h, &mut next);
        }
        h.iter_mut().zip(x).for_each(|(o, i)| *o += i);
        h
    }

    /// Mean squared error over a batch, averaged over samples and coordinates.
    pub fn loss(&self, xs: &[&[f64]], ys: &[&[f64]]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| self.forward(x).iter().zip(y.iter()).map(|(p, t)| (p - t).powi(2)).sum::<f64>())
            .sum();
        total / (xs.len() * self.dim) as f64
    }

    /// Loss and its gradient, laid out like the layers (weights then bias).
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[&[f64]]) -> (f64, Vec<DenseLayer>) {
        let mut grads: Vec<DenseLayer> = self.layers.iter().map(|l| DenseLayer::zeros(l.inputs, l.outputs)).collect();
        let scale = 2.0 / (xs.len() * self.dim) as f64;
        let last = self.layers.len() - 1;
        let mut total = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for (x, y) in xs.iter().zip(ys) {
            acts.clear();
            acts.push(x.to_vec());
            for (k, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::with_capacity(layer.outputs);
                layer.apply(acts.last().unwrap(), &mut out);
                if k < last {
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                acts.push(out);
            }
            let pred: Vec<f64> = acts[last + 1].iter().zip(x.iter()).map(|(o, i)| o + i).collect();
            let mut delta: Vec<f64> = pred.iter().zip(y.iter()).map(|(p, t)| p - t).collect();
            total += delta.iter().map(|d| d * d).sum::<f64>();
            delta.iter_mut().for_each(|d| *d *= scale);

            for k in (0..=last).rev() {
                let layer = &self.layers[k];
                let input = &acts[k];
                let g = &mut grads[k];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(w, a)| *w += d * a);
                }
                if k > 0 {
                    let mut back = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
                    }
                    // input of layer k is the rectified output of layer k-1
                    back.iter_mut().zip(input).for_each(|(b, a)| {
                        if *a <= 0.0 {
                            *b = 0.0
                        }
                    });
                    delta = back;
                }
            }
        }
        (total / (xs.len() * self.dim) as f64, grads)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn transform_unit(&self, x: &EmbeddingVector) -> Result<EmbeddingVector> {
        let u = x.normalized()?;
        EmbeddingVector::new(self.forward(u.as_slice()))?.normalized()
    }
}

fn flatten(grads: &[DenseLayer]) -> Vec<f64> {
    grads.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
}

/// Largest relative disagreement between analytic and central-difference
/// gradients over every parameter.
pub fn gradient_check(model: &TransformModel, xs: &[&[f64]], ys: &[&[f64]], step: f64) -> f64 {
    let (_, grads) = model.loss_and_grad(xs, ys);
    let analytic = flatten(&grads);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *probe.params_mut().nth(k).unwrap();
        *probe.params_mut().nth(k).unwrap() = orig + step;
        let up = probe.loss(xs, ys);
        *probe.params_mut().nth(k).unwrap() = orig - step;
        let down = probe.loss(xs, ys);
        *probe.params_mut().nth(k).unwrap() = orig;
        let numeric = (up - down) / (2.0 * step);
        let denom = a.abs().max(numeric.abs());
        if denom > 1e-8 {
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, model: &mut TransformModel, grads: &[DenseLayer]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let g = grads.iter().flat_map(|l| l.weights.iter().chain(&l.bias));
        for (((p, g), m), v) in model.params_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains the regressor to map normalized `original` embeddings to `targets`.
pub fn fit_regressor(
    original: &[EmbeddingVector],
    targets: &[EmbeddingVector],
    spec: &RegressorSpec,
    seed: u64,
) -> Result<TransformModel> {
    spec.validate()?;
    if original.len() != targets.len() {
        return Err(Error::Parameter(format!(
            "{} inputs but {} targets",
            original.len(),
            targets.len()
        )));
    }
    if original.is_empty() {
        return Err(Error::Parameter("no training pairs".into()));
    }
    let dim = original[0].dim();
    for v in original.iter().chain(targets) {
        if v.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: v.dim(),
            });
        }
    }
    let xs: Vec<Vec<f64>> = original
        .iter()
        .map(|v| v.normalized().map(EmbeddingVector::into_inner))
        .collect::<Result<_>>()?;
    let ys: Vec<&[f64]> = targets.iter().map(EmbeddingVector::as_slice).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TransformModel::identity(dim, spec.hidden_layers, &mut rng);
    let mut adam = Adam::new(model.param_count(), spec.learning_rate);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<&[f64]> = batch.iter().map(|&i| ys[i]).collect();
            let (loss, grads) = model.loss_and_grad(&bx, &by);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {epoch}; try a smaller learning rate"
                )));
            }
            adam.step(&mut model, &grads);
        }
    }
    let all: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let loss = model.loss(&all, &ys);
    if !loss.is_finite() {
        return Err(Error::Divergence("non-finite final loss; try a smaller learning rate".into()));
    }
    log::info!("regressor trained: {} epochs, final mse {loss:.3e}", spec.epochs);
    model.final_loss = Some(loss);
    Ok(model)
}

/// Maps every record through the model and back onto the unit sphere.
pub fn apply_transform(model: &TransformModel, snapshot: &EmbeddingSnapshot) -> Result<EmbeddingSnapshot> {
    if snapshot.dim() != model.dim {
        return Err(Error::Dimension {
            expected: model.dim,
            found: snapshot.dim(),
        });
    }
    snapshot.map_vectors(|v| model.transform_unit(v))
}

/// Transforms centroid-like vectors (e.g. text probes) the same way.
pub fn apply_to_vectors(model: &TransformModel, vs: &[EmbeddingVector]) -> Result<Vec<EmbeddingVector>> {
    vs.iter().map(|v| model.transform_unit(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(epochs: usize) -> RegressorSpec {
        RegressorSpec {
            epochs,
            ..RegressorSpec::default()
        }
    }

    fn unit_cloud(n: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                EmbeddingVector::new(crate::synth::gaussian(dim, 1.0, &mut rng))
                    .unwrap()
                    .normalized()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn untrained_model_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = TransformModel::identity(5, 2, &mut rng);
        let s = EmbeddingSnapshot::from_records(
            5,
            "t",
            vec![("a".into(), EmbeddingVector::new(vec![3.0, 0.0, 4.0, 0.0, 0.0]).unwrap())],
        )
        .unwrap();
        let out = apply_transform(&m, &s).unwrap();
        assert_eq!(out.records()[0].1.as_slice(), &[0.6, 0.0, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = TransformModel::random(4, 2, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| crate::synth::gaussian(4, 1.0, &mut rng)).collect();
        let ys: Vec<Vec<f64>> = (0..6).map(|_| crate::synth::gaussian(4, 1.0, &mut rng)).collect();
        let bx: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let by: Vec<&[f64]> = ys.iter().map(Vec::as_slice).collect();
        let err = gradient_check(&m, &bx, &by, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn identity_targets_fit_closely() {
        let x = unit_cloud(200, 6, 1);
        let m = fit_regressor(&x, &x, &spec(20), 0).unwrap();
        assert!(m.final_loss.unwrap() < 1e-4);
    }

    #[test]
    fn learns_a_rotation() {
        let x = unit_cloud(300, 4, 2);
        // swap the first two coordinates
        let y: Vec<EmbeddingVector> = x
            .iter()
            .map(|v| {
                let s = v.as_slice();
                EmbeddingVector::new(vec![s[1], s[0], s[2], s[3]]).unwrap()
            })
            .collect();
        let start: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (300.0 * 4.0);
        let m = fit_regressor(&x, &y, &spec(200), 0).unwrap();
        assert!(m.final_loss.unwrap() < 0.1 * start, "{} vs {start}", m.final_loss.unwrap());
    }

    #[test]
    fn divergence_reported() {
        let x = unit_cloud(50, 3, 4);
        let huge: Vec<EmbeddingVector> = x.iter().map(|v| v.scaled(1e200).unwrap()).collect();
        let s = RegressorSpec {
            learning_rate: 1e150,
            epochs: 5,
            ..RegressorSpec::default()
        };
        assert!(matches!(fit_regressor(&x, &huge, &s, 0), Err(Error::Divergence(_))));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let x = unit_cloud(5, 3, 0);
        let y = unit_cloud(4, 3, 0);
        assert!(fit_regressor(&x, &y, &spec(1), 0).is_err());
    }
}
