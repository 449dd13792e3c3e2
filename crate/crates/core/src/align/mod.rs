//! Post-hoc alignment of an embedding space to a target hierarchy: target
//! distances, a sphere-constrained neighbor-embedding layout, a regressor that
//! generalizes the layout, and evaluation.

mod eval;
mod layout;
mod regressor;
mod target;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{compute_centroids, ConceptCentroidSet, EmbeddingSnapshot, EmbeddingVector};

pub use eval::{delta_onto, evaluate_alignment, AlignmentReport, ProbePair};
pub use layout::{build_target_layout, fit_ab};
pub use regressor::{apply_to_vectors, apply_transform, fit_regressor, gradient_check, DenseLayer, TransformModel};
pub use target::{make_target, target_pair_distance, TargetHierarchy, TargetTask, DISTANCE_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorSpec {
    /// Hidden layers, each as wide as the embedding.
    pub hidden_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec {
            hidden_layers: 2,
            epochs: 500,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

impl RegressorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter(
                "regressor layers, epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentSpec {
    pub alpha_orig: f64,
    pub beta_onto: f64,
    pub gamma_midp: f64,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub layout_epochs: usize,
    pub layout_learning_rate: f64,
    /// Radius of the sphere on which the layout's membership curve measures distances.
    pub layout_radius: f64,
    pub negative_sample_rate: usize,
    pub regressor: RegressorSpec,
    pub seed: u64,
}

impl Default for AlignmentSpec {
    fn default() -> Self {
        AlignmentSpec {
            alpha_orig: 2.0,
            beta_onto: 1.0,
            gamma_midp: 2.0,
            n_neighbors: 250,
            min_dist: 0.1,
            layout_epochs: 200,
            layout_learning_rate: 1.0,
            layout_radius: 10.0,
            negative_sample_rate: 5,
            regressor: RegressorSpec::default(),
            seed: 0,
        }
    }
}

impl AlignmentSpec {
    pub fn validate(&self) -> Result<()> {
        for (n, w) in [
            ("alpha_orig", self.alpha_orig),
            ("beta_onto", self.beta_onto),
            ("gamma_midp", self.gamma_midp),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Parameter(format!("{n} must be finite and >= 0, got {w}")));
            }
        }
        if self.n_neighbors < 2 || self.layout_epochs == 0 {
            return Err(Error::Parameter("n_neighbors >= 2 and layout_epochs >= 1 required".into()));
        }
        if !(self.layout_learning_rate > 0.0 && self.layout_learning_rate.is_finite()) {
            return Err(Error::Parameter("layout learning rate must be positive".into()));
        }
        if !(self.layout_radius > 0.0 && self.layout_radius.is_finite()) {
            return Err(Error::Parameter("layout radius must be positive".into()));
        }
        if self.negative_sample_rate == 0 {
            return Err(Error::Parameter("negative_sample_rate must be positive".into()));
        }
        self.regressor.validate()
    }
}

/// Everything one alignment run produces.
#[derive(Debug, Clone)]
pub struct AlignmentOutcome {
    pub model: TransformModel,
    pub layout: Vec<EmbeddingVector>,
    pub train_after: EmbeddingSnapshot,
    pub test_after: EmbeddingSnapshot,
    pub report: AlignmentReport,
}

/// Layout, regressor fit, transformation of both splits, and evaluation on
/// the test split. Text probes, when given, are transformed as well.
pub fn run_alignment(
    train: &EmbeddingSnapshot,
    test: &EmbeddingSnapshot,
    target: &TargetHierarchy,
    text_probe: Option<&ConceptCentroidSet>,
    spec: &AlignmentSpec,
) -> Result<AlignmentOutcome> {
    spec.validate()?;
    if train.dim() != test.dim() {
        return Err(Error::Dimension {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let layout = build_target_layout(train, target, spec)?;
    let originals: Vec<EmbeddingVector> = train.records().iter().map(|(_, v)| v.clone()).collect();
    let model = fit_regressor(&originals, &layout, &spec.regressor, spec.seed)?;
    let train_after = apply_transform(&model, train)?;
    let test_after = apply_transform(&model, test)?;

    let midpoints = ProbePair {
        before: compute_centroids(train)?,
        after: compute_centroids(&train_after)?,
    };
    let text = match text_probe {
        Some(p) => {
            let labels: Vec<String> = p.labels().cloned().collect();
            let vs: Vec<EmbeddingVector> = p.iter().map(|(_, v)| v.clone()).collect();
            let moved = apply_to_vectors(&model, &vs)?;
            Some(ProbePair {
                before: p.clone(),
                after: ConceptCentroidSet::new(p.dim(), labels.into_iter().zip(moved))?,
            })
        }
        None => None,
    };
    let report = evaluate_alignment(test, &test_after, target, text.as_ref(), &midpoints)?;
    Ok(AlignmentOutcome {
        model,
        layout,
        train_after,
        test_after,
        report,
    })
}
