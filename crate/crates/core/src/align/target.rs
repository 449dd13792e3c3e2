//! Target hierarchies and the pairwise target distance.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, swap_leaves, ConceptTree};
use crate::ontology::{LeafGrounding, OntologyGraph};
use crate::ted::closest_valid_tree;
use crate::tree::TreeDocument;
use crate::vectors::{compute_centroids, cosine_distance, ConceptCentroidSet, EmbeddingSnapshot, EmbeddingVector};

use super::AlignmentSpec;

/// Floor applied to target distances; the weighted combination can go negative.
pub const DISTANCE_FLOOR: f64 = 1e-6;

/// A target tree T' with its leaf walking distances and the original class
/// embeddings e(C).
#[derive(Debug, Clone)]
pub struct TargetHierarchy {
    topology: TreeDocument,
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
    leaf_distance: Vec<Vec<usize>>,
    class_embeddings: ConceptCentroidSet,
    class_distance: Vec<Vec<f64>>,
    z: f64,
}

impl TargetHierarchy {
    pub fn new(topology: TreeDocument, class_embeddings: &ConceptCentroidSet) -> Result<Self> {
        let (labels, leaf_distance) = topology.leaf_distance_matrix()?;
        if labels.len() < 2 {
            return Err(Error::TooFewLeaves(labels.len()));
        }
        let class_embeddings = class_embeddings.restrict(&labels)?;
        let vecs: Vec<&EmbeddingVector> = labels.iter().map(|l| class_embeddings.get(l).unwrap()).collect();
        let k = labels.len();
        let mut class_distance = vec![vec![0.0; k]; k];
        let (mut max_cos, mut max_tree) = (0.0f64, 0usize);
        for i in 0..k {
            for j in (i + 1)..k {
                let d = cosine_distance(vecs[i], vecs[j])?;
                class_distance[i][j] = d;
                class_distance[j][i] = d;
                max_cos = max_cos.max(d);
                max_tree = max_tree.max(leaf_distance[i][j]);
            }
        }
        if max_cos <= 0.0 {
            return Err(Error::DegenerateVector("all class embeddings coincide".into()));
        }
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(TargetHierarchy {
            topology,
            labels,
            index,
            leaf_distance,
            class_embeddings,
            class_distance,
            z: max_tree as f64 / max_cos,
        })
    }

    pub fn topology(&self) -> &TreeDocument {
        &self.topology
    }

    /// Leaf labels in sorted order; matrix rows follow this order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn class_embeddings(&self) -> &ConceptCentroidSet {
        &self.class_embeddings
    }

    /// Ratio of the largest tree distance to the largest class-embedding distance.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::LabelSet(format!("label {label:?} is not a leaf of the target")))
    }

    pub fn leaf_distance(&self, a: &str, b: &str) -> Result<usize> {
        Ok(self.leaf_distance[self.label_index(a)?][self.label_index(b)?])
    }

    pub fn leaf_distance_matrix(&self) -> &[Vec<usize>] {
        &self.leaf_distance
    }

    /// Weighted combination for label indices `ca`, `cb` and the samples'
    /// cosine distance, before flooring.
    pub(crate) fn combine(&self, cos: f64, ca: usize, cb: usize, spec: &AlignmentSpec) -> f64 {
        spec.alpha_orig * cos + spec.beta_onto / self.z * self.leaf_distance[ca][cb] as f64
            - spec.gamma_midp * self.class_distance[ca][cb]
    }
}

/// Target dissimilarity between two samples with the given labels.
pub fn target_pair_distance(
    x: &EmbeddingVector,
    x2: &EmbeddingVector,
    cx: &str,
    cx2: &str,
    target: &TargetHierarchy,
    spec: &AlignmentSpec,
) -> Result<f64> {
    let (a, b) = (target.label_index(cx)?, target.label_index(cx2)?);
    let cos = cosine_distance(x, x2)?;
    Ok(target.combine(cos, a, b, spec).max(DISTANCE_FLOOR))
}

/// How the target hierarchy is derived.
#[derive(Debug, Clone)]
pub enum TargetTask<'a> {
    /// Exchange two non-sibling leaves of the extracted tree.
    LeafSwap(String, String),
    /// Use the hierarchy extracted from another modality's snapshot.
    Modality(&'a EmbeddingSnapshot),
    /// Steer to the ontology-induced tree over the grounded leaves.
    Commitment(&'a OntologyGraph, &'a LeafGrounding),
}

/// Builds the target for `task` from the tree extracted on `class_embeddings`.
pub fn make_target(
    task: &TargetTask<'_>,
    extracted: &ConceptTree,
    class_embeddings: &ConceptCentroidSet,
) -> Result<TargetHierarchy> {
    let topology = match task {
        TargetTask::LeafSwap(a, b) => swap_leaves(extracted, a, b)?.into_document(),
        TargetTask::Modality(text) => build_hierarchy(&compute_centroids(text)?)?.into_document(),
        TargetTask::Commitment(g, grounding) => closest_valid_tree(extracted.document(), g, grounding)?.tree,
    };
    let ours: Vec<&String> = class_embeddings.labels().collect();
    let theirs = topology.leaf_names();
    if ours.len() != theirs.len() || ours.iter().zip(&theirs).any(|(a, b)| *a != b) {
        return Err(Error::LabelSet("target leaves differ from the class labels".into()));
    }
    TargetHierarchy::new(topology, class_embeddings)
}
