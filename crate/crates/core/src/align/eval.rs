//! Distance-to-target and zero-shot evaluation of an alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::build_hierarchy;
use crate::ted::{nuted, EditCostModel};
use crate::tree::TreeDocument;
use crate::vectors::{compute_centroids, ConceptCentroidSet, EmbeddingSnapshot};

use super::target::TargetHierarchy;

/// Class probes before and after the transformation.
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub before: ConceptCentroidSet,
    pub after: ConceptCentroidSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub delta_onto: f64,
    pub nuted_to_target: f64,
    pub zs_text_umap: Option<f64>,
    pub zs_midp_umap: f64,
    pub zs_text_orig: Option<f64>,
    pub zs_midp_orig: f64,
}

fn frobenius_gap(a: &[Vec<usize>], b: &[Vec<usize>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| (x as f64 - y as f64).powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// Relative change in leaf-distance-matrix gap to the target.
///
/// `0/0` (both trees already equal the target) is 0; `x/0` for `x > 0` is
/// infinite.
pub fn delta_onto(before: &TreeDocument, after: &TreeDocument, target: &TargetHierarchy) -> Result<f64> {
    let (lb, db) = before.leaf_distance_matrix()?;
    let (la, da) = after.leaf_distance_matrix()?;
    if lb != target.labels() || la != target.labels() {
        return Err(Error::LabelSet("tree leaves differ from the target leaves".into()));
    }
    let num = frobenius_gap(&da, target.leaf_distance_matrix());
    let den = frobenius_gap(&db, target.leaf_distance_matrix());
    Ok(if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

pub fn evaluate_alignment(
    before: &EmbeddingSnapshot,
    after: &EmbeddingSnapshot,
    target: &TargetHierarchy,
    text_probe: Option<&ProbePair>,
    midpoints: &ProbePair,
) -> Result<AlignmentReport> {
    let tree_before = build_hierarchy(&compute_centroids(before)?)?.into_document();
    let tree_after = build_hierarchy(&compute_centroids(after)?)?.into_document();
    let delta = delta_onto(&tree_before, &tree_after, target)?;
    let nuted_to_target = nuted(
        &tree_after.topology_only(),
        &target.topology().topology_only(),
        &EditCostModel::default(),
    );
    let (zs_text_orig, zs_text_umap) = match text_probe {
        Some(p) => (Some(p.before.accuracy(before)?), Some(p.after.accuracy(after)?)),
        None => (None, None),
    };
    Ok(AlignmentReport {
        delta_onto: delta,
        nuted_to_target,
        zs_text_umap,
        zs_midp_umap: midpoints.after.accuracy(after)?,
        zs_text_orig,
        zs_midp_orig: midpoints.before.accuracy(before)?,
    })
}
