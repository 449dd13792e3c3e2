//! Root-to-leaf classification over a [`ConceptTree`], uncertainty-aware early
//! stopping, and the faithfulness metrics built on both.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::ConceptTree;
use crate::ontology::{ground_tree, LeafGrounding, OntologyGraph};
use crate::tree::NodeId;
use crate::vectors::{cosine_similarity_raw, ConceptCentroidSet, EmbeddingSnapshot, EmbeddingVector};

/// One routing decision: at `node`, descent continued into `chosen`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub node: NodeId,
    pub chosen: NodeId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalResult {
    /// Root first; the last entry is the prediction.
    pub path: Vec<NodeId>,
    pub steps: Vec<Step>,
    /// Set when descent halted at an internal node: the winning child similarity there.
    pub stopped_at: Option<Step>,
}

impl TraversalResult {
    pub fn predicted(&self) -> NodeId {
        *self.path.last().expect("path contains the root")
    }
}

/// Per-node stop thresholds. Nodes absent from the map never stop.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub thresholds: BTreeMap<NodeId, f64>,
    pub quantile_p: f64,
}

impl ThresholdTable {
    /// A table that never stops (equivalent to vanilla traversal).
    pub fn disabled() -> Self {
        ThresholdTable {
            thresholds: BTreeMap::new(),
            quantile_p: 0.0,
        }
    }

    pub fn threshold(&self, node: NodeId) -> f64 {
        self.thresholds.get(&node).copied().unwrap_or(f64::NEG_INFINITY)
    }
}

struct Prepared<'a> {
    tree: &'a ConceptTree,
    norms: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(tree: &'a ConceptTree) -> Result<Self> {
        let norms = tree
            .document()
            .nodes()
            .iter()
            .map(|n| {
                n.embedding
                    .as_ref()
                    .map(EmbeddingVector::norm)
                    .ok_or_else(|| Error::IncompleteTree(format!("node {} has no embedding", n.id)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Prepared { tree, norms })
    }

    fn descend(&self, x: &EmbeddingVector, thresholds: Option<&ThresholdTable>) -> Result<TraversalResult> {
        let doc = self.tree.document();
        let dim = self.tree.embedding(doc.root()).expect("prepared").dim();
        if x.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: x.dim(),
            });
        }
        let nx = x.norm();
        if nx == 0.0 {
            return Err(Error::DegenerateVector("zero query vector".into()));
        }
        let mut node = doc.root();
        let mut path = vec![node];
        let mut steps = Vec::new();
        while !doc.is_leaf(node) {
            // Children are ordered by smallest descendant label, so strict `>` keeps that order on ties.
            let mut best: Option<(NodeId, f64)> = None;
            for &c in doc.children(node) {
                let e = self.tree.embedding(c).expect("prepared");
                let s = cosine_similarity_raw(x.as_slice(), e.as_slice(), nx, self.norms[c]);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((c, s));
                }
            }
            let (chosen, similarity) = best.expect("internal nodes have children");
            let step = Step {
                node,
                chosen,
                similarity,
            };
            if let Some(t) = thresholds {
                if similarity < t.threshold(node) {
                    return Ok(TraversalResult {
                        path,
                        steps,
                        stopped_at: Some(step),
                    });
                }
            }
            steps.push(step);
            path.push(chosen);
            node = chosen;
        }
        Ok(TraversalResult {
            path,
            steps,
            stopped_at: None,
        })
    }
}

/// Greedy descent to the child with the most similar embedding until a leaf.
pub fn traverse(tree: &ConceptTree, x: &EmbeddingVector) -> Result<TraversalResult> {
    Prepared::new(tree)?.descend(x, None)
}

/// Like [`traverse`] but halts at a node whose best child similarity falls
/// below that node's threshold.
pub fn traverse_early_stop(
    tree: &ConceptTree,
    x: &EmbeddingVector,
    thresholds: &ThresholdTable,
) -> Result<TraversalResult> {
    Prepared::new(tree)?.descend(x, Some(thresholds))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_labels(tree: &ConceptTree, snapshot: &EmbeddingSnapshot) -> Result<BTreeMap<String, NodeId>> {
    let index = tree.leaf_index();
    if let Some(l) = snapshot.labels().into_iter().find(|l| !index.contains_key(l)) {
        return Err(Error::LabelSet(format!("label {l:?} is not a leaf of the tree")));
    }
    Ok(index)
}

/// Runs vanilla traversal over the training samples and sets each internal
/// node's threshold to the `p`-quantile of the winning-child similarities
/// recorded there. `p = 1` stops every traversal at the root.
pub fn calibrate_thresholds(tree: &ConceptTree, train: &EmbeddingSnapshot, p: f64) -> Result<ThresholdTable> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("quantile must be in [0, 1], got {p}")));
    }
    if train.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    check_labels(tree, train)?;
    let prepared = Prepared::new(tree)?;
    let mut seen: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    for (_, x) in train.records() {
        for s in prepared.descend(x, None)?.steps {
            seen.entry(s.node).or_default().push(s.similarity);
        }
    }
    let thresholds = seen
        .into_iter()
        .map(|(node, mut sims)| {
            sims.sort_by(f64::total_cmp);
            let t = if p >= 1.0 { f64::INFINITY } else { quantile_sorted(&sims, p) };
            (node, t)
        })
        .collect();
    Ok(ThresholdTable {
        thresholds,
        quantile_p: p,
    })
}

/// Faithfulness metrics for one tree on one test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub zero_shot_acc: f64,
    pub tree_acc: f64,
    pub soft_tree_acc: f64,
    /// `tree_acc / zero_shot_acc`; 0 when zero-shot accuracy is 0.
    #[serde(rename = "faithfulness")]
    pub faithfulness_ratio: f64,
    #[serde(rename = "lcn_dist_vanilla")]
    pub last_correct_node_dist_vanilla: f64,
    #[serde(rename = "lcn_dist_early")]
    pub last_correct_node_dist_early: f64,
    pub onto_dist_vanilla: Option<f64>,
    pub onto_dist_early: Option<f64>,
}

/// Ontology used to measure how far predictions land from the truth.
pub struct OntologyContext<'a> {
    pub graph: &'a OntologyGraph,
    pub grounding: &'a LeafGrounding,
}

/// Fraction of the true root-to-leaf edges followed before the first wrong turn.
pub fn soft_accuracy(true_path: &[NodeId], taken: &[NodeId]) -> f64 {
    let edges = true_path.len().saturating_sub(1);
    if edges == 0 {
        return 1.0;
    }
    let shared = true_path.iter().zip(taken).take_while(|(a, b)| a == b).count();
    shared.saturating_sub(1) as f64 / edges as f64
}

pub fn evaluate(
    tree: &ConceptTree,
    test: &EmbeddingSnapshot,
    centroids: &ConceptCentroidSet,
    thresholds: &ThresholdTable,
    ontology: Option<&OntologyContext<'_>>,
) -> Result<FaithfulnessReport> {
    let index = check_labels(tree, test)?;
    let doc = tree.document();
    let leaf_centroids = centroids.restrict(index.keys())?;
    let prepared = Prepared::new(tree)?;
    let rho = ontology
        .map(|o| ground_tree(doc, o.graph, o.grounding))
        .transpose()?;

    let n = test.len();
    if n == 0 {
        return Err(Error::LabelSet("empty test snapshot".into()));
    }
    let (mut zs, mut exact, mut soft, mut lcn_v, mut lcn_e) = (0usize, 0usize, 0.0, 0.0, 0.0);
    let (mut onto_v, mut onto_e, mut onto_n) = (0.0, 0.0, 0usize);
    for (label, x) in test.records() {
        let truth = index[label];
        if crate::vectors::zero_shot_classify(x, &leaf_centroids)? == label.as_str() {
            zs += 1;
        }
        let vanilla = prepared.descend(x, None)?;
        let early = prepared.descend(x, Some(thresholds))?;
        let pred = vanilla.predicted();
        if pred == truth {
            exact += 1;
        }
        soft += soft_accuracy(&doc.path_from_root(truth), &vanilla.path);
        let last_correct = doc.lca(truth, pred);
        lcn_v += doc.walking_distance(pred, last_correct) as f64;
        lcn_e += doc.walking_distance(early.predicted(), last_correct) as f64;
        if let (Some(o), Some(rho)) = (ontology, rho.as_ref()) {
            let target = &rho[truth];
            let dv = o.graph.undirected_distance(&rho[pred], target)?;
            let de = o.graph.undirected_distance(&rho[early.predicted()], target)?;
            if let (Some(dv), Some(de)) = (dv, de) {
                onto_v += dv as f64;
                onto_e += de as f64;
                onto_n += 1;
            }
        }
    }
    let nf = n as f64;
    let zero_shot_acc = zs as f64 / nf;
    let tree_acc = exact as f64 / nf;
    Ok(FaithfulnessReport {
        zero_shot_acc,
        tree_acc,
        soft_tree_acc: soft / nf,
        faithfulness_ratio: if zero_shot_acc > 0.0 { tree_acc / zero_shot_acc } else { 0.0 },
        last_correct_node_dist_vanilla: lcn_v / nf,
        last_correct_node_dist_early: lcn_e / nf,
        onto_dist_vanilla: (onto_n > 0).then(|| onto_v / onto_n as f64),
        onto_dist_early: (onto_n > 0).then(|| onto_e / onto_n as f64),
    })
}
