//! Binary concept hierarchy extraction: average-linkage agglomerative
//! clustering of leaf centroids, parent embeddings, and parent naming by
//! optimal one-to-one assignment against a concept bank.

use std::collections::{BTreeMap, BTreeSet};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::io::ConceptBank;
use crate::tree::{NodeId, TreeDocument, TreeNode};
use crate::vectors::{
    concept_embedding, cosine_distance, cosine_distance_raw, ConceptCentroidSet, EmbeddingVector,
};

/// How a merged parent's embedding is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParentEmbedding {
    /// Normalized mean of the two direct children's embeddings.
    #[default]
    DirectChildren,
    /// Normalized mean over all descendant leaf centroids.
    LeafMean,
}

/// A binary tree over leaf classes whose nodes carry embeddings and whose
/// internal nodes may carry assigned concept names.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTree {
    doc: TreeDocument,
}

impl ConceptTree {
    /// Wraps a document, checking binary shape and unique leaf names.
    pub fn from_document(doc: TreeDocument) -> Result<Self> {
        for n in doc.internal_nodes() {
            let k = doc.children(n).len();
            if k != 2 {
                return Err(Error::IncompleteTree(format!(
                    "internal node {n} has {k} children, expected 2"
                )));
            }
        }
        doc.leaf_index()?;
        let mut names = BTreeSet::new();
        for n in doc.internal_nodes() {
            if let Some(name) = doc.name(n) {
                if !names.insert(name.to_string()) {
                    return Err(Error::LabelSet(format!("duplicate internal name {name:?}")));
                }
            }
        }
        Ok(ConceptTree { doc })
    }

    pub fn document(&self) -> &TreeDocument {
        &self.doc
    }

    pub fn into_document(self) -> TreeDocument {
        self.doc
    }

    pub fn leaf_count(&self) -> usize {
        self.doc.leaves().count()
    }

    pub fn embedding(&self, id: NodeId) -> Option<&EmbeddingVector> {
        self.doc.node(id).embedding.as_ref()
    }

    pub fn has_embeddings(&self) -> bool {
        self.doc.nodes().iter().all(|n| n.embedding.is_some())
    }

    /// Leaf label → leaf node id.
    pub fn leaf_index(&self) -> BTreeMap<String, NodeId> {
        self.doc.leaf_index().expect("validated at construction")
    }

    /// Internal node id → assigned concept name.
    pub fn parent_names(&self) -> BTreeMap<NodeId, String> {
        self.doc
            .internal_nodes()
            .filter_map(|n| self.doc.name(n).map(|s| (n, s.to_string())))
            .collect()
    }

    /// Largest deviation between a stored internal embedding and the
    /// normalized mean of its children's embeddings.
    pub fn parent_recursion_error(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for n in self.doc.internal_nodes() {
            let kids: Vec<&EmbeddingVector> = self
                .doc
                .children(n)
                .iter()
                .map(|&c| self.embedding(c).ok_or_else(|| missing(c)))
                .collect::<Result<_>>()?;
            let expect = concept_embedding(kids)?;
            let got = self.embedding(n).ok_or_else(|| missing(n))?;
            for (a, b) in expect.as_slice().iter().zip(got.as_slice()) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

fn missing(id: NodeId) -> Error {
    Error::IncompleteTree(format!("node {id} has no embedding"))
}

/// Mean pairwise cosine distance between two disjoint label clusters.
pub fn average_linkage(
    cluster_a: &BTreeSet<String>,
    cluster_b: &BTreeSet<String>,
    centroids: &ConceptCentroidSet,
) -> Result<f64> {
    if cluster_a.is_empty() || cluster_b.is_empty() {
        return Err(Error::EmptyConcept("empty cluster".into()));
    }
    if let Some(shared) = cluster_a.intersection(cluster_b).next() {
        return Err(Error::ClusterOverlap(shared.clone()));
    }
    let lookup = |l: &String| {
        centroids
            .get(l)
            .ok_or_else(|| Error::LabelSet(format!("no centroid for label {l:?}")))
    };
    let mut total = 0.0;
    for a in cluster_a {
        let va = lookup(a)?;
        for b in cluster_b {
            total += cosine_distance(va, lookup(b)?)?;
        }
    }
    Ok(total / (cluster_a.len() * cluster_b.len()) as f64)
}

/// Agglomerative clustering with average linkage on cosine distance.
///
/// Ties between equally close pairs go to the pair whose smaller
/// lexicographic member label is smallest, then to the other member's.
pub fn build_hierarchy(centroids: &ConceptCentroidSet) -> Result<ConceptTree> {
    build_hierarchy_with(centroids, ParentEmbedding::default())
}

pub fn build_hierarchy_with(
    centroids: &ConceptCentroidSet,
    policy: ParentEmbedding,
) -> Result<ConceptTree> {
    let k = centroids.len();
    if k < 2 {
        return Err(Error::TooFewLeaves(k));
    }
    // Leaf index order == lexicographic label order, so a cluster's smallest
    // member label is its smallest member index.
    let leaves: Vec<(&String, &EmbeddingVector)> = centroids.iter().collect();
    let norms: Vec<f64> = leaves.iter().map(|(_, v)| v.norm()).collect();

    let mut dist = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = cosine_distance_raw(leaves[i].1.as_slice(), leaves[j].1.as_slice(), norms[i], norms[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    struct Cluster {
        node: NodeId,
        size: usize,
        min_leaf: usize,
        leaves: Vec<usize>,
    }

    let mut nodes: Vec<TreeNode> = leaves
        .iter()
        .enumerate()
        .map(|(i, (label, v))| TreeNode {
            id: i,
            name: Some((*label).clone()),
            embedding: Some((*v).clone()),
            children: vec![],
        })
        .collect();
    // Slot i holds the cluster currently occupying distance-matrix row i.
    let mut slots: Vec<Option<Cluster>> = (0..k)
        .map(|i| {
            Some(Cluster {
                node: i,
                size: 1,
                min_leaf: i,
                leaves: vec![i],
            })
        })
        .collect();

    for _ in 0..(k - 1) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for i in 0..k {
            let Some(ci) = &slots[i] else { continue };
            for j in (i + 1)..k {
                let Some(cj) = &slots[j] else { continue };
                let d = dist[i][j];
                let key = (ci.min_leaf.min(cj.min_leaf), ci.min_leaf.max(cj.min_leaf));
                let better = match &best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < *bd || (d == *bd && key < *bkey),
                };
                if better {
                    best = Some((d, key, i, j));
                }
            }
        }
        let (_, _, i, j) = best.expect("at least two active clusters");
        let a = slots[i].take().expect("active");
        let b = slots[j].take().expect("active");
        let (sa, sb) = (a.size as f64, b.size as f64);
        for m in 0..k {
            if slots[m].is_some() {
                let d = (sa * dist[i][m] + sb * dist[j][m]) / (sa + sb);
                dist[i][m] = d;
                dist[m][i] = d;
            }
        }
        let embedding = match policy {
            ParentEmbedding::DirectChildren => {
                let ea = nodes[a.node].embedding.as_ref().expect("set");
                let eb = nodes[b.node].embedding.as_ref().expect("set");
                concept_embedding([ea, eb])?
            }
            ParentEmbedding::LeafMean => {
                concept_embedding(a.leaves.iter().chain(&b.leaves).map(|&l| leaves[l].1))?
            }
        };
        let id = nodes.len();
        nodes.push(TreeNode {
            id,
            name: None,
            embedding: Some(embedding),
            children: vec![a.node, b.node],
        });
        let mut merged_leaves = a.leaves;
        merged_leaves.extend(b.leaves);
        slots[i] = Some(Cluster {
            node: id,
            size: a.size + b.size,
            min_leaf: a.min_leaf.min(b.min_leaf),
            leaves: merged_leaves,
        });
    }
    let root = nodes.len() - 1;
    ConceptTree::from_document(TreeDocument::from_nodes(nodes, root)?)
}

/// Result of naming: the named tree and the total assignment cost.
#[derive(Debug, Clone)]
pub struct Naming {
    pub tree: ConceptTree,
    pub total_cost: f64,
}

/// Assigns each internal node a distinct bank concept minimizing the summed
/// cosine distance. Concepts whose id equals a leaf label are not eligible.
pub fn name_internal_nodes(tree: &ConceptTree, bank: &ConceptBank) -> Result<Naming> {
    let doc = tree.document();
    let leaf_labels: BTreeSet<String> = doc.leaf_names().into_iter().collect();
    let internal: Vec<NodeId> = doc.internal_nodes().collect();
    let eligible: Vec<(&String, &EmbeddingVector)> = bank
        .embeddings
        .iter()
        .filter(|(id, _)| !leaf_labels.contains(*id))
        .collect();
    if eligible.len() < internal.len() {
        return Err(Error::BankTooSmall {
            needed: internal.len(),
            available: eligible.len(),
        });
    }
    let mut named = doc.clone();
    if internal.is_empty() {
        return Ok(Naming {
            tree: ConceptTree::from_document(named)?,
            total_cost: 0.0,
        });
    }
    if bank.embeddings.dim() != tree.embedding(internal[0]).map_or(0, EmbeddingVector::dim) {
        return Err(Error::Dimension {
            expected: tree.embedding(internal[0]).map_or(0, EmbeddingVector::dim),
            found: bank.embeddings.dim(),
        });
    }
    let cost: Vec<Vec<f64>> = internal
        .iter()
        .map(|&n| {
            let e = tree.embedding(n).ok_or_else(|| missing(n))?;
            eligible
                .iter()
                .map(|(_, c)| cosine_distance(e, c))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let (assignment, total_cost) = min_cost_assignment(&cost);
    for (row, &col) in assignment.iter().enumerate() {
        named.node_mut(internal[row]).name = Some(eligible[col].0.clone());
    }
    Ok(Naming {
        tree: ConceptTree::from_document(named)?,
        total_cost,
    })
}

/// Exchanges the positions of two non-sibling leaves. Ancestor embeddings
/// are left as they were.
pub fn swap_leaves(tree: &ConceptTree, a: &str, b: &str) -> Result<ConceptTree> {
    if a == b {
        return Err(Error::Parameter(format!("cannot swap leaf {a:?} with itself")));
    }
    let index = tree.leaf_index();
    let ia = *index
        .get(a)
        .ok_or_else(|| Error::LabelSet(format!("unknown leaf {a:?}")))?;
    let ib = *index
        .get(b)
        .ok_or_else(|| Error::LabelSet(format!("unknown leaf {b:?}")))?;
    let doc = tree.document();
    if doc.parent(ia) == doc.parent(ib) {
        return Err(Error::SiblingSwap(a.to_string(), b.to_string()));
    }
    let mut swapped = doc.clone();
    let (na, ea) = {
        let n = doc.node(ia);
        (n.name.clone(), n.embedding.clone())
    };
    let (nb, eb) = {
        let n = doc.node(ib);
        (n.name.clone(), n.embedding.clone())
    };
    {
        let n = swapped.node_mut(ia);
        n.name = nb;
        n.embedding = eb;
    }
    {
        let n = swapped.node_mut(ib);
        n.name = na;
        n.embedding = ea;
    }
    ConceptTree::from_document(swapped.recanonicalize()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::EmbeddingVector;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn set(entries: &[(&str, &[f64])]) -> ConceptCentroidSet {
        let dim = entries[0].1.len();
        ConceptCentroidSet::new(dim, entries.iter().map(|(l, x)| (l.to_string(), v(x)))).unwrap()
    }

    fn labels(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_leaves_give_midpoint_parent() {
        let c = set(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let t = build_hierarchy(&c).unwrap();
        assert_eq!(t.document().len(), 3);
        let root = t.document().root();
        let e = t.embedding(root).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.as_slice()[0] - h).abs() < 1e-12 && (e.as_slice()[1] - h).abs() < 1e-12);
    }

    #[test]
    fn too_few_leaves() {
        let c = set(&[("a", &[1.0, 0.0])]);
        assert!(matches!(build_hierarchy(&c), Err(Error::TooFewLeaves(1))));
    }

    /// Every labeled rooted binary topology over `labels`.
    fn all_topologies(labels: &[&str]) -> Vec<String> {
        if labels.len() == 1 {
            return vec![labels[0].to_string()];
        }
        let mut out = Vec::new();
        let first = labels[0];
        let rest = &labels[1..];
        // Split into (part containing first, complement) with complement non-empty.
        for mask in 0..(1u32 << rest.len()) {
            let left: Vec<&str> = std::iter::once(first)
                .chain(rest.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, l)| *l))
                .collect();
            let right: Vec<&str> = rest
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) == 0)
                .map(|(_, l)| *l)
                .collect();
            if right.is_empty() {
                continue;
            }
            for l in all_topologies(&left) {
                for r in all_topologies(&right) {
                    out.push(format!("({l},{r})"));
                }
            }
        }
        out
    }

    #[test]
    fn planted_pairs_match_exhaustive_oracle() {
        // Within-pair cosine distance 0.01, across-pair 1.0 (orthogonal planes).
        let theta = (1.0f64 - 0.01).acos() / 2.0;
        let (c, s) = (theta.cos(), theta.sin());
        let cents = set(&[
            ("a", &[c, s, 0.0, 0.0]),
            ("b", &[c, -s, 0.0, 0.0]),
            ("c", &[0.0, 0.0, c, s]),
            ("d", &[0.0, 0.0, c, -s]),
        ]);
        assert!((cosine_distance(cents.get("a").unwrap(), cents.get("b").unwrap()).unwrap() - 0.01).abs() < 1e-12);

        // Oracle: among all 15 topologies, the one whose average-linkage merge
        // heights best reproduce the pairwise distances.
        let topos = all_topologies(&["a", "b", "c", "d"]);
        assert_eq!(topos.len(), 15);
        let score = |nested: &str| -> f64 {
            let t = TreeDocument::parse_nested(nested).unwrap();
            let idx = t.leaf_index().unwrap();
            let names: Vec<&String> = idx.keys().collect();
            let mut err = 0.0;
            for i in 0..names.len() {
                for j in (i + 1)..names.len() {
                    let l = t.lca(idx[names[i]], idx[names[j]]);
                    let kids = t.children(l);
                    let side = |n: NodeId| -> BTreeSet<String> {
                        t.leaves_under(n).into_iter().map(|x| t.name(x).unwrap().to_string()).collect()
                    };
                    let h = average_linkage(&side(kids[0]), &side(kids[1]), &cents).unwrap();
                    let d = cosine_distance(cents.get(names[i]).unwrap(), cents.get(names[j]).unwrap()).unwrap();
                    err += (d - h).powi(2);
                }
            }
            err
        };
        let best = topos
            .iter()
            .min_by(|a, b| score(a).partial_cmp(&score(b)).unwrap())
            .unwrap();
        let oracle = TreeDocument::parse_nested(best).unwrap().to_nested();
        assert_eq!(oracle, "((a,b),(c,d))");
        let got = build_hierarchy(&cents).unwrap().document().topology_only().to_nested();
        assert_eq!(got, oracle);
    }

    #[test]
    fn average_linkage_examples() {
        // d(a,b) = 0.2, d(a,c) = 0.4 by construction on the unit circle.
        let ang = |d: f64| (1.0f64 - d).acos();
        let c = set(&[
            ("a", &[1.0, 0.0]),
            ("b", &[ang(0.2).cos(), ang(0.2).sin()]),
            ("c", &[ang(0.4).cos(), -ang(0.4).sin()]),
        ]);
        let ab = average_linkage(&labels(&["a"]), &labels(&["b"]), &c).unwrap();
        assert!((ab - 0.2).abs() < 1e-12);
        let abc = average_linkage(&labels(&["a"]), &labels(&["b", "c"]), &c).unwrap();
        assert!((abc - 0.3).abs() < 1e-12);
        assert!(matches!(
            average_linkage(&labels(&["a", "b"]), &labels(&["b"]), &c),
            Err(Error::ClusterOverlap(_))
        ));
    }

    #[test]
    fn average_linkage_matches_double_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let names: Vec<String> = (0..8).map(|i| format!("l{i}")).collect();
            let vecs: Vec<Vec<f64>> = (0..8).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let c = ConceptCentroidSet::new(5, names.iter().cloned().zip(vecs.iter().map(|x| v(x)))).unwrap();
            let split = rng.gen_range(1..8);
            let a: BTreeSet<String> = names[..split].iter().cloned().collect();
            let b: BTreeSet<String> = names[split..].iter().cloned().collect();
            let mut sum = 0.0;
            for i in 0..split {
                for j in split..8 {
                    let (x, y) = (&vecs[i], &vecs[j]);
                    let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                    let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                    let ny: f64 = y.iter().map(|p| p * p).sum::<f64>().sqrt();
                    sum += 1.0 - dot / (nx * ny);
                }
            }
            let oracle = sum / (split * (8 - split)) as f64;
            assert!((average_linkage(&a, &b, &c).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn leaf_mean_policy_differs_only_in_embeddings() {
        let c = set(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[0.9, 0.1, 0.0]),
            ("c", &[0.0, 1.0, 0.2]),
        ]);
        let direct = build_hierarchy_with(&c, ParentEmbedding::DirectChildren).unwrap();
        let mean = build_hierarchy_with(&c, ParentEmbedding::LeafMean).unwrap();
        assert_eq!(direct.document().to_nested(), mean.document().to_nested());
        assert!(direct.parent_recursion_error().unwrap() < 1e-12);
        let root = mean.document().root();
        let expect = concept_embedding(c.iter().map(|(_, v)| v)).unwrap();
        assert_eq!(mean.embedding(root).unwrap(), &expect);
    }

    fn bank(entries: &[(&str, &[f64])]) -> ConceptBank {
        ConceptBank::from_embeddings(set(entries))
    }

    #[test]
    fn single_internal_node_gets_nearest_concept() {
        let c = set(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let t = build_hierarchy(&c).unwrap();
        let b = bank(&[("far", &[-1.0, 0.0]), ("mid", &[1.0, 1.0]), ("near_a", &[1.0, 0.1])]);
        let named = name_internal_nodes(&t, &b).unwrap();
        let root = named.tree.document().root();
        assert_eq!(named.tree.document().name(root), Some("mid"));
    }

    #[test]
    fn leaf_labels_are_not_eligible_names() {
        let c = set(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let t = build_hierarchy(&c).unwrap();
        let b = bank(&[("a", &[1.0, 1.0])]);
        assert!(matches!(
            name_internal_nodes(&t, &b),
            Err(Error::BankTooSmall { needed: 1, available: 0 })
        ));
    }

    #[test]
    fn naming_is_optimal_against_brute_force() {
        use rand::{Rng, SeedableRng};
        fn permutations_cost(cost: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + permutations_cost(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for leaves in 2..=7 {
            let names: Vec<String> = (0..leaves).map(|i| format!("leaf{i}")).collect();
            let c = ConceptCentroidSet::new(
                4,
                names.iter().cloned().map(|n| (n, v(&(0..4).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))),
            )
            .unwrap();
            let t = build_hierarchy(&c).unwrap();
            let bank_set = ConceptCentroidSet::new(
                4,
                (0..leaves + 1).map(|i| (format!("concept{i}"), v(&(0..4).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))),
            )
            .unwrap();
            let named = name_internal_nodes(&t, &ConceptBank::from_embeddings(bank_set.clone())).unwrap();
            let internal: Vec<NodeId> = t.document().internal_nodes().collect();
            let cost: Vec<Vec<f64>> = internal
                .iter()
                .map(|&n| bank_set.iter().map(|(_, e)| cosine_distance(t.embedding(n).unwrap(), e).unwrap()).collect())
                .collect();
            let oracle = permutations_cost(&cost, 0, &mut vec![false; bank_set.len()]);
            assert!(named.total_cost <= oracle + 1e-12);
            assert!((named.total_cost - oracle).abs() < 1e-9);
            let names: BTreeSet<_> = named.tree.parent_names().into_values().collect();
            assert_eq!(names.len(), internal.len());
        }
    }

    #[test]
    fn shared_nearest_concept_goes_to_one_node_only() {
        // Both parents are closest to X; the assignment must split X/Y or X/Z optimally.
        let c = set(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[1.0, 0.2, 0.0]),
            ("c", &[0.6, 0.0, 1.0]),
        ]);
        let t = build_hierarchy(&c).unwrap();
        let b = bank(&[("X", &[1.0, 0.1, 0.2]), ("Y", &[0.0, 1.0, 0.0]), ("Z", &[0.5, 0.0, 0.8])]);
        let named = name_internal_nodes(&t, &b).unwrap();
        let names: Vec<String> = named.tree.parent_names().into_values().collect();
        assert_eq!(names.len(), 2);
        assert!(names.contains(&"X".to_string()));
    }

    #[test]
    fn swap_is_an_involution_and_rejects_siblings() {
        let t = ConceptTree::from_document(TreeDocument::parse_nested("(((a,b),c),d)").unwrap()).unwrap();
        let s = swap_leaves(&t, "a", "d").unwrap();
        assert_eq!(s.document().to_nested(), "(a,((b,d),c))");
        let back = swap_leaves(&s, "a", "d").unwrap();
        assert_eq!(back.document().to_nested(), t.document().to_nested());
        assert!(matches!(swap_leaves(&t, "a", "b"), Err(Error::SiblingSwap(_, _))));
        assert!(matches!(swap_leaves(&t, "a", "zz"), Err(Error::LabelSet(_))));
    }
}
