//! Constrained unordered tree edit distance, its normalized form, a random
//! topology baseline, and the ontology-induced "closest valid tree".
//!
//! The distance follows the constrained mapping semantics for unordered
//! trees: mappings preserve ancestorship, and disjoint subtrees map to
//! disjoint subtrees. Under these semantics the cost is computable by a
//! dynamic program over subtree pairs whose forest step is a minimum-cost
//! bipartite matching of children.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::ontology::{LeafGrounding, OntologyGraph};
use crate::tree::{TreeDocument, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EditCostModel {
    pub delete_cost: f64,
    pub insert_cost: f64,
    pub rename_cost: f64,
    /// Internal nodes are anonymous (free to map onto each other) when set.
    pub rename_leaves_only: bool,
}

impl Default for EditCostModel {
    fn default() -> Self {
        EditCostModel {
            delete_cost: 1.0,
            insert_cost: 1.0,
            rename_cost: 1.0,
            rename_leaves_only: true,
        }
    }
}

impl EditCostModel {
    pub fn validate(&self) -> Result<()> {
        for (n, c) in [
            ("delete", self.delete_cost),
            ("insert", self.insert_cost),
            ("rename", self.rename_cost),
        ] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Parameter(format!("{n} cost must be finite and >= 0, got {c}")));
            }
        }
        Ok(())
    }

    /// Cost of mapping node `a` onto node `b`; `None` when the pair may not map
    /// (a leaf never maps onto an internal node).
    pub fn relabel(&self, a: &TreeNode, b: &TreeNode) -> Option<f64> {
        let (la, lb) = (a.children.is_empty(), b.children.is_empty());
        if la != lb {
            return None;
        }
        if !la && self.rename_leaves_only {
            return Some(0.0);
        }
        Some(if a.name == b.name { 0.0 } else { self.rename_cost })
    }
}

/// Constrained unordered edit distance converting `t1` into `t2`.
pub fn uted(t1: &TreeDocument, t2: &TreeDocument, costs: &EditCostModel) -> f64 {
    let (n1, n2) = (t1.len(), t2.len());
    // Whole-subtree delete / insert costs; ids are post-order.
    let mut del = vec![0.0; n1];
    for i in 0..n1 {
        del[i] = costs.delete_cost + t1.children(i).iter().map(|&c| del[c]).sum::<f64>();
    }
    let mut ins = vec![0.0; n2];
    for j in 0..n2 {
        ins[j] = costs.insert_cost + t2.children(j).iter().map(|&c| ins[c]).sum::<f64>();
    }
    let mut dt = vec![0.0f64; n1 * n2];
    let mut df = vec![0.0f64; n1 * n2];
    let at = |i: usize, j: usize| i * n2 + j;
    let mut scratch = Vec::new();

    for i in 0..n1 {
        let ci = t1.children(i);
        let del_forest_i = del[i] - costs.delete_cost;
        for j in 0..n2 {
            let cj = t2.children(j);
            let ins_forest_j = ins[j] - costs.insert_cost;

            // Forest distance between the children of i and the children of j.
            let forest = if ci.is_empty() {
                ins_forest_j
            } else if cj.is_empty() {
                del_forest_i
            } else {
                let mut best = matching_cost(ci, cj, &dt, n2, &del, &ins, &mut scratch);
                for &t in cj {
                    best = best.min(ins_forest_j + df[at(i, t)] - (ins[t] - costs.insert_cost));
                }
                for &s in ci {
                    best = best.min(del_forest_i + df[at(s, j)] - (del[s] - costs.delete_cost));
                }
                best
            };
            df[at(i, j)] = forest;

            let mut best = del[i] + ins[j];
            if let Some(r) = costs.relabel(t1.node(i), t2.node(j)) {
                best = best.min(forest + r);
            }
            for &t in cj {
                best = best.min(ins[j] + dt[at(i, t)] - ins[t]);
            }
            for &s in ci {
                best = best.min(del[i] + dt[at(s, j)] - del[s]);
            }
            dt[at(i, j)] = best;
        }
    }
    dt[at(t1.root(), t2.root())]
}

/// Min-cost matching of two child lists where unmatched children are deleted
/// or inserted as whole subtrees.
fn matching_cost(
    ci: &[usize],
    cj: &[usize],
    dt: &[f64],
    n2: usize,
    del: &[f64],
    ins: &[f64],
    scratch: &mut Vec<bool>,
) -> f64 {
    let (a, b) = (ci.len(), cj.len());
    if a <= 3 && b <= 3 {
        // Exhaustive over partial injections; tiny for binary trees.
        fn rec(
            s: usize,
            ci: &[usize],
            cj: &[usize],
            used: &mut [bool],
            dt: &[f64],
            n2: usize,
            del: &[f64],
            ins: &[f64],
        ) -> f64 {
            if s == ci.len() {
                return cj
                    .iter()
                    .zip(used.iter())
                    .filter(|(_, &u)| !u)
                    .map(|(&t, _)| ins[t])
                    .sum();
            }
            let mut best = del[ci[s]] + rec(s + 1, ci, cj, used, dt, n2, del, ins);
            for k in 0..cj.len() {
                if !used[k] {
                    used[k] = true;
                    let c = dt[ci[s] * n2 + cj[k]] + rec(s + 1, ci, cj, used, dt, n2, del, ins);
                    used[k] = false;
                    best = best.min(c);
                }
            }
            best
        }
        scratch.clear();
        scratch.resize(b, false);
        return rec(0, ci, cj, scratch, dt, n2, del, ins);
    }
    let size = a + b;
    let big = 1e15;
    let mut m = vec![vec![big; size]; size];
    for (s, &is) in ci.iter().enumerate() {
        for (t, &jt) in cj.iter().enumerate() {
            m[s][t] = dt[is * n2 + jt];
        }
        m[s][b + s] = del[is];
    }
    for (t, &jt) in cj.iter().enumerate() {
        m[a + t][t] = ins[jt];
        for s in 0..a {
            m[a + t][b + s] = 0.0;
        }
    }
    min_cost_assignment(&m).1
}

/// Edit distance divided by the cost of deleting all of `t1` and inserting all of `t2`.
pub fn nuted(t1: &TreeDocument, t2: &TreeDocument, costs: &EditCostModel) -> f64 {
    let denom = costs.delete_cost * t1.len() as f64 + costs.insert_cost * t2.len() as f64;
    if denom == 0.0 {
        return 0.0;
    }
    uted(t1, t2, costs) / denom
}

/// Random binary topology: split the leaf sequence at a uniform point, recurse.
pub fn random_binary_tree<R: Rng>(leaves: &[String], rng: &mut R) -> TreeDocument {
    fn rec<R: Rng>(leaves: &[String], rng: &mut R, nodes: &mut Vec<TreeNode>) -> usize {
        let id = nodes.len();
        if leaves.len() == 1 {
            nodes.push(TreeNode {
                id,
                name: Some(leaves[0].clone()),
                embedding: None,
                children: vec![],
            });
            return id;
        }
        nodes.push(TreeNode {
            id,
            name: None,
            embedding: None,
            children: vec![],
        });
        let split = rng.gen_range(1..leaves.len());
        let l = rec(&leaves[..split], rng, nodes);
        let r = rec(&leaves[split..], rng, nodes);
        nodes[id].children = vec![l, r];
        id
    }
    assert!(!leaves.is_empty());
    let mut nodes = Vec::with_capacity(2 * leaves.len());
    let root = rec(leaves, rng, &mut nodes);
    TreeDocument::from_nodes(nodes, root).expect("generated trees are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineStats {
    pub n_leaves: usize,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

/// nUTED between pairs of independent random topologies over one leaf set.
pub fn random_uted_baseline(n_leaves: usize, runs: usize, seed: u64) -> Result<BaselineStats> {
    if n_leaves < 2 {
        return Err(Error::Parameter(format!("need >= 2 leaves, got {n_leaves}")));
    }
    if runs == 0 {
        return Err(Error::Parameter("need >= 1 run".into()));
    }
    let labels: Vec<String> = (0..n_leaves).map(|i| format!("leaf{i}")).collect();
    let costs = EditCostModel::default();
    let values: Vec<f64> = (0..runs)
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run as u64);
            let mut a = labels.clone();
            a.shuffle(&mut rng);
            let ta = random_binary_tree(&a, &mut rng);
            let mut b = labels.clone();
            b.shuffle(&mut rng);
            let tb = random_binary_tree(&b, &mut rng);
            nuted(&ta, &tb, &costs)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / runs as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / runs as f64;
    Ok(BaselineStats {
        n_leaves,
        runs,
        mean,
        std: var.sqrt(),
    })
}

/// An ontology-induced tree over the grounded leaves and its distance to the
/// input tree. The score is an upper bound on the distance to the best
/// ontology slice, since the candidate comes from a heuristic construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosestValidTree {
    pub tree: TreeDocument,
    pub nuted: f64,
    pub is_upper_bound: bool,
}

/// Builds the hierarchy the ontology induces over the grounded leaves: the
/// leaf groundings closed under pairwise LCA, each attached below its deepest
/// proper ancestor in that set, with unary chains contracted.
pub fn closest_valid_tree(
    tree: &TreeDocument,
    g: &OntologyGraph,
    grounding: &LeafGrounding,
) -> Result<ClosestValidTree> {
    let candidate = induced_tree(&tree.leaf_names(), g, grounding)?;
    let score = nuted(&tree.topology_only(), &candidate, &EditCostModel::default());
    Ok(ClosestValidTree {
        tree: candidate,
        nuted: score,
        is_upper_bound: true,
    })
}

pub fn induced_tree(labels: &[String], g: &OntologyGraph, grounding: &LeafGrounding) -> Result<TreeDocument> {
    if labels.is_empty() {
        return Err(Error::LabelSet("no leaves to ground".into()));
    }
    let mut grounded: BTreeMap<&str, Vec<&String>> = BTreeMap::new();
    for l in labels {
        let node = grounding
            .get(l)
            .ok_or_else(|| Error::LabelSet(format!("leaf {l:?} is not grounded")))?;
        if !g.contains(node) {
            return Err(Error::LabelSet(format!("grounding {node:?} of {l:?} is not in the ontology")));
        }
        grounded.entry(node.as_str()).or_default().push(l);
    }

    let mut ancestors: HashMap<String, BTreeSet<String>> = HashMap::new();
    let mut anc = |n: &str| -> Result<BTreeSet<String>> {
        if let Some(a) = ancestors.get(n) {
            return Ok(a.clone());
        }
        let a: BTreeSet<String> = g.ancestors_or_self(n)?.into_iter().map(str::to_string).collect();
        ancestors.insert(n.to_string(), a.clone());
        Ok(a)
    };

    // Close the grounding set under pairwise LCA.
    let mut set: BTreeSet<String> = grounded.keys().map(|s| s.to_string()).collect();
    let mut frontier: Vec<String> = set.iter().cloned().collect();
    while !frontier.is_empty() {
        let current: Vec<String> = set.iter().cloned().collect();
        let mut added = Vec::new();
        for f in &frontier {
            for c in &current {
                if f != c {
                    let l = g.lca(&[f.as_str(), c.as_str()])?.to_string();
                    if !set.contains(&l) && !added.contains(&l) {
                        added.push(l);
                    }
                }
            }
        }
        set.extend(added.iter().cloned());
        frontier = added;
    }

    // Parent of each set member: its deepest proper ancestor within the set.
    let members: Vec<String> = set.into_iter().collect();
    let mut parent: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    for m in &members {
        let a = anc(m)?;
        let best = members
            .iter()
            .filter(|o| *o != m && a.contains(*o))
            .max_by(|x, y| {
                g.depth(x)
                    .unwrap_or(0)
                    .cmp(&g.depth(y).unwrap_or(0))
                    .then_with(|| y.cmp(x))
            });
        parent.insert(m.as_str(), best.map(String::as_str));
    }

    // Assemble: ontology members are internal nodes, labels hang below their grounding.
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut id_of: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &members {
        id_of.insert(m.as_str(), nodes.len());
        nodes.push(TreeNode {
            id: nodes.len(),
            name: Some(m.clone()),
            embedding: None,
            children: vec![],
        });
    }
    let mut tops = Vec::new();
    for m in &members {
        match parent[m.as_str()] {
            Some(p) => {
                let (pi, mi) = (id_of[p], id_of[m.as_str()]);
                nodes[pi].children.push(mi);
            }
            None => tops.push(id_of[m.as_str()]),
        }
    }
    for (node, ls) in &grounded {
        for l in ls {
            let id = nodes.len();
            nodes.push(TreeNode {
                id,
                name: Some((*l).clone()),
                embedding: None,
                children: vec![],
            });
            nodes[id_of[node]].children.push(id);
        }
    }
    let root = if tops.len() == 1 {
        tops[0]
    } else {
        let id = nodes.len();
        nodes.push(TreeNode {
            id,
            name: None,
            embedding: None,
            children: tops,
        });
        id
    };
    let label_ids: BTreeSet<usize> = (members.len()..members.len() + labels.len()).collect();
    contract(nodes, root, &label_ids)
}

/// Removes childless ontology nodes and splices out single-child ones.
fn contract(nodes: Vec<TreeNode>, root: usize, labels: &BTreeSet<usize>) -> Result<TreeDocument> {
    fn rec(id: usize, nodes: &[TreeNode], labels: &BTreeSet<usize>, out: &mut Vec<TreeNode>) -> Option<usize> {
        if labels.contains(&id) {
            let new = out.len();
            out.push(TreeNode {
                id: new,
                name: nodes[id].name.clone(),
                embedding: None,
                children: vec![],
            });
            return Some(new);
        }
        let kids: Vec<usize> = nodes[id]
            .children
            .iter()
            .filter_map(|&c| rec(c, nodes, labels, out))
            .collect();
        match kids.len() {
            0 => None,
            1 => Some(kids[0]),
            _ => {
                let new = out.len();
                out.push(TreeNode {
                    id: new,
                    name: nodes[id].name.clone(),
                    embedding: None,
                    children: kids,
                });
                Some(new)
            }
        }
    }
    let mut out = Vec::new();
    let r = rec(root, &nodes, labels, &mut out).ok_or_else(|| Error::LabelSet("no leaves".into()))?;
    TreeDocument::from_nodes(out, r)
}
