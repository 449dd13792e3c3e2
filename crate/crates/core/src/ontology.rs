//! Hypernymy DAGs and the plausibility scores computed against them.
//!
//! Edges point from a concept to its hypernym (child → parent). Depth is the
//! longest path from a root; when the source has several roots a synthetic
//! super-root [`SUPER_ROOT`] is placed above all of them so that every node
//! set has a common ancestor.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::RawEdge;
use crate::tree::{NodeId, TreeDocument};

pub const SUPER_ROOT: &str = "⊤";

/// Class label → ontology node id.
pub type LeafGrounding = BTreeMap<String, String>;

#[derive(Debug, Clone)]
pub struct OntologyGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    roots: Vec<usize>,
    super_root: Option<usize>,
    dropped: Vec<RawEdge>,
}

/// Builds a DAG, breaking cycles with a depth-first search that visits nodes
/// and their parent edges in file order and drops every edge that closes a
/// cycle (points back at a node still on the DFS stack).
pub fn build_dag(edges: &[RawEdge]) -> OntologyGraph {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |s: &str, names: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(s) {
            return i;
        }
        let i = names.len();
        names.push(s.to_string());
        index.insert(s.to_string(), i);
        i
    };
    // (parent, edge position) per child, in file order.
    let mut out_edges: Vec<Vec<(usize, usize)>> = Vec::new();
    for (pos, e) in edges.iter().enumerate() {
        let c = intern(&e.child, &mut names);
        let p = intern(&e.parent, &mut names);
        out_edges.resize(names.len(), Vec::new());
        if c != p {
            out_edges[c].push((p, pos));
        }
    }
    out_edges.resize(names.len(), Vec::new());
    let n = names.len();

    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color = vec![Color::White; n];
    let mut drop = vec![false; edges.len()];
    for start in 0..n {
        if color[start] != Color::White {
            continue;
        }
        color[start] = Color::Gray;
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&(p, pos)) = out_edges[node].get(*next) {
                *next += 1;
                match color[p] {
                    Color::Gray => drop[pos] = true,
                    Color::White => {
                        color[p] = Color::Gray;
                        stack.push((p, 0));
                    }
                    Color::Black => {}
                }
            } else {
                color[node] = Color::Black;
                stack.pop();
            }
        }
    }

    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dropped = Vec::new();
    for (c, list) in out_edges.iter().enumerate() {
        for &(p, pos) in list {
            if drop[pos] {
                dropped.push(edges[pos].clone());
            } else {
                parents[c].push(p);
                children[p].push(c);
            }
        }
    }
    dropped.sort_by_key(|e| edges.iter().position(|x| x == e));
    for e in &dropped {
        log::warn!("dropped cycle-closing edge {:?} -> {:?}", e.child, e.parent);
    }

    let mut roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
    let mut super_root = None;
    if roots.len() > 1 {
        let top = names.len();
        names.push(SUPER_ROOT.to_string());
        index.insert(SUPER_ROOT.to_string(), top);
        parents.push(Vec::new());
        children.push(roots.clone());
        for &r in &roots {
            parents[r].push(top);
        }
        super_root = Some(top);
        roots = vec![top];
    }

    // Longest-path depth in topological order from the roots.
    let total = names.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut depth = vec![0usize; total];
    let mut queue: VecDeque<usize> = roots.iter().copied().collect();
    let mut visited = 0;
    while let Some(u) = queue.pop_front() {
        visited += 1;
        for &c in &children[u] {
            depth[c] = depth[c].max(depth[u] + 1);
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    debug_assert_eq!(visited, total, "cycle breaking must leave a DAG");

    OntologyGraph {
        names,
        index,
        parents,
        children,
        depth,
        roots,
        super_root,
        dropped,
    }
}

impl OntologyGraph {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.index.contains_key(node)
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn roots(&self) -> Vec<&str> {
        self.roots.iter().map(|&r| self.names[r].as_str()).collect()
    }

    pub fn has_super_root(&self) -> bool {
        self.super_root.is_some()
    }

    /// Edges removed while breaking cycles, in file order.
    pub fn dropped_edges(&self) -> &[RawEdge] {
        &self.dropped
    }

    /// Parent node names of `node`, in insertion order.
    pub fn parents_of(&self, node: &str) -> Result<Vec<&str>> {
        let i = self.id(node)?;
        Ok(self.parents[i].iter().map(|&p| self.names[p].as_str()).collect())
    }

    pub fn depth(&self, node: &str) -> Result<usize> {
        Ok(self.depth[self.id(node)?])
    }

    fn id(&self, node: &str) -> Result<usize> {
        self.index
            .get(node)
            .copied()
            .ok_or_else(|| Error::LabelSet(format!("node {node:?} is not in the ontology")))
    }

    /// Kahn topological order; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<&str>> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::with_capacity(self.len());
        while let Some(u) = queue.pop_front() {
            out.push(self.names[u].as_str());
            for &c in &self.children[u] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (out.len() == self.len()).then_some(out)
    }

    fn ancestors_or_self_ids(&self, i: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([i]);
        let mut stack = vec![i];
        while let Some(u) = stack.pop() {
            for &p in &self.parents[u] {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    pub fn ancestors_or_self(&self, node: &str) -> Result<BTreeSet<&str>> {
        let i = self.id(node)?;
        Ok(self
            .ancestors_or_self_ids(i)
            .into_iter()
            .map(|a| self.names[a].as_str())
            .collect())
    }

    fn deepest(&self, common: &BTreeSet<usize>) -> Vec<usize> {
        let Some(max) = common.iter().map(|&c| self.depth[c]).max() else {
            return Vec::new();
        };
        let mut best: Vec<usize> = common.iter().copied().filter(|&c| self.depth[c] == max).collect();
        best.sort_by(|&a, &b| self.names[a].cmp(&self.names[b]));
        best
    }

    /// Deepest common ancestor-or-self of all `nodes`; ties go to the
    /// lexicographically smallest id.
    pub fn lca<S: AsRef<str>>(&self, nodes: &[S]) -> Result<&str> {
        let all = self.lca_candidates(nodes)?;
        Ok(all[0])
    }

    /// Every co-deepest common ancestor, sorted by id.
    pub fn lca_candidates<S: AsRef<str>>(&self, nodes: &[S]) -> Result<Vec<&str>> {
        let common = self.common_ancestors(nodes)?;
        let best = self.deepest(&common);
        if best.is_empty() {
            // Only possible when the graph is split without a super-root (never after build_dag).
            return Err(Error::LabelSet("nodes share no common ancestor".into()));
        }
        Ok(best.into_iter().map(|b| self.names[b].as_str()).collect())
    }

    fn common_ancestors<S: AsRef<str>>(&self, nodes: &[S]) -> Result<BTreeSet<usize>> {
        let mut iter = nodes.iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::LabelSet("LCA of an empty node set".into()))?;
        let mut common = self.ancestors_or_self_ids(self.id(first.as_ref())?);
        for n in iter {
            let a = self.ancestors_or_self_ids(self.id(n.as_ref())?);
            common.retain(|c| a.contains(c));
        }
        Ok(common)
    }

    /// Hops along hypernym edges from `from` up to `to`; `None` if `to` is not
    /// an ancestor-or-self of `from`.
    pub fn directed_path_length(&self, from: &str, to: &str) -> Result<Option<usize>> {
        let (s, t) = (self.id(from)?, self.id(to)?);
        let mut dist = vec![usize::MAX; self.len()];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if u == t {
                return Ok(Some(dist[u]));
            }
            for &p in &self.parents[u] {
                if dist[p] == usize::MAX {
                    dist[p] = dist[u] + 1;
                    q.push_back(p);
                }
            }
        }
        Ok(None)
    }

    /// Shortest undirected hop count, ignoring the synthetic super-root.
    pub fn undirected_distance(&self, a: &str, b: &str) -> Result<Option<usize>> {
        let (s, t) = (self.id(a)?, self.id(b)?);
        if Some(s) == self.super_root || Some(t) == self.super_root {
            return Ok((s == t).then_some(0));
        }
        let mut dist = vec![usize::MAX; self.len()];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if u == t {
                return Ok(Some(dist[u]));
            }
            for &v in self.parents[u].iter().chain(&self.children[u]) {
                if Some(v) != self.super_root && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        Ok(None)
    }
}

/// Edge score for a tree edge `u -> v` grounded at `rho_u` (tree parent) and
/// `rho_v` (tree child): 0 without a hypernym path from `rho_v` up to
/// `rho_u`, otherwise `min(1, 1/(gamma * delta))`, with equal groundings
/// scoring 1.
pub fn edge_score(g: &OntologyGraph, rho_u: &str, rho_v: &str, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(match g.directed_path_length(rho_v, rho_u)? {
        None => 0.0,
        Some(0) => 1.0,
        Some(delta) => (1.0 / (gamma * delta as f64)).min(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeBreakdown {
    pub parent: NodeId,
    pub child: NodeId,
    pub rho_parent: String,
    pub rho_child: String,
    pub delta: Option<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchicalConsistency {
    pub score: f64,
    pub edges: Vec<EdgeBreakdown>,
}

/// Grounds every tree node: leaves through `grounding`, internal nodes to the
/// deepest common ancestor of their leaves' groundings.
pub fn ground_tree(tree: &TreeDocument, g: &OntologyGraph, grounding: &LeafGrounding) -> Result<Vec<String>> {
    let mut common: Vec<Option<BTreeSet<usize>>> = vec![None; tree.len()];
    let mut rho = vec![String::new(); tree.len()];
    // Canonical ids are post-order: children precede parents.
    for id in 0..tree.len() {
        let set = if tree.is_leaf(id) {
            let label = tree
                .name(id)
                .ok_or_else(|| Error::LabelSet(format!("leaf {id} has no label")))?;
            let node = grounding
                .get(label)
                .ok_or_else(|| Error::LabelSet(format!("leaf {label:?} is not grounded")))?;
            g.ancestors_or_self_ids(g.id(node)?)
        } else {
            let mut it = tree.children(id).iter();
            let mut acc = common[*it.next().expect("internal")].clone().expect("child first");
            for &c in it {
                let other = common[c].as_ref().expect("child first");
                acc.retain(|x| other.contains(x));
            }
            acc
        };
        let best = g.deepest(&set);
        let top = *best
            .first()
            .ok_or_else(|| Error::LabelSet(format!("tree node {id} has no common ontology ancestor")))?;
        rho[id] = g.names[top].clone();
        common[id] = Some(set);
    }
    Ok(rho)
}

/// Mean edge score over all parent → child edges of the tree (leaf edges included).
pub fn hierarchical_consistency(
    tree: &TreeDocument,
    g: &OntologyGraph,
    grounding: &LeafGrounding,
    gamma: f64,
) -> Result<HierarchicalConsistency> {
    let rho = ground_tree(tree, g, grounding)?;
    let mut edges = Vec::new();
    for u in tree.internal_nodes() {
        for &v in tree.children(u) {
            let delta = g.directed_path_length(&rho[v], &rho[u])?;
            edges.push(EdgeBreakdown {
                parent: u,
                child: v,
                rho_parent: rho[u].clone(),
                rho_child: rho[v].clone(),
                delta,
                score: edge_score(g, &rho[u], &rho[v], gamma)?,
            });
        }
    }
    let score = if edges.is_empty() {
        1.0
    } else {
        edges.iter().map(|e| e.score).sum::<f64>() / edges.len() as f64
    };
    Ok(HierarchicalConsistency { score, edges })
}

/// `1 / (1 + k d)`.
pub fn inverse_decay(d: f64, k: f64) -> f64 {
    1.0 / (1.0 + k * d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeConsistency {
    pub node: NodeId,
    pub name: Option<String>,
    pub grounded_name: Option<String>,
    pub children_lca: String,
    pub distance: Option<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterConsistency {
    pub score: f64,
    pub nodes: Vec<NodeConsistency>,
    pub warnings: Vec<String>,
}

/// Scores each named internal node against the deepest common ancestor of
/// its leaves: 1 on a match, `1/(1 + k d)` at undirected distance `d`, 0 when
/// disconnected or when the name has no ontology link.
pub fn cluster_consistency(
    tree: &TreeDocument,
    g: &OntologyGraph,
    grounding: &LeafGrounding,
    name_grounding: &BTreeMap<String, String>,
    k: f64,
) -> Result<ClusterConsistency> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!("k must be non-negative, got {k}")));
    }
    let rho = ground_tree(tree, g, grounding)?;
    let mut nodes = Vec::new();
    let mut warnings = Vec::new();
    for p in tree.internal_nodes() {
        let name = tree.name(p).map(str::to_string);
        let grounded = name
            .as_ref()
            .and_then(|n| name_grounding.get(n))
            .filter(|n| g.contains(n))
            .cloned();
        let (distance, score) = match &grounded {
            None => {
                let w = format!("internal node {p} ({name:?}) has no ontology link; scored 0");
                log::warn!("{w}");
                warnings.push(w);
                (None, 0.0)
            }
            Some(n) if *n == rho[p] => (Some(0), 1.0),
            Some(n) => match g.undirected_distance(n, &rho[p])? {
                Some(d) => (Some(d), inverse_decay(d as f64, k)),
                None => (None, 0.0),
            },
        };
        nodes.push(NodeConsistency {
            node: p,
            name,
            grounded_name: grounded,
            children_lca: rho[p].clone(),
            distance,
            score,
        });
    }
    let score = if nodes.is_empty() {
        1.0
    } else {
        nodes.iter().map(|n| n.score).sum::<f64>() / nodes.len() as f64
    };
    Ok(ClusterConsistency {
        score,
        nodes,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_ontology_str, Relation};

    fn edges(pairs: &[(&str, &str)]) -> Vec<RawEdge> {
        pairs
            .iter()
            .map(|(c, p)| RawEdge {
                child: c.to_string(),
                parent: p.to_string(),
                relation: Relation::Subclass,
            })
            .collect()
    }

    /// entity > organism > animal > mammal > {canine > dog, feline > cat, equine > horse}, animal > bird
    fn toy() -> OntologyGraph {
        build_dag(&edges(&[
            ("organism", "entity"),
            ("animal", "organism"),
            ("mammal", "animal"),
            ("canine", "mammal"),
            ("feline", "mammal"),
            ("equine", "mammal"),
            ("dog", "canine"),
            ("cat", "feline"),
            ("horse", "equine"),
            ("bird", "animal"),
        ]))
    }

    #[test]
    fn three_cycle_drops_closing_edge() {
        let g = build_dag(&edges(&[("A", "B"), ("B", "C"), ("C", "A")]));
        assert_eq!(g.dropped_edges(), &edges(&[("C", "A")])[..]);
        assert!(g.topological_order().is_some());
        assert_eq!(g.roots(), vec!["C"]);
    }

    #[test]
    fn acyclic_diamond_unchanged() {
        let g = build_dag(&edges(&[("C", "A"), ("C", "B"), ("D", "A"), ("D", "B")]));
        assert!(g.dropped_edges().is_empty());
        assert!(g.has_super_root());
        assert_eq!(g.parents_of("C").unwrap(), vec!["A", "B"]);
    }

    #[test]
    fn self_loop_dropped_at_parse() {
        let o = read_ontology_str("A\tA\tsubclass\n", std::path::Path::new("x")).unwrap();
        assert!(build_dag(&o.edges).is_empty());
    }

    #[test]
    fn lca_examples() {
        let g = toy();
        assert_eq!(g.lca(&["dog"]).unwrap(), "dog");
        assert_eq!(g.lca(&["dog", "canine"]).unwrap(), "canine");
        assert_eq!(g.lca(&["dog", "cat"]).unwrap(), "mammal");
        assert_eq!(g.lca(&["dog", "bird"]).unwrap(), "animal");
        assert!(matches!(g.lca(&["dog", "unicorn"]), Err(Error::LabelSet(_))));
    }

    #[test]
    fn lca_diamond_prefers_deepest_common_parent() {
        // u, v both under p (depth 3) and q (depth 2).
        let g = build_dag(&edges(&[
            ("a", "root"),
            ("b", "a"),
            ("p", "b"),
            ("q", "a"),
            ("u", "p"),
            ("u", "q"),
            ("v", "p"),
            ("v", "q"),
        ]));
        assert_eq!(g.depth("p").unwrap(), 3);
        assert_eq!(g.depth("q").unwrap(), 2);
        // Brute force: every common ancestor, pick max depth.
        let au = g.ancestors_or_self("u").unwrap();
        let av = g.ancestors_or_self("v").unwrap();
        let oracle = au
            .intersection(&av)
            .max_by_key(|n| (g.depth(n).unwrap(), std::cmp::Reverse(n.to_string())))
            .unwrap()
            .to_string();
        assert_eq!(oracle, "p");
        assert_eq!(g.lca(&["u", "v"]).unwrap(), "p");
    }

    #[test]
    fn lca_across_roots_is_super_root() {
        let g = build_dag(&edges(&[("x", "r1"), ("y", "r2")]));
        assert_eq!(g.lca(&["x", "y"]).unwrap(), SUPER_ROOT);
        assert_eq!(g.directed_path_length("x", SUPER_ROOT).unwrap(), Some(2));
    }

    #[test]
    fn lca_co_deepest_tie_break() {
        let g = build_dag(&edges(&[("u", "zeta"), ("u", "alpha"), ("v", "zeta"), ("v", "alpha"), ("zeta", "r"), ("alpha", "r")]));
        assert_eq!(g.lca_candidates(&["u", "v"]).unwrap(), vec!["alpha", "zeta"]);
        assert_eq!(g.lca(&["u", "v"]).unwrap(), "alpha");
    }

    #[test]
    fn directed_path_examples() {
        let g = toy();
        assert_eq!(g.directed_path_length("dog", "dog").unwrap(), Some(0));
        assert_eq!(g.directed_path_length("canine", "animal").unwrap(), Some(2));
        assert_eq!(g.directed_path_length("animal", "canine").unwrap(), None);
        let split = build_dag(&edges(&[("x", "r1"), ("y", "r2")]));
        assert_eq!(split.directed_path_length("x", "y").unwrap(), None);
    }

    #[test]
    fn edge_score_examples() {
        let g = toy();
        assert_eq!(edge_score(&g, "animal", "canine", 0.5).unwrap(), 1.0);
        assert_eq!(edge_score(&g, "canine", "equine", 0.5).unwrap(), 0.0);
        assert_eq!(edge_score(&g, "dog", "dog", 0.5).unwrap(), 1.0);
        // dog -> canine -> mammal -> animal -> organism: delta 4.
        assert_eq!(edge_score(&g, "organism", "dog", 0.5).unwrap(), 0.5);
        assert!(matches!(edge_score(&g, "animal", "dog", 0.0), Err(Error::Parameter(_))));
    }

    fn ground(pairs: &[(&str, &str)]) -> LeafGrounding {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn exact_slice_scores_one() {
        let g = toy();
        let t = TreeDocument::parse_nested("((dog,cat),bird)").unwrap();
        // rho: (dog,cat) -> mammal, root -> animal; leaves grounded to canine/feline.
        let m = ground(&[("dog", "canine"), ("cat", "feline"), ("bird", "bird")]);
        let h = hierarchical_consistency(&t, &g, &m, 0.5).unwrap();
        assert_eq!(h.edges.len(), 4);
        assert_eq!(h.score, 1.0);
    }

    #[test]
    fn unrelated_leaves_ground_root_to_super_root() {
        let g = build_dag(&edges(&[("x", "r1"), ("y", "r2")]));
        let t = TreeDocument::parse_nested("(a,b)").unwrap();
        let m = ground(&[("a", "x"), ("b", "y")]);
        let h = hierarchical_consistency(&t, &g, &m, 0.5).unwrap();
        // Hand check: rho(root) = ⊤, each leaf edge spans x -> r1 -> ⊤ (delta 2) scoring 1/(0.5*2) = 1.
        for e in &h.edges {
            assert_eq!(e.rho_parent, SUPER_ROOT);
            assert_eq!(e.delta, Some(2));
            assert_eq!(e.score, 1.0);
        }
        assert_eq!(h.score, 1.0);
        // With gamma = 1 each edge scores 1/2.
        assert_eq!(hierarchical_consistency(&t, &g, &m, 1.0).unwrap().score, 0.5);
    }

    #[test]
    fn ungrounded_leaf_is_an_error() {
        let g = toy();
        let t = TreeDocument::parse_nested("(dog,cat)").unwrap();
        assert!(matches!(
            hierarchical_consistency(&t, &g, &ground(&[("dog", "dog")]), 0.5),
            Err(Error::LabelSet(_))
        ));
    }

    #[test]
    fn contracting_a_skipped_concept_never_lowers_score() {
        let g = toy();
        let m = ground(&[("dog", "dog"), ("cat", "cat"), ("horse", "horse")]);
        let flat = hierarchical_consistency(&TreeDocument::parse_nested("(dog,cat,horse)").unwrap(), &g, &m, 0.5).unwrap();
        let deep = hierarchical_consistency(&TreeDocument::parse_nested("(((dog)canine,cat),horse)").unwrap(), &g, &m, 0.5);
        // Unary nodes are legal in documents; they only shorten each delta.
        let deep = deep.unwrap();
        assert!(deep.score >= flat.score);
    }

    #[test]
    fn inverse_decay_horizon() {
        assert!((inverse_decay(1.0 / 0.225, 0.225) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cluster_consistency_cases() {
        let g = toy();
        let m = ground(&[("dog", "dog"), ("cat", "cat"), ("bird", "bird")]);
        let t = TreeDocument::parse_nested("((dog,cat)pet,bird)creature").unwrap();
        let names: BTreeMap<String, String> =
            [("pet".to_string(), "mammal".to_string()), ("creature".to_string(), "organism".to_string())].into();
        let c = cluster_consistency(&t, &g, &m, &names, 0.225).unwrap();
        let pet = c.nodes.iter().find(|n| n.name.as_deref() == Some("pet")).unwrap();
        assert_eq!(pet.score, 1.0);
        let creature = c.nodes.iter().find(|n| n.name.as_deref() == Some("creature")).unwrap();
        assert_eq!(creature.distance, Some(1));
        assert!((creature.score - 1.0 / 1.225).abs() < 1e-12);

        // Unlinked name contributes 0 with a warning.
        let partial: BTreeMap<String, String> = [("pet".to_string(), "mammal".to_string())].into();
        let c = cluster_consistency(&t, &g, &m, &partial, 0.225).unwrap();
        assert_eq!(c.warnings.len(), 1);
        assert!((c.score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cluster_consistency_disconnected_is_zero() {
        let g = build_dag(&edges(&[("x", "r1"), ("y", "r2"), ("z", "r3")]));
        let m = ground(&[("a", "x"), ("b", "y")]);
        let t = TreeDocument::parse_nested("(a,b)p").unwrap();
        let names: BTreeMap<String, String> = [("p".to_string(), "z".to_string())].into();
        assert_eq!(cluster_consistency(&t, &g, &m, &names, 0.225).unwrap().score, 0.0);
    }
}
