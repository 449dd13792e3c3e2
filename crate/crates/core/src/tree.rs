//! Rooted labeled trees shared by extraction, inference, verification and
//! tree comparison.
//!
//! A [`TreeDocument`] in canonical form numbers its nodes in post-order with
//! children visited by their smallest descendant leaf name, so the root always
//! has the largest id and every `children` list is ascending.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::vectors::EmbeddingVector;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct TreeDocument {
    nodes: Vec<TreeNode>,
    parents: Vec<Option<NodeId>>,
    root: NodeId,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    root: NodeId,
    nodes: Vec<TreeNode>,
}

impl TryFrom<RawTree> for TreeDocument {
    type Error = Error;

    fn try_from(raw: RawTree) -> Result<Self> {
        TreeDocument::from_nodes(raw.nodes, raw.root)
    }
}

impl From<TreeDocument> for RawTree {
    fn from(t: TreeDocument) -> Self {
        RawTree {
            root: t.root,
            nodes: t.nodes,
        }
    }
}

fn structure_error(message: impl Into<String>) -> Error {
    Error::format(std::path::Path::new("<tree>"), Location::Document, message)
}

impl TreeDocument {
    /// Validates the node set and returns the canonical renumbering of it.
    pub fn from_nodes(nodes: Vec<TreeNode>, root: NodeId) -> Result<Self> {
        let mut index: HashMap<NodeId, usize> = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(structure_error(format!("duplicate node id {}", n.id)));
            }
        }
        let root_idx = *index
            .get(&root)
            .ok_or_else(|| structure_error(format!("root {root} is not a node")))?;
        let mut parent: Vec<Option<usize>> = vec![None; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            for c in &n.children {
                let ci = *index
                    .get(c)
                    .ok_or_else(|| structure_error(format!("node {} lists unknown child {c}", n.id)))?;
                if parent[ci].is_some() {
                    return Err(structure_error(format!("node {c} has more than one parent")));
                }
                parent[ci] = Some(i);
            }
        }
        if parent[root_idx].is_some() {
            return Err(structure_error("root has a parent (cycle)"));
        }
        if let Some(i) = (0..nodes.len()).find(|&i| i != root_idx && parent[i].is_none()) {
            return Err(structure_error(format!(
                "multiple roots: {} and {}",
                root, nodes[i].id
            )));
        }
        // Single parent per node plus a parentless root; unreachable nodes imply a cycle.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root_idx];
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(structure_error("cycle detected"));
            }
            reached += 1;
            stack.extend(nodes[i].children.iter().map(|c| index[c]));
        }
        if reached != nodes.len() {
            return Err(structure_error("cycle detected (unreachable nodes)"));
        }
        let children: Vec<Vec<usize>> = nodes
            .iter()
            .map(|n| n.children.iter().map(|c| index[c]).collect())
            .collect();
        Ok(Self::canonical_from(nodes, &children, root_idx))
    }

    fn canonical_from(nodes: Vec<TreeNode>, children: &[Vec<usize>], root: usize) -> Self {
        let n = nodes.len();
        // Sort key per subtree: smallest leaf name below it.
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![(root, false)];
        while let Some((i, expanded)) = stack.pop() {
            if expanded {
                order.push(i);
            } else {
                stack.push((i, true));
                stack.extend(children[i].iter().map(|&c| (c, false)));
            }
        }
        let mut key: Vec<String> = vec![String::new(); n];
        for &i in &order {
            key[i] = if children[i].is_empty() {
                nodes[i].name.clone().unwrap_or_default()
            } else {
                children[i].iter().map(|&c| key[c].clone()).min().unwrap_or_default()
            };
        }
        let mut sorted_children: Vec<Vec<usize>> = children.to_vec();
        for cs in &mut sorted_children {
            cs.sort_by(|&a, &b| key[a].cmp(&key[b]).then(nodes[a].id.cmp(&nodes[b].id)));
        }
        let mut post = Vec::with_capacity(n);
        let mut stack = vec![(root, false)];
        while let Some((i, expanded)) = stack.pop() {
            if expanded {
                post.push(i);
            } else {
                stack.push((i, true));
                stack.extend(sorted_children[i].iter().rev().map(|&c| (c, false)));
            }
        }
        let mut new_id = vec![0; n];
        for (k, &i) in post.iter().enumerate() {
            new_id[i] = k;
        }
        let mut slots: Vec<Option<TreeNode>> = nodes.into_iter().map(Some).collect();
        let mut out = Vec::with_capacity(n);
        let mut parents = vec![None; n];
        for &i in &post {
            let mut node = slots[i].take().expect("each node visited once");
            node.id = new_id[i];
            node.children = sorted_children[i].iter().map(|&c| new_id[c]).collect();
            for &c in &node.children {
                parents[c] = Some(node.id);
            }
            out.push(node);
        }
        TreeDocument {
            nodes: out,
            parents,
            root: new_id[root],
        }
    }

    /// Re-validates and renumbers after in-place edits.
    pub fn recanonicalize(self) -> Result<Self> {
        let root = self.root;
        Self::from_nodes(self.nodes, root)
    }

    pub fn single_leaf(name: impl Into<String>) -> Self {
        TreeDocument {
            nodes: vec![TreeNode {
                id: 0,
                name: Some(name.into()),
                embedding: None,
                children: vec![],
            }],
            parents: vec![None],
            root: 0,
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents[id]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    pub fn name(&self, id: NodeId) -> Option<&str> {
        self.nodes[id].name.as_deref()
    }

    /// Leaf ids in post-order.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i))
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.is_leaf(i))
    }

    /// Leaf name → leaf id. Errors on unnamed or duplicate leaves.
    pub fn leaf_index(&self) -> Result<BTreeMap<String, NodeId>> {
        let mut map = BTreeMap::new();
        for l in self.leaves() {
            let name = self
                .name(l)
                .ok_or_else(|| Error::LabelSet(format!("leaf {l} has no name")))?;
            if map.insert(name.to_string(), l).is_some() {
                return Err(Error::LabelSet(format!("duplicate leaf name {name:?}")));
            }
        }
        Ok(map)
    }

    /// Sorted leaf names.
    pub fn leaf_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .leaves()
            .filter_map(|l| self.name(l).map(str::to_string))
            .collect();
        v.sort();
        v
    }

    /// Root-to-node path, inclusive at both ends.
    pub fn path_from_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parents[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.path_from_root(id).len() - 1
    }

    /// Whether `a` is an ancestor of `b` or equal to it.
    pub fn is_ancestor_or_self(&self, a: NodeId, b: NodeId) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.parents[c];
        }
        false
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        let pa = self.path_from_root(a);
        let pb = self.path_from_root(b);
        let shared = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
        pa[shared - 1]
    }

    /// Undirected hop count between two nodes.
    pub fn walking_distance(&self, a: NodeId, b: NodeId) -> usize {
        let l = self.lca(a, b);
        self.depth(a) + self.depth(b) - 2 * self.depth(l)
    }

    /// Descendant leaves of `id` (the node itself if it is a leaf).
    pub fn leaves_under(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(i) = stack.pop() {
            if self.is_leaf(i) {
                out.push(i);
            } else {
                stack.extend(self.children(i).iter().rev());
            }
        }
        out
    }

    /// Pairwise leaf walking distances, rows/columns in sorted leaf-name order.
    pub fn leaf_distance_matrix(&self) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
        let index = self.leaf_index()?;
        let names: Vec<String> = index.keys().cloned().collect();
        let ids: Vec<NodeId> = index.values().copied().collect();
        let paths: Vec<Vec<NodeId>> = ids.iter().map(|&i| self.path_from_root(i)).collect();
        let k = ids.len();
        let mut m = vec![vec![0usize; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let shared = paths[i].iter().zip(&paths[j]).take_while(|(x, y)| x == y).count();
                let d = paths[i].len() + paths[j].len() - 2 * shared;
                m[i][j] = d;
                m[j][i] = d;
            }
        }
        Ok((names, m))
    }

    /// Parses nested-parenthesis notation such as `((a,b),(c,d))`.
    ///
    /// Internal nodes may carry a name after the closing parenthesis: `((a,b)pet,c)animal`.
    pub fn parse_nested(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut pos = 0;
        let root = parse_subtree(&chars, &mut pos, &mut nodes)?;
        if pos != chars.len() {
            return Err(structure_error(format!("trailing input at char {pos}")));
        }
        Self::from_nodes(nodes, root)
    }

    /// Inverse of [`TreeDocument::parse_nested`] (internal names included when present).
    pub fn to_nested(&self) -> String {
        fn rec(t: &TreeDocument, id: NodeId, out: &mut String) {
            if t.is_leaf(id) {
                out.push_str(t.name(id).unwrap_or(""));
                return;
            }
            out.push('(');
            for (k, &c) in t.children(id).iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                rec(t, c, out);
            }
            out.push(')');
            if let Some(n) = t.name(id) {
                out.push_str(n);
            }
        }
        let mut s = String::new();
        rec(self, self.root, &mut s);
        s
    }

    /// Same topology and leaf names, internal names and embeddings dropped.
    pub fn topology_only(&self) -> Self {
        let mut t = self.clone();
        for n in &mut t.nodes {
            n.embedding = None;
            if !n.children.is_empty() {
                n.name = None;
            }
        }
        t
    }

    /// Graphviz rendering for visual inspection.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tree {\n  node [shape=box];\n");
        for n in &self.nodes {
            let label = n.name.as_deref().unwrap_or("");
            let shape = if n.children.is_empty() { "ellipse" } else { "box" };
            s.push_str(&format!(
                "  n{} [label=\"{}\", shape={}];\n",
                n.id,
                label.replace('"', "\\\""),
                shape
            ));
        }
        for n in &self.nodes {
            for c in &n.children {
                s.push_str(&format!("  n{} -> n{};\n", n.id, c));
            }
        }
        s.push_str("}\n");
        s
    }

    /// Breadth-first node order from the root.
    pub fn bfs_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut q = VecDeque::from([self.root]);
        while let Some(i) = q.pop_front() {
            out.push(i);
            q.extend(self.children(i).iter().copied());
        }
        out
    }
}

fn parse_subtree(chars: &[char], pos: &mut usize, nodes: &mut Vec<TreeNode>) -> Result<NodeId> {
    let read_name = |pos: &mut usize| -> String {
        let start = *pos;
        while *pos < chars.len() && !matches!(chars[*pos], '(' | ')' | ',') {
            *pos += 1;
        }
        chars[start..*pos].iter().collect()
    };
    if chars.get(*pos) == Some(&'(') {
        *pos += 1;
        let mut children = Vec::new();
        loop {
            children.push(parse_subtree(chars, pos, nodes)?);
            match chars.get(*pos) {
                Some(',') => *pos += 1,
                Some(')') => {
                    *pos += 1;
                    break;
                }
                _ => return Err(structure_error(format!("expected ',' or ')' at char {pos}"))),
            }
        }
        let name = read_name(pos);
        let id = nodes.len();
        nodes.push(TreeNode {
            id,
            name: (!name.is_empty()).then_some(name),
            embedding: None,
            children,
        });
        Ok(id)
    } else {
        let name = read_name(pos);
        if name.is_empty() {
            return Err(structure_error(format!("empty leaf name at char {pos}")));
        }
        let id = nodes.len();
        nodes.push(TreeNode {
            id,
            name: Some(name),
            embedding: None,
            children: vec![],
        });
        Ok(id)
    }
}
