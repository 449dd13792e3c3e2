#![allow(dead_code)]

use semhier::tree::TreeDocument;

/// Unrooted-label binary tree shape used to enumerate topologies.
#[derive(Clone)]
pub enum Shape {
    Leaf(usize),
    Pair(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn nested(&self, names: &[String]) -> String {
        match self {
            Shape::Leaf(i) => names[*i].clone(),
            Shape::Pair(a, b) => format!("({},{})", a.nested(names), b.nested(names)),
        }
    }

    /// Every way of hanging leaf `k` above some node of `self`.
    fn with_leaf(&self, k: usize) -> Vec<Shape> {
        let mut out = vec![Shape::Pair(Box::new(self.clone()), Box::new(Shape::Leaf(k)))];
        if let Shape::Pair(a, b) = self {
            for x in a.with_leaf(k) {
                out.push(Shape::Pair(Box::new(x), b.clone()));
            }
            for y in b.with_leaf(k) {
                out.push(Shape::Pair(a.clone(), Box::new(y)));
            }
        }
        out
    }
}

/// All (2n-3)!! rooted binary topologies over leaves `0..n`.
pub fn all_binary_trees(n: usize) -> Vec<Shape> {
    assert!(n >= 1);
    let mut trees = vec![Shape::Leaf(0)];
    for k in 1..n {
        trees = trees.iter().flat_map(|t| t.with_leaf(k)).collect();
    }
    trees
}

pub fn leaf_names(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
}

struct Facts {
    n: usize,
    leaf: Vec<bool>,
    label: Vec<Option<String>>,
    /// `anc[a][b]`: a is a proper ancestor of b.
    anc: Vec<Vec<bool>>,
    lca: Vec<Vec<usize>>,
    /// Ancestors before descendants.
    order: Vec<usize>,
}

impl Facts {
    fn new(t: &TreeDocument) -> Self {
        let n = t.len();
        let mut anc = vec![vec![false; n]; n];
        let mut lca = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                anc[a][b] = a != b && t.is_ancestor_or_self(a, b);
                lca[a][b] = t.lca(a, b);
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| t.depth(v));
        Facts {
            n,
            leaf: (0..n).map(|v| t.is_leaf(v)).collect(),
            label: (0..n).map(|v| t.name(v).map(str::to_string)).collect(),
            anc,
            lca,
            order,
        }
    }
}

struct Search<'a> {
    a: &'a Facts,
    b: &'a Facts,
    pairs: Vec<(usize, usize)>,
    used: Vec<bool>,
    best: usize,
}

impl Search<'_> {
    fn admissible(&self, t: usize, s: usize) -> bool {
        let (a, b) = (self.a, self.b);
        if a.leaf[t] != b.leaf[s] {
            return false;
        }
        for &(t2, s2) in &self.pairs {
            if a.anc[t2][t] != b.anc[s2][s] || a.anc[t][t2] != b.anc[s][s2] {
                return false;
            }
        }
        // lca(t1, t2) is a proper ancestor of t3 exactly when the same holds on the image side,
        // for every triple that involves the new pair.
        let mut all = self.pairs.clone();
        all.push((t, s));
        let last = all.len() - 1;
        for i in 0..all.len() {
            for j in 0..all.len() {
                for k in 0..all.len() {
                    if i != last && j != last && k != last {
                        continue;
                    }
                    let (t1, s1) = all[i];
                    let (t2, s2) = all[j];
                    let (t3, s3) = all[k];
                    if a.anc[a.lca[t1][t2]][t3] != b.anc[b.lca[s1][s2]][s3] {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn go(&mut self, pos: usize, renames: usize) {
        let (n1, n2) = (self.a.n, self.b.n);
        let m = self.pairs.len();
        let free = self.used.iter().filter(|u| !**u).count();
        let more = (n1 - pos).min(free);
        // cost = renames + (n1 - |M|) + (n2 - |M|)
        if (renames + n1 + n2).saturating_sub(2 * (m + more)) >= self.best {
            return;
        }
        if pos == n1 {
            self.best = renames + n1 + n2 - 2 * m;
            return;
        }
        let t = self.a.order[pos];
        for s in 0..n2 {
            if self.used[s] || !self.admissible(t, s) {
                continue;
            }
            let r = usize::from(self.a.leaf[t] && self.a.label[t] != self.b.label[s]);
            self.used[s] = true;
            self.pairs.push((t, s));
            self.go(pos + 1, renames + r);
            self.pairs.pop();
            self.used[s] = false;
        }
        self.go(pos + 1, renames);
    }
}

/// Minimum over all constrained mappings of unit-cost leaf renames plus
/// unit deletions and insertions. Leaves only map to leaves; internal
/// labels are free.
pub fn brute_force_uted(t1: &TreeDocument, t2: &TreeDocument) -> usize {
    let a = Facts::new(t1);
    let b = Facts::new(t2);
    let mut s = Search {
        a: &a,
        b: &b,
        pairs: Vec::new(),
        used: vec![false; b.n],
        best: a.n + b.n,
    };
    s.go(0, 0);
    s.best
}
