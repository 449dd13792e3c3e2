//! Planted-hierarchy data generator.
//!
//! Class means are placed by a branching random walk over a balanced binary
//! tree: every internal node splits along a fresh random direction, moving its
//! two children to `mean ± offset`. Directions are orthogonalized against the
//! root and all earlier splits while the dimension allows, which makes the
//! planted leaf distances exactly tree-additive. Samples are class means plus
//! isotropic noise. The generator also emits a matching concept bank, a toy
//! ontology and the leaf grounding, so every pipeline stage can run on it.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, ConceptBank, RawEdge, Relation};
use crate::ontology::LeafGrounding;
use crate::tree::{TreeDocument, TreeNode};
use crate::vectors::{ConceptCentroidSet, EmbeddingSnapshot, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub depth: usize,
    pub dim: usize,
    /// Training samples per class.
    pub samples: usize,
    /// Test samples per class.
    pub test_samples: usize,
    /// Within-class noise norm.
    pub noise: f64,
    /// Split offset norm divided by `noise`.
    pub branch_ratio: f64,
    /// Random concepts added to the bank next to the planted ones.
    pub distractors: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 16,
            depth: 4,
            dim: 64,
            samples: 200,
            test_samples: 200,
            noise: 0.05,
            branch_ratio: 10.0,
            distractors: 8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Parameter(format!("need >= 2 classes, got {}", self.classes)));
        }
        let fits = (1..usize::BITS as usize).contains(&self.depth)
            && self.classes <= 1usize << self.depth
            && self.classes > 1usize << (self.depth - 1);
        if !fits {
            return Err(Error::Parameter(format!(
                "{} classes do not form a balanced tree of depth {}",
                self.classes, self.depth
            )));
        }
        if self.dim == 0 || self.samples == 0 {
            return Err(Error::Parameter("dim and samples must be positive".into()));
        }
        // noise also scales the splits, so it must be strictly positive
        if !(self.noise > 0.0 && self.noise.is_finite() && self.branch_ratio > 0.0 && self.branch_ratio.is_finite()) {
            return Err(Error::Parameter("noise and branch ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Everything one generator run produces.
#[derive(Debug, Clone)]
pub struct PlantedHierarchy {
    /// Ground truth: leaves are classes, internal nodes carry planted concept names.
    pub tree: TreeDocument,
    /// Un-normalized class means.
    pub class_means: BTreeMap<String, Vec<f64>>,
    pub train: EmbeddingSnapshot,
    pub test: EmbeddingSnapshot,
    pub bank: ConceptBank,
    pub ontology: Vec<RawEdge>,
    pub grounding: LeafGrounding,
}

pub fn class_name(i: usize, classes: usize) -> String {
    let width = (classes - 1).to_string().len().max(2);
    format!("c{i:0width$}")
}

/// Standard normal vector scaled to expected norm `scale`.
pub fn gaussian<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let s = scale / (dim as f64).sqrt();
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * s).collect()
}

/// One noisy sample around `mean`.
pub fn sample_around<R: Rng>(mean: &[f64], noise: f64, rng: &mut R) -> Result<EmbeddingVector> {
    let e = gaussian(mean.len(), noise, rng);
    EmbeddingVector::new(mean.iter().zip(&e).map(|(m, x)| m + x).collect())
}

pub fn generate(cfg: &SynthConfig) -> Result<PlantedHierarchy> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let branch = cfg.noise * cfg.branch_ratio;

    let mut root_mean = gaussian(cfg.dim, 1.0, &mut rng);
    let n = root_mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    root_mean.iter_mut().for_each(|x| *x /= n);

    let mut nodes = Vec::new();
    let mut means: Vec<Vec<f64>> = Vec::new();
    let mut ontology = Vec::new();
    let mut basis = vec![root_mean.clone()];
    let root = plant(
        0,
        cfg.classes,
        "g".to_string(),
        root_mean,
        branch,
        cfg,
        &mut rng,
        &mut nodes,
        &mut means,
        &mut ontology,
        &mut basis,
    );
    let raw = TreeDocument::from_nodes(nodes.clone(), root)?;

    let mut class_means = BTreeMap::new();
    let mut concepts = Vec::new();
    for (node, mean) in nodes.iter().zip(&means) {
        let name = node.name.clone().expect("planted nodes are named");
        if node.children.is_empty() {
            class_means.insert(name, mean.clone());
        } else {
            concepts.push((name, EmbeddingVector::new(mean.clone())?));
        }
    }
    for k in 0..cfg.distractors {
        let v = EmbeddingVector::new(gaussian(cfg.dim, 1.0, &mut rng))?;
        concepts.push((format!("x{k:02}"), v));
    }

    let draw = |per_class: usize, tag: &str, rng: &mut ChaCha8Rng| -> Result<EmbeddingSnapshot> {
        let mut s = EmbeddingSnapshot::new(cfg.dim, tag)?;
        for (label, mean) in &class_means {
            for _ in 0..per_class {
                s.push(label.clone(), sample_around(mean, cfg.noise, rng)?)?;
            }
        }
        Ok(s)
    };
    let train = draw(cfg.samples, "train", &mut rng)?;
    let test = draw(cfg.test_samples, "test", &mut rng)?;

    let links: BTreeMap<String, String> = concepts
        .iter()
        .filter(|(c, _)| c.starts_with('g'))
        .map(|(c, _)| (c.clone(), c.clone()))
        .collect();
    let display: BTreeMap<String, String> = concepts
        .iter()
        .map(|(c, _)| (c.clone(), format!("concept {c}")))
        .collect();
    let bank = ConceptBank::new(ConceptCentroidSet::new(cfg.dim, concepts)?, display, links)?;
    let grounding = class_means.keys().map(|k| (k.clone(), k.clone())).collect();

    Ok(PlantedHierarchy {
        tree: raw,
        class_means,
        train,
        test,
        bank,
        ontology,
        grounding,
    })
}

#[allow(clippy::too_many_arguments)]
fn plant(
    lo: usize,
    hi: usize,
    path: String,
    mean: Vec<f64>,
    branch: f64,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<TreeNode>,
    means: &mut Vec<Vec<f64>>,
    ontology: &mut Vec<RawEdge>,
    basis: &mut Vec<Vec<f64>>,
) -> usize {
    let id = nodes.len();
    let leaf = hi - lo == 1;
    let name = if leaf { class_name(lo, cfg.classes) } else { path.clone() };
    nodes.push(TreeNode {
        id,
        name: Some(name.clone()),
        embedding: None,
        children: vec![],
    });
    means.push(mean.clone());
    if leaf {
        return id;
    }
    let offset = split_direction(cfg.dim, basis, rng)
        .into_iter()
        .map(|x| x * branch)
        .collect::<Vec<_>>();
    let mid = lo + (hi - lo).div_ceil(2);
    let mut kids = Vec::with_capacity(2);
    for (k, (a, b), sign) in [(0, (lo, mid), 1.0), (1, (mid, hi), -1.0)] {
        let child_mean: Vec<f64> = mean.iter().zip(&offset).map(|(m, o)| m + sign * o).collect();
        let child = plant(
            a,
            b,
            format!("{path}{k}"),
            child_mean,
            branch,
            cfg,
            rng,
            nodes,
            means,
            ontology,
            basis,
        );
        ontology.push(RawEdge {
            child: nodes[child].name.clone().unwrap(),
            parent: name.clone(),
            relation: Relation::Subclass,
        });
        kids.push(child);
    }
    nodes[id].children = kids;
    id
}

/// Unit vector orthogonal to `basis` when there is room, random otherwise.
fn split_direction<R: Rng>(dim: usize, basis: &mut Vec<Vec<f64>>, rng: &mut R) -> Vec<f64> {
    loop {
        let mut g = gaussian(dim, 1.0, rng);
        if basis.len() < dim {
            for b in basis.iter() {
                let d: f64 = g.iter().zip(b).map(|(x, y)| x * y).sum();
                g.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            g.iter_mut().for_each(|x| *x /= n);
            if basis.len() < dim {
                basis.push(g.clone());
            }
            return g;
        }
    }
}

/// Stable output file names inside a synth directory.
pub mod files {
    pub const TRAIN: &str = "train.hlem";
    pub const TEST: &str = "test.hlem";
    pub const TRUTH: &str = "truth.json";
    pub const ONTOLOGY: &str = "ontology.tsv";
    pub const GROUNDING: &str = "grounding.tsv";
    pub const BANK: &str = "bank.hlem";
    pub const BANK_SIDECAR: &str = "bank.tsv";
}

pub fn write_planted(p: &PlantedHierarchy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_snapshot(&p.train, &dir.join(files::TRAIN))?;
    io::write_snapshot(&p.test, &dir.join(files::TEST))?;
    io::write_tree(&p.tree, &dir.join(files::TRUTH))?;
    io::write_ontology(&p.ontology, &dir.join(files::ONTOLOGY))?;
    io::write_grounding(&p.grounding, &dir.join(files::GROUNDING))?;
    io::write_bank(&p.bank, &dir.join(files::BANK), &dir.join(files::BANK_SIDECAR))
}
