//! Vector math shared by every stage: cosine geometry, concept centroids and
//! nearest-centroid (zero-shot) classification.
//!
//! Snapshots store 32-bit floats; everything in memory is `f64`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty coordinate vector in encoder space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension {
                expected: 1,
                found: 0,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateVector(format!(
                "non-finite value at coordinate {i}"
            )));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Unit-norm copy; errors on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::DegenerateVector("zero vector".into()));
        }
        Ok(EmbeddingVector(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * c).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine distance `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Dimension {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateVector(
            "cosine distance of a zero vector".into(),
        ));
    }
    Ok(cosine_distance_raw(u.as_slice(), v.as_slice(), nu, nv))
}

/// Unchecked kernel; callers guarantee equal dims and nonzero norms.
pub(crate) fn cosine_distance_raw(u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    let cos = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    1.0 - cos
}

/// Cosine similarity of two vectors whose norms are known.
pub(crate) fn cosine_similarity_raw(u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Equal-weight mean of the samples, renormalized to the unit sphere.
pub fn concept_embedding<'a, I>(samples: I) -> Result<EmbeddingVector>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let mut iter = samples.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::EmptyConcept("no samples".into()))?;
    let dim = first.dim();
    let mut sum = first.as_slice().to_vec();
    let mut count = 1usize;
    for s in iter {
        if s.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: s.dim(),
            });
        }
        for (acc, v) in sum.iter_mut().zip(s.as_slice()) {
            *acc += v;
        }
        count += 1;
    }
    for v in &mut sum {
        *v /= count as f64;
    }
    let n = norm(&sum);
    // Relative threshold: cancellation of nominally opposite samples leaves rounding noise.
    if n <= 1e-12 * first.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateVector(
            "concept samples average to the zero vector".into(),
        ));
    }
    EmbeddingVector::new(sum.into_iter().map(|v| v / n).collect())
}

/// Labeled vectors from one encoder/modality. Labels may repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSnapshot {
    dim: usize,
    records: Vec<(String, EmbeddingVector)>,
    pub source_tag: String,
}

impl EmbeddingSnapshot {
    pub fn new(dim: usize, source_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("snapshot dimension must be > 0".into()));
        }
        Ok(EmbeddingSnapshot {
            dim,
            records: Vec::new(),
            source_tag: source_tag.into(),
        })
    }

    pub fn from_records(
        dim: usize,
        source_tag: impl Into<String>,
        records: Vec<(String, EmbeddingVector)>,
    ) -> Result<Self> {
        let mut s = Self::new(dim, source_tag)?;
        for (label, v) in records {
            s.push(label, v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, label: impl Into<String>, vector: EmbeddingVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: vector.dim(),
            });
        }
        self.records.push((label.into(), vector));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[(String, EmbeddingVector)] {
        &self.records
    }

    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.records.iter().map(|(l, _)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Same labels, vectors mapped through `f`.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&EmbeddingVector) -> Result<EmbeddingVector>,
    {
        let mut out: Option<EmbeddingSnapshot> = None;
        for (label, v) in &self.records {
            let mapped = f(v)?;
            let snap = match out.as_mut() {
                Some(s) => s,
                None => out.insert(EmbeddingSnapshot::new(mapped.dim(), self.source_tag.clone())?),
            };
            snap.push(label.clone(), mapped)?;
        }
        match out {
            Some(s) => Ok(s),
            None => EmbeddingSnapshot::new(self.dim, self.source_tag.clone()),
        }
    }
}

/// One unit-norm centroid per distinct label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptCentroidSet {
    dim: usize,
    centroids: BTreeMap<String, EmbeddingVector>,
}

impl ConceptCentroidSet {
    /// Builds a set, normalizing every vector onto the unit sphere.
    pub fn new<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, EmbeddingVector)>,
    {
        let mut centroids = BTreeMap::new();
        for (label, v) in entries {
            if v.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: v.dim(),
                });
            }
            if centroids.contains_key(&label) {
                return Err(Error::LabelSet(format!("duplicate centroid label {label:?}")));
            }
            centroids.insert(label, v.normalized()?);
        }
        Ok(ConceptCentroidSet { dim, centroids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&EmbeddingVector> {
        self.centroids.get(label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.centroids.contains_key(label)
    }

    /// Entries in lexicographic label order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &EmbeddingVector)> {
        self.centroids.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &String> {
        self.centroids.keys()
    }

    /// Subset restricted to `labels`; errors if any is missing.
    pub fn restrict<'a, I>(&self, labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut centroids = BTreeMap::new();
        for l in labels {
            let v = self
                .centroids
                .get(l)
                .ok_or_else(|| Error::LabelSet(format!("no centroid for label {l:?}")))?;
            centroids.insert(l.clone(), v.clone());
        }
        Ok(ConceptCentroidSet {
            dim: self.dim,
            centroids,
        })
    }

    /// Zero-shot classification of every record; returns accuracy in `[0, 1]`.
    pub fn accuracy(&self, snapshot: &EmbeddingSnapshot) -> Result<f64> {
        if snapshot.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (label, x) in snapshot.records() {
            if zero_shot_classify(x, self)? == label.as_str() {
                correct += 1;
            }
        }
        Ok(correct as f64 / snapshot.len() as f64)
    }
}

/// Groups records by label and averages each group.
pub fn compute_centroids(snapshot: &EmbeddingSnapshot) -> Result<ConceptCentroidSet> {
    if snapshot.is_empty() {
        return Err(Error::EmptyConcept("snapshot has no records".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&EmbeddingVector>> = BTreeMap::new();
    for (label, v) in snapshot.records() {
        groups.entry(label.as_str()).or_default().push(v);
    }
    let mut centroids = BTreeMap::new();
    for (label, members) in groups {
        let c = concept_embedding(members).map_err(|e| match e {
            Error::DegenerateVector(m) => Error::DegenerateVector(format!("label {label:?}: {m}")),
            other => other,
        })?;
        centroids.insert(label.to_string(), c);
    }
    Ok(ConceptCentroidSet {
        dim: snapshot.dim(),
        centroids,
    })
}

/// Per-label normalized mean of two centroid sets over the same labels.
pub fn fuse_modalities(a: &ConceptCentroidSet, b: &ConceptCentroidSet) -> Result<ConceptCentroidSet> {
    if a.dim != b.dim {
        return Err(Error::Dimension {
            expected: a.dim,
            found: b.dim,
        });
    }
    if !a.centroids.keys().eq(b.centroids.keys()) {
        return Err(Error::LabelSet(
            "modalities must cover identical label sets".into(),
        ));
    }
    let mut centroids = BTreeMap::new();
    for ((label, u), v) in a.centroids.iter().zip(b.centroids.values()) {
        centroids.insert(label.clone(), concept_embedding([u, v])?);
    }
    Ok(ConceptCentroidSet {
        dim: a.dim,
        centroids,
    })
}

/// Nearest centroid under cosine distance; ties go to the smaller label.
pub fn zero_shot_classify<'a>(x: &EmbeddingVector, centroids: &'a ConceptCentroidSet) -> Result<&'a str> {
    if centroids.is_empty() {
        return Err(Error::EmptyConcept("empty centroid set".into()));
    }
    if x.dim() != centroids.dim {
        return Err(Error::Dimension {
            expected: centroids.dim,
            found: x.dim(),
        });
    }
    let nx = x.norm();
    if nx == 0.0 {
        return Err(Error::DegenerateVector("zero query vector".into()));
    }
    let mut best: Option<(&str, f64)> = None;
    // BTreeMap iterates in label order, so strict `<` keeps the smallest label on ties.
    for (label, c) in &centroids.centroids {
        let d = cosine_distance_raw(x.as_slice(), c.as_slice(), nx, c.norm());
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((label.as_str(), d));
        }
    }
    Ok(best.expect("non-empty").0)
}
