//! Concept banks (snapshot + `concept_id<TAB>display_name<TAB>ontology_node`
//! sidecar) and leaf groundings (`label<TAB>ontology_node`).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Location, Result};
use crate::vectors::{compute_centroids, ConceptCentroidSet, EmbeddingSnapshot};

/// Candidate parent concepts with embeddings and optional ontology links.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBank {
    pub embeddings: ConceptCentroidSet,
    pub display_names: BTreeMap<String, String>,
    pub ontology_links: BTreeMap<String, String>,
}

impl ConceptBank {
    pub fn from_embeddings(embeddings: ConceptCentroidSet) -> Self {
        ConceptBank {
            embeddings,
            display_names: BTreeMap::new(),
            ontology_links: BTreeMap::new(),
        }
    }

    pub fn new(
        embeddings: ConceptCentroidSet,
        display_names: BTreeMap<String, String>,
        ontology_links: BTreeMap<String, String>,
    ) -> Result<Self> {
        if let Some(k) = ontology_links.keys().find(|k| !embeddings.contains(k)) {
            return Err(Error::LabelSet(format!("ontology link for unknown concept {k:?}")));
        }
        Ok(ConceptBank {
            embeddings,
            display_names,
            ontology_links,
        })
    }

    pub fn display_name<'a>(&'a self, id: &'a str) -> &'a str {
        self.display_names.get(id).map_or(id, String::as_str)
    }
}

/// Builds a bank from a snapshot (several records per concept are averaged)
/// and an optional sidecar TSV.
pub fn read_bank(snapshot_path: &Path, sidecar_path: Option<&Path>) -> Result<ConceptBank> {
    let snapshot = super::read_snapshot(snapshot_path)?;
    let embeddings = compute_centroids(&snapshot)?;
    let mut display_names = BTreeMap::new();
    let mut links = BTreeMap::new();
    if let Some(p) = sidecar_path {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(Error::format(
                    p,
                    Location::Line(i + 1),
                    format!("expected 2 or 3 tab-separated columns, found {}", cols.len()),
                ));
            }
            let id = cols[0].trim();
            if !embeddings.contains(id) {
                return Err(Error::format(
                    p,
                    Location::Line(i + 1),
                    format!("concept {id:?} has no embedding in the bank snapshot"),
                ));
            }
            display_names.insert(id.to_string(), cols[1].trim().to_string());
            if let Some(node) = cols.get(2).map(|s| s.trim()).filter(|s| !s.is_empty()) {
                links.insert(id.to_string(), node.to_string());
            }
        }
    }
    ConceptBank::new(embeddings, display_names, links)
}

/// Writes the bank's centroids as a one-record-per-concept snapshot plus sidecar.
pub fn write_bank(bank: &ConceptBank, snapshot_path: &Path, sidecar_path: &Path) -> Result<()> {
    let mut snap = EmbeddingSnapshot::new(bank.embeddings.dim(), "bank")?;
    let mut sidecar = String::new();
    for (id, v) in bank.embeddings.iter() {
        snap.push(id.clone(), v.clone())?;
        sidecar.push_str(&format!(
            "{}\t{}\t{}\n",
            id,
            bank.display_name(id),
            bank.ontology_links.get(id).map_or("", String::as_str)
        ));
    }
    super::write_snapshot(&snap, snapshot_path)?;
    super::write_atomic(sidecar_path, sidecar.as_bytes())
}

pub fn read_grounding(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 || cols[0].trim().is_empty() || cols[1].trim().is_empty() {
            return Err(Error::format(path, Location::Line(i + 1), "expected label<TAB>ontology_node"));
        }
        if map.insert(cols[0].trim().to_string(), cols[1].trim().to_string()).is_some() {
            return Err(Error::format(
                path,
                Location::Line(i + 1),
                format!("label {:?} grounded twice", cols[0].trim()),
            ));
        }
    }
    Ok(map)
}

pub fn write_grounding(map: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    let s: String = map.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect();
    super::write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::EmbeddingVector;

    #[test]
    fn bank_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = |x: &[f64]| EmbeddingVector::new(x.to_vec()).unwrap();
        let emb = ConceptCentroidSet::new(
            2,
            [("animal".to_string(), v(&[1.0, 0.0])), ("vehicle".to_string(), v(&[0.0, 1.0]))],
        )
        .unwrap();
        let bank = ConceptBank::new(
            emb,
            [("animal".to_string(), "Animal".to_string())].into(),
            [("vehicle".to_string(), "Vehicle_sumo".to_string())].into(),
        )
        .unwrap();
        let (s, t) = (dir.path().join("b.hlem"), dir.path().join("b.tsv"));
        write_bank(&bank, &s, &t).unwrap();
        let back = read_bank(&s, Some(&t)).unwrap();
        assert_eq!(back.embeddings, bank.embeddings);
        assert_eq!(back.ontology_links, bank.ontology_links);
        assert_eq!(back.display_name("animal"), "Animal");
        assert_eq!(back.display_name("vehicle"), "vehicle");
    }

    #[test]
    fn links_must_reference_bank_concepts() {
        let emb = ConceptCentroidSet::new(1, [("a".to_string(), EmbeddingVector::new(vec![1.0]).unwrap())]).unwrap();
        assert!(ConceptBank::new(emb, BTreeMap::new(), [("b".to_string(), "x".to_string())].into()).is_err());
    }

    #[test]
    fn grounding_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        let m: BTreeMap<String, String> = [("cat".to_string(), "Feline".to_string())].into();
        write_grounding(&m, &p).unwrap();
        assert_eq!(read_grounding(&p).unwrap(), m);
    }
}
