//! On-disk formats: binary embedding snapshots, ontology edge lists, concept
//! banks, leaf groundings, tree documents and JSON reports.

mod bank;
mod ontology;
mod snapshot;
mod tree_json;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Location, Result};

pub use bank::{read_bank, read_grounding, write_bank, write_grounding, ConceptBank};
pub use ontology::{read_ontology, read_ontology_str, write_ontology, OntologyEdges, RawEdge, Relation};
pub use snapshot::{decode_snapshot, encode_snapshot, read_snapshot, write_snapshot, HEADER_LEN, MAGIC};
pub use tree_json::{read_tree, tree_to_json, write_dot, write_tree};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, Location::Document, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, Location::Line(e.line()), e.to_string()))
}
