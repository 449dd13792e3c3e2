//! Ontology edge lists: UTF-8 TSV `child<TAB>parent<TAB>relation`.
//!
//! Blank lines and lines starting with `#` are ignored. Both relation kinds
//! are parent edges. Duplicates and self-loops are dropped with a warning.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Subclass,
    InstanceOf,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Subclass => "subclass",
            Relation::InstanceOf => "instance_of",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawEdge {
    pub child: String,
    pub parent: String,
    pub relation: Relation,
}

/// Parsed edges in file order, plus the warnings raised while parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OntologyEdges {
    pub edges: Vec<RawEdge>,
    pub warnings: Vec<String>,
}

pub fn read_ontology_str(text: &str, path: &Path) -> Result<OntologyEdges> {
    let mut out = OntologyEdges::default();
    // Duplicates are keyed on (child, parent): both relations are the same parent edge.
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format(
                path,
                Location::Line(lineno),
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let (child, parent) = (cols[0].trim(), cols[1].trim());
        if child.is_empty() || parent.is_empty() {
            return Err(Error::format(path, Location::Line(lineno), "empty node id"));
        }
        let relation = match cols[2].trim() {
            "subclass" => Relation::Subclass,
            "instance_of" => Relation::InstanceOf,
            other => {
                return Err(Error::format(
                    path,
                    Location::Line(lineno),
                    format!("unknown relation {other:?} (expected subclass or instance_of)"),
                ))
            }
        };
        if child == parent {
            let w = format!("line {lineno}: dropped self-loop on {child:?}");
            log::warn!("{w}");
            out.warnings.push(w);
            continue;
        }
        if !seen.insert((child.to_string(), parent.to_string())) {
            let w = format!("line {lineno}: dropped duplicate edge {child:?} -> {parent:?}");
            log::warn!("{w}");
            out.warnings.push(w);
            continue;
        }
        out.edges.push(RawEdge {
            child: child.to_string(),
            parent: parent.to_string(),
            relation,
        });
    }
    Ok(out)
}

pub fn read_ontology(path: &Path) -> Result<OntologyEdges> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_ontology_str(&text, path)
}

pub fn write_ontology(edges: &[RawEdge], path: &Path) -> Result<()> {
    let mut s = String::new();
    for e in edges {
        s.push_str(&format!("{}\t{}\t{}\n", e.child, e.parent, e.relation.as_str()));
    }
    super::write_atomic(path, s.as_bytes())
}
