use std::path::Path;

use crate::error::{Error, Location, Result};
use crate::tree::TreeDocument;

pub fn tree_to_json(tree: &TreeDocument) -> String {
    let mut s = serde_json::to_string_pretty(tree).expect("tree documents always serialize");
    s.push('\n');
    s
}

pub fn write_tree(tree: &TreeDocument, path: &Path) -> Result<()> {
    super::write_atomic(path, tree_to_json(tree).as_bytes())
}

pub fn read_tree(path: &Path) -> Result<TreeDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, Location::Line(e.line()), e.to_string()))
}

pub fn write_dot(tree: &TreeDocument, path: &Path) -> Result<()> {
    super::write_atomic(path, tree.to_dot().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        let t = TreeDocument::parse_nested("((cat,dog)pet,(car,truck)vehicle)thing").unwrap();
        write_tree(&t, &p).unwrap();
        assert_eq!(read_tree(&p).unwrap(), t);
    }

    #[test]
    fn embeddings_survive_exactly() {
        use crate::vectors::EmbeddingVector;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        let t = TreeDocument::parse_nested("(a,b)").unwrap();
        let mut nodes = t.nodes().to_vec();
        for (i, n) in nodes.iter_mut().enumerate() {
            let x = 1.0 / 3.0 + i as f64 * 1e-17;
            n.embedding = Some(EmbeddingVector::new(vec![x, 0.1 + 0.2, -7.0e-300]).unwrap());
        }
        let t = TreeDocument::from_nodes(nodes, t.root()).unwrap();
        write_tree(&t, &p).unwrap();
        assert_eq!(read_tree(&p).unwrap(), t);
    }

    #[test]
    fn rejects_multiple_roots() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        std::fs::write(
            &p,
            r#"{"root": 2, "nodes": [
                {"id": 0, "name": "a", "children": []},
                {"id": 1, "name": "b", "children": []},
                {"id": 2, "name": null, "children": [0]}]}"#,
        )
        .unwrap();
        assert!(matches!(read_tree(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_cycles() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        std::fs::write(
            &p,
            r#"{"root": 0, "nodes": [
                {"id": 0, "name": null, "children": [1]},
                {"id": 1, "name": null, "children": [2]},
                {"id": 2, "name": null, "children": [1]}]}"#,
        )
        .unwrap();
        assert!(read_tree(&p).is_err());
    }
}
