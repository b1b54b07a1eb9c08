use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DataError, Dataset, Graph, Result, Split};

/// One JSON object per line, one graph per object.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for graph in &dataset.graphs {
        let line = serde_json::to_string(graph)
            .map_err(|e| DataError::Parse { line: 0, source: e })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path, split: Split) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut graphs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let graph: Graph =
            serde_json::from_str(&line).map_err(|e| DataError::Parse { line: i + 1, source: e })?;
        graph.validate_at(Some(i + 1))?;
        graphs.push(graph);
    }
    Ok(Dataset { graphs, split, spec: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{gen_spurious_motif, GenSpec};

    #[test]
    fn round_trip_is_exact() {
        let spec = GenSpec {
            n_graphs: 30,
            bias: 0.9,
            d_in: 4,
            base_size_min: 15,
            base_size_max: 35,
            seed: 1,
        };
        let ds = gen_spurious_motif(&spec, Split::Train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path, Split::Train).unwrap();
        assert_eq!(ds.graphs, back.graphs);
    }

    #[test]
    fn self_loop_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = r#"{"n_nodes":2,"edges":[[0,1]],"features":[[0.0],[0.0]],"label":0}"#;
        let bad = r#"{"n_nodes":4,"edges":[[0,1],[1,2],[2,3],[3,3]],"features":[[0.0],[0.0],[0.0],[0.0]],"label":0}"#;
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{good}").unwrap();
        writeln!(f, "{bad}").unwrap();
        let err = read_dataset(&path, Split::Train).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("self-loop"), "{err}");
    }

    #[test]
    fn empty_file_is_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::File::create(&path).unwrap();
        let ds = read_dataset(&path, Split::Val).unwrap();
        assert!(ds.is_empty());
    }
}
