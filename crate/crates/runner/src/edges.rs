//! Graph edge lists: a header line `# udp-graph m k n_far t`, then one
//! undirected edge per line as `i j weight kind` with `kind` `H` (neighbor)
//! or `W` (distant). Weights use the shortest decimal form that parses back
//! to the same `f64`.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use udp_core::graph::{EdgeKind, NeighborGraph};

use crate::error::{io_err, Error, Result};

const TAG: &str = "# udp-graph";

pub fn write_edges(path: &Path, g: &NeighborGraph) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    let mut body = || -> std::io::Result<()> {
        writeln!(out, "{TAG} {} {} {} {}", g.len(), g.k(), g.n_far(), g.t())?;
        for (i, j, w, kind) in g.edges() {
            let k = match kind {
                EdgeKind::Near => 'H',
                EdgeKind::Far => 'W',
            };
            writeln!(out, "{i} {j} {w} {k}")?;
        }
        out.flush()
    };
    body().map_err(io_err(path))
}

pub fn read_edges(path: &Path) -> Result<NeighborGraph> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let header = lines
        .next()
        .transpose()
        .map_err(io_err(path))?
        .ok_or_else(|| Error::Format {
            path: path.into(),
            msg: "empty edge list".into(),
        })?;
    let fields: Vec<&str> = header
        .strip_prefix(TAG)
        .ok_or_else(|| Error::Format {
            path: path.into(),
            msg: format!("missing '{TAG}' header"),
        })?
        .split_whitespace()
        .collect();
    if fields.len() != 4 {
        return Err(parse_err(1, "header needs m k n_far t".into()));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(1, format!("'{s}' is not a count")))
    };
    let (m, k, n_far) = (int(fields[0])?, int(fields[1])?, int(fields[2])?);
    let t: f64 = fields[3]
        .parse()
        .map_err(|_| parse_err(1, format!("'{}' is not a number", fields[3])))?;

    let mut edges = Vec::new();
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(parse_err(line_no, format!("expected 'i j weight kind', got '{line}'")));
        }
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(line_no, format!("'{s}' is not an index")))
        };
        let w: f64 = f[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("'{}' is not a weight", f[2])))?;
        let kind = match f[3] {
            "H" => EdgeKind::Near,
            "W" => EdgeKind::Far,
            other => return Err(parse_err(line_no, format!("kind '{other}' is not H or W"))),
        };
        edges.push((idx(f[0])?, idx(f[1])?, w, kind));
    }
    Ok(NeighborGraph::from_edges(m, k, n_far, t, edges)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use udp_core::graph::build_graph;
    use udp_core::Matrix;

    #[test]
    fn round_trip_is_exact() {
        let x = Matrix::from_rows(&[[0.0, 0.3], [1.0, 0.1], [10.0, -2.0], [4.5, 4.4], [0.2, 0.2]]).unwrap();
        let g = build_graph(&x, 2, 1, 1.7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.edges");
        write_edges(&p, &g).unwrap();
        assert_eq!(read_edges(&p).unwrap(), g);
    }

    #[test]
    fn rejects_bad_kind_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.edges");
        std::fs::write(&p, "# udp-graph 3 1 1 1\n0 1 0.5 X\n").unwrap();
        assert!(matches!(read_edges(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "0 1 0.5 H\n").unwrap();
        assert!(matches!(read_edges(&p), Err(Error::Format { .. })));
    }
}
