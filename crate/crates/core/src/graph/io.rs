//! Text loaders for edge lists, feature matrices and label files.
//!
//! * edges: `src dst time` per line
//! * features: header `num_nodes d`, then one row of `d` reals per node
//! * labels: `target_id class` (`i j class` for links)
//!
//! `#` starts a comment; blank lines are skipped.

use std::fs;
use std::path::Path;

use super::{IdMap, LabelSet, NodeId, TargetId, Task, TemporalEdge, TemporalEdgeList};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeFormat {
    pub allow_self_loops: bool,
    /// Raw ids `0..universe` are registered even if no event mentions them.
    pub universe: Option<usize>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_temporal_edges(path: &Path, format: &EdgeFormat) -> Result<TemporalEdgeList> {
    let text = fs::read_to_string(path)?;
    parse_temporal_edges(&text, path, format)
}

/// Parses an edge list; `origin` is only used in error messages.
pub fn parse_temporal_edges(text: &str, origin: &Path, format: &EdgeFormat) -> Result<TemporalEdgeList> {
    let mut raw_events = Vec::new();
    for (line_no, line) in content_lines(text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(origin, line_no, format!("expected `src dst time`, got {} fields", fields.len())));
        }
        let src: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(origin, line_no, format!("bad node id `{}`", fields[0])))?;
        let dst: u64 = fields[1]
            .parse()
            .map_err(|_| parse_err(origin, line_no, format!("bad node id `{}`", fields[1])))?;
        let time: i64 = fields[2]
            .parse()
            .map_err(|_| parse_err(origin, line_no, format!("bad time `{}`", fields[2])))?;
        if time < 0 {
            return Err(parse_err(origin, line_no, "negative time"));
        }
        if src == dst && !format.allow_self_loops {
            return Err(parse_err(origin, line_no, "self-loop event"));
        }
        if let Some(u) = format.universe {
            if src >= u as u64 || dst >= u as u64 {
                return Err(parse_err(origin, line_no, format!("node id outside universe of {u} nodes")));
            }
        }
        raw_events.push((src, dst, time));
    }
    let universe = format.universe.unwrap_or(0) as u64;
    let id_map = IdMap::from_raw_ids((0..universe).chain(raw_events.iter().flat_map(|&(s, d, _)| [s, d])));
    let edges = raw_events
        .into_iter()
        .map(|(s, d, time)| TemporalEdge {
            src: id_map.dense(s).expect("registered"),
            dst: id_map.dense(d).expect("registered"),
            time,
        })
        .collect();
    Ok(TemporalEdgeList { edges, id_map })
}

/// Loads a feature matrix; row `i` belongs to raw node id `i`.
pub fn load_features(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (hdr_line, header) = lines.next().ok_or_else(|| parse_err(path, 1, "missing `num_nodes d` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse().map_err(|_| parse_err(path, hdr_line, format!("bad header field `{f}`"))))
        .collect::<Result<_>>()?;
    let [n, d] = dims[..] else {
        return Err(parse_err(path, hdr_line, "header must be `num_nodes d`"));
    };
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (line_no, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse().map_err(|_| parse_err(path, line_no, format!("bad real `{f}`"))))
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(parse_err(path, line_no, format!("expected {d} values, got {}", row.len())));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::dim(format!("{}: header says {n} rows, found {rows}", path.display())));
    }
    Ok(Matrix::from_vec(n, d, data))
}

/// Loads labels, translating raw node ids through `id_map`.
pub fn load_labels(path: &Path, task: Task, id_map: &IdMap) -> Result<LabelSet> {
    let text = fs::read_to_string(path)?;
    let mut labels = LabelSet::new(task);
    let node = |raw: &str, line_no: usize| -> Result<NodeId> {
        let raw: u64 = raw
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad id `{raw}`")))?;
        id_map
            .dense(raw)
            .ok_or_else(|| parse_err(path, line_no, format!("unknown node {raw}")))
    };
    for (line_no, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (target, class) = match (task, fields.as_slice()) {
            (Task::Node, [id, class]) => (TargetId::Node(node(id, line_no)?), class),
            (Task::Link, [a, b, class]) => (TargetId::Link(node(a, line_no)?, node(b, line_no)?), class),
            (Task::Graph, [g, class]) => (
                TargetId::Graph(g.parse().map_err(|_| parse_err(path, line_no, format!("bad graph id `{g}`")))?),
                class,
            ),
            _ => return Err(parse_err(path, line_no, format!("malformed {task} label line"))),
        };
        let class: usize = class
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad class `{class}`")))?;
        labels.insert(target, class);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn origin() -> &'static Path {
        Path::new("edges.txt")
    }

    #[test]
    fn parses_three_events_in_order() {
        let list = parse_temporal_edges("0 1 5\n1 2 6\n0 1 7\n", origin(), &EdgeFormat::default()).unwrap();
        assert_eq!(list.edges.len(), 3);
        assert_eq!(list.edges[2].time, 7);
        assert_eq!(list.edges[0].src, NodeId(0));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let list = parse_temporal_edges("", origin(), &EdgeFormat::default()).unwrap();
        assert!(list.edges.is_empty());
        assert_eq!(list.num_nodes(), 0);
    }

    #[test]
    fn garbage_line_reports_line_number() {
        let err = parse_temporal_edges("a b c\n", origin(), &EdgeFormat::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_temporal_edges("# header\n0 1 2\n3 4\n", origin(), &EdgeFormat::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn ids_are_compacted_and_duplicates_kept() {
        let list = parse_temporal_edges("100 7 1\n7 100 1 # again\n7 100 1\n", origin(), &EdgeFormat::default()).unwrap();
        assert_eq!(list.num_nodes(), 2);
        assert_eq!(list.id_map.raw(NodeId(0)), 7);
        assert_eq!(list.id_map.dense(100), Some(NodeId(1)));
        assert_eq!(list.edges.len(), 3);
    }

    #[test]
    fn universe_keeps_isolated_nodes() {
        let fmt = EdgeFormat {
            universe: Some(5),
            ..Default::default()
        };
        let list = parse_temporal_edges("0 1 1\n", origin(), &fmt).unwrap();
        assert_eq!(list.num_nodes(), 5);
        assert!(parse_temporal_edges("0 9 1\n", origin(), &fmt).is_err());
    }

    #[test]
    fn self_loops_need_opt_in() {
        assert!(parse_temporal_edges("2 2 1\n", origin(), &EdgeFormat::default()).is_err());
        let fmt = EdgeFormat {
            allow_self_loops: true,
            ..Default::default()
        };
        assert!(parse_temporal_edges("2 2 1\n", origin(), &fmt).is_ok());
    }

    #[test]
    fn feature_and_label_files() {
        let dir = tempfile::tempdir().unwrap();
        let fpath = dir.path().join("features.txt");
        let mut f = fs::File::create(&fpath).unwrap();
        writeln!(f, "2 3\n1 0 0.5\n0 1 -2").unwrap();
        let m = load_features(&fpath).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m[(1, 2)], -2.0);

        let lpath = dir.path().join("labels.txt");
        fs::write(&lpath, "0 1\n1 0\n").unwrap();
        let labels = load_labels(&lpath, Task::Node, &IdMap::identity(2)).unwrap();
        assert_eq!(labels.labels[&TargetId::Node(NodeId(0))], 1);

        fs::write(&lpath, "0 1 1\n").unwrap();
        let links = load_labels(&lpath, Task::Link, &IdMap::identity(2)).unwrap();
        assert_eq!(links.len(), 1);
        assert!(load_labels(&lpath, Task::Node, &IdMap::identity(2)).is_err());

        fs::write(&fpath, "3 1\n1\n2\n").unwrap();
        assert!(matches!(load_features(&fpath), Err(Error::Dimension(_))));
    }
}
