//! Plain-text dataset directories:
//!
//! ```text
//! meta.json     {"n": int, "d": int, "num_labels": int}
//! edges.txt     "x<TAB>y" per undirected edge, 0-indexed, x < y
//! features.csv  n lines of d comma-separated reals
//! labels.txt    n lines, one integer each (-1 = unlabeled)
//! splits.json   {"train": [..], "test": [..], "val": [..]}
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ordered, Graph, PerturbationPlan, Splits};
use crate::scalar::Scalar;
use crate::tensor::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub num_labels: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    serde_json::from_str(&read(path)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn parse_edges(path: &Path, text: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(path, line_no, format!("expected two node ids, found {:?}", raw)));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, line_no, format!("invalid node id {s:?}")))
        };
        let (x, y) = (parse(fields[0])?, parse(fields[1])?);
        if x == y {
            return Err(parse_err(path, line_no, format!("self-loop {x} {y}")));
        }
        if x >= n || y >= n {
            return Err(parse_err(path, line_no, format!("node index >= n = {n}")));
        }
        if !seen.insert(ordered(x, y)) {
            return Err(parse_err(path, line_no, format!("duplicate edge {x} {y}")));
        }
        edges.push(ordered(x, y));
    }
    Ok(edges)
}

pub(crate) fn parse_features<T: Scalar>(path: &Path, text: &str, n: usize, d: Option<usize>) -> Result<Mat<T>> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut width = d;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            return Err(parse_err(path, line_no, "empty feature row"));
        }
        let mut count = 0;
        for field in raw.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("invalid real {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, "non-finite feature value"));
            }
            data.push(T::of(v));
            count += 1;
        }
        match width {
            Some(w) if w != count => {
                return Err(parse_err(path, line_no, format!("expected {w} columns, found {count}")));
            }
            None => width = Some(count),
            _ => {}
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Data(format!(
            "{}: {rows} feature rows for n = {n}",
            path.display()
        )));
    }
    Mat::new(rows, width.unwrap_or(0), data).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn parse_labels(path: &Path, text: &str, n: usize, num_labels: usize) -> Result<Vec<Option<usize>>> {
    let mut labels = Vec::with_capacity(n);
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let v: i64 = raw
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid label {raw:?}")))?;
        labels.push(match v {
            -1 => None,
            v if v >= 0 && (v as usize) < num_labels => Some(v as usize),
            v => return Err(parse_err(path, line_no, format!("label {v} out of range"))),
        });
    }
    if labels.len() != n {
        return Err(Error::Data(format!("{}: {} labels for n = {n}", path.display(), labels.len())));
    }
    Ok(labels)
}

pub fn load_graph<T: Scalar>(dir: impl AsRef<Path>) -> Result<Graph<T>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Data(format!("dataset directory {} not found", dir.display())));
    }
    let meta: DatasetMeta = read_json(&dir.join("meta.json"))?;
    let edges_path = dir.join("edges.txt");
    let edges = parse_edges(&edges_path, &read(&edges_path)?, meta.n)?;
    let feat_path = dir.join("features.csv");
    let features = parse_features(&feat_path, &read(&feat_path)?, meta.n, Some(meta.d))?;
    let labels_path = dir.join("labels.txt");
    let labels = parse_labels(&labels_path, &read(&labels_path)?, meta.n, meta.num_labels)?;
    let splits: Splits = read_json(&dir.join("splits.json"))?;
    Graph::new(features, &edges, labels, meta.num_labels, splits)
}

pub fn save_graph<T: Scalar>(graph: &Graph<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        n: graph.n(),
        d: graph.feature_dim(),
        num_labels: graph.num_labels(),
    };
    write(&dir.join("meta.json"), &to_json(&meta)?)?;

    let mut edges = String::new();
    for (x, y) in graph.edges() {
        writeln!(edges, "{x}\t{y}").expect("write to string");
    }
    write(&dir.join("edges.txt"), &edges)?;

    let f = graph.features();
    let mut feats = String::with_capacity(f.rows() * f.cols() * 4);
    for r in 0..f.rows() {
        for (c, v) in f.row(r).iter().enumerate() {
            if c > 0 {
                feats.push(',');
            }
            write!(feats, "{v}").expect("write to string");
        }
        feats.push('\n');
    }
    write(&dir.join("features.csv"), &feats)?;

    let mut labels = String::new();
    for l in graph.labels() {
        match l {
            Some(l) => writeln!(labels, "{l}"),
            None => writeln!(labels, "-1"),
        }
        .expect("write to string");
    }
    write(&dir.join("labels.txt"), &labels)?;
    write(&dir.join("splits.json"), &to_json(graph.splits())?)
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    serde_json::to_string(value).map_err(|source| Error::Json {
        path: PathBuf::new(),
        source,
    })
}

pub fn save_plan(plan: &PerturbationPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(plan).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write(path, &(json + "\n"))
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<PerturbationPlan> {
    read_json(path.as_ref())
}
