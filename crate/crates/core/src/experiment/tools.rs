//! Dataset utilities behind the `convert`, `gen-sbm` and `inspect` commands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_sbm, load_graph, load_plan, ordered, save_graph, Graph, SbmConfig, Splits};
use crate::tensor::Mat;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvertSummary {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub num_labels: usize,
    /// Edge lines dropped because they repeat a pair (in either direction).
    pub duplicate_edges: usize,
    pub self_loops: usize,
    /// Label strings in index order.
    pub label_names: Vec<String>,
}

fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect()
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Converts a foreign dataset into the directory format.
///
/// `nodes`: one node per line, `<id> <f_1> .. <f_d> <label>` separated by
/// whitespace or commas (the layout of `cora.content`). `edges`: one
/// `<id> <id>` pair per line (e.g. `cora.cites`). Blank lines and lines
/// starting with `#` are skipped. Labels are indexed in sorted string order;
/// self-loops and repeated pairs are dropped and counted.
pub fn convert(
    edges: &Path,
    nodes: &Path,
    out: &Path,
    train_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Result<ConvertSummary> {
    let text = read(nodes)?;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut d = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f = fields(line);
        if f.len() < 3 {
            return Err(parse_err(nodes, line_no, "expected: id, at least one feature, label"));
        }
        let width = f.len() - 2;
        match d {
            None => d = Some(width),
            Some(d) if d != width => {
                return Err(parse_err(nodes, line_no, format!("{width} features, expected {d}")));
            }
            _ => {}
        }
        let row = f[1..f.len() - 1]
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(nodes, line_no, format!("invalid feature value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if ids.insert(f[0].to_string(), rows.len()).is_some() {
            return Err(parse_err(nodes, line_no, format!("duplicate node id {:?}", f[0])));
        }
        rows.push(row);
        raw_labels.push(f[f.len() - 1].to_string());
    }
    let n = rows.len();
    let d = d.ok_or_else(|| Error::Data(format!("{}: no nodes", nodes.display())))?;

    let label_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = label_names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels: Vec<Option<usize>> = raw_labels.iter().map(|l| Some(index[l.as_str()])).collect();

    let text = read(edges)?;
    let mut pairs = BTreeSet::new();
    let (mut duplicate_edges, mut self_loops) = (0, 0);
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f = fields(line);
        if f.len() != 2 {
            return Err(parse_err(edges, line_no, format!("expected 2 node ids, found {}", f.len())));
        }
        let lookup = |id: &str| {
            ids.get(id)
                .copied()
                .ok_or_else(|| parse_err(edges, line_no, format!("unknown node id {id:?}")))
        };
        let (x, y) = (lookup(f[0])?, lookup(f[1])?);
        if x == y {
            self_loops += 1;
        } else if !pairs.insert(ordered(x, y)) {
            duplicate_edges += 1;
        }
    }
    let edge_list: Vec<(usize, usize)> = pairs.into_iter().collect();

    let features = Mat::new(n, d, rows.into_iter().flatten().collect())?;
    let splits = Splits::random(n, train_frac, test_frac, seed)?;
    let graph: Graph<f64> = Graph::new(features, &edge_list, labels, label_names.len(), splits)?;
    save_graph(&graph, out)?;
    Ok(ConvertSummary {
        n,
        m: graph.edge_count(),
        d,
        num_labels: label_names.len(),
        duplicate_edges,
        self_loops,
        label_names,
    })
}

/// Writes an SBM dataset drawn with `seed` to `out`.
pub fn gen_sbm(cfg: &SbmConfig, seed: u64, out: &Path) -> Result<Graph<f64>> {
    let graph = generate_sbm(cfg, seed)?;
    save_graph(&graph, out)?;
    Ok(graph)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub num_labels: usize,
    pub train: usize,
    pub test: usize,
    pub val: usize,
    pub label_counts: Vec<usize>,
    pub unlabeled: usize,
    pub isolated_nodes: usize,
    pub mean_degree: f64,
}

pub fn summarize(graph: &Graph<f64>) -> DatasetSummary {
    let mut label_counts = vec![0; graph.num_labels()];
    let mut unlabeled = 0;
    for l in graph.labels() {
        match l {
            Some(l) => label_counts[*l] += 1,
            None => unlabeled += 1,
        }
    }
    let degrees = graph.degrees();
    DatasetSummary {
        n: graph.n(),
        m: graph.edge_count(),
        d: graph.feature_dim(),
        num_labels: graph.num_labels(),
        train: graph.splits().train.len(),
        test: graph.splits().test.len(),
        val: graph.splits().val.len(),
        label_counts,
        unlabeled,
        isolated_nodes: degrees.iter().filter(|&&d| d == 0).count(),
        mean_degree: 2.0 * graph.edge_count() as f64 / graph.n() as f64,
    }
}

/// Human-readable summary of a dataset directory or a plan JSON file.
pub fn inspect(path: &Path) -> Result<String> {
    let mut out = String::new();
    if path.is_dir() {
        let s = summarize(&load_graph(path)?);
        writeln!(out, "dataset {}", path.display()).ok();
        writeln!(out, "n = {}", s.n).ok();
        writeln!(out, "m = {}", s.m).ok();
        writeln!(out, "d = {}", s.d).ok();
        writeln!(out, "labels = {} {:?} (unlabeled {})", s.num_labels, s.label_counts, s.unlabeled).ok();
        writeln!(out, "splits train/test/val = {}/{}/{}", s.train, s.test, s.val).ok();
        writeln!(out, "mean degree = {:.3}, isolated nodes = {}", s.mean_degree, s.isolated_nodes).ok();
    } else if path.is_file() {
        let plan = load_plan(path)?;
        writeln!(out, "plan {}", path.display()).ok();
        writeln!(out, "client = {}", plan.client).ok();
        writeln!(out, "budget = {}", plan.budget).ok();
        writeln!(out, "flips = {} (add {}, del {})", plan.len(), plan.adds(), plan.deletes()).ok();
    } else {
        return Err(Error::Data(format!("{} does not exist", path.display())));
    }
    Ok(out)
}

/// Resolves `--out`, defaulting to `results/`.
pub fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("results"))
}
