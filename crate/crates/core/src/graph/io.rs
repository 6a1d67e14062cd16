//! Plain-text dataset files: `i<TAB>j` edge lines, comma-separated feature
//! rows, and one integer label per line.

use std::fs;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const EDGE_FILE: &str = "edges.tsv";
pub const FEATURE_FILE: &str = "features.csv";
pub const LABEL_FILE: &str = "labels.txt";

/// Node feature matrix; row `i` belongs to node `i`. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Mat);

impl FeatureMatrix {
    pub fn new(values: Mat) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::Numeric("feature matrix has non-finite entries".into()));
        }
        Ok(FeatureMatrix(values))
    }

    pub fn values(&self) -> &Mat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn new(
        graph: Graph,
        features: FeatureMatrix,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let n = graph.n();
        if features.values().rows() != n || labels.len() != n {
            return Err(Error::Malformed(format!(
                "graph has {n} nodes, features {} rows, labels {} entries",
                features.values().rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(Error::Malformed(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(LabeledDataset {
            graph,
            features,
            labels,
            classes,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Same dataset with features replaced.
    pub fn with_features(&self, features: Mat) -> Result<Self> {
        LabeledDataset::new(
            self.graph.clone(),
            FeatureMatrix::new(features)?,
            self.labels.clone(),
            self.classes,
        )
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedInput {
        file: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Reads the three dataset files. The label file defines the node count.
pub fn load_dataset(edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<LabeledDataset> {
    let mut labels = Vec::new();
    for (line, text) in content_lines(&read(label_path)?) {
        let c: usize = text
            .parse()
            .map_err(|_| malformed(label_path, line, format!("non-numeric label {text:?}")))?;
        labels.push(c);
    }
    let n = labels.len();

    let mut rows = Vec::new();
    for (line, text) in content_lines(&read(feature_path)?) {
        let row = text
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(feature_path, line, format!("non-numeric cell {cell:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(malformed(
                    feature_path,
                    line,
                    format!("expected {first} columns, found {}", row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(malformed(
            feature_path,
            rows.len(),
            format!("{} feature rows for {n} labelled nodes", rows.len()),
        ));
    }

    let mut edges = Vec::new();
    for (line, text) in content_lines(&read(edge_path)?) {
        let mut parts = text.split('\t');
        let mut id = |what: &str| -> Result<usize> {
            let cell = parts
                .next()
                .ok_or_else(|| malformed(edge_path, line, format!("missing {what} id")))?
                .trim();
            let v: usize = cell
                .parse()
                .map_err(|_| malformed(edge_path, line, format!("non-numeric node id {cell:?}")))?;
            if v >= n {
                return Err(malformed(edge_path, line, format!("unknown node id {v} (n = {n})")));
            }
            Ok(v)
        };
        let i = id("source")?;
        let j = id("target")?;
        if parts.next().is_some() {
            return Err(malformed(edge_path, line, "more than two columns"));
        }
        edges.push((i, j));
    }

    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let features = if n == 0 {
        Mat::zeros(0, 0)
    } else {
        Mat::from_rows(&rows)
    };
    LabeledDataset::new(Graph::build(&edges, n)?, FeatureMatrix::new(features)?, labels, classes)
}

pub fn load_dataset_dir(dir: &Path) -> Result<LabeledDataset> {
    load_dataset(&dir.join(EDGE_FILE), &dir.join(FEATURE_FILE), &dir.join(LABEL_FILE))
}

/// Writes the three-file layout into `dir`. Floats use the shortest
/// round-trip representation, so reading back is bit-exact.
pub fn write_dataset(dir: &Path, data: &LabeledDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::new();
    for &(i, j) in data.graph.edges() {
        edges.push_str(&format!("{i}\t{j}\n"));
    }
    let mut feats = String::new();
    let values = data.features.values();
    for i in 0..values.rows() {
        let row: Vec<String> = values.row(i).iter().map(|v| format!("{v:?}")).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    let mut labels = String::new();
    for c in &data.labels {
        labels.push_str(&format!("{c}\n"));
    }
    for (name, body) in [(EDGE_FILE, edges), (FEATURE_FILE, feats), (LABEL_FILE, labels)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
